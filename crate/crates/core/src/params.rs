use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// Parameters shared by every RBM variant.
///
/// `b` input biases (D), `c` hidden biases (H), `d` class biases (C),
/// `w` hidden-input weights (H×D), `u` hidden-class weights (H×C).
#[derive(Debug, Clone, PartialEq)]
pub struct RbmParams {
    pub b: Array1<f64>,
    pub c: Array1<f64>,
    pub d: Array1<f64>,
    pub w: Array2<f64>,
    pub u: Array2<f64>,
}

/// Gradients have exactly the shape of the parameters they differentiate.
pub type Gradients = RbmParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    B,
    C,
    D,
    W,
    U,
}

impl Block {
    pub const ALL: [Block; 5] = [Block::B, Block::C, Block::D, Block::W, Block::U];

    pub fn name(self) -> &'static str {
        match self {
            Block::B => "b",
            Block::C => "c",
            Block::D => "d",
            Block::W => "W",
            Block::U => "U",
        }
    }
}

impl RbmParams {
    pub fn zeros(inputs: usize, hidden: usize, classes: usize) -> Self {
        Self {
            b: Array1::zeros(inputs),
            c: Array1::zeros(hidden),
            d: Array1::zeros(classes),
            w: Array2::zeros((hidden, inputs)),
            u: Array2::zeros((hidden, classes)),
        }
    }

    /// Zero biases, weights uniform in `±scale / sqrt(D)`.
    pub fn init(inputs: usize, hidden: usize, classes: usize, scale: f64, rng: &mut RngStream) -> Self {
        let mut p = Self::zeros(inputs, hidden, classes);
        let bound = scale / (inputs.max(1) as f64).sqrt();
        p.w.mapv_inplace(|_| rng.uniform_range(-bound, bound));
        p.u.mapv_inplace(|_| rng.uniform_range(-bound, bound));
        p
    }

    /// Every entry uniform in `[-range, range]`; for tests and oracles.
    pub fn random(inputs: usize, hidden: usize, classes: usize, range: f64, rng: &mut RngStream) -> Self {
        let mut p = Self::zeros(inputs, hidden, classes);
        for block in Block::ALL {
            for v in p.block_mut(block) {
                *v = rng.uniform_range(-range, range);
            }
        }
        p
    }

    pub fn from_parts(
        b: Array1<f64>,
        c: Array1<f64>,
        d: Array1<f64>,
        w: Array2<f64>,
        u: Array2<f64>,
    ) -> Result<Self> {
        let p = Self { b, c, d, w, u };
        p.validate()?;
        Ok(p)
    }

    pub fn inputs(&self) -> usize {
        self.b.len()
    }

    pub fn hidden(&self) -> usize {
        self.c.len()
    }

    pub fn classes(&self) -> usize {
        self.d.len()
    }

    pub fn validate(&self) -> Result<()> {
        let (d, h, c) = (self.inputs(), self.hidden(), self.classes());
        if self.w.dim() != (h, d) || self.u.dim() != (h, c) {
            return Err(Error::invalid(format!(
                "inconsistent parameter shapes: W {:?}, U {:?} for D={d}, H={h}, C={c}",
                self.w.dim(),
                self.u.dim()
            )));
        }
        if !self.is_finite() {
            return Err(Error::invalid("non-finite parameter"));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        Block::ALL
            .iter()
            .all(|&blk| self.block(blk).iter().all(|v| v.is_finite()))
    }

    pub fn block(&self, block: Block) -> &[f64] {
        let s = match block {
            Block::B => self.b.as_slice(),
            Block::C => self.c.as_slice(),
            Block::D => self.d.as_slice(),
            Block::W => self.w.as_slice(),
            Block::U => self.u.as_slice(),
        };
        s.expect("parameters are contiguous")
    }

    pub fn block_mut(&mut self, block: Block) -> &mut [f64] {
        let s = match block {
            Block::B => self.b.as_slice_mut(),
            Block::C => self.c.as_slice_mut(),
            Block::D => self.d.as_slice_mut(),
            Block::W => self.w.as_slice_mut(),
            Block::U => self.u.as_slice_mut(),
        };
        s.expect("parameters are contiguous")
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, alpha: f64, other: &RbmParams) {
        self.b.scaled_add(alpha, &other.b);
        self.c.scaled_add(alpha, &other.c);
        self.d.scaled_add(alpha, &other.d);
        self.w.scaled_add(alpha, &other.w);
        self.u.scaled_add(alpha, &other.u);
    }

    pub(crate) fn check_input(&self, x: ArrayView1<f64>) -> Result<()> {
        if x.len() != self.inputs() {
            return Err(Error::invalid(format!(
                "input dimension {} != model dimension {}",
                x.len(),
                self.inputs()
            )));
        }
        Ok(())
    }

    pub(crate) fn check_class(&self, y: usize) -> Result<()> {
        if y >= self.classes() {
            return Err(Error::invalid(format!("class {y} >= class count {}", self.classes())));
        }
        Ok(())
    }
}
