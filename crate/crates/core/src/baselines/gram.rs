//! Text cache for gram matrices: `key=value` header lines, then one row per
//! line with shortest round-trip decimals.

use std::io::{BufRead, Write};

use ndarray::Array2;

use super::kernels::{KernelKind, KernelSpec};
use crate::error::{Error, Result};

const MAGIC: &str = "# setrbm gram v1";

#[derive(Debug, Clone, PartialEq)]
pub struct GramHeader {
    pub kernel: KernelKind,
    pub gamma: f64,
    pub sigma0: Option<f64>,
    pub dataset: String,
    pub bags: usize,
}

impl GramHeader {
    pub fn new(spec: &KernelSpec, dataset: impl Into<String>, bags: usize) -> Self {
        Self {
            kernel: spec.kind,
            gamma: spec.gamma,
            sigma0: if spec.kind == KernelKind::MiGraph2 { spec.sigma0 } else { None },
            dataset: dataset.into(),
            bags,
        }
    }

    /// Whether a cached matrix was built for `spec` over the same bags.
    pub fn matches(&self, spec: &KernelSpec, dataset: &str, bags: usize) -> bool {
        *self == GramHeader::new(spec, dataset, bags)
    }
}

pub fn write_gram<W: Write>(mut out: W, header: &GramHeader, gram: &Array2<f64>) -> Result<()> {
    if gram.dim() != (header.bags, header.bags) {
        return Err(Error::invalid(format!(
            "gram is {:?} but header declares {} bags",
            gram.dim(),
            header.bags
        )));
    }
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "kernel={}", header.kernel)?;
    writeln!(out, "gamma={}", header.gamma)?;
    match header.sigma0 {
        Some(s) => writeln!(out, "sigma0={s}")?,
        None => writeln!(out, "sigma0=adaptive")?,
    }
    writeln!(out, "dataset={}", header.dataset)?;
    writeln!(out, "bags={}", header.bags)?;
    for row in gram.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn read_gram<R: BufRead>(reader: R) -> Result<(GramHeader, Array2<f64>)> {
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((n, Ok(l))) => Ok((n, l)),
            Some((_, Err(e))) => Err(e.into()),
            None => Err(Error::format(0, format!("gram file ends before {what}"))),
        }
    };
    let (n, magic) = next("the header")?;
    if magic.trim() != MAGIC {
        return Err(Error::format(n, "not a gram cache file"));
    }
    let mut field = |key: &str| -> Result<(usize, String)> {
        let (n, line) = next(key)?;
        match line.split_once('=') {
            Some((k, v)) if k.trim() == key => Ok((n, v.trim().to_string())),
            _ => Err(Error::format(n, format!("expected {key}=..."))),
        }
    };
    let number = |n: usize, v: &str| -> Result<f64> {
        v.parse().map_err(|_| Error::format(n, format!("bad number {v:?}")))
    };
    let (n, v) = field("kernel")?;
    let kernel: KernelKind = v.parse().map_err(|_| Error::format(n, format!("unknown kernel {v:?}")))?;
    let (n, v) = field("gamma")?;
    let gamma = number(n, &v)?;
    let (n, v) = field("sigma0")?;
    let sigma0 = if v == "adaptive" { None } else { Some(number(n, &v)?) };
    let (_, dataset) = field("dataset")?;
    let (n, v) = field("bags")?;
    let bags: usize = v.parse().map_err(|_| Error::format(n, format!("bad bag count {v:?}")))?;

    let mut gram = Array2::zeros((bags, bags));
    for i in 0..bags {
        let (n, line) = next("all matrix rows")?;
        let values: Vec<f64> = line.split_whitespace().map(|t| number(n, t)).collect::<Result<_>>()?;
        if values.len() != bags {
            return Err(Error::format(n, format!("row has {} values, expected {bags}", values.len())));
        }
        for (j, v) in values.into_iter().enumerate() {
            gram[[i, j]] = v;
        }
    }
    Ok((GramHeader { kernel, gamma, sigma0, dataset, bags }, gram))
}
