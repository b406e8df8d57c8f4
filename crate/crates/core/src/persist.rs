//! Versioned JSON model files.
//!
//! RBM models are written as `{version, kind, pooling?, input?, D, H, C, b,
//! c, d, W, U, scaler?}` with row-major matrices; other families share the
//! `version`/`kind` envelope. Floats use shortest round-trip decimals, so a
//! reload is bit-exact.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::baselines::{KernelSpec, MajorityModel, MaxOutModel, MaxOutNet, SvmClassifier, SvmModel};
use crate::data::{Bag, FeatureScaler};
use crate::error::{Error, Result};
use crate::model::{ModelVariant, RbmModel};
use crate::params::RbmParams;
use crate::registry::{Predictor, TrainedModel};
use crate::set_rbm::{Family, Pooling, SetVariant};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct RbmRepr {
    version: u32,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pooling: Option<Pooling>,
    /// `"pooled"` when the model reads `[max | min | mean]` pooled bags.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    input: Option<String>,
    #[serde(rename = "D")]
    inputs: usize,
    #[serde(rename = "H")]
    hidden: usize,
    #[serde(rename = "C")]
    classes: usize,
    b: Vec<f64>,
    c: Vec<f64>,
    d: Vec<f64>,
    #[serde(rename = "W")]
    w: Vec<f64>,
    #[serde(rename = "U")]
    u: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scaler: Option<FeatureScaler>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "net", rename_all = "lowercase")]
enum NetRepr {
    Logit { w: Vec<f64>, bias: f64 },
    Mlp { hidden: usize, w1: Vec<f64>, b1: Vec<f64>, w2: Vec<f64>, b2: f64 },
    Classrbm { b: Vec<f64>, c: Vec<f64>, d: Vec<f64>, w: Vec<f64>, u: Vec<f64> },
}

#[derive(Serialize, Deserialize)]
struct MaxOutRepr {
    version: u32,
    kind: String,
    #[serde(rename = "D")]
    inputs: usize,
    #[serde(flatten)]
    net: NetRepr,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scaler: Option<FeatureScaler>,
}

#[derive(Serialize, Deserialize)]
struct BagRepr {
    id: String,
    label: usize,
    instances: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct SvmRepr {
    version: u32,
    kind: String,
    #[serde(rename = "C")]
    classes: usize,
    kernel: KernelSpec,
    machines: Vec<SvmModel>,
    bags: Vec<BagRepr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scaler: Option<FeatureScaler>,
}

#[derive(Serialize, Deserialize)]
struct MajorityRepr {
    version: u32,
    kind: String,
    frequencies: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scaler: Option<FeatureScaler>,
}

fn rbm_kind(variant: ModelVariant) -> (&'static str, Option<Pooling>) {
    match variant {
        ModelVariant::ClassRbm => ("classrbm", None),
        ModelVariant::Set(v) => (
            match v.family {
                Family::Xor => "set-xor",
                Family::Or => "set-or",
            },
            Some(v.pooling),
        ),
    }
}

fn rbm_repr(m: &RbmModel, pooled: bool, scaler: Option<FeatureScaler>) -> RbmRepr {
    let (kind, pooling) = rbm_kind(m.variant);
    let p = &m.params;
    RbmRepr {
        version: FORMAT_VERSION,
        kind: kind.into(),
        pooling,
        input: pooled.then(|| "pooled".into()),
        inputs: p.inputs(),
        hidden: p.hidden(),
        classes: p.classes(),
        b: p.b.to_vec(),
        c: p.c.to_vec(),
        d: p.d.to_vec(),
        w: p.w.iter().copied().collect(),
        u: p.u.iter().copied().collect(),
        scaler,
    }
}

fn matrix(rows: usize, cols: usize, data: Vec<f64>, name: &str) -> Result<Array2<f64>> {
    Array2::from_shape_vec((rows, cols), data)
        .map_err(|_| Error::format(0, format!("{name} does not have {rows}x{cols} entries")))
}

fn vector(len: usize, data: Vec<f64>, name: &str) -> Result<Array1<f64>> {
    if data.len() != len {
        return Err(Error::format(0, format!("{name} has {} entries, expected {len}", data.len())));
    }
    Ok(Array1::from(data))
}

#[allow(clippy::too_many_arguments)]
fn params_from(inputs: usize, hidden: usize, classes: usize, b: Vec<f64>, c: Vec<f64>, d: Vec<f64>, w: Vec<f64>, u: Vec<f64>) -> Result<RbmParams> {
    let p = RbmParams::from_parts(
        vector(inputs, b, "b")?,
        vector(hidden, c, "c")?,
        vector(classes, d, "d")?,
        matrix(hidden, inputs, w, "W")?,
        matrix(hidden, classes, u, "U")?,
    )?;
    Ok(p)
}

pub fn predictor_to_json(predictor: &Predictor) -> Result<String> {
    let scaler = predictor.scaler.clone();
    let value = match &predictor.model {
        TrainedModel::Rbm(m) => serde_json::to_value(rbm_repr(m, false, scaler))?,
        TrainedModel::PoolIn(m) => serde_json::to_value(rbm_repr(m, true, scaler))?,
        TrainedModel::MaxOut(m) => {
            let net = match &m.net {
                MaxOutNet::Logit { w, bias } => NetRepr::Logit { w: w.to_vec(), bias: *bias },
                MaxOutNet::Mlp { w1, b1, w2, b2 } => NetRepr::Mlp {
                    hidden: w1.nrows(),
                    w1: w1.iter().copied().collect(),
                    b1: b1.to_vec(),
                    w2: w2.to_vec(),
                    b2: *b2,
                },
                MaxOutNet::ClassRbm(p) => NetRepr::Classrbm {
                    b: p.b.to_vec(),
                    c: p.c.to_vec(),
                    d: p.d.to_vec(),
                    w: p.w.iter().copied().collect(),
                    u: p.u.iter().copied().collect(),
                },
            };
            serde_json::to_value(MaxOutRepr {
                version: FORMAT_VERSION,
                kind: format!("maxout-{}", m.kind()),
                inputs: m.inputs(),
                net,
                scaler,
            })?
        }
        TrainedModel::Svm(s) => serde_json::to_value(SvmRepr {
            version: FORMAT_VERSION,
            kind: "svm".into(),
            classes: s.classes,
            kernel: s.spec,
            machines: s.machines.clone(),
            bags: s
                .train_bags
                .iter()
                .map(|b| BagRepr {
                    id: b.id.clone(),
                    label: b.label,
                    instances: b.instances().rows().into_iter().map(|r| r.to_vec()).collect(),
                })
                .collect(),
            scaler,
        })?,
        TrainedModel::Majority(m) => serde_json::to_value(MajorityRepr {
            version: FORMAT_VERSION,
            kind: "majority".into(),
            frequencies: m.frequencies.clone(),
            scaler,
        })?,
    };
    Ok(serde_json::to_string_pretty(&value)?)
}

pub fn predictor_from_json(text: &str) -> Result<Predictor> {
    let value: Value = serde_json::from_str(text)?;
    let version = value.get("version").and_then(Value::as_u64);
    if version != Some(FORMAT_VERSION as u64) {
        return Err(Error::format(0, format!("unsupported model file version {version:?}")));
    }
    let kind = value
        .get("kind")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::format(0, "model file has no kind"))?
        .to_string();
    match kind.as_str() {
        "classrbm" | "set-xor" | "set-or" => {
            let r: RbmRepr = serde_json::from_value(value)?;
            let variant = match (kind.as_str(), r.pooling) {
                ("classrbm", None) => ModelVariant::ClassRbm,
                ("set-xor", Some(p)) => ModelVariant::Set(SetVariant::new(Family::Xor, p)),
                ("set-or", Some(p)) => ModelVariant::Set(SetVariant::new(Family::Or, p)),
                _ => return Err(Error::format(0, format!("{kind} model with pooling {:?}", r.pooling))),
            };
            let pooled = match r.input.as_deref() {
                None => false,
                Some("pooled") if variant == ModelVariant::ClassRbm => true,
                Some(other) => return Err(Error::format(0, format!("unknown input mode {other:?}"))),
            };
            let params = params_from(r.inputs, r.hidden, r.classes, r.b, r.c, r.d, r.w, r.u)?;
            let m = RbmModel::new(variant, params);
            let model = if pooled { TrainedModel::PoolIn(m) } else { TrainedModel::Rbm(m) };
            Ok(Predictor { model, scaler: r.scaler })
        }
        "maxout-logit" | "maxout-mlp" | "maxout-classrbm" => {
            let r: MaxOutRepr = serde_json::from_value(value)?;
            let d = r.inputs;
            let net = match r.net {
                NetRepr::Logit { w, bias } => MaxOutNet::Logit { w: vector(d, w, "w")?, bias },
                NetRepr::Mlp { hidden, w1, b1, w2, b2 } => MaxOutNet::Mlp {
                    w1: matrix(hidden, d, w1, "w1")?,
                    b1: vector(hidden, b1, "b1")?,
                    w2: vector(hidden, w2, "w2")?,
                    b2,
                },
                NetRepr::Classrbm { b, c, d: dd, w, u } => {
                    let hidden = c.len();
                    MaxOutNet::ClassRbm(params_from(d, hidden, 2, b, c, dd, w, u)?)
                }
            };
            let m = MaxOutModel { net };
            if format!("maxout-{}", m.kind()) != kind {
                return Err(Error::format(0, format!("{kind} file holds a {} network", m.kind())));
            }
            Ok(Predictor { model: TrainedModel::MaxOut(m), scaler: r.scaler })
        }
        "svm" => {
            let r: SvmRepr = serde_json::from_value(value)?;
            r.kernel.validate()?;
            let bags = r
                .bags
                .into_iter()
                .map(|b| Bag::from_rows(b.id, b.label, &b.instances))
                .collect::<Result<Vec<_>>>()?;
            let expected = if r.classes == 2 { 1 } else { r.classes };
            if r.machines.len() != expected || r.machines.iter().any(|m| m.coefficients.len() != bags.len()) {
                return Err(Error::format(0, "SVM machines do not match the stored training bags"));
            }
            let svm = SvmClassifier { spec: r.kernel, classes: r.classes, train_bags: bags, machines: r.machines };
            Ok(Predictor { model: TrainedModel::Svm(svm), scaler: r.scaler })
        }
        "majority" => {
            let r: MajorityRepr = serde_json::from_value(value)?;
            Ok(Predictor { model: TrainedModel::Majority(MajorityModel { frequencies: r.frequencies }), scaler: r.scaler })
        }
        other => Err(Error::format(0, format!("unknown model kind {other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{KernelKind, MaxOutKind};
    use crate::data::toy;
    use crate::numerics::RngStream;
    use crate::trainer::TrainConfig;

    fn round_trip(p: &Predictor) {
        let text = predictor_to_json(p).unwrap();
        let back = predictor_from_json(&text).unwrap();
        assert_eq!(&back, p);
        assert_eq!(predictor_to_json(&back).unwrap(), text);
    }

    #[test]
    fn rbm_models_bit_exact() {
        let mut rng = RngStream::new(8, 0);
        let data = toy::separable_mil(6, 3, 0);
        let scaler = FeatureScaler::fit(&data.bags).unwrap();
        for variant in [ModelVariant::ClassRbm]
            .into_iter()
            .chain(SetVariant::ALL.into_iter().map(ModelVariant::Set))
        {
            let m = RbmModel::new(variant, RbmParams::random(3, 4, 2, 1.0, &mut rng));
            round_trip(&Predictor { model: TrainedModel::Rbm(m.clone()), scaler: Some(scaler.clone()) });
            if variant == ModelVariant::ClassRbm {
                round_trip(&Predictor { model: TrainedModel::PoolIn(m), scaler: None });
            }
        }
    }

    #[test]
    fn rbm_layout() {
        let p = RbmParams::random(2, 3, 2, 1.0, &mut RngStream::new(1, 0));
        let m = RbmModel::new(ModelVariant::Set(SetVariant::new(Family::Or, Pooling::HardMax)), p.clone());
        let text = predictor_to_json(&Predictor { model: TrainedModel::Rbm(m), scaler: None }).unwrap();
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["kind"], "set-or");
        assert_eq!(v["pooling"], "hardmax");
        assert_eq!(v["D"], 2);
        assert_eq!(v["W"][1].as_f64().unwrap(), p.w[[0, 1]]);
        assert_eq!(v["W"][2].as_f64().unwrap(), p.w[[1, 0]]);
    }

    #[test]
    fn other_models_round_trip() {
        let data = toy::separable_mil(12, 3, 1);
        let config = TrainConfig { hidden_units: 3, init_scale: 1.0, ..Default::default() };
        let mut rng = RngStream::new(2, 0);
        for kind in [MaxOutKind::Logit, MaxOutKind::Mlp, MaxOutKind::ClassRbm] {
            let mut m = MaxOutModel::initialize(kind, 3, 2, &config, &mut rng).unwrap();
            if let MaxOutNet::Logit { w, .. } = &mut m.net {
                w[1] = 0.1 + 0.2;
            }
            round_trip(&Predictor { model: TrainedModel::MaxOut(m), scaler: None });
        }
        let spec = KernelSpec { kind: KernelKind::MiGraph, gamma: 0.7, sigma0: None, c_svm: 3.0 };
        let svm = SvmClassifier::fit(&spec, &data.bags, 2, None, 1).unwrap();
        round_trip(&Predictor { model: TrainedModel::Svm(svm), scaler: None });
        let maj = MajorityModel::fit(&data.bags, 2).unwrap();
        round_trip(&Predictor { model: TrainedModel::Majority(maj), scaler: None });
    }

    #[test]
    fn malformed_files_rejected() {
        assert!(predictor_from_json("{}").is_err());
        assert!(predictor_from_json(r#"{"version": 2, "kind": "classrbm"}"#).is_err());
        let bad = r#"{"version":1,"kind":"classrbm","D":1,"H":1,"C":2,"b":[0],"c":[0],"d":[0,0],"W":[0,0],"U":[0,0]}"#;
        assert!(predictor_from_json(bad).is_err());
        let ok = bad.replace(r#""W":[0,0]"#, r#""W":[0]"#);
        assert!(predictor_from_json(&ok).is_ok());
    }
}
