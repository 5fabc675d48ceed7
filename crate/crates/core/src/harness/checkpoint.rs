use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::distill::{AttentionSimplifier, FcSimplifier, Method, Simplifier};
use crate::error::{Error, Result};
use crate::fsio::write_atomic;
use crate::nn::{LinearLayer, Mlp, MlpSpec, Module, Sgd, SgdConfig};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Teacher,
    Student,
    Simplifier,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl ParamRecord {
    fn new(name: String, t: &Tensor) -> Self {
        ParamRecord {
            name,
            shape: t.shape().to_vec(),
            values: t.data().to_vec(),
        }
    }

    fn tensor(&self) -> Result<Tensor> {
        Tensor::new(self.shape.clone(), self.values.clone())
            .map_err(|_| Error::ShapeMismatch(format!("`{}` values do not fill {:?}", self.name, self.shape)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerState {
    pub config: SgdConfig,
    pub velocity: Vec<ParamRecord>,
}

/// Enough to replay the data order: epoch `e` shuffles with `seed ^ e`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RngState {
    pub seed: u64,
    /// Next epoch to run.
    pub epoch: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum SpecEcho {
    Mlp(MlpSpec),
    Simplifier {
        method: Method,
        classes: usize,
        /// Attention width; 0 for fc simplifiers.
        dim: usize,
        dropout: f64,
        seed: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub kind: ModelKind,
    pub spec: SpecEcho,
    pub params: Vec<ParamRecord>,
    pub optimizer: Option<OptimizerState>,
    pub epoch: usize,
    pub rng: RngState,
}

fn records<M: Module>(m: &M) -> Vec<ParamRecord> {
    m.named_params()
        .into_iter()
        .map(|(n, t)| ParamRecord::new(n, t))
        .collect()
}

fn optimizer_state<M: Module>(m: &M, opt: &Sgd) -> OptimizerState {
    OptimizerState {
        config: opt.config(),
        velocity: m
            .named_params()
            .into_iter()
            .zip(opt.velocity())
            .map(|((n, _), v)| ParamRecord::new(n, v))
            .collect(),
    }
}

fn layers(params: &[ParamRecord]) -> Result<Vec<LinearLayer>> {
    if !params.len().is_multiple_of(2) {
        return Err(Error::ShapeMismatch("parameters must come in weight/bias pairs".into()));
    }
    params
        .chunks_exact(2)
        .map(|p| {
            let (w, b) = (p[0].tensor()?, p[1].tensor()?);
            if w.rank() != 2 || b.rank() != 1 || w.shape()[0] != b.shape()[0] {
                return Err(Error::ShapeMismatch(format!(
                    "`{}` {:?} and `{}` {:?} do not form a layer",
                    p[0].name, p[0].shape, p[1].name, p[1].shape
                )));
            }
            Ok(LinearLayer { weight: w, bias: b })
        })
        .collect()
}

impl Checkpoint {
    pub fn from_mlp(kind: ModelKind, model: &Mlp, opt: Option<&Sgd>, epoch: usize, rng: RngState) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            kind,
            spec: SpecEcho::Mlp(model.spec().clone()),
            params: records(model),
            optimizer: opt.map(|o| optimizer_state(model, o)),
            epoch,
            rng,
        }
    }

    pub fn from_simplifier(s: &Simplifier, opt: Option<&Sgd>, epoch: usize, rng: RngState) -> Self {
        let dim = match s {
            Simplifier::Attention(a) => a.dim,
            Simplifier::Fc(_) => 0,
        };
        Checkpoint {
            version: CHECKPOINT_VERSION,
            kind: ModelKind::Simplifier,
            spec: SpecEcho::Simplifier {
                method: s.method(),
                classes: s.classes(),
                dim,
                dropout: s.dropout(),
                seed: s.seed(),
            },
            params: records(s),
            optimizer: opt.map(|o| optimizer_state(s, o)),
            epoch,
            rng,
        }
    }

    pub fn to_mlp(&self) -> Result<Mlp> {
        let SpecEcho::Mlp(spec) = &self.spec else {
            return Err(Error::ShapeMismatch("checkpoint does not hold an MLP".into()));
        };
        let model = Mlp::from_layers(spec.clone(), layers(&self.params)?)
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        self.check_names(&model)?;
        Ok(model)
    }

    pub fn to_simplifier(&self) -> Result<Simplifier> {
        let SpecEcho::Simplifier { method, dim, dropout, seed, classes } = self.spec else {
            return Err(Error::ShapeMismatch("checkpoint does not hold a simplifier".into()));
        };
        let mut ls = layers(&self.params)?;
        let s = match method {
            Method::SkdAttn if ls.len() == 2 => {
                let proj_out = ls.pop().expect("two layers");
                let proj_in = ls.pop().expect("two layers");
                Simplifier::Attention(AttentionSimplifier { proj_in, proj_out, dim, dropout, seed })
            }
            Method::SkdFc1 | Method::SkdFc2 => Simplifier::Fc(FcSimplifier { layers: ls, dropout, seed }),
            _ => {
                return Err(Error::ShapeMismatch(format!(
                    "{} parameters do not describe a {method} simplifier",
                    self.params.len()
                )))
            }
        };
        s.validate()?;
        if s.method() != method || s.classes() != classes {
            return Err(Error::ShapeMismatch(format!("parameters do not match {method} over {classes} classes")));
        }
        self.check_names(&s)?;
        Ok(s)
    }

    /// Optimizer for `model`, restored with its velocity buffers.
    pub fn to_sgd<M: Module>(&self, model: &M) -> Result<Option<Sgd>> {
        let Some(o) = &self.optimizer else { return Ok(None) };
        let velocity = o.velocity.iter().map(ParamRecord::tensor).collect::<Result<Vec<_>>>()?;
        Sgd::with_velocity(o.config, model, velocity).map(Some)
    }

    fn check_names<M: Module>(&self, m: &M) -> Result<()> {
        for ((name, _), rec) in m.named_params().iter().zip(&self.params) {
            if *name != rec.name {
                return Err(Error::ShapeMismatch(format!("expected `{name}`, found `{}`", rec.name)));
            }
        }
        Ok(())
    }

    /// Pretty JSON with every real written to 17 significant digits.
    pub fn to_json(&self) -> Result<Vec<u8>> {
        let all = self
            .params
            .iter()
            .chain(self.optimizer.iter().flat_map(|o| &o.velocity))
            .flat_map(|p| &p.values);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("checkpoint"));
        }
        let mut out = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut out, Sig17::default());
        self.serialize(&mut ser).map_err(|e| Error::Malformed(e.to_string()))?;
        out.push(b'\n');
        Ok(out)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_slice(bytes).map_err(|e| Error::Malformed(e.to_string()))?;
        let version = value
            .get("version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::Malformed("missing `version`".into()))?;
        if version != u64::from(CHECKPOINT_VERSION) {
            return Err(Error::VersionMismatch {
                found: version.min(u64::from(u32::MAX)) as u32,
                expected: CHECKPOINT_VERSION,
            });
        }
        let c: Checkpoint = serde_json::from_value(value).map_err(|e| Error::Malformed(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Shapes and parameter count agree with the spec echo.
    pub fn validate(&self) -> Result<()> {
        match self.spec {
            SpecEcho::Mlp(_) => {
                let m = self.to_mlp()?;
                if let Some(opt) = self.to_sgd(&m)? {
                    opt.config().validate()?;
                }
            }
            SpecEcho::Simplifier { .. } => {
                let s = self.to_simplifier()?;
                self.to_sgd(&s)?;
            }
        }
        Ok(())
    }
}

pub fn save_checkpoint(path: &Path, c: &Checkpoint) -> Result<()> {
    write_atomic(path, &c.to_json()?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_json(&bytes)
}

/// `serde_json` pretty formatter writing reals as `d.dddddddddddddddde±x`.
#[derive(Default)]
struct Sig17 {
    inner: serde_json::ser::PrettyFormatter<'static>,
}

macro_rules! forward {
    ($($name:ident($($arg:ident: $ty:ty),*);)*) => {
        $(
            fn $name<W: ?Sized + io::Write>(&mut self, w: &mut W $(, $arg: $ty)*) -> io::Result<()> {
                self.inner.$name(w $(, $arg)*)
            }
        )*
    };
}

impl serde_json::ser::Formatter for Sig17 {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    forward! {
        begin_array();
        end_array();
        begin_array_value(first: bool);
        end_array_value();
        begin_object();
        end_object();
        begin_object_key(first: bool);
        begin_object_value();
        end_object_value();
    }
}
