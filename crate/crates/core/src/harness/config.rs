use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{self, Dataset, Split, SyntheticSpec};
use crate::distill::{DistillConfig, Method, SimplifierConfig, SofteningConfig};
use crate::error::{Error, Result};
use crate::nn::{LrSchedule, MlpSpec, SgdConfig};

/// Where samples come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Csv {
        train: PathBuf,
        val: PathBuf,
        classes: usize,
    },
}

/// One experiment. Missing fields take the desk-scale defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub teacher: MlpSpec,
    /// `seed` is a salt mixed with each run seed.
    pub student: MlpSpec,
    pub distill: DistillConfig,
    pub softening: SofteningConfig,
    pub simplifier: SimplifierConfig,
    pub teacher_sgd: SgdConfig,
    pub student_sgd: SgdConfig,
    /// Constant learning rate; the epoch schedule applies to networks only.
    pub simplifier_sgd: SgdConfig,
    pub teacher_epochs: usize,
    pub epochs: usize,
    /// Shared by teacher and student.
    pub lr_decay_epochs: Vec<usize>,
    pub lr_decay_factor: f64,
    pub batch_size: usize,
    pub seeds: Vec<u64>,
    /// Values tried by `sweep-alpha`.
    pub alphas: Vec<f64>,
    pub teacher_checkpoint: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let net = SgdConfig {
            lr: 0.05,
            momentum: 0.9,
            weight_decay: 5e-4,
        };
        ExperimentConfig {
            data: DataSource::Synthetic(SyntheticSpec::default()),
            teacher: MlpSpec::new(vec![64, 256, 256, 20], 0),
            student: MlpSpec::new(vec![64, 32, 20], 0),
            distill: DistillConfig {
                warmup_epochs: 5,
                ..Default::default()
            },
            softening: SofteningConfig::default(),
            simplifier: SimplifierConfig {
                dim: 32,
                ..Default::default()
            },
            // an unregularized teacher ends up confident on its training set
            teacher_sgd: SgdConfig {
                weight_decay: 0.0,
                ..net
            },
            student_sgd: net,
            simplifier_sgd: SgdConfig {
                lr: crate::distill::SIMPLIFIER_LR,
                momentum: 0.9,
                weight_decay: crate::distill::SIMPLIFIER_WEIGHT_DECAY,
            },
            teacher_epochs: 60,
            epochs: 60,
            lr_decay_epochs: vec![30, 45],
            lr_decay_factor: 10.0,
            batch_size: 64,
            seeds: vec![0, 1, 2, 3, 4],
            alphas: vec![0.5, 1.0, 2.0, 4.0],
            teacher_checkpoint: None,
            out_dir: PathBuf::from("runs"),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn classes(&self) -> usize {
        match &self.data {
            DataSource::Synthetic(s) => s.classes(),
            DataSource::Csv { classes, .. } => *classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let k = self.classes();
        match &self.data {
            DataSource::Synthetic(s) => {
                s.validate()?;
                if self.teacher.validate().is_ok() && self.teacher.inputs() != s.features {
                    return bad(format!(
                        "teacher takes {} features, data has {}",
                        self.teacher.inputs(),
                        s.features
                    ));
                }
            }
            DataSource::Csv { train, val, .. } => {
                for p in [train, val] {
                    if !p.is_file() {
                        return bad(format!("data file {} does not exist", p.display()));
                    }
                }
            }
        }
        self.teacher.validate()?;
        self.student.validate()?;
        if self.teacher.classes() != k || self.student.classes() != k {
            return bad(format!(
                "teacher and student must output {k} classes, got {} and {}",
                self.teacher.classes(),
                self.student.classes()
            ));
        }
        if self.teacher.inputs() != self.student.inputs() {
            return bad("teacher and student input widths differ".into());
        }
        self.distill.validate()?;
        self.softening.validate()?;
        self.simplifier.validate()?;
        for s in [&self.teacher_sgd, &self.student_sgd, &self.simplifier_sgd] {
            s.validate()?;
        }
        self.schedule(self.student_sgd.lr)?;
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if self.alphas.is_empty() || self.alphas.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
            return bad(format!("alphas must be a non-empty list of non-negative reals, got {:?}", self.alphas));
        }
        if let Some(p) = &self.teacher_checkpoint {
            if !p.is_file() {
                return bad(format!("teacher checkpoint {} does not exist", p.display()));
            }
        }
        Ok(())
    }

    pub fn schedule(&self, base: f64) -> Result<LrSchedule> {
        LrSchedule::new(base, self.lr_decay_epochs.clone(), self.lr_decay_factor)
    }

    /// Copy with `distill.method` replaced.
    pub fn with_method(&self, method: Method) -> Self {
        let mut c = self.clone();
        c.distill.method = method;
        c
    }

    /// SHA-256 of every field except `out_dir`.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        data::hex(&Sha256::digest(bytes))
    }
}

/// Train and validation splits plus a combined fingerprint.
#[derive(Clone, Debug)]
pub struct Data {
    pub train: Dataset,
    pub val: Dataset,
    pub fingerprint: String,
}

impl Data {
    pub fn new(train: Dataset, val: Dataset) -> Self {
        let joined = format!("{}{}", train.fingerprint(), val.fingerprint());
        let fingerprint = data::hex(&Sha256::digest(joined.as_bytes()));
        Data { train, val, fingerprint }
    }

    pub fn load(source: &DataSource) -> Result<Self> {
        let (train, val) = match source {
            DataSource::Synthetic(spec) => data::generate_synthetic(spec)?,
            DataSource::Csv { train, val, classes } => (
                data::load_csv(train, *classes, Split::Train)?,
                data::load_csv(val, *classes, Split::Val)?,
            ),
        };
        if train.is_empty() || val.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(Data::new(train, val))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid_and_round_trips() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        let back: ExperimentConfig = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(back, c);
        let partial: ExperimentConfig = serde_json::from_str(r#"{"epochs": 3}"#).unwrap();
        assert_eq!(partial.epochs, 3);
        assert_eq!(partial.seeds, [0, 1, 2, 3, 4]);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"epoch": 3}"#).is_err());
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"distill": {"method": "kd", "alfa": 1}}"#).is_err());
    }

    #[test]
    fn hash_ignores_out_dir_only() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.out_dir = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        let variants = [
            ExperimentConfig { epochs: 59, ..a.clone() },
            ExperimentConfig { batch_size: 32, ..a.clone() },
            a.with_method(Method::Kd),
            ExperimentConfig { seeds: vec![0], ..a.clone() },
            ExperimentConfig { softening: SofteningConfig::disabled(), ..a.clone() },
        ];
        for v in variants {
            assert_ne!(a.hash(), v.hash());
        }
    }

    #[test]
    fn invalid_configs() {
        let d = ExperimentConfig::default();
        assert!(ExperimentConfig { seeds: vec![], ..d.clone() }.validate().is_err());
        assert!(ExperimentConfig { student: MlpSpec::new(vec![64, 32, 10], 0), ..d.clone() }
            .validate()
            .is_err());
        assert!(ExperimentConfig { lr_decay_epochs: vec![45, 30], ..d.clone() }.validate().is_err());
        assert!(ExperimentConfig { teacher_checkpoint: Some("/nonexistent".into()), ..d }
            .validate()
            .is_err());
    }
}
