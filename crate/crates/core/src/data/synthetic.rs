use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Dataset, Split};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Gaussian classes nested inside Gaussian superclasses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub superclasses: usize,
    pub classes_per_superclass: usize,
    pub features: usize,
    pub samples_per_class: usize,
    /// Std of class centers around their superclass center.
    pub within_spread: f64,
    /// Std of superclass centers around the origin.
    pub between_spread: f64,
    pub noise_std: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            superclasses: 4,
            classes_per_superclass: 5,
            features: 64,
            samples_per_class: 500,
            within_spread: 0.45,
            between_spread: 1.0,
            noise_std: 1.5,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn classes(&self) -> usize {
        self.superclasses * self.classes_per_superclass
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.superclasses == 0 || self.classes_per_superclass == 0 {
            return bad("superclass and class counts must be positive".into());
        }
        if self.features == 0 || self.samples_per_class == 0 {
            return bad("feature dimension and samples per class must be positive".into());
        }
        if !(self.within_spread > 0.0 && self.between_spread > 0.0) {
            return bad("spreads must be positive".into());
        }
        if self.between_spread <= self.within_spread {
            return bad(format!(
                "between-superclass spread {} must exceed within-superclass spread {}",
                self.between_spread, self.within_spread
            ));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad(format!("noise std {} is invalid", self.noise_std));
        }
        Ok(())
    }

    /// Class centers, `classes() × features`, in label order.
    pub fn class_centers(&self) -> Result<Tensor> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        Ok(self.centers(&mut rng))
    }

    fn centers(&self, rng: &mut ChaCha8Rng) -> Tensor {
        let f = self.features;
        let between = Normal::new(0.0, self.between_spread).expect("validated");
        let within = Normal::new(0.0, self.within_spread).expect("validated");
        let supers: Vec<f64> = (0..self.superclasses * f).map(|_| between.sample(rng)).collect();
        let mut centers = Vec::with_capacity(self.classes() * f);
        for s in 0..self.superclasses {
            for _ in 0..self.classes_per_superclass {
                for j in 0..f {
                    centers.push(supers[s * f + j] + within.sample(rng));
                }
            }
        }
        Tensor::new(vec![self.classes(), f], centers).expect("sized by construction")
    }
}

/// Provenance sidecar written next to generated data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub generator: String,
    pub spec: SyntheticSpec,
    pub train_samples: usize,
    pub val_samples: usize,
    pub train_fingerprint: String,
    pub val_fingerprint: String,
}

impl Manifest {
    pub fn new(spec: &SyntheticSpec, train: &Dataset, val: &Dataset) -> Self {
        Manifest {
            generator: "gaussian-superclass-v1".into(),
            spec: spec.clone(),
            train_samples: train.len(),
            val_samples: val.len(),
            train_fingerprint: train.fingerprint(),
            val_fingerprint: val.fingerprint(),
        }
    }
}

/// Draws the dataset and splits each class 80/20 into train and validation.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centers = spec.centers(&mut rng);
    let noise = Normal::new(0.0, spec.noise_std).expect("validated");
    let f = spec.features;
    let n = spec.samples_per_class;
    let n_val = n / 5;
    let n_train = n - n_val;

    let mut train = (Vec::new(), Vec::new(), Vec::new());
    let mut val = (Vec::new(), Vec::new(), Vec::new());
    for class in 0..spec.classes() {
        let center = centers.row(class);
        let superclass = class / spec.classes_per_superclass;
        for i in 0..n {
            let dest = if i < n_train { &mut train } else { &mut val };
            dest.0.extend(center.iter().map(|&c| c + noise.sample(&mut rng)));
            dest.1.push(class);
            dest.2.push(superclass);
        }
    }
    let build = |(x, y, s): (Vec<f64>, Vec<usize>, Vec<usize>), split| {
        let rows = y.len();
        Dataset::new(Tensor::new(vec![rows, f], x)?, y, s, spec.classes(), split)
    };
    Ok((build(train, Split::Train)?, build(val, Split::Val)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticSpec {
        SyntheticSpec {
            superclasses: 3,
            classes_per_superclass: 2,
            features: 5,
            samples_per_class: 10,
            ..Default::default()
        }
    }

    #[test]
    fn zero_noise_single_sample_hits_centers() {
        let spec = SyntheticSpec {
            samples_per_class: 1,
            noise_std: 0.0,
            ..small()
        };
        let (train, val) = generate_synthetic(&spec).unwrap();
        assert_eq!(train.len(), spec.classes());
        assert!(val.is_empty());
        let centers = spec.class_centers().unwrap();
        for i in 0..train.len() {
            assert_eq!(train.features().row(i), centers.row(train.labels()[i]));
        }
    }

    #[test]
    fn deterministic_from_seed() {
        let a = generate_synthetic(&small()).unwrap();
        let b = generate_synthetic(&small()).unwrap();
        assert_eq!(a.0.fingerprint(), b.0.fingerprint());
        assert_eq!(a.1.fingerprint(), b.1.fingerprint());
        let c = generate_synthetic(&SyntheticSpec { seed: 1, ..small() }).unwrap();
        assert_ne!(a.0.fingerprint(), c.0.fingerprint());
    }

    #[test]
    fn stratified_split_and_consistent_superclasses() {
        let (train, val) = generate_synthetic(&small()).unwrap();
        assert_eq!(train.len() + val.len(), 60);
        for class in 0..6 {
            assert_eq!(train.labels().iter().filter(|&&y| y == class).count(), 8);
            assert_eq!(val.labels().iter().filter(|&&y| y == class).count(), 2);
        }
        for d in [&train, &val] {
            for (y, s) in d.labels().iter().zip(d.superclasses()) {
                assert_eq!(y / 2, *s);
            }
        }
    }

    #[test]
    fn superclass_structure_in_center_distances() {
        let spec = SyntheticSpec {
            superclasses: 5,
            classes_per_superclass: 4,
            features: 32,
            within_spread: 0.1,
            between_spread: 2.0,
            ..Default::default()
        };
        let centers = spec.class_centers().unwrap();
        let (mut within, mut nw, mut between, mut nb) = (0.0, 0, 0.0, 0);
        for i in 0..spec.classes() {
            for j in i + 1..spec.classes() {
                let d: f64 = centers
                    .row(i)
                    .iter()
                    .zip(centers.row(j))
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                if i / 4 == j / 4 {
                    within += d;
                    nw += 1;
                } else {
                    between += d;
                    nb += 1;
                }
            }
        }
        assert!(within / (nw as f64) < between / (nb as f64));
    }

    #[test]
    fn invalid_specs() {
        assert!(SyntheticSpec { superclasses: 0, ..small() }.validate().is_err());
        assert!(SyntheticSpec { within_spread: 2.0, between_spread: 1.0, ..small() }
            .validate()
            .is_err());
        assert!(SyntheticSpec { noise_std: -1.0, ..small() }.validate().is_err());
    }
}
