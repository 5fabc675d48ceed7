#![allow(dead_code)]

use skd_core::data::SyntheticSpec;
use skd_core::harness::{DataSource, ExperimentConfig};
use skd_core::nn::MlpSpec;

/// A config small enough to train in well under a second.
pub fn tiny(out: &std::path::Path) -> ExperimentConfig {
    let mut c = ExperimentConfig {
        data: DataSource::Synthetic(SyntheticSpec {
            superclasses: 2,
            classes_per_superclass: 3,
            features: 12,
            samples_per_class: 40,
            noise_std: 1.0,
            ..Default::default()
        }),
        teacher: MlpSpec::new(vec![12, 32, 6], 0),
        student: MlpSpec::new(vec![12, 6, 6], 0),
        teacher_epochs: 4,
        epochs: 3,
        lr_decay_epochs: vec![2],
        batch_size: 32,
        seeds: vec![0, 1],
        alphas: vec![0.5, 2.0],
        out_dir: out.to_path_buf(),
        ..Default::default()
    };
    c.simplifier.dim = 4;
    c.distill.warmup_epochs = 2;
    c
}
