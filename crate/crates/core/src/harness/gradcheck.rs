//! Finite-difference sweep over every differentiable tape operation and the
//! end-to-end distillation loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autodiff::{finite_diff_check, Tape, Tensor, Var};
use crate::data::Batch;
use crate::distill::{record, DistillConfig, Method, Simplifier, SimplifierConfig, SofteningConfig};
use crate::error::Result;
use crate::nn::{LinearLayer, Mlp, MlpSpec, Module};
use crate::seeds;

pub const GRADCHECK_H: f64 = 1e-5;
pub const GRADCHECK_TOL: f64 = 1e-4;

#[derive(Clone, Debug, Serialize)]
pub struct SuiteEntry {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    pub max_rel_error: f64,
}

impl SuiteEntry {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).expect("sized")
}

/// Entries bounded away from zero, so relu kinks stay out of reach of `h`.
fn off_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v = rng.random_range(0.05..2.0);
            if rng.random_bool(0.5) { v } else { -v }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("sized")
}

/// A random but fixed linear functional of `y`, so every output coordinate
/// carries its own upstream gradient.
fn weighted_sum(t: &mut Tape, y: Var, seed: u64) -> Result<Var> {
    let w = t.dropout(y, 0.25, seed, true)?;
    t.sum(w)
}

type Case = (Vec<Tensor>, Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>);

fn primitive_case(name: &str, rng: &mut ChaCha8Rng, seed: u64) -> Case {
    let m = rng.random_range(1..5);
    let n = rng.random_range(1..6);
    let p = rng.random_range(1..5);
    let x = uniform(rng, &[m, n], -2.0, 2.0);
    match name {
        "matmul" => (
            vec![x, uniform(rng, &[n, p], -2.0, 2.0)],
            Box::new(move |t, v| {
                let y = t.matmul(v[0], v[1])?;
                weighted_sum(t, y, seed)
            }),
        ),
        "transpose" => (
            vec![x],
            Box::new(move |t, v| {
                let y = t.transpose(v[0])?;
                weighted_sum(t, y, seed)
            }),
        ),
        "add" => (
            vec![x, uniform(rng, &[m, n], -2.0, 2.0)],
            Box::new(move |t, v| {
                let y = t.add(v[0], v[1])?;
                weighted_sum(t, y, seed)
            }),
        ),
        "add_row" => (
            vec![x, uniform(rng, &[n], -2.0, 2.0)],
            Box::new(move |t, v| {
                let y = t.add_row(v[0], v[1])?;
                weighted_sum(t, y, seed)
            }),
        ),
        "scale" => {
            let s = rng.random_range(-3.0..3.0);
            (
                vec![x],
                Box::new(move |t, v| {
                    let y = t.scale(v[0], s)?;
                    weighted_sum(t, y, seed)
                }),
            )
        }
        "relu" => (
            vec![off_zero(rng, &[m, n])],
            Box::new(move |t, v| {
                let y = t.relu(v[0])?;
                weighted_sum(t, y, seed)
            }),
        ),
        "softmax_t" | "log_softmax_t" => {
            let temp = rng.random_range(0.5..5.0);
            let log = name == "log_softmax_t";
            (
                vec![x],
                Box::new(move |t, v| {
                    let y = if log { t.log_softmax_t(v[0], temp)? } else { t.softmax_t(v[0], temp)? };
                    weighted_sum(t, y, seed)
                }),
            )
        }
        "slice_cols" => {
            let start = rng.random_range(0..n);
            let len = rng.random_range(1..=n - start);
            (
                vec![x],
                Box::new(move |t, v| {
                    let y = t.slice_cols(v[0], start, len)?;
                    weighted_sum(t, y, seed)
                }),
            )
        }
        "dropout" => (
            vec![x],
            Box::new(move |t, v| {
                let y = t.dropout(v[0], 0.5, seeds::derive(seed, 1), true)?;
                weighted_sum(t, y, seed)
            }),
        ),
        "kl_div" => (
            vec![uniform(rng, &[m, n], 0.05, 1.0), uniform(rng, &[m, n], 0.05, 1.0)],
            Box::new(|t, v| t.kl_div(v[0], v[1])),
        ),
        "cross_entropy" => {
            let labels: Vec<usize> = (0..m).map(|_| rng.random_range(0..n)).collect();
            (
                vec![uniform(rng, &[m, n], 0.05, 1.0)],
                Box::new(move |t, v| t.cross_entropy(v[0], &labels)),
            )
        }
        "sum" => (vec![x], Box::new(|t, v| t.sum(v[0]))),
        other => unreachable!("unknown primitive {other}"),
    }
}

/// Checked operations; the last entry is the end-to-end total loss.
pub const CHECKS: [&str; 14] = [
    "matmul",
    "transpose",
    "add",
    "add_row",
    "scale",
    "relu",
    "softmax_t",
    "log_softmax_t",
    "slice_cols",
    "dropout",
    "kl_div",
    "cross_entropy",
    "sum",
    "total_loss",
];

/// End-to-end total loss for a small random student and simplifier.
fn total_loss_case(rng: &mut ChaCha8Rng, seed: u64, method: Method) -> Case {
    let (b, f, h, k) = (rng.random_range(2..5), 3, 4, 3);
    let student = Mlp::init(&MlpSpec::new(vec![f, h, k], seed)).expect("valid spec");
    let mut simplifier = Simplifier::for_method(method, k, &SimplifierConfig { dim: 2, dropout: 0.5 }, seed)
        .expect("valid config")
        .expect("simplifier method");
    // leave the zero initialization so gradients reach every layer
    if let Simplifier::Attention(a) = &mut simplifier {
        a.proj_out = LinearLayer::he(2, k, rng);
    }
    let batch = Batch {
        features: uniform(rng, &[b, f], -2.0, 2.0),
        labels: (0..b).map(|_| rng.random_range(0..k)).collect(),
        superclasses: vec![0; b],
        indices: (0..b).collect(),
    };
    let teacher = uniform(rng, &[b, k], -3.0, 3.0);
    let cfg = DistillConfig {
        alpha: rng.random_range(0.5..4.0),
        warmup_epochs: 0,
        method,
        ..Default::default()
    };
    let mut inputs: Vec<Tensor> = student.named_params().into_iter().map(|(_, t)| t.clone()).collect();
    let n_student = inputs.len();
    inputs.extend(simplifier.named_params().into_iter().map(|(_, t)| t.clone()));
    let f = move |t: &mut Tape, v: &[Var]| -> Result<Var> {
        let r = record(
            t,
            &student,
            v[..n_student].to_vec(),
            Some(&simplifier),
            v[n_student..].to_vec(),
            Some(&teacher),
            &batch,
            &cfg,
            &SofteningConfig::default(),
            0,
            true,
            seed,
        )?;
        Ok(r.total)
    };
    (inputs, Box::new(f))
}

/// Runs `cases` seeded random checks per operation, plus the same number of
/// end-to-end checks of the total distillation loss with respect to student
/// and simplifier parameters.
pub fn suite(cases: usize, seed: u64) -> Result<Vec<SuiteEntry>> {
    let mut out = Vec::new();
    for (i, &name) in CHECKS.iter().enumerate() {
        let mut entry = SuiteEntry {
            name,
            cases,
            failures: 0,
            max_rel_error: 0.0,
        };
        for c in 0..cases {
            let case_seed = seeds::derive(seeds::derive(seed, i as u64), c as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(case_seed);
            let (inputs, f) = if name == "total_loss" {
                let method = [Method::SkdAttn, Method::SkdFc2][c % 2];
                total_loss_case(&mut rng, case_seed, method)
            } else {
                primitive_case(name, &mut rng, case_seed)
            };
            let r = finite_diff_check(f, &inputs, GRADCHECK_H, GRADCHECK_TOL)?;
            entry.max_rel_error = entry.max_rel_error.max(r.max_rel_error);
            if !r.passed {
                entry.failures += 1;
            }
        }
        out.push(entry);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_passes() {
        for e in suite(5, 11).unwrap() {
            assert!(e.passed(), "{e:?}");
        }
    }
}
