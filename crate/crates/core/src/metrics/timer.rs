use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Median wall-clock per call, in milliseconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub median_ms: f64,
    pub measured: usize,
    pub discarded: usize,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Runs `step` `warmup + measured` times and reports the median of the last
/// `measured` calls. Requires at least 50 measured calls.
pub fn batch_timer<F>(mut step: F, warmup: usize, measured: usize) -> Result<Timing>
where
    F: FnMut() -> Result<()>,
{
    if measured < 50 {
        return Err(Error::Config(format!("timing needs at least 50 batches, got {measured}")));
    }
    for _ in 0..warmup {
        step()?;
    }
    let mut ms = Vec::with_capacity(measured);
    for _ in 0..measured {
        let t0 = Instant::now();
        step()?;
        ms.push(t0.elapsed().as_secs_f64() * 1e3);
    }
    Ok(Timing {
        median_ms: median(&ms).expect("non-empty"),
        measured,
        discarded: warmup,
    })
}
