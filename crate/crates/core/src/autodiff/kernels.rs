//! Slice-level numeric kernels shared by the tape and by tape-free evaluation.
//!
//! Every kernel accumulates in a fixed order, so a row of an output depends
//! only on the matching input row and is bitwise reproducible regardless of
//! how samples are grouped into batches.

/// `out = a · b` for row-major `a: m×n`, `b: n×p`.
pub fn matmul(a: &[f64], b: &[f64], m: usize, n: usize, p: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), m * n);
    debug_assert_eq!(b.len(), n * p);
    let mut out = vec![0.0; m * p];
    for (a_row, out_row) in a.chunks_exact(n.max(1)).zip(out.chunks_exact_mut(p.max(1))) {
        for (&a_ik, b_row) in a_row.iter().zip(b.chunks_exact(p.max(1))) {
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += a_ik * bv;
            }
        }
    }
    out
}

pub fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

/// Row-wise `softmax(x / t)` with max subtraction.
pub fn softmax_rows(x: &[f64], cols: usize, t: f64) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for (row, o) in x.chunks_exact(cols).zip(out.chunks_exact_mut(cols)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (oi, &v) in o.iter_mut().zip(row) {
            *oi = ((v - max) / t).exp();
            sum += *oi;
        }
        for oi in o.iter_mut() {
            *oi /= sum;
        }
    }
    out
}

/// Row-wise `x / t − logsumexp(x / t)` with max subtraction.
pub fn log_softmax_rows(x: &[f64], cols: usize, t: f64) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for (row, o) in x.chunks_exact(cols).zip(out.chunks_exact_mut(cols)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|&v| ((v - max) / t).exp()).sum();
        let log_sum = sum.ln();
        for (oi, &v) in o.iter_mut().zip(row) {
            *oi = (v - max) / t - log_sum;
        }
    }
    out
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}
