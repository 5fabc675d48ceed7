use serde::{Deserialize, Serialize};

use crate::autodiff::{kernels, softmax_t, Tensor};
use crate::distill::Simplifier;
use crate::error::{Error, Result};

use super::table::{fmt_sig9, CsvTable};

/// Fraction of rows whose label ranks among the `k` largest logits.
/// Equal logits rank the lower class index first.
pub fn topk_accuracy(logits: &Tensor, labels: &[usize], k: usize) -> Result<f64> {
    let (b, classes) = logits.dims2()?;
    if labels.len() != b {
        return Err(Error::dim("topk_accuracy", logits.shape(), &[labels.len()]));
    }
    if k == 0 || k > classes {
        return Err(Error::Config(format!("k = {k} is outside [1, {classes}]")));
    }
    if b == 0 {
        return Ok(0.0);
    }
    let hits = (0..b)
        .filter(|&i| {
            let row = logits.row(i);
            let y = labels[i];
            let ahead = row
                .iter()
                .enumerate()
                .filter(|&(j, &v)| v > row[y] || (v == row[y] && j < y))
                .count();
            ahead < k
        })
        .count();
    Ok(hits as f64 / b as f64)
}

/// Two row-stochastic prediction matrices of equal shape.
#[derive(Clone, Debug)]
pub struct AgreementInput {
    student: Tensor,
    reference: Tensor,
}

impl AgreementInput {
    pub fn new(student: Tensor, reference: Tensor) -> Result<Self> {
        student.dims2()?;
        if student.shape() != reference.shape() {
            return Err(Error::dim("average_agreement", student.shape(), reference.shape()));
        }
        for (m, name) in [(&student, "student"), (&reference, "reference")] {
            for i in 0..m.rows() {
                let row = m.row(i);
                let sum: f64 = row.iter().sum();
                if row.iter().any(|&p| p.is_nan() || p < 0.0) || (sum - 1.0).abs() > 1e-6 {
                    return Err(Error::Config(format!(
                        "{name} row {i} is not a probability distribution (sum {sum})"
                    )));
                }
            }
        }
        Ok(AgreementInput { student, reference })
    }

    /// Softmax (T = 1) of both logit matrices.
    pub fn from_logits(student: &Tensor, reference: &Tensor) -> Result<Self> {
        Self::new(softmax_t(student, 1.0)?, softmax_t(reference, 1.0)?)
    }
}

/// Share of rows where both operands put their maximum on the same class.
pub fn average_agreement(a: &AgreementInput) -> f64 {
    let n = a.student.rows();
    if n == 0 {
        return 0.0;
    }
    let same = (0..n)
        .filter(|&i| kernels::argmax(a.student.row(i)) == kernels::argmax(a.reference.row(i)))
        .count();
    same as f64 / n as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaStats {
    pub target_mean: f64,
    pub others_mean: f64,
    pub count: usize,
}

/// Mean Δ at each row's label and mean Δ over all other entries.
pub fn logit_delta_stats(delta: &Tensor, labels: &[usize]) -> Result<DeltaStats> {
    let (b, k) = delta.dims2()?;
    if labels.len() != b {
        return Err(Error::dim("logit_delta_stats", delta.shape(), &[labels.len()]));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::LabelRange { line: 0, label: y as i64, classes: k });
    }
    if b == 0 {
        return Ok(DeltaStats { target_mean: 0.0, others_mean: 0.0, count: 0 });
    }
    let mut target = 0.0;
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = delta.row(i);
        target += row[y];
        total += row.iter().sum::<f64>();
    }
    let others = total - target;
    let others_mean = if k > 1 { others / (b * (k - 1)) as f64 } else { 0.0 };
    Ok(DeltaStats {
        target_mean: target / b as f64,
        others_mean,
        count: b,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preservation {
    pub teacher_top1: f64,
    pub skd_top1: f64,
    /// Share of samples where both argmaxes coincide.
    pub agreement: f64,
}

pub fn teacher_preservation(g_t: &Tensor, g_skd: &Tensor, labels: &[usize]) -> Result<Preservation> {
    if g_t.shape() != g_skd.shape() {
        return Err(Error::dim("teacher_preservation", g_t.shape(), g_skd.shape()));
    }
    let b = g_t.dims2()?.0;
    let same = (0..b)
        .filter(|&i| kernels::argmax(g_t.row(i)) == kernels::argmax(g_skd.row(i)))
        .count();
    Ok(Preservation {
        teacher_top1: topk_accuracy(g_t, labels, 1)?,
        skd_top1: topk_accuracy(g_skd, labels, 1)?,
        agreement: if b == 0 { 0.0 } else { same as f64 / b as f64 },
    })
}

/// Attention matrix with rows and columns sorted by group id.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionExport {
    pub matrix: Tensor,
    /// Original batch row of each sorted position.
    pub order: Vec<usize>,
    /// Group id of each sorted position.
    pub groups: Vec<usize>,
}

/// Eval-mode attention over `g_soft`, reordered by `groups` (stable).
pub fn attention_export(s: &Simplifier, g_soft: &Tensor, groups: &[usize]) -> Result<AttentionExport> {
    let a = s
        .attention_matrix(g_soft)?
        .ok_or_else(|| Error::Config(format!("{} has no attention matrix", s.method())))?;
    let b = a.rows();
    if groups.len() != b {
        return Err(Error::dim("attention_export", a.shape(), &[groups.len()]));
    }
    let mut order: Vec<usize> = (0..b).collect();
    order.sort_by_key(|&i| groups[i]);
    let mut data = Vec::with_capacity(b * b);
    for &i in &order {
        data.extend(order.iter().map(|&j| a.get2(i, j)));
    }
    Ok(AttentionExport {
        matrix: Tensor::new(vec![b, b], data)?,
        groups: order.iter().map(|&i| groups[i]).collect(),
        order,
    })
}

impl AttentionExport {
    /// Mean off-diagonal attention between same-group and different-group
    /// pairs; `None` where no such pair exists.
    pub fn group_means(&self) -> (Option<f64>, Option<f64>) {
        let b = self.groups.len();
        let (mut within, mut nw, mut between, mut nb) = (0.0, 0usize, 0.0, 0usize);
        for i in 0..b {
            for j in 0..b {
                if i == j {
                    continue;
                }
                let v = self.matrix.get2(i, j);
                if self.groups[i] == self.groups[j] {
                    within += v;
                    nw += 1;
                } else {
                    between += v;
                    nb += 1;
                }
            }
        }
        let mean = |s: f64, n: usize| (n > 0).then(|| s / n as f64);
        (mean(within, nw), mean(between, nb))
    }

    /// One row per sorted sample: `group, a0, …, a{B-1}`.
    pub fn to_table(&self) -> CsvTable {
        let b = self.groups.len();
        let mut header = vec!["group".to_string()];
        header.extend((0..b).map(|j| format!("a{j}")));
        let mut t = CsvTable::new(header);
        for i in 0..b {
            let mut row = vec![self.groups[i].to_string()];
            row.extend(self.matrix.row(i).iter().map(|&v| fmt_sig9(v)));
            t.push(row);
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distill::{Method, SimplifierConfig};

    fn attn(classes: usize, seed: u64) -> Simplifier {
        let cfg = SimplifierConfig { dim: 4, dropout: 0.5 };
        Simplifier::for_method(Method::SkdAttn, classes, &cfg, seed).unwrap().unwrap()
    }

    #[test]
    fn topk_trivial_cases() {
        let eye = Tensor::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).unwrap();
        assert_eq!(topk_accuracy(&eye, &[0, 1], 1).unwrap(), 1.0);
        assert_eq!(topk_accuracy(&eye, &[2, 2], 1).unwrap(), 0.0);
        assert_eq!(topk_accuracy(&eye, &[2, 2], 2).unwrap(), 0.0);
        assert_eq!(topk_accuracy(&eye, &[2, 2], 3).unwrap(), 1.0);
        assert!(topk_accuracy(&eye, &[0, 1], 4).is_err());
    }

    #[test]
    fn topk_ties_favor_lower_index() {
        let t = Tensor::from_rows(&[[1.0, 1.0, 1.0]]).unwrap();
        assert_eq!(topk_accuracy(&t, &[0], 1).unwrap(), 1.0);
        assert_eq!(topk_accuracy(&t, &[1], 1).unwrap(), 0.0);
        assert_eq!(topk_accuracy(&t, &[1], 2).unwrap(), 1.0);
        assert_eq!(topk_accuracy(&t, &[2], 2).unwrap(), 0.0);
    }

    #[test]
    fn agreement_trivial_cases() {
        let p = Tensor::from_rows(&[[0.7, 0.3], [0.2, 0.8]]).unwrap();
        let q = Tensor::from_rows(&[[0.4, 0.6], [0.9, 0.1]]).unwrap();
        assert_eq!(average_agreement(&AgreementInput::new(p.clone(), p.clone()).unwrap()), 1.0);
        assert_eq!(average_agreement(&AgreementInput::new(p, q).unwrap()), 0.0);
    }

    #[test]
    fn agreement_input_validation() {
        let p = Tensor::from_rows(&[[0.7, 0.3]]).unwrap();
        let bad = Tensor::from_rows(&[[0.7, 0.4]]).unwrap();
        assert!(AgreementInput::new(p.clone(), bad).is_err());
        assert!(AgreementInput::new(p, Tensor::from_rows(&[[1.0, 0.0, 0.0]]).unwrap()).is_err());
    }

    #[test]
    fn delta_stats_zero_and_hand_case() {
        let z = Tensor::zeros(&[3, 4]);
        let s = logit_delta_stats(&z, &[0, 1, 3]).unwrap();
        assert_eq!((s.target_mean, s.others_mean, s.count), (0.0, 0.0, 3));
        let d = Tensor::from_rows(&[[-1.0, 0.5, 0.5], [0.0, -3.0, 1.0]]).unwrap();
        let s = logit_delta_stats(&d, &[0, 1]).unwrap();
        assert_eq!(s.target_mean, -2.0);
        assert_eq!(s.others_mean, 0.5);
    }

    #[test]
    fn preservation_trivial_cases() {
        let g = Tensor::from_rows(&[[2.0, -1.0], [0.0, 3.0], [1.0, 0.5]]).unwrap();
        let labels = [0, 0, 0];
        let neg = g.map(|v| -v);
        let p = teacher_preservation(&g, &neg, &labels).unwrap();
        assert_eq!(p.agreement, 0.0);
        assert!((p.teacher_top1 + p.skd_top1 - 1.0).abs() < 1e-15);
        let soft = crate::autodiff::log_softmax_t(&g, 4.0).unwrap();
        let p = teacher_preservation(&g, &soft, &labels).unwrap();
        assert_eq!(p.teacher_top1, p.skd_top1);
        assert_eq!(p.agreement, 1.0);
    }

    #[test]
    fn export_single_and_identical_rows() {
        let s = attn(3, 1);
        let one = Tensor::from_rows(&[[0.1, -0.4, 0.3]]).unwrap();
        let e = attention_export(&s, &one, &[0]).unwrap();
        assert_eq!(e.matrix.data(), [1.0]);
        let same = Tensor::from_rows(&[[0.1, -0.4, 0.3]; 4]).unwrap();
        let e = attention_export(&s, &same, &[1, 0, 1, 0]).unwrap();
        for &v in e.matrix.data() {
            assert!((v - 0.25).abs() < 1e-15);
        }
        assert_eq!(e.groups, [0, 0, 1, 1]);
        assert_eq!(e.order, [1, 3, 0, 2]);
    }

    #[test]
    fn export_is_sorted_permutation_of_raw_matrix() {
        let s = attn(4, 3);
        let g = Tensor::new(vec![5, 4], (0..20).map(|i| ((i * 7) % 11) as f64 / 3.0 - 1.5).collect())
            .unwrap();
        let groups = [2, 0, 1, 0, 2];
        let raw = s.attention_matrix(&g).unwrap().unwrap();
        let e = attention_export(&s, &g, &groups).unwrap();
        for i in 0..5 {
            let sum: f64 = e.matrix.row(i).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            for j in 0..5 {
                assert_eq!(e.matrix.get2(i, j), raw.get2(e.order[i], e.order[j]));
            }
        }
        let table = e.to_table();
        assert_eq!(table.header[0], "group");
        assert_eq!(table.rows.len(), 5);
    }

    #[test]
    fn export_rejects_fc() {
        let cfg = SimplifierConfig::default();
        let fc = Simplifier::for_method(Method::SkdFc1, 3, &cfg, 0).unwrap().unwrap();
        assert!(attention_export(&fc, &Tensor::zeros(&[2, 3]), &[0, 0]).is_err());
    }
}
