use super::config::{DistillConfig, SofteningConfig};
use crate::autodiff::{self, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Softening processing: `log_softmax(g_t / T)` when enabled, identity otherwise.
///
/// Returns a plain tensor; teacher outputs never enter a gradient tape.
pub fn soften(g_t: &Tensor, cfg: &SofteningConfig) -> Result<Tensor> {
    if !g_t.is_finite() {
        return Err(Error::NonFiniteInput("soften"));
    }
    if cfg.enabled {
        autodiff::log_softmax_t(g_t, cfg.t_soften)
    } else {
        Ok(g_t.clone())
    }
}

/// `g_skd = g_soft + Δ`.
pub fn skd_logits(tape: &mut Tape, g_soft: Var, delta: Var) -> Result<Var> {
    let (a, b) = (tape.value(g_soft), tape.value(delta));
    if a.shape() != b.shape() {
        return Err(Error::dim("skd_logits", a.shape(), b.shape()));
    }
    tape.add(g_soft, delta)
}

/// `KL(softmax(target / T) ‖ softmax(student / T))`, times `T²` when enabled.
fn softened_kl(tape: &mut Tape, target: Var, student: Var, cfg: &DistillConfig) -> Result<Var> {
    let (a, b) = (tape.value(target), tape.value(student));
    if a.shape() != b.shape() {
        return Err(Error::dim("distillation loss", a.shape(), b.shape()));
    }
    let p = tape.softmax_t(target, cfg.t_distill)?;
    let q = tape.softmax_t(student, cfg.t_distill)?;
    let kl = tape.kl_div(p, q)?;
    let scale = cfg.kl_scale();
    if scale == 1.0 {
        Ok(kl)
    } else {
        tape.scale(kl, scale)
    }
}

/// Vanilla distillation loss against teacher logits `g_t` (expected constant).
pub fn kd_loss(tape: &mut Tape, g_t: Var, g_s: Var, cfg: &DistillConfig) -> Result<Var> {
    softened_kl(tape, g_t, g_s, cfg)
}

/// Distillation loss against simplified logits; gradient reaches both the
/// simplifier (through `g_skd`) and the student (through `g_s`).
pub fn skd_loss(tape: &mut Tape, g_skd: Var, g_s: Var, cfg: &DistillConfig) -> Result<Var> {
    softened_kl(tape, g_skd, g_s, cfg)
}

/// `ce_weight · ce + distill_weight · distill`.
pub fn weighted_total(
    tape: &mut Tape,
    ce: Var,
    ce_weight: f64,
    distill: Var,
    distill_weight: f64,
) -> Result<Var> {
    let a = if ce_weight == 1.0 { ce } else { tape.scale(ce, ce_weight)? };
    let b = tape.scale(distill, distill_weight)?;
    tape.add(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distill::Method;

    fn cfg(t: f64) -> DistillConfig {
        DistillConfig {
            t_distill: t,
            method: Method::Kd,
            ..Default::default()
        }
    }

    fn kd_value(gt: &Tensor, gs: &Tensor, c: &DistillConfig) -> f64 {
        let mut tape = Tape::new();
        let a = tape.constant(gt.clone());
        let b = tape.constant(gs.clone());
        let l = kd_loss(&mut tape, a, b, c).unwrap();
        tape.value(l).item()
    }

    #[test]
    fn soften_modes() {
        let g = Tensor::from_rows(&[[3.0, -1.0, 0.5]]).unwrap();
        assert_eq!(soften(&g, &SofteningConfig::disabled()).unwrap(), g);
        let u = Tensor::from_rows(&[[0.0, 0.0, 0.0, 0.0]]).unwrap();
        let s = soften(&u, &SofteningConfig::default()).unwrap();
        for &v in s.data() {
            assert!((v + 4f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn kd_loss_zero_for_equal_logits() {
        let g = Tensor::from_rows(&[[1.0, 2.0, -3.0], [0.0, 0.5, 0.1]]).unwrap();
        assert_eq!(kd_value(&g, &g, &cfg(4.0)), 0.0);
    }

    #[test]
    fn kd_loss_vanishes_at_high_temperature() {
        let gt = Tensor::from_rows(&[[5.0, -2.0, 1.0]]).unwrap();
        let gs = Tensor::from_rows(&[[-1.0, 3.0, 0.0]]).unwrap();
        let mut c = cfg(1.0);
        c.t_squared_scaling = false;
        let mut prev = kd_value(&gt, &gs, &c);
        for t in [10.0, 100.0, 1e4] {
            c.t_distill = t;
            let v = kd_value(&gt, &gs, &c);
            assert!(v < prev);
            prev = v;
        }
        assert!(prev < 1e-6);
    }

    #[test]
    fn shape_mismatch() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 4]));
        assert!(matches!(kd_loss(&mut tape, a, b, &cfg(4.0)), Err(Error::Dimension { .. })));
        assert!(matches!(skd_logits(&mut tape, a, b), Err(Error::Dimension { .. })));
    }
}
