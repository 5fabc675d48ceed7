use serde::{Deserialize, Serialize};

use super::config::{warmup_weight, DistillConfig, Method, SofteningConfig};
use super::loss::{kd_loss, skd_logits, skd_loss, soften, weighted_total};
use super::simplifier::Simplifier;
use crate::autodiff::{Gradients, Tape, Tensor, Var};
use crate::data::Batch;
use crate::error::{Error, Result};
use crate::nn::{Mlp, Module, Sgd};

/// Everything a distillation step mutates.
#[derive(Clone, Debug)]
pub struct Learner {
    pub student: Mlp,
    pub simplifier: Option<Simplifier>,
    pub student_opt: Sgd,
    pub simplifier_opt: Option<Sgd>,
    /// Steps taken so far; feeds the dropout seed.
    pub step: u64,
}

/// Loss values of one step, before the parameter update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepLosses {
    pub ce: f64,
    /// Scaled KL term (vanilla or simplified); 0 for `none`.
    pub distill: f64,
    pub total: f64,
    /// Probabilities floored inside logarithms.
    pub clamps: usize,
}

/// Handles of everything one forward pass records.
#[derive(Clone, Debug)]
pub struct Recorded {
    pub student_params: Vec<Var>,
    pub simplifier_params: Vec<Var>,
    pub student_logits: Var,
    pub skd_logits: Option<Var>,
    pub teacher_logits: Option<Var>,
    pub soft_logits: Option<Var>,
    pub ce: Var,
    pub distill: Option<Var>,
    pub total: Var,
}

/// A tape after a forward pass, kept for inspection and gradient checks.
pub struct Forward {
    pub tape: Tape,
    pub vars: Recorded,
}

impl Learner {
    pub fn new(
        student: Mlp,
        simplifier: Option<Simplifier>,
        student_opt: Sgd,
        simplifier_opt: Option<Sgd>,
    ) -> Self {
        Learner {
            student,
            simplifier,
            student_opt,
            simplifier_opt,
            step: 0,
        }
    }
}

/// Records the full forward pass for `cfg.method` on a fresh tape.
///
/// `teacher_logits` is required for every method but `none`; it enters the
/// tape as a constant. `training` controls simplifier dropout.
#[allow(clippy::too_many_arguments)]
pub fn forward(
    student: &Mlp,
    simplifier: Option<&Simplifier>,
    teacher_logits: Option<&Tensor>,
    batch: &Batch,
    cfg: &DistillConfig,
    softening: &SofteningConfig,
    epoch: usize,
    training: bool,
    dropout_seed: u64,
) -> Result<Forward> {
    let mut tape = Tape::new();
    let student_params = student.bind(&mut tape, true);
    let simplifier_params = match (cfg.method.uses_simplifier(), simplifier) {
        (true, Some(s)) => s.bind(&mut tape, true),
        _ => Vec::new(),
    };
    let vars = record(
        &mut tape,
        student,
        student_params,
        simplifier,
        simplifier_params,
        teacher_logits,
        batch,
        cfg,
        softening,
        epoch,
        training,
        dropout_seed,
    )?;
    Ok(Forward { tape, vars })
}

/// [`forward`] onto an existing tape with parameters already bound; the
/// architectures are taken from `student` and `simplifier`, the values from
/// the bound handles.
#[allow(clippy::too_many_arguments)]
pub fn record(
    tape: &mut Tape,
    student: &Mlp,
    student_params: Vec<Var>,
    simplifier: Option<&Simplifier>,
    simplifier_params: Vec<Var>,
    teacher_logits: Option<&Tensor>,
    batch: &Batch,
    cfg: &DistillConfig,
    softening: &SofteningConfig,
    epoch: usize,
    training: bool,
    dropout_seed: u64,
) -> Result<Recorded> {
    let x = tape.constant(batch.features.clone());
    let g_s = student.forward(tape, &student_params, x)?;
    let p_s = tape.softmax_t(g_s, 1.0)?;
    let ce = tape.cross_entropy(p_s, &batch.labels)?;
    let weight = warmup_weight(epoch, cfg.warmup_epochs);

    let mut out = Recorded {
        student_params,
        simplifier_params,
        student_logits: g_s,
        skd_logits: None,
        teacher_logits: None,
        soft_logits: None,
        ce,
        distill: None,
        total: ce,
    };
    if cfg.method == Method::None {
        return Ok(out);
    }

    let g_t = teacher_logits.ok_or_else(|| {
        Error::Config(format!("method {} needs teacher logits", cfg.method))
    })?;
    match cfg.method {
        Method::None => unreachable!(),
        Method::Kd => {
            let t = tape.constant(g_t.clone());
            let kl = kd_loss(tape, t, g_s, cfg)?;
            out.teacher_logits = Some(t);
            out.distill = Some(kl);
            out.total = weighted_total(tape, ce, cfg.alpha, kl, weight * cfg.beta)?;
        }
        Method::SkdAttn | Method::SkdFc1 | Method::SkdFc2 => {
            let simplifier = simplifier.ok_or_else(|| {
                Error::Config(format!("method {} needs a simplifier", cfg.method))
            })?;
            let t = tape.constant(g_t.clone());
            let g_soft = tape.constant(soften(g_t, softening)?);
            let trace = simplifier.forward(tape, &out.simplifier_params, g_soft, training, dropout_seed)?;
            let g_skd = skd_logits(tape, g_soft, trace.delta)?;
            let l_skd = skd_loss(tape, g_skd, g_s, cfg)?;
            out.teacher_logits = Some(t);
            out.soft_logits = Some(g_soft);
            out.skd_logits = Some(g_skd);
            out.distill = Some(l_skd);
            out.total = weighted_total(tape, ce, 1.0, l_skd, weight * cfg.alpha)?;
        }
    }
    Ok(out)
}

fn collect(grads: &Gradients, vars: &[Var]) -> Vec<Tensor> {
    vars.iter().map(|&v| grads.wrt(v).clone()).collect()
}

/// One joint update of student and simplifier.
///
/// The teacher runs in eval mode outside the tape. On a non-finite loss or
/// gradient the learner is left untouched.
#[allow(clippy::too_many_arguments)]
pub fn joint_step(
    learner: &mut Learner,
    teacher: Option<&Mlp>,
    batch: &Batch,
    cfg: &DistillConfig,
    softening: &SofteningConfig,
    epoch: usize,
) -> Result<StepLosses> {
    let g_t = match (cfg.method.uses_teacher(), teacher) {
        (false, _) => None,
        (true, Some(t)) => Some(t.infer(&batch.features)?),
        (true, None) => {
            return Err(Error::Config(format!("method {} needs a teacher", cfg.method)))
        }
    };
    step_with_teacher_logits(learner, g_t.as_ref(), batch, cfg, softening, epoch)
}

/// [`joint_step`] with the teacher's logits for `batch` already computed.
pub fn step_with_teacher_logits(
    learner: &mut Learner,
    teacher_logits: Option<&Tensor>,
    batch: &Batch,
    cfg: &DistillConfig,
    softening: &SofteningConfig,
    epoch: usize,
) -> Result<StepLosses> {
    let dropout_seed = learner
        .simplifier
        .as_ref()
        .map_or(0, |s| s.step_seed(learner.step));
    let fwd = forward(
        &learner.student,
        learner.simplifier.as_ref(),
        teacher_logits,
        batch,
        cfg,
        softening,
        epoch,
        true,
        dropout_seed,
    )?;
    let (tape, vars) = (&fwd.tape, &fwd.vars);
    let losses = StepLosses {
        ce: tape.value(vars.ce).item(),
        distill: vars.distill.map_or(0.0, |d| tape.value(d).item()),
        total: tape.value(vars.total).item(),
        clamps: tape.clamp_count(),
    };
    let non_finite = Error::NonFiniteLoss {
        epoch,
        step: learner.step as usize,
    };
    if !losses.total.is_finite() {
        return Err(non_finite);
    }

    let grads = tape.backward(vars.total)?;
    let student_grads = collect(&grads, &vars.student_params);
    let simplifier_grads = collect(&grads, &vars.simplifier_params);
    for (g, (name, _)) in student_grads.iter().zip(learner.student.named_params()) {
        if !g.is_finite() {
            return Err(Error::NonFiniteGradient(format!("student.{name}")));
        }
    }
    if let Some(s) = &learner.simplifier {
        for (g, (name, _)) in simplifier_grads.iter().zip(s.named_params()) {
            if !g.is_finite() {
                return Err(Error::NonFiniteGradient(format!("simplifier.{name}")));
            }
        }
    }

    learner.student_opt.step(&mut learner.student, &student_grads)?;
    // at α = 0 the simplifier is outside the objective; leave it (and its
    // weight decay) alone
    if let (Some(s), Some(opt)) = (learner.simplifier.as_mut(), learner.simplifier_opt.as_mut()) {
        if !simplifier_grads.is_empty() && cfg.alpha != 0.0 {
            opt.step(s, &simplifier_grads)?;
        }
    }
    learner.step += 1;
    Ok(losses)
}
