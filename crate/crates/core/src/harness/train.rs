use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::checkpoint::{save_checkpoint, Checkpoint, ModelKind, RngState};
use super::config::{Data, ExperimentConfig};
use crate::autodiff::Tensor;
use crate::data::{self, Batch, BatchIterator, Dataset};
use crate::distill::{
    joint_step, soften, step_with_teacher_logits, DistillConfig, Learner, Method, Simplifier,
};
use crate::error::{Error, Result};
use crate::metrics::{
    attention_export, average_agreement, batch_timer, logit_delta_stats, median,
    teacher_preservation, topk_accuracy, AgreementInput, DeltaStats, EpochMetrics, Preservation,
    RunMetrics, Timing,
};
use crate::nn::{LrSchedule, Mlp, MlpSpec, Module, Sgd};
use crate::seeds;

const TAG_SHUFFLE: u64 = 1;
const TAG_SIMPLIFIER: u64 = 2;
const TAG_EVAL: u64 = 3;

/// Batches measured by the per-run timing probe, after 10 discarded ones.
pub const TIMING_BATCHES: usize = 50;

/// SHA-256 over a module's parameter bits.
pub fn param_hash<M: Module>(m: &M) -> String {
    let mut h = Sha256::new();
    for (name, t) in m.named_params() {
        h.update(name.as_bytes());
        for v in t.data() {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    data::hex(&h.finalize())
}

#[derive(Clone, Debug)]
pub struct TeacherRun {
    pub checkpoint: Checkpoint,
    pub metrics: RunMetrics,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
}

impl Aggregate {
    pub fn of(values: &[f64]) -> Option<Aggregate> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Aggregate { mean, std })
    }
}

/// Final-state analyses of one trained student (and simplifier).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub train_agreement: f64,
    pub val_agreement: f64,
    /// Δ statistics on the training set.
    pub delta_stats: Option<DeltaStats>,
    /// Teacher vs simplified-logit accuracy on the validation set.
    pub preservation: Option<Preservation>,
    /// Mean off-diagonal attention for same- and different-superclass pairs.
    pub attention_within: Option<f64>,
    pub attention_between: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub metrics: RunMetrics,
    pub final_top1: f64,
    pub final_top5: f64,
    pub analysis: Analysis,
    pub student_hash: String,
    /// Live-teacher training step, measured after the run.
    pub timing: Timing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config_hash: String,
    pub dataset: String,
    pub student: MlpSpec,
    pub label: String,
    pub method: Method,
    pub alpha: f64,
    pub softening: bool,
    pub seeds: Vec<SeedRecord>,
    pub top1: Aggregate,
    pub val_agreement: Aggregate,
    pub ms_per_batch: Aggregate,
    pub delta_target: Option<Aggregate>,
    pub delta_others: Option<Aggregate>,
    pub teacher_top1: Option<Aggregate>,
    pub skd_top1: Option<Aggregate>,
}

impl RunResult {
    fn assemble(cfg: &ExperimentConfig, data: &Data, seeds: Vec<SeedRecord>) -> Result<Self> {
        if seeds.is_empty() {
            return Err(Error::Config("no seeds".into()));
        }
        let pick = |f: &dyn Fn(&SeedRecord) -> f64| {
            Aggregate::of(&seeds.iter().map(f).collect::<Vec<_>>()).expect("non-empty")
        };
        let opt = |f: &dyn Fn(&SeedRecord) -> Option<f64>| {
            seeds.iter().map(f).collect::<Option<Vec<_>>>().and_then(|v| Aggregate::of(&v))
        };
        let method = cfg.distill.method;
        let mut label = method.to_string();
        if method.uses_simplifier() {
            label += &format!(" a={}", cfg.distill.alpha);
            if !cfg.softening.enabled {
                label += " no-soften";
            }
        }
        Ok(RunResult {
            config_hash: cfg.hash(),
            dataset: data.fingerprint.clone(),
            student: cfg.student.clone(),
            label,
            method,
            alpha: cfg.distill.alpha,
            softening: cfg.softening.enabled,
            top1: pick(&|s| s.final_top1),
            val_agreement: pick(&|s| s.analysis.val_agreement),
            ms_per_batch: pick(&|s| s.timing.median_ms),
            delta_target: opt(&|s| s.analysis.delta_stats.map(|d| d.target_mean)),
            delta_others: opt(&|s| s.analysis.delta_stats.map(|d| d.others_mean)),
            teacher_top1: opt(&|s| s.analysis.preservation.map(|p| p.teacher_top1)),
            skd_top1: opt(&|s| s.analysis.preservation.map(|p| p.skd_top1)),
            seeds,
        })
    }

    /// Rebuilds the aggregates from the per-seed records.
    pub fn recomputed(&self, cfg: &ExperimentConfig, data: &Data) -> Result<Self> {
        Self::assemble(cfg, data, self.seeds.clone())
    }

    /// Copy with wall-clock fields zeroed.
    pub fn without_timing(&self) -> Self {
        let zero = Timing { median_ms: 0.0, ..self.seeds[0].timing };
        let mut r = self.clone();
        r.ms_per_batch = Aggregate { mean: 0.0, std: 0.0 };
        for s in &mut r.seeds {
            s.metrics = s.metrics.without_timing();
            s.timing = zero;
        }
        r
    }
}

/// Eval-mode logits of `model` over `data`, in dataset order.
fn logits(model: &Mlp, data: &Dataset) -> Result<Tensor> {
    model.infer(data.features())
}

struct EpochTotals {
    ce: f64,
    distill: f64,
    clamps: usize,
    ms: Vec<f64>,
}

/// Generic training loop shared by teacher and student runs.
struct Trainer<'a> {
    data: &'a Data,
    /// Teacher logits for train and val, row-aligned with the datasets.
    teacher: Option<(Tensor, Tensor)>,
    cfg: DistillConfig,
    softening: crate::distill::SofteningConfig,
    schedule: LrSchedule,
    batch_size: usize,
}

impl Trainer<'_> {
    fn run(
        &self,
        learner: &mut Learner,
        epochs: usize,
        shuffle_seed: u64,
        on_fail: &dyn Fn(&Learner, usize),
    ) -> Result<RunMetrics> {
        let mut metrics = RunMetrics::default();
        let mut it = BatchIterator::new(&self.data.train, self.batch_size, shuffle_seed)?;
        for epoch in 0..epochs {
            learner.student_opt.lr = self.schedule.lr_at(epoch);
            let mut totals = EpochTotals { ce: 0.0, distill: 0.0, clamps: 0, ms: Vec::new() };
            for batch in it.epoch_batches() {
                let g_t = self.teacher.as_ref().map(|(train, _)| train.select_rows(&batch.indices));
                let t0 = Instant::now();
                let losses = step_with_teacher_logits(learner, g_t.as_ref(), &batch, &self.cfg, &self.softening, epoch);
                totals.ms.push(t0.elapsed().as_secs_f64() * 1e3);
                let losses = losses.inspect_err(|_| on_fail(learner, epoch))?;
                totals.ce += losses.ce;
                totals.distill += losses.distill;
                totals.clamps += losses.clamps;
            }
            let n = totals.ms.len() as f64;
            let m = self.evaluate(&learner.student, epoch, &totals, n)?;
            log::debug!("epoch {epoch}: ce {:.4} val top-1 {:.4}", m.ce, m.val_top1);
            metrics.push(m)?;
        }
        Ok(metrics)
    }

    fn evaluate(&self, student: &Mlp, epoch: usize, t: &EpochTotals, n: f64) -> Result<EpochMetrics> {
        let (train, val) = (&self.data.train, &self.data.val);
        let gs_train = logits(student, train)?;
        let gs_val = logits(student, val)?;
        let agree = |gs: &Tensor, gt: &Tensor| -> Result<f64> {
            Ok(average_agreement(&AgreementInput::from_logits(gs, gt)?))
        };
        let (train_agreement, val_agreement) = match &self.teacher {
            Some((gt_train, gt_val)) => (Some(agree(&gs_train, gt_train)?), Some(agree(&gs_val, gt_val)?)),
            None => (None, None),
        };
        Ok(EpochMetrics {
            epoch,
            train_top1: topk_accuracy(&gs_train, train.labels(), 1)?,
            train_top5: topk_accuracy(&gs_train, train.labels(), 5.min(train.classes()))?,
            val_top1: topk_accuracy(&gs_val, val.labels(), 1)?,
            val_top5: topk_accuracy(&gs_val, val.labels(), 5.min(val.classes()))?,
            ce: t.ce / n,
            distill: t.distill / n,
            train_agreement,
            val_agreement,
            clamps: t.clamps,
            ms_per_batch: median(&t.ms).unwrap_or(0.0),
        })
    }
}

/// Trains the teacher with cross-entropy only.
///
/// On a non-finite loss the last good state is written to
/// `out_dir/teacher.last-good.json` before the error is returned.
pub fn train_teacher(cfg: &ExperimentConfig, data: &Data) -> Result<TeacherRun> {
    let model = Mlp::init(&cfg.teacher)?;
    let opt = Sgd::new(cfg.teacher_sgd, &model);
    let mut learner = Learner::new(model, None, opt, None);
    let shuffle = seeds::derive(cfg.teacher.seed, TAG_SHUFFLE);
    let trainer = Trainer {
        data,
        teacher: None,
        cfg: DistillConfig { method: Method::None, ..cfg.distill.clone() },
        softening: cfg.softening,
        schedule: cfg.schedule(cfg.teacher_sgd.lr)?,
        batch_size: cfg.batch_size,
    };
    let out = cfg.out_dir.join("teacher.last-good.json");
    let save_last_good = |l: &Learner, epoch: usize| {
        let c = Checkpoint::from_mlp(
            ModelKind::Teacher,
            &l.student,
            Some(&l.student_opt),
            epoch,
            RngState { seed: shuffle, epoch },
        );
        if let Err(e) = save_checkpoint(&out, &c) {
            warn!("could not save last-good teacher: {e}");
        }
    };
    let metrics = trainer.run(&mut learner, cfg.teacher_epochs, shuffle, &save_last_good)?;
    if let Some(last) = metrics.last() {
        info!("teacher: val top-1 {:.4}", last.val_top1);
    }
    let checkpoint = Checkpoint::from_mlp(
        ModelKind::Teacher,
        &learner.student,
        Some(&learner.student_opt),
        cfg.teacher_epochs,
        RngState { seed: shuffle, epoch: cfg.teacher_epochs },
    );
    Ok(TeacherRun { checkpoint, metrics })
}

/// Eval-mode simplified logits for `g_t`, computed in `batches` so attention
/// sees training-sized groups. Rows come back in dataset order.
fn batched_skd_logits(
    s: &Simplifier,
    g_t: &Tensor,
    batches: &[Batch],
    softening: &crate::distill::SofteningConfig,
) -> Result<(Tensor, Tensor)> {
    let (n, k) = g_t.dims2()?;
    let mut skd = vec![0.0; n * k];
    let mut delta = vec![0.0; n * k];
    for b in batches {
        let g_soft = soften(&g_t.select_rows(&b.indices), softening)?;
        let d = s.delta(&g_soft)?;
        for (r, &i) in b.indices.iter().enumerate() {
            for j in 0..k {
                delta[i * k + j] = d.get2(r, j);
                skd[i * k + j] = g_soft.get2(r, j) + d.get2(r, j);
            }
        }
    }
    Ok((Tensor::new(vec![n, k], skd)?, Tensor::new(vec![n, k], delta)?))
}

/// Final analyses; reads parameters only.
fn analyse(
    cfg: &ExperimentConfig,
    data: &Data,
    student: &Mlp,
    simplifier: Option<&Simplifier>,
    gt_train: &Tensor,
    gt_val: &Tensor,
    seed: u64,
) -> Result<Analysis> {
    let agree = |gs: &Tensor, gt: &Tensor| -> Result<f64> {
        Ok(average_agreement(&AgreementInput::from_logits(gs, gt)?))
    };
    let mut a = Analysis {
        train_agreement: agree(&logits(student, &data.train)?, gt_train)?,
        val_agreement: agree(&logits(student, &data.val)?, gt_val)?,
        delta_stats: None,
        preservation: None,
        attention_within: None,
        attention_between: None,
    };
    let Some(s) = simplifier else { return Ok(a) };
    let eval_seed = seeds::derive(seed, TAG_EVAL);
    let train_batches = BatchIterator::new(&data.train, cfg.batch_size, eval_seed)?.epoch_batches();
    let val_batches = BatchIterator::new(&data.val, cfg.batch_size, eval_seed)?.epoch_batches();

    let (_, delta) = batched_skd_logits(s, gt_train, &train_batches, &cfg.softening)?;
    a.delta_stats = Some(logit_delta_stats(&delta, data.train.labels())?);
    let (skd_val, _) = batched_skd_logits(s, gt_val, &val_batches, &cfg.softening)?;
    a.preservation = Some(teacher_preservation(gt_val, &skd_val, data.val.labels())?);

    if matches!(s, Simplifier::Attention(_)) {
        let b = &val_batches[0];
        let g_soft = soften(&gt_val.select_rows(&b.indices), &cfg.softening)?;
        let export = attention_export(s, &g_soft, &b.superclasses)?;
        let (within, between) = export.group_means();
        a.attention_within = within;
        a.attention_between = between;
        let name = format!("attention-{}-seed{seed}.csv", run_tag(cfg));
        export.to_table().write_csv(&cfg.out_dir.join(name))?;
    }
    Ok(a)
}

/// File-name tag for a run: method, plus α and softening for skd methods.
pub fn run_tag(cfg: &ExperimentConfig) -> String {
    let method = cfg.distill.method;
    let mut tag = method.to_string();
    if method.uses_simplifier() {
        tag += &format!("-a{}", cfg.distill.alpha);
        if !cfg.softening.enabled {
            tag += "-nosoft";
        }
    }
    tag
}

/// Writes `student-<tag>-seed<n><suffix>.json` and, if present, the matching
/// simplifier checkpoint.
fn save_learner(cfg: &ExperimentConfig, l: &Learner, seed: u64, epoch: usize, rng: RngState, suffix: &str) -> Result<()> {
    let tag = run_tag(cfg);
    let c = Checkpoint::from_mlp(ModelKind::Student, &l.student, Some(&l.student_opt), epoch, rng);
    save_checkpoint(&cfg.out_dir.join(format!("student-{tag}-seed{seed}{suffix}.json")), &c)?;
    if let Some(s) = &l.simplifier {
        let c = Checkpoint::from_simplifier(s, l.simplifier_opt.as_ref(), epoch, rng);
        save_checkpoint(&cfg.out_dir.join(format!("simplifier-{tag}-seed{seed}{suffix}.json")), &c)?;
    }
    Ok(())
}

/// Trains one student (plus simplifier) for `seed` against a frozen teacher.
pub fn distill_seed(cfg: &ExperimentConfig, data: &Data, teacher: &Mlp, seed: u64) -> Result<SeedRecord> {
    let method = cfg.distill.method;
    let k = data.train.classes();
    let student = Mlp::init(&MlpSpec::new(cfg.student.widths.clone(), seeds::derive(seed, cfg.student.seed)))?;
    let simplifier = Simplifier::for_method(method, k, &cfg.simplifier, seeds::derive(seed, TAG_SIMPLIFIER))?;
    let student_opt = Sgd::new(cfg.student_sgd, &student);
    let simplifier_opt = simplifier.as_ref().map(|s| Sgd::new(cfg.simplifier_sgd, s));
    let mut learner = Learner::new(student, simplifier, student_opt, simplifier_opt);

    let gt_train = logits(teacher, &data.train)?;
    let gt_val = logits(teacher, &data.val)?;
    let trainer = Trainer {
        data,
        teacher: Some((gt_train, gt_val)),
        cfg: cfg.distill.clone(),
        softening: cfg.softening,
        schedule: cfg.schedule(cfg.student_sgd.lr)?,
        batch_size: cfg.batch_size,
    };
    let shuffle = seeds::derive(seed, TAG_SHUFFLE);
    let save_last_good = |l: &Learner, epoch: usize| {
        let rng = RngState { seed: shuffle, epoch };
        if let Err(e) = save_learner(cfg, l, seed, epoch, rng, ".last-good") {
            warn!("could not save last-good state: {e}");
        }
    };
    let metrics = trainer.run(&mut learner, cfg.epochs, shuffle, &save_last_good)?;
    let (gt_train, gt_val) = trainer.teacher.as_ref().expect("set above");

    let before = param_hash(&learner.student);
    let analysis = analyse(cfg, data, &learner.student, learner.simplifier.as_ref(), gt_train, gt_val, seed)?;
    debug_assert_eq!(before, param_hash(&learner.student));
    let timing = time_steps(cfg, data, teacher, &learner, cfg.epochs.saturating_sub(1))?;
    save_learner(cfg, &learner, seed, cfg.epochs, RngState { seed: shuffle, epoch: cfg.epochs }, "")?;

    let last = metrics.last();
    Ok(SeedRecord {
        seed,
        final_top1: last.map_or(0.0, |m| m.val_top1),
        final_top5: last.map_or(0.0, |m| m.val_top5),
        metrics,
        analysis,
        student_hash: before,
        timing,
    })
}

/// Median time of a full training step with the teacher run live, on a
/// throwaway copy of `learner`.
pub fn time_steps(cfg: &ExperimentConfig, data: &Data, teacher: &Mlp, learner: &Learner, epoch: usize) -> Result<Timing> {
    let mut probe = learner.clone();
    let mut it = BatchIterator::new(&data.train, cfg.batch_size, seeds::derive(0, TAG_EVAL))?;
    let full: Vec<Batch> = std::iter::repeat_with(|| it.next_batch())
        .filter(|b| b.len() == cfg.batch_size || data.train.len() < cfg.batch_size)
        .take(TIMING_BATCHES + 10)
        .collect();
    let mut i = 0;
    batch_timer(
        || {
            let b = &full[i % full.len()];
            i += 1;
            joint_step(&mut probe, Some(teacher), b, &cfg.distill, &cfg.softening, epoch).map(|_| ())
        },
        10,
        TIMING_BATCHES,
    )
}

/// Every seed of `cfg` against the frozen `teacher`.
pub fn distill(cfg: &ExperimentConfig, data: &Data, teacher: &Checkpoint) -> Result<RunResult> {
    let teacher = teacher.to_mlp()?;
    if teacher.classes() != cfg.student.classes() {
        return Err(Error::Config(format!(
            "teacher predicts {} classes, student {}",
            teacher.classes(),
            cfg.student.classes()
        )));
    }
    let mut records = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let r = distill_seed(cfg, data, &teacher, seed)?;
        info!("{} seed {seed}: val top-1 {:.4}", cfg.distill.method, r.final_top1);
        records.push(r);
    }
    RunResult::assemble(cfg, data, records)
}

/// Pretty JSON, written atomically.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_vec_pretty(value).map_err(|e| Error::Malformed(e.to_string()))?;
    text.push(b'\n');
    crate::fsio::write_atomic(path, &text)
}

/// The teacher for `cfg`: `teacher_checkpoint` if set, else
/// `out_dir/teacher.json` if present, else a freshly trained one saved there
/// (with its metrics next to it).
pub fn resolve_teacher(cfg: &ExperimentConfig, data: &Data) -> Result<Checkpoint> {
    if let Some(p) = &cfg.teacher_checkpoint {
        return super::checkpoint::load_checkpoint(p);
    }
    let path = cfg.out_dir.join("teacher.json");
    if path.is_file() {
        info!("using teacher {}", path.display());
        return super::checkpoint::load_checkpoint(&path);
    }
    info!("no teacher checkpoint; training one");
    let run = train_teacher(cfg, data)?;
    save_checkpoint(&path, &run.checkpoint)?;
    write_json(&cfg.out_dir.join("teacher-metrics.json"), &run.metrics)?;
    Ok(run.checkpoint)
}

/// Writes `out_dir/run-<tag>.json` and returns its path.
pub fn save_run(cfg: &ExperimentConfig, r: &RunResult) -> Result<PathBuf> {
    let path = cfg.out_dir.join(format!("run-{}.json", run_tag(cfg)));
    write_json(&path, r)?;
    Ok(path)
}
