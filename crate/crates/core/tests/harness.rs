mod common;

use skd_core::distill::Method;
use skd_core::harness::{compare_runs, distill, sweep_alpha, train_teacher, Checkpoint, Data};
use skd_core::Error;

fn setup() -> (tempfile::TempDir, skd_core::harness::ExperimentConfig, Data, Checkpoint) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::tiny(dir.path());
    let data = Data::load(&cfg.data).unwrap();
    let teacher = train_teacher(&cfg, &data).unwrap().checkpoint;
    (dir, cfg, data, teacher)
}

#[test]
fn reruns_are_bitwise_identical() {
    let (_dir, cfg, data, teacher) = setup();
    for m in [Method::Kd, Method::SkdAttn, Method::SkdFc2] {
        let c = cfg.with_method(m);
        let a = distill(&c, &data, &teacher).unwrap();
        let b = distill(&c, &data, &teacher).unwrap();
        assert_eq!(a.without_timing(), b.without_timing());
        for (x, y) in a.seeds.iter().zip(&b.seeds) {
            assert_eq!(x.student_hash, y.student_hash);
        }
        assert_ne!(a.seeds[0].student_hash, a.seeds[1].student_hash);
    }
}

#[test]
fn teacher_training_is_deterministic() {
    let (dir, cfg, data, teacher) = setup();
    let again = train_teacher(&cfg, &data).unwrap().checkpoint;
    assert_eq!(teacher.to_json().unwrap(), again.to_json().unwrap());
    drop(dir);
}

#[test]
fn zero_alpha_reduces_to_cross_entropy() {
    let (_dir, mut cfg, data, teacher) = setup();
    cfg.distill.alpha = 0.0;
    let skd = distill(&cfg.with_method(Method::SkdAttn), &data, &teacher).unwrap();
    let ce = distill(&cfg.with_method(Method::None), &data, &teacher).unwrap();
    for (a, b) in skd.seeds.iter().zip(&ce.seeds) {
        assert_eq!(a.student_hash, b.student_hash);
        assert_eq!(a.final_top1, b.final_top1);
    }
}

#[test]
fn sweep_matches_direct_runs() {
    let (_dir, cfg, data, teacher) = setup();
    let c = cfg.with_method(Method::SkdAttn);
    let rows = sweep_alpha(&c, &data, &teacher, &[2.0, 2.0]).unwrap();
    let (a, b) = (rows[0].result.as_ref().unwrap(), rows[1].result.as_ref().unwrap());
    assert_eq!(a.without_timing(), b.without_timing());

    let mut direct_cfg = c.clone();
    direct_cfg.distill.alpha = 2.0;
    let direct = distill(&direct_cfg, &data, &teacher).unwrap();
    assert_eq!(a.without_timing(), direct.without_timing());
}

#[test]
fn sweep_sorts_best_first_and_keeps_failures() {
    let (_dir, cfg, data, teacher) = setup();
    let c = cfg.with_method(Method::SkdFc1);
    let rows = sweep_alpha(&c, &data, &teacher, &[-1.0, 0.5, 2.0]).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows[2].result.is_err());
    assert_eq!(rows[2].alpha, -1.0);
    let top = |i: usize| rows[i].result.as_ref().unwrap().top1.mean;
    assert!(top(0) >= top(1));
    assert!(sweep_alpha(&c, &data, &teacher, &[]).is_err());
}

#[test]
fn comparing_a_run_with_itself_gives_zero_deltas() {
    let (_dir, cfg, data, teacher) = setup();
    let r = distill(&cfg.with_method(Method::Kd), &data, &teacher).unwrap();
    let cmp = compare_runs(&[r.clone(), r.clone()]).unwrap();
    let label = format!("{} - {}", r.label, r.label);
    for metric in ["top1", "agreement", "ms_per_batch"] {
        assert_eq!(cmp.get("delta", &label, metric), Some(0.0));
        assert!(cmp.get("run", &r.label, metric).is_some());
    }

    let mut other = r.clone();
    other.dataset = "different".into();
    assert!(matches!(compare_runs(&[r, other]), Err(Error::IncompatibleRuns(_))));
}

#[test]
fn analysis_fields_follow_the_method() {
    let (dir, cfg, data, teacher) = setup();
    let attn = distill(&cfg.with_method(Method::SkdAttn), &data, &teacher).unwrap();
    let s = &attn.seeds[0].analysis;
    assert!(s.delta_stats.is_some() && s.preservation.is_some());
    assert!(s.attention_within.is_some() && s.attention_between.is_some());
    for f in ["attention-skd-attn-a1-seed0.csv", "student-skd-attn-a1-seed0.json", "simplifier-skd-attn-a1-seed1.json"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    assert!(attn.delta_target.is_some());

    let kd = distill(&cfg.with_method(Method::Kd), &data, &teacher).unwrap();
    assert!(kd.seeds[0].analysis.delta_stats.is_none());
    assert!(kd.delta_target.is_none());
    assert_eq!(kd.label, "kd");
    assert_eq!(attn.label, "skd-attn a=1");
    for r in [&attn, &kd] {
        let m = r.seeds[0].metrics.last().unwrap();
        assert_eq!(r.seeds[0].final_top1, m.val_top1);
        assert!((0.0..=1.0).contains(&m.val_top1));
        assert!(m.val_agreement.is_some());
    }
}

#[test]
fn teacher_class_mismatch_is_a_config_error() {
    let (_dir, mut cfg, data, teacher) = setup();
    cfg.student.widths = vec![12, 6, 5];
    assert!(matches!(distill(&cfg, &data, &teacher), Err(Error::Config(_))));
}
