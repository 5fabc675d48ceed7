use std::ffi::{CStr, CString};
use std::ptr;

use skd_core::distill::{Method, Simplifier, SimplifierConfig};
use skd_core::harness::{save_checkpoint, Checkpoint, ExperimentConfig, RngState};
use skd_core::nn::{Mlp, MlpSpec};
use skd_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(skd_last_error()) }.to_string_lossy().into_owned()
}

fn c(p: &std::path::Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

#[test]
fn model_round_trip_matches_core() {
    let dir = tempfile::tempdir().unwrap();
    let mlp = Mlp::init(&MlpSpec::new(vec![3, 5, 4], 7)).unwrap();
    let path = dir.path().join("m.json");
    let ckpt = Checkpoint::from_mlp(skd_core::harness::ModelKind::Student, &mlp, None, 0, RngState { seed: 0, epoch: 0 });
    save_checkpoint(&path, &ckpt).unwrap();

    let mut h = ptr::null_mut();
    assert_eq!(unsafe { skd_model_load(c(&path).as_ptr(), &mut h) }, SkdStatus::Ok);
    assert_eq!(unsafe { skd_model_inputs(h) }, 3);
    assert_eq!(unsafe { skd_model_classes(h) }, 4);

    let x = [0.5, -1.0, 2.0, 0.1, 0.2, 0.3];
    let mut out = [0.0; 8];
    assert_eq!(unsafe { skd_model_forward(h, x.as_ptr(), 2, 3, out.as_mut_ptr(), out.len()) }, SkdStatus::Ok);
    let want = mlp.infer(&skd_core::autodiff::Tensor::new(vec![2, 3], x.to_vec()).unwrap()).unwrap();
    assert_eq!(&out[..], want.data());

    let mut small = [0.0; 7];
    assert_eq!(unsafe { skd_model_forward(h, x.as_ptr(), 2, 3, small.as_mut_ptr(), small.len()) }, SkdStatus::Dimension);
    assert!(last_error().contains("7"));
    assert_eq!(unsafe { skd_model_forward(h, x.as_ptr(), 3, 2, out.as_mut_ptr(), out.len()) }, SkdStatus::Dimension);
    unsafe { skd_model_free(h) };
}

#[test]
fn simplifier_logits_match_core() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SimplifierConfig { dim: 3, dropout: 0.5 };
    let s = Simplifier::for_method(Method::SkdFc2, 4, &cfg, 1).unwrap().unwrap();
    let path = dir.path().join("s.json");
    save_checkpoint(&path, &Checkpoint::from_simplifier(&s, None, 0, RngState { seed: 0, epoch: 0 })).unwrap();

    let mut h = ptr::null_mut();
    assert_eq!(unsafe { skd_simplifier_load(c(&path).as_ptr(), &mut h) }, SkdStatus::Ok);
    assert_eq!(unsafe { skd_simplifier_classes(h) }, 4);
    let g = [1.0, 2.0, -1.0, 0.0, 0.3, 0.1, 0.2, -0.4];
    let mut out = [0.0; 8];
    let st = unsafe { skd_simplifier_skd_logits(h, g.as_ptr(), 2, 4, true, 4.0, out.as_mut_ptr(), 8) };
    assert_eq!(st, SkdStatus::Ok);
    let gt = skd_core::autodiff::Tensor::new(vec![2, 4], g.to_vec()).unwrap();
    let want = s.skd_logits(&gt, &Default::default()).unwrap();
    assert_eq!(&out[..], want.data());

    let st = unsafe { skd_simplifier_skd_logits(h, g.as_ptr(), 2, 4, true, 0.0, out.as_mut_ptr(), 8) };
    assert_eq!(st, SkdStatus::InvalidArgument);
    assert_eq!(unsafe { skd_simplifier_delta(h, g.as_ptr(), 4, 2, out.as_mut_ptr(), 8) }, SkdStatus::Dimension);
    unsafe { skd_simplifier_free(h) };
}

#[test]
fn load_errors_carry_codes_and_messages() {
    let dir = tempfile::tempdir().unwrap();
    let mut h = ptr::null_mut();
    let missing = dir.path().join("nope.json");
    assert_eq!(unsafe { skd_model_load(c(&missing).as_ptr(), &mut h) }, SkdStatus::Io);
    assert!(last_error().contains("nope.json"));
    assert!(h.is_null());

    let junk = dir.path().join("junk.json");
    std::fs::write(&junk, "{}").unwrap();
    assert_eq!(unsafe { skd_model_load(c(&junk).as_ptr(), &mut h) }, SkdStatus::Checkpoint);
    assert_eq!(unsafe { skd_model_load(ptr::null(), &mut h) }, SkdStatus::NullPointer);
    assert_eq!(unsafe { skd_model_load(c(&junk).as_ptr(), ptr::null_mut()) }, SkdStatus::NullPointer);

    // a model checkpoint is not a simplifier
    let mlp = Mlp::init(&MlpSpec::new(vec![2, 2], 0)).unwrap();
    let p = dir.path().join("m.json");
    save_checkpoint(&p, &Checkpoint::from_mlp(skd_core::harness::ModelKind::Teacher, &mlp, None, 0, RngState { seed: 0, epoch: 0 })).unwrap();
    let mut s = ptr::null_mut();
    assert_ne!(unsafe { skd_simplifier_load(c(&p).as_ptr(), &mut s) }, SkdStatus::Ok);

    unsafe {
        skd_model_free(ptr::null_mut());
        skd_simplifier_free(ptr::null_mut());
        assert_eq!(skd_model_classes(ptr::null()), 0);
    }
}

#[test]
fn stateless_metrics() {
    let x = [1.0, 2.0, 3.0, 3.0, 2.0, 1.0];
    let mut p = [0.0; 6];
    assert_eq!(unsafe { skd_softmax(x.as_ptr(), 2, 3, 1.0, p.as_mut_ptr(), 6) }, SkdStatus::Ok);
    assert!((p[..3].iter().sum::<f64>() - 1.0).abs() < 1e-15);
    assert!(p[2] > p[1] && p[1] > p[0]);
    assert_eq!(unsafe { skd_softmax(x.as_ptr(), 2, 3, -1.0, p.as_mut_ptr(), 6) }, SkdStatus::InvalidArgument);
    assert_eq!(last_error(), "temperature must be positive, got -1");
    assert_eq!(unsafe { skd_softmax(x.as_ptr(), 2, 3, 1.0, p.as_mut_ptr(), 6) }, SkdStatus::Ok);
    assert_eq!(last_error(), "");

    let mut acc = 0.0;
    let labels = [2usize, 1];
    assert_eq!(unsafe { skd_topk_accuracy(x.as_ptr(), 2, 3, labels.as_ptr(), 1, &mut acc) }, SkdStatus::Ok);
    assert_eq!(acc, 0.5);
    assert_eq!(unsafe { skd_topk_accuracy(x.as_ptr(), 2, 3, labels.as_ptr(), 2, &mut acc) }, SkdStatus::Ok);
    assert_eq!(acc, 1.0);
    let bad = [5usize, 0];
    assert_eq!(unsafe { skd_topk_accuracy(x.as_ptr(), 2, 3, bad.as_ptr(), 1, &mut acc) }, SkdStatus::InvalidArgument);

    let y = [0.0, 0.0, 9.0, 9.0, 0.0, 0.0];
    let mut agree = 0.0;
    assert_eq!(unsafe { skd_average_agreement(x.as_ptr(), y.as_ptr(), 2, 3, &mut agree) }, SkdStatus::Ok);
    assert_eq!(agree, 1.0);
    assert_eq!(unsafe { skd_average_agreement(x.as_ptr(), ptr::null(), 2, 3, &mut agree) }, SkdStatus::NullPointer);
    assert!(!unsafe { CStr::from_ptr(skd_version()) }.to_bytes().is_empty());
}

#[test]
fn run_distill_writes_a_run_record() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::default();
    if let skd_core::harness::DataSource::Synthetic(s) = &mut cfg.data {
        s.samples_per_class = 20;
        s.features = 8;
    }
    cfg.teacher = MlpSpec::new(vec![8, 16, 20], 0);
    cfg.student = MlpSpec::new(vec![8, 8, 20], 0);
    cfg.teacher_epochs = 2;
    cfg.epochs = 2;
    cfg.lr_decay_epochs = vec![1];
    cfg.seeds = vec![0];
    cfg.simplifier.dim = 4;
    cfg.distill.method = Method::SkdAttn;
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(&cfg_path, cfg.to_json()).unwrap();

    let out = dir.path().join("out");
    let (mut top1, mut agree) = (f64::NAN, f64::NAN);
    let st = unsafe { skd_run_distill(c(&cfg_path).as_ptr(), c(&out).as_ptr(), &mut top1, &mut agree) };
    assert_eq!(st, SkdStatus::Ok, "{}", last_error());
    assert!((0.0..=1.0).contains(&top1) && (0.0..=1.0).contains(&agree));
    assert!(out.join("teacher.json").is_file());
    assert!(out.join("run-skd-attn-a1.json").is_file());

    // the teacher written above is reused, so a second run agrees exactly
    let (mut again, mut _a) = (0.0, 0.0);
    assert_eq!(unsafe { skd_run_distill(c(&cfg_path).as_ptr(), c(&out).as_ptr(), &mut again, &mut _a) }, SkdStatus::Ok);
    assert_eq!(top1, again);

    std::fs::write(&cfg_path, r#"{"epochs": "many"}"#).unwrap();
    assert_eq!(unsafe { skd_run_distill(c(&cfg_path).as_ptr(), ptr::null(), ptr::null_mut(), ptr::null_mut()) }, SkdStatus::Config);
}
