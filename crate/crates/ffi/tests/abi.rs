use std::ffi::{CStr, CString};
use std::ptr;

use lowrank_grad_ffi::*;

fn last_error() -> String {
    let p = lrg_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn config(projection: LrgProjection) -> LrgExperimentConfig {
    LrgExperimentConfig {
        dim: 8,
        rank: 2,
        steps: 50,
        optimizer: lrg_optimizer_spec_default(LrgOptimizerKind::Gd, 1.0),
        projection,
        seed: 3,
        report_every: 10,
        reset_factor_state_each_step: false,
    }
}

#[test]
fn version_is_cargo_version() {
    let v = unsafe { CStr::from_ptr(lrg_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn default_spec_coefficients() {
    let s = lrg_optimizer_spec_default(LrgOptimizerKind::Adam, 0.01);
    assert_eq!(s.kind, LrgOptimizerKind::Adam);
    assert_eq!(s.learning_rate, 0.01);
    assert_eq!(s.beta1, 0.9);
    assert_eq!(s.beta2, 0.999);
    assert_eq!(s.epsilon, 1e-8);
    assert_eq!(s.adam_bias_mode, LrgAdamBiasMode::Standard);
}

#[test]
fn run_experiment_reports_records() {
    let cfg = config(LrgProjection::Random);
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { lrg_run_experiment(&cfg, &mut out) }, LrgStatus::Ok);
    unsafe {
        assert_eq!(lrg_run_result_record_count(out), 5);
        let mut rec = LrgTrainRecord::default();
        assert_eq!(lrg_run_result_record(out, 4, &mut rec), LrgStatus::Ok);
        assert_eq!(rec.step, 50);
        assert_eq!(rec.loss, lrg_run_result_final_loss(out));
        assert!(lrg_run_result_final_loss(out) < lrg_run_result_initial_loss(out));
        assert!(lrg_run_result_wall_time(out) >= 0.0);
        assert_eq!(
            lrg_run_result_record(out, 5, &mut rec),
            LrgStatus::InvalidArgument
        );
        assert!(last_error().contains("out of range"));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.csv");
        let cpath = CString::new(path.to_str().unwrap()).unwrap();
        assert_eq!(lrg_run_result_write_csv(out, cpath.as_ptr()), LrgStatus::Ok);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("optimizer,projection,dim,rank,seed,step,loss"));
        assert_eq!(text.lines().count(), 6);
        lrg_run_result_free(out);
    }
}

#[test]
fn invalid_config_sets_error() {
    let mut cfg = config(LrgProjection::Svd);
    cfg.rank = 9;
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { lrg_run_experiment(&cfg, &mut out) },
        LrgStatus::InvalidArgument
    );
    assert!(out.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn divergence_maps_to_status() {
    let mut cfg = config(LrgProjection::None);
    cfg.optimizer.learning_rate = 1e6;
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { lrg_run_experiment(&cfg, &mut out) },
        LrgStatus::Diverged
    );
    assert!(out.is_null());
}

#[test]
fn null_pointers_are_rejected() {
    let cfg = config(LrgProjection::None);
    unsafe {
        assert_eq!(
            lrg_run_experiment(&cfg, ptr::null_mut()),
            LrgStatus::NullPointer
        );
        let mut out = ptr::null_mut();
        assert_eq!(
            lrg_run_experiment(ptr::null(), &mut out),
            LrgStatus::NullPointer
        );
        assert_eq!(lrg_run_result_record_count(ptr::null()), 0);
        assert!(lrg_run_result_final_loss(ptr::null()).is_nan());
        lrg_run_result_free(ptr::null_mut());
        lrg_lowrank_free(ptr::null_mut());
        let mut r = 0;
        assert_eq!(
            lrg_crossover_rank(ptr::null(), 1, LrgOptimizerKind::Adam, &mut r),
            LrgStatus::NullPointer
        );
    }
}

#[test]
fn lowrank_step_updates_in_place() {
    let lr = 1e-6;
    let spec = lrg_optimizer_spec_default(LrgOptimizerKind::Gd, lr);
    let (rows, cols) = (4, 3);
    let mut h = ptr::null_mut();
    unsafe {
        assert_eq!(
            lrg_lowrank_new(&spec, LrgProjection::Svd, rows, cols, 3, 0, false, &mut h),
            LrgStatus::Ok
        );
        let g: Vec<f64> = (0..12).map(|i| (i as f64 - 5.5) / 4.0).collect();
        let mut w = vec![0.0; 12];
        let mut predicted = 0.0;
        assert_eq!(
            lrg_lowrank_step(h, w.as_mut_ptr(), g.as_ptr(), 12, &mut predicted),
            LrgStatus::Ok
        );
        // Full-rank svd factors: to first order the step is -lr·G.
        let norm_sq: f64 = g.iter().map(|x| x * x).sum();
        assert!((predicted + lr * norm_sq).abs() < 1e-12 * norm_sq);
        for (wi, gi) in w.iter().zip(&g) {
            assert!((wi + lr * gi).abs() < 1e-5 * lr, "{wi} vs {}", -lr * gi);
        }
        assert_eq!(
            lrg_lowrank_step(h, w.as_mut_ptr(), g.as_ptr(), 11, ptr::null_mut()),
            LrgStatus::InvalidArgument
        );
        let mut bad = g.clone();
        bad[0] = f64::NAN;
        assert_eq!(
            lrg_lowrank_step(h, w.as_mut_ptr(), bad.as_ptr(), 12, ptr::null_mut()),
            LrgStatus::NonFinite
        );
        lrg_lowrank_free(h);
    }
}

#[test]
fn lowrank_new_rejects_bad_rank() {
    let spec = lrg_optimizer_spec_default(LrgOptimizerKind::Momentum, 0.1);
    let mut h = ptr::null_mut();
    let status =
        unsafe { lrg_lowrank_new(&spec, LrgProjection::Random, 4, 3, 4, 0, false, &mut h) };
    assert_eq!(status, LrgStatus::InvalidArgument);
    assert!(h.is_null());
}

#[test]
fn memory_functions() {
    let layers = [LrgLayer {
        rows: 1000,
        cols: 1000,
    }];
    unsafe {
        let mut r = 0;
        assert_eq!(
            lrg_crossover_rank(layers.as_ptr(), 1, LrgOptimizerKind::Adam, &mut r),
            LrgStatus::Ok
        );
        assert_eq!(r, 333);
        assert_eq!(
            lrg_crossover_rank(layers.as_ptr(), 1, LrgOptimizerKind::Momentum, &mut r),
            LrgStatus::Ok
        );
        assert_eq!(r, 250);
        assert_eq!(
            lrg_crossover_rank(layers.as_ptr(), 1, LrgOptimizerKind::Gd, &mut r),
            LrgStatus::InvalidArgument
        );

        let mut full = LrgMemoryReport::default();
        assert_eq!(
            lrg_full_rank_memory(
                layers.as_ptr(),
                1,
                LrgOptimizerKind::Adam,
                true,
                8,
                &mut full
            ),
            LrgStatus::Ok
        );
        assert_eq!(full.total_slots, 4_000_000);
        assert_eq!(full.total_bytes, 32_000_000);
        let mut low = LrgMemoryReport::default();
        assert_eq!(
            lrg_low_rank_memory(
                layers.as_ptr(),
                1,
                LrgOptimizerKind::Adam,
                333,
                true,
                4,
                &mut low
            ),
            LrgStatus::Ok
        );
        assert_eq!(low.factor_slots, 666_000);
        assert!(low.total_slots <= full.total_slots);
        assert_eq!(low.total_bytes, 4 * low.total_slots);
        assert_eq!(
            lrg_low_rank_memory(
                layers.as_ptr(),
                1,
                LrgOptimizerKind::Adam,
                5,
                true,
                3,
                &mut low
            ),
            LrgStatus::InvalidArgument
        );
        assert_eq!(
            lrg_full_rank_memory(
                layers.as_ptr(),
                0,
                LrgOptimizerKind::Adam,
                true,
                8,
                &mut full
            ),
            LrgStatus::InvalidArgument
        );
    }
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/lowrank_grad.h");
    for sym in [
        "lrg_last_error",
        "lrg_version",
        "lrg_optimizer_spec_default",
        "lrg_lowrank_new",
        "lrg_lowrank_step",
        "lrg_lowrank_free",
        "lrg_run_experiment",
        "lrg_run_result_record_count",
        "lrg_run_result_record",
        "lrg_run_result_final_loss",
        "lrg_run_result_initial_loss",
        "lrg_run_result_wall_time",
        "lrg_run_result_write_csv",
        "lrg_run_result_free",
        "lrg_full_rank_memory",
        "lrg_low_rank_memory",
        "lrg_crossover_rank",
        "typedef struct LrgLowRank LrgLowRank;",
        "LRG_STATUS_DIVERGED = 6",
    ] {
        assert!(header.contains(sym), "header is missing {sym}");
    }
}
