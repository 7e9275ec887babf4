use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use b92sim_ffi::*;

fn core_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core").canonicalize().unwrap()
}

fn cpath(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = b92_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn night_config() -> *mut B92Config {
    let path = cpath(&core_dir().join("fixtures/night-20mm.toml"));
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { b92_config_load(path.as_ptr(), &mut cfg) }, B92Status::Ok);
    assert!(!cfg.is_null());
    cfg
}

#[test]
fn missing_config_reports_io_with_path() {
    let path = CString::new("/nonexistent/run.toml").unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { b92_config_load(path.as_ptr(), &mut cfg) }, B92Status::Io);
    assert!(cfg.is_null());
    assert!(last_error().contains("/nonexistent/run.toml"));
}

#[test]
fn null_arguments_are_rejected() {
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { b92_config_load(ptr::null(), &mut cfg) }, B92Status::NullPointer);
    assert!(last_error().contains("path"));
    let mut run = ptr::null_mut();
    assert_eq!(unsafe { b92_run(ptr::null(), 1, &mut run) }, B92Status::NullPointer);
    assert_eq!(unsafe { b92_run_duration_ps(ptr::null()) }, 0);
    unsafe {
        b92_config_free(ptr::null_mut());
        b92_run_free(ptr::null_mut());
        b92_string_free(ptr::null_mut());
    }
}

#[test]
fn invalid_override_keeps_config() {
    let cfg = night_config();
    assert_eq!(unsafe { b92_config_set_run(cfg, 1, 0.0, 0) }, B92Status::Config);
    assert!(last_error().contains("duration"));
    assert_eq!(unsafe { b92_config_set_run(cfg, 1, 0.05, 1) }, B92Status::Ok);
    assert!(b92_last_error().is_null());
    unsafe { b92_config_free(cfg) };
}

#[test]
fn phase_match_temperature() {
    let crystal = cpath(&core_dir().join("data/ppktp.toml"));
    let mut t = 0.0;
    assert_eq!(unsafe { b92_phase_match_temperature(crystal.as_ptr(), 405.0, 20.0, &mut t) }, B92Status::Ok);
    assert!((t - 44.4).abs() < 0.5, "{t}");
}

#[test]
fn run_tags_and_analysis_match_the_library() {
    let cfg = night_config();
    let mut run = ptr::null_mut();
    assert_eq!(unsafe { b92_config_set_run(cfg, 11, 0.1, 1) }, B92Status::Ok);
    assert_eq!(unsafe { b92_run(cfg, 11, &mut run) }, B92Status::Ok);
    let duration = unsafe { b92_run_duration_ps(run) };
    assert_eq!(duration, 100_000_000_000);

    let mut lib_cfg = b92sim::cli::load_config(&core_dir().join("fixtures/night-20mm.toml"), None).unwrap();
    lib_cfg.file.run.duration_s = 0.1;
    let direct = b92sim::protocol::run_b92(&lib_cfg, 11).unwrap();
    for (ch, series) in [(B92Channel::Herald, &direct.alice_herald), (B92Channel::D0, &direct.bob_d0), (B92Channel::D1, &direct.bob_d1)] {
        let (mut p, mut n) = (ptr::null(), 0usize);
        assert_eq!(unsafe { b92_run_tags(run, ch, &mut p, &mut n) }, B92Status::Ok);
        let tags = unsafe { std::slice::from_raw_parts(p, n) };
        assert_eq!(tags, series.tags(), "{ch:?}");
    }

    let mut m = B92Metrics::default();
    assert_eq!(unsafe { b92_run_analyze(cfg, run, B92Strategy::A, &mut m) }, B92Status::Ok);
    let want = b92sim::protocol::analyze(&lib_cfg, &b92sim::protocol::histograms(&lib_cfg, &direct), b92sim::analysis::Strategy::A).unwrap();
    assert_eq!(m.key_length, want.metrics.key_length);
    assert_eq!(m.qber_pct, want.metrics.qber_pct);
    assert_eq!((m.windows.l1, m.windows.r2), (want.windows_ps.w_l1, want.windows_ps.w_r2));
    unsafe {
        b92_run_free(run);
        b92_config_free(cfg);
    }
}

#[test]
fn summary_json_is_deterministic() {
    let cfg = night_config();
    assert_eq!(unsafe { b92_config_set_run(cfg, 5, 0.05, 2) }, B92Status::Ok);
    let get = || {
        let mut s = ptr::null_mut();
        assert_eq!(unsafe { b92_simulate_summary(cfg, &mut s) }, B92Status::Ok);
        let text = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_owned();
        unsafe { b92_string_free(s) };
        text
    };
    let a = get();
    assert_eq!(a, get());
    let v: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert_eq!(v["iterations"], 2);
    assert_eq!(v["master_seed"], 5);
    unsafe { b92_config_free(cfg) };
}

/// Directory holding the static library built for this test run.
fn staticlib_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    let deps = exe.parent().unwrap();
    let found = [deps, deps.parent().unwrap()].into_iter().find(|d| d.join("libb92sim_ffi.a").is_file());
    found.expect("libb92sim_ffi.a next to the test binary").to_path_buf()
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include "b92sim.h"

int main(int argc, char **argv) {
    B92Config *cfg = NULL;
    if (b92_config_load("/nonexistent.toml", &cfg) != B92_STATUS_IO || cfg != NULL) return 10;
    if (b92_last_error() == NULL) return 11;
    double t = 0.0;
    if (b92_phase_match_temperature(argv[1], 405.0, 20.0, &t) != B92_STATUS_OK) return 12;
    printf("%.1f\n", t);
    return 0;
}
"#;

#[test]
fn header_compiles_and_links_from_c() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let exe = dir.path().join("main");
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let out = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(staticlib_dir().join("libb92sim_ffi.a"))
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .expect("cc runs");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&exe).arg(core_dir().join("data/ppktp.toml")).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "44.4");
}
