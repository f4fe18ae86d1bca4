use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use tailwatch_ffi::*;

fn small_config() -> CString {
    CString::new(
        "[windows]\ntrain = 300\nrefit_step = 50\n[model]\nmin_training_rows = 200\n[model.gbm]\nn_trees = 20\n",
    )
    .unwrap()
}

fn last_error() -> String {
    let p = tw_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn backtest_round_trip_through_handles() {
    unsafe {
        let mut panel = ptr::null_mut();
        assert_eq!(tw_panel_synthetic(3, 380, 11, &mut panel), TwStatus::Ok);
        let (mut ns, mut nd) = (0, 0);
        assert_eq!(tw_panel_shape(panel, &mut ns, &mut nd), TwStatus::Ok);
        assert_eq!((ns, nd), (3, 380));

        let cfg = small_config();
        let mut bt = ptr::null_mut();
        assert_eq!(tw_backtest_run(panel, cfg.as_ptr(), &mut bt), TwStatus::Ok);
        let mut len = 0;
        assert_eq!(tw_backtest_len(bt, &mut len), TwStatus::Ok);
        assert_eq!(len, 3 * 80);

        let mut rec = std::mem::MaybeUninit::<TwRecord>::uninit();
        assert_eq!(tw_backtest_record(bt, 0, rec.as_mut_ptr()), TwStatus::Ok);
        let rec = rec.assume_init();
        assert_eq!(rec.date_index, 300);
        assert!(rec.q_safe <= rec.q_cal);
        assert!(rec.date_ymd > 20000101);

        let mut last = std::mem::MaybeUninit::<TwRecord>::uninit();
        assert_eq!(tw_backtest_record(bt, len - 1, last.as_mut_ptr()), TwStatus::Ok);
        assert!(last.assume_init().realized_next.is_nan());

        let mut junk = std::mem::MaybeUninit::<TwRecord>::uninit();
        assert_eq!(tw_backtest_record(bt, len, junk.as_mut_ptr()), TwStatus::OutOfRange);
        assert!(last_error().contains("out of range"));

        let dir = tempfile::tempdir().unwrap();
        let d = CString::new(dir.path().to_str().unwrap()).unwrap();
        assert_eq!(tw_backtest_write(bt, d.as_ptr()), TwStatus::Ok);
        assert!(dir.path().join("records.csv").exists());
        assert!(dir.path().join("metrics.json").exists());

        tw_backtest_free(bt);
        tw_panel_free(panel);
        tw_backtest_free(ptr::null_mut());
        tw_panel_free(ptr::null_mut());
    }
}

#[test]
fn error_codes_follow_error_class() {
    unsafe {
        let mut panel = ptr::null_mut();
        assert_eq!(tw_panel_synthetic(2, 100, 1, &mut panel), TwStatus::Ok);
        let bad = CString::new("alpha = 0.9").unwrap();
        let mut bt = ptr::null_mut();
        assert_eq!(tw_backtest_run(panel, bad.as_ptr(), &mut bt), TwStatus::ConfigError);
        assert!(bt.is_null());
        // 100 dates cannot fill a 756-day training window
        assert_eq!(tw_backtest_run(panel, ptr::null(), &mut bt), TwStatus::DataError);
        assert!(last_error().contains("schedule"));
        tw_panel_free(panel);

        let missing = CString::new("/definitely/not/here.csv").unwrap();
        assert_eq!(tw_panel_load(missing.as_ptr(), ptr::null(), &mut panel), TwStatus::DataError);
        assert_eq!(tw_panel_load(ptr::null(), ptr::null(), &mut panel), TwStatus::NullPointer);
        assert_eq!(tw_panel_shape(ptr::null(), &mut 0, &mut 0), TwStatus::NullPointer);
    }
}

#[test]
fn scalar_helpers() {
    unsafe {
        let (mut lr, mut pv) = (0.0, 0.0);
        for (x, want) in [(261, 5.76), (196, 4.12), (199, 3.30), (259, 5.15), (239, 0.89)] {
            assert_eq!(tw_kupiec_lr(4501, x, 0.05, &mut lr, &mut pv), TwStatus::Ok);
            assert!((lr - want).abs() <= 0.03);
        }
        assert_eq!(tw_kupiec_lr(10, 11, 0.05, &mut lr, &mut pv), TwStatus::InvalidArgument);

        let worst = [1.0; 5];
        let (mut q, mut state) = (0.0, -1);
        assert_eq!(tw_quality_score(worst.as_ptr(), &mut q, &mut state), TwStatus::Ok);
        assert!((q - 1.0).abs() < 1e-12);
        assert_eq!(state, 2);
        let bad = [0.0, 2.0, 0.0, 0.0, 0.0];
        assert_eq!(tw_quality_score(bad.as_ptr(), &mut q, &mut state), TwStatus::InvalidArgument);

        let mut s = 0.0;
        assert_eq!(tw_safe_var(-0.01, -0.03, 0.002, &mut s), TwStatus::Ok);
        assert_eq!(s, -0.03);
        assert_eq!(tw_safe_var(-0.01, f64::NAN, -1.0, &mut s), TwStatus::InvalidArgument);

        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(tw_empirical_quantile(v.as_ptr(), v.len(), 0.25, &mut s), TwStatus::Ok);
        assert_eq!(s, 2.0);
        assert_eq!(tw_empirical_quantile(v.as_ptr(), 0, 0.25, &mut s), TwStatus::InvalidArgument);
    }
}

fn static_lib() -> PathBuf {
    // test binaries live in target/<profile>/deps next to the library artifacts
    let exe = std::env::current_exe().unwrap();
    let deps = exe.parent().unwrap();
    [deps, deps.parent().unwrap()]
        .iter()
        .map(|d| d.join("libtailwatch_ffi.a"))
        .find(|p| p.exists())
        .unwrap_or_else(|| deps.join("libtailwatch_ffi.a"))
}

fn include_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include")
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let header = include_dir().join("tailwatch.h");
    assert!(header.exists(), "cbindgen header missing");
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        let status = Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang])
            .arg(&header)
            .status()
            .expect("C compiler available");
        assert!(status.success(), "{compiler} rejected the header");
    }
}

#[test]
fn c_program_links_against_static_library() {
    let lib = static_lib();
    assert!(lib.exists(), "static library not built at {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/c/smoke.c");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(include_dir())
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "linking the C smoke test failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "smoke test exited with {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}
