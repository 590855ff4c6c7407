use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::ptr;

use hyperstab_ffi::*;

fn scenarios() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = hs_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

/// Shipped scenario with a coarser grid and a short horizon.
fn small(name: &str, filter: bool) -> *mut HsScenario {
    let text = std::fs::read_to_string(scenarios().join(name)).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["grid"] = 101.into();
    v["sim"]["t_end"] = 3.0.into();
    if filter {
        v["sim"]["filter"] = serde_json::json!({ "order": 2, "omega_c": 4.0 });
    }
    let json = c(&v.to_string());
    let base = c(scenarios().to_str().unwrap());
    let mut scn = ptr::null_mut();
    assert_eq!(unsafe { hs_scenario_from_json(json.as_ptr(), base.as_ptr(), &mut scn) }, HsStatus::Ok);
    scn
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(hs_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn null_and_malformed_arguments_are_reported() {
    unsafe {
        let mut scn = ptr::null_mut();
        assert_eq!(hs_scenario_load(ptr::null(), &mut scn), HsStatus::NullPointer);
        assert!(last_error().contains("path"));
        let path = c(scenarios().join("scalar.json").to_str().unwrap());
        assert_eq!(hs_scenario_load(path.as_ptr(), ptr::null_mut()), HsStatus::NullPointer);

        let missing = c("/nonexistent/scenario.json");
        assert_eq!(hs_scenario_load(missing.as_ptr(), &mut scn), HsStatus::InvalidInput);
        assert!(scn.is_null());
        let bad = c("{ not json");
        assert_eq!(hs_scenario_from_json(bad.as_ptr(), ptr::null(), &mut scn), HsStatus::InvalidInput);
        assert!(!last_error().is_empty());

        assert_eq!(hs_validate(ptr::null(), ptr::null_mut()), HsStatus::NullPointer);
        assert_eq!(hs_trajectory_len(ptr::null()), 0);
        assert!(!hs_trajectory_diverged(ptr::null()));
        let mut rate = 0.0;
        assert_eq!(hs_fit_decay(ptr::null(), 0.0, &mut rate, &mut rate), HsStatus::NullPointer);

        // Freeing null is a no-op.
        hs_scenario_free(ptr::null_mut());
        hs_synthesis_free(ptr::null_mut());
        hs_trajectory_free(ptr::null_mut());
        hs_string_free(ptr::null_mut());
    }
}

#[test]
fn validate_reports_failed_assumptions() {
    unsafe {
        let path = c(scenarios().join("negative_assumption2.json").to_str().unwrap());
        let mut scn = ptr::null_mut();
        assert_eq!(hs_scenario_load(path.as_ptr(), &mut scn), HsStatus::Ok);
        let mut report = ptr::null_mut();
        assert_eq!(hs_validate(scn, &mut report), HsStatus::AssumptionFailed);
        let v: serde_json::Value = serde_json::from_str(CStr::from_ptr(report).to_str().unwrap()).unwrap();
        hs_string_free(report);
        assert_eq!(v["assumption1"]["pass"], true);
        assert_eq!(v["assumption2"]["pass"], false);
        assert_eq!(v["assumption3"]["pass"], true);

        let mut syn = ptr::null_mut();
        assert_eq!(hs_synthesize(scn, ptr::null(), &mut syn), HsStatus::AssumptionFailed);
        assert!(syn.is_null());
        hs_scenario_free(scn);
    }
}

#[test]
fn synthesize_simulate_and_read_back() {
    let dir = tempfile::tempdir().unwrap();
    let cache = c(dir.path().join("cache").to_str().unwrap());
    unsafe {
        let scn = small("scalar.json", true);
        assert_eq!(hs_validate(scn, ptr::null_mut()), HsStatus::Ok);
        let mut syn = ptr::null_mut();
        assert_eq!(hs_synthesize(scn, cache.as_ptr(), &mut syn), HsStatus::Ok);
        hs_scenario_free(scn);

        let mut json = ptr::null_mut();
        assert_eq!(hs_synthesis_json(syn, &mut json), HsStatus::Ok);
        let record = CStr::from_ptr(json).to_str().unwrap().to_owned();
        hs_string_free(json);
        hyperstab::synthesis::SynthesisResult::from_json_str(&record).unwrap();

        let mut traj = ptr::null_mut();
        assert_eq!(hs_simulate(syn, 7, &mut traj), HsStatus::InvalidInput);
        assert!(last_error().contains("mode"));

        assert_eq!(hs_simulate(syn, HS_MODE_OUTPUT_FEEDBACK, &mut traj), HsStatus::Ok);
        let n = hs_trajectory_len(traj);
        assert!(n > 2);
        assert!(!hs_trajectory_diverged(traj));
        let mut times = vec![0.0; n];
        let mut chi = vec![0.0; n];
        let mut err = vec![0.0; n];
        assert_eq!(hs_trajectory_times(traj, times.as_mut_ptr(), n), HsStatus::Ok);
        assert_eq!(hs_trajectory_chi_state(traj, chi.as_mut_ptr(), n), HsStatus::Ok);
        assert_eq!(hs_trajectory_chi_error(traj, err.as_mut_ptr(), n), HsStatus::Ok);
        assert_eq!(hs_trajectory_times(traj, times.as_mut_ptr(), n - 1), HsStatus::InvalidInput);
        assert_eq!(times[0], 0.0);
        assert!((times[n - 1] - 3.0).abs() < 1e-6);
        assert!(times.windows(2).all(|w| w[1] > w[0]));
        assert!(chi.iter().all(|x| x.is_finite() && *x >= 0.0));
        assert!(err.iter().all(|x| x.is_finite()));

        // The same numbers as the Rust API.
        let csv = dir.path().join("traj.csv");
        let p = c(csv.to_str().unwrap());
        assert_eq!(hs_trajectory_write_csv(traj, p.as_ptr()), HsStatus::Ok);
        let back = hyperstab::sim::Trajectory::read_csv(&csv).unwrap();
        assert_eq!(back.chi_state(), chi);

        let (mut rate, mut r2) = (0.0, 0.0);
        assert_eq!(hs_fit_decay(traj, 0.0, &mut rate, &mut r2), HsStatus::Ok);
        assert!(rate.is_finite() && (0.0..=1.0).contains(&r2));
        hs_trajectory_free(traj);
        hs_synthesis_free(syn);
    }
}

#[test]
fn output_feedback_requires_a_configured_filter() {
    unsafe {
        let scn = small("scalar.json", false);
        let mut syn = ptr::null_mut();
        assert_eq!(hs_synthesize(scn, ptr::null(), &mut syn), HsStatus::Ok);
        let mut traj = ptr::null_mut();
        assert_eq!(hs_simulate(syn, HS_MODE_OUTPUT_FEEDBACK, &mut traj), HsStatus::InvalidInput);
        assert!(last_error().contains("filter"));
        assert_eq!(hs_simulate(syn, HS_MODE_STATE_FEEDBACK, &mut traj), HsStatus::Ok);
        hs_trajectory_free(traj);
        hs_synthesis_free(syn);
        hs_scenario_free(scn);
    }
}

#[test]
fn header_declares_the_api_and_compiles() {
    let header = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/hyperstab.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in ["hs_scenario_load", "hs_validate", "hs_synthesize", "hs_simulate", "hs_fit_decay", "hs_last_error"] {
        assert!(text.contains(&format!("{f}(")), "{f}");
    }
    for cc in ["cc", "gcc", "clang"] {
        if let Ok(out) = std::process::Command::new(cc)
            .args(["-fsyntax-only", "-std=c99", "-Wall", "-Werror", "-x", "c"])
            .arg(&header)
            .output()
        {
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
            return;
        }
    }
    eprintln!("no C compiler found; header syntax not checked");
}
