use std::ffi::CStr;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use open_stirap_ffi::*;

fn last_error() -> String {
    let p = os_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn constant(case: u32, gamma: f64) -> *mut OsGenerator {
    let mut gen = ptr::null_mut();
    let s = unsafe { os_generator_new_constant(case, gamma, 1.0, 1.0, 0.0, &mut gen) };
    assert_eq!(s, OsStatus::Ok);
    gen
}

#[test]
fn generator_round_trip() {
    let gen = constant(OS_CASE_EMISSION, 1.0);
    unsafe {
        assert_eq!(os_generator_len(gen), OS_BLOCH_LEN);
        let mut m = [0.0; 64];
        let mut b = [0.0; 8];
        assert_eq!(os_generator_copy(gen, m.as_mut_ptr(), 64, b.as_mut_ptr(), 8), OsStatus::Ok);
        // pump feeds the population components
        assert!((b[2] - 3f64.sqrt()).abs() < 1e-12);
        assert!((b[7] + 1.0).abs() < 1e-12);
        assert_eq!(os_generator_copy(gen, m.as_mut_ptr(), 63, b.as_mut_ptr(), 8), OsStatus::BufferTooSmall);
        assert!(last_error().contains("need 64"));

        let mut r = [0.0; 8];
        let mut unique = -1;
        assert_eq!(os_generator_steady_state(gen, r.as_mut_ptr(), 8, &mut unique), OsStatus::Ok);
        assert_eq!(unique, 1);
        let mut dark = [0.0; 8];
        assert_eq!(os_dark_bloch(std::f64::consts::FRAC_PI_4, dark.as_mut_ptr(), 8), OsStatus::Ok);
        for (x, y) in r.iter().zip(dark) {
            assert!((x - y).abs() < 1e-9);
        }
        os_generator_free(gen);
    }
}

#[test]
fn spectrum_at_zero_loss() {
    let gen = constant(OS_CASE_DEPHASING, 0.0);
    unsafe {
        let mut spec = ptr::null_mut();
        assert_eq!(os_spectrum_new(gen, &mut spec), OsStatus::Ok);
        assert_eq!(os_spectrum_len(spec), 8);
        let (mut re, mut im, mut cond) = ([0.0; 8], [0.0; 8], [0.0; 8]);
        assert_eq!(os_spectrum_eigenvalues(spec, re.as_mut_ptr(), im.as_mut_ptr(), cond.as_mut_ptr(), 8), OsStatus::Ok);
        assert!(re.iter().all(|x| x.abs() < 1e-10));
        assert_eq!(re.iter().zip(&im).filter(|(r, i)| r.hypot(**i) < 1e-10).count(), 2);
        assert!(cond.iter().all(|c| *c >= 1.0 - 1e-12));
        let mut gap = -1.0;
        assert_eq!(os_spectrum_gap(spec, &mut gap), OsStatus::Ok);
        assert_eq!(gap, 0.0);
        os_spectrum_free(spec);
        os_generator_free(gen);
    }
}

#[test]
fn closed_transfer() {
    let mut p = os_stirap_params_default();
    p.a = 2.0;
    p.samples = 201;
    unsafe {
        let mut traj = ptr::null_mut();
        assert_eq!(os_evolve_stirap(&p, &mut traj), OsStatus::Ok);
        let n = os_trajectory_len(traj);
        assert_eq!(n, 201);
        let mut times = vec![0.0; n];
        assert_eq!(os_trajectory_times(traj, times.as_mut_ptr(), n), OsStatus::Ok);
        assert_eq!((times[0], times[n - 1]), (-100.0, 100.0));
        let mut o = OsObservables::default();
        assert_eq!(os_trajectory_observables(traj, n - 1, &mut o), OsStatus::Ok);
        assert!(o.p3 > 0.99);
        assert_eq!(os_trajectory_observables(traj, n, &mut o), OsStatus::InvalidArgument);
        assert!(last_error().contains("out of range"));
        let mut r = [0.0; 8];
        assert_eq!(os_trajectory_state(traj, 0, r.as_mut_ptr(), 8), OsStatus::Ok);
        assert!((r[2] - 3f64.sqrt() / 2.0).abs() < 1e-12);
        let (mut purity, mut min_eig) = (0.0, 0.0);
        assert_eq!(os_trajectory_check(traj, &mut purity, &mut min_eig), OsStatus::Ok);
        assert!(purity <= 1.0 + 1e-9 && min_eig >= -1e-6);
        os_trajectory_free(traj);

        let mut p3 = 0.0;
        assert_eq!(os_final_population(&p, &mut p3), OsStatus::Ok);
        assert_eq!(p3, o.p3);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut gen = ptr::null_mut();
        assert_eq!(os_generator_new_constant(7, 1.0, 1.0, 1.0, 0.0, &mut gen), OsStatus::InvalidArgument);
        assert!(gen.is_null());
        assert!(last_error().contains("unknown loss case 7"));
        assert_eq!(os_generator_new_constant(OS_CASE_EMISSION, -1.0, 1.0, 1.0, 0.0, &mut gen), OsStatus::InvalidArgument);
        assert!(last_error().contains("non-negative"));
        assert_eq!(os_generator_new_constant(OS_CASE_EMISSION, 1.0, 1.0, 1.0, 0.0, ptr::null_mut()), OsStatus::NullPointer);
        assert!(last_error().contains("'out'"));

        let mut p = os_stirap_params_default();
        p.sigma = 0.0;
        let mut traj = ptr::null_mut();
        assert_eq!(os_evolve_stirap(&p, &mut traj), OsStatus::InvalidArgument);
        p = os_stirap_params_default();
        p.t1 = p.t0;
        assert_eq!(os_evolve_stirap(&p, &mut traj), OsStatus::InvalidArgument);
        assert!(traj.is_null());

        os_clear_last_error();
        assert!(os_last_error_message().is_null());

        // releasing null handles is a no-op
        os_generator_free(ptr::null_mut());
        os_spectrum_free(ptr::null_mut());
        os_trajectory_free(ptr::null_mut());
        assert_eq!(os_generator_len(ptr::null()), 0);
    }
    let name = unsafe { CStr::from_ptr(os_status_name(OsStatus::BufferTooSmall)) };
    assert_eq!(name.to_str().unwrap(), "buffer too small");
    let version = unsafe { CStr::from_ptr(os_version()) };
    assert_eq!(version.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn stiff_problems_map_to_their_own_status() {
    let mut p = os_stirap_params_default();
    p.loss_case = OS_CASE_DEPHASING;
    p.gamma = 1e9;
    p.samples = 11;
    let mut traj = ptr::null_mut();
    assert_eq!(unsafe { os_evolve_stirap(&p, &mut traj) }, OsStatus::Stiff);
    assert!(last_error().contains("stiff"));
}

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(crate_dir().join("include/open_stirap.h")).unwrap();
    for name in [
        "os_last_error_message",
        "os_generator_new_constant",
        "os_generator_free",
        "os_spectrum_new",
        "os_spectrum_free",
        "os_evolve_stirap",
        "os_trajectory_free",
        "typedef struct OsGenerator OsGenerator;",
        "OS_STATUS_BUFFER_TOO_SMALL = 3",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

/// Directory holding the library artifacts of this build.
fn artifact_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_the_static_library() {
    let lib = artifact_dir().join("libopen_stirap_ffi.a");
    if Command::new("cc").arg("--version").output().is_err() || !lib.exists() {
        eprintln!("skipping: no C compiler or static library at {}", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(crate_dir().join("include"))
        .arg(crate_dir().join("tests/smoke.c"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "smoke program failed: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with(env!("CARGO_PKG_VERSION")));
}
