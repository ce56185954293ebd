use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use vmc_ffi::*;

fn generate(seed: u64) -> *mut VmcInstance {
    let mut inst = ptr::null_mut();
    let s = unsafe { vmc_instance_generate(10, 0.5, 0.2, 0.5, seed, &mut inst) };
    assert_eq!(s, VmcStatus::Ok);
    assert!(!inst.is_null());
    inst
}

fn last_error() -> String {
    let p = vmc_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn solve_and_check_round_trip() {
    let inst = generate(3);
    unsafe {
        assert_eq!(vmc_instance_num_servers(inst), 10);
        assert_eq!(vmc_instance_num_vm_types(inst), 5);
        let mut opts = vmc_solve_options_default();
        opts.time_limit = 60.0;
        let mut objectives = Vec::new();
        for algo in [VmcAlgorithm::Exact, VmcAlgorithm::Ksfvg] {
            let mut res = ptr::null_mut();
            assert_eq!(vmc_solve(inst, algo, &opts, &mut res), VmcStatus::Ok);
            let mut status = VmcRunStatus::NoSolution;
            assert_eq!(vmc_result_status(res, &mut status), VmcStatus::Ok);
            let mut obj = 0.0;
            assert_eq!(vmc_result_objective(res, &mut obj), VmcStatus::Ok);
            objectives.push(obj);
            assert!(vmc_result_time(res) >= 0.0);
            let mut plan = ptr::null_mut();
            assert_eq!(vmc_result_plan_json(res, &mut plan), VmcStatus::Ok);
            let mut violations = usize::MAX;
            assert_eq!(vmc_check_plan_json(inst, plan, &mut violations), VmcStatus::Ok);
            assert_eq!(violations, 0);
            vmc_string_free(plan);
            vmc_result_free(res);
            if algo == VmcAlgorithm::Exact {
                assert_eq!(status, VmcRunStatus::Optimal);
            }
        }
        assert!(objectives[1] >= objectives[0] - 1e-6 * objectives[0]);
        vmc_instance_free(inst);
    }
}

#[test]
fn json_round_trip() {
    let inst = generate(8);
    unsafe {
        let mut text = ptr::null_mut();
        assert_eq!(vmc_instance_to_json(inst, &mut text), VmcStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(vmc_instance_from_json(text, &mut back), VmcStatus::Ok);
        let mut again = ptr::null_mut();
        assert_eq!(vmc_instance_to_json(back, &mut again), VmcStatus::Ok);
        assert_eq!(CStr::from_ptr(text), CStr::from_ptr(again));
        vmc_string_free(text);
        vmc_string_free(again);
        vmc_instance_free(back);
        vmc_instance_free(inst);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut inst = ptr::null_mut();
        assert_eq!(vmc_instance_generate(0, 0.5, 0.2, 0.5, 1, &mut inst), VmcStatus::InvalidInput);
        assert!(inst.is_null());
        assert!(last_error().contains("num_servers"));
        assert_eq!(vmc_instance_generate(5, 0.5, 0.2, 0.5, 1, ptr::null_mut()), VmcStatus::NullPointer);

        let bad = CString::new("{not json").unwrap();
        assert_eq!(vmc_instance_from_json(bad.as_ptr(), &mut inst), VmcStatus::Parse);
        assert_eq!(vmc_instance_from_json(ptr::null(), &mut inst), VmcStatus::NullPointer);

        let mut res = ptr::null_mut();
        assert_eq!(vmc_solve(ptr::null(), VmcAlgorithm::Ksf, ptr::null(), &mut res), VmcStatus::NullPointer);
        let good = generate(1);
        let mut opts = vmc_solve_options_default();
        opts.omega = 0.0;
        assert_eq!(vmc_solve(good, VmcAlgorithm::Ksf, &opts, &mut res), VmcStatus::InvalidInput);
        opts = vmc_solve_options_default();
        opts.time_limit = 0.0;
        assert_eq!(vmc_solve(good, VmcAlgorithm::Exact, &opts, &mut res), VmcStatus::InvalidInput);

        let mut obj = 0.0;
        assert_eq!(vmc_result_objective(ptr::null(), &mut obj), VmcStatus::NullPointer);
        let mut n = 0;
        let garbage = CString::new("{\"x\": 1}").unwrap();
        assert_eq!(vmc_check_plan_json(good, garbage.as_ptr(), &mut n), VmcStatus::Parse);

        // success clears the message
        assert_eq!(vmc_instance_num_servers(good), 10);
        let mut text = ptr::null_mut();
        assert_eq!(vmc_instance_to_json(good, &mut text), VmcStatus::Ok);
        assert!(vmc_last_error().is_null());
        vmc_string_free(text);

        // NULL is accepted by the release functions
        vmc_instance_free(ptr::null_mut());
        vmc_result_free(ptr::null_mut());
        vmc_string_free(ptr::null_mut());
        assert_eq!(vmc_instance_num_servers(ptr::null()), 0);
        vmc_instance_free(good);
    }
}

#[test]
fn run_without_plan_reports_no_solution() {
    let inst = generate(2);
    unsafe {
        let mut text = ptr::null_mut();
        assert_eq!(vmc_instance_to_json(inst, &mut text), VmcStatus::Ok);
        let mut v: serde_json::Value = serde_json::from_str(CStr::from_ptr(text).to_str().unwrap()).unwrap();
        vmc_string_free(text);
        v["d_new"][0] = serde_json::json!(100_000);
        let over = CString::new(v.to_string()).unwrap();
        let mut big = ptr::null_mut();
        assert_eq!(vmc_instance_from_json(over.as_ptr(), &mut big), VmcStatus::Ok);
        let mut res = ptr::null_mut();
        assert_eq!(vmc_solve(big, VmcAlgorithm::Ksfvg, ptr::null(), &mut res), VmcStatus::Ok);
        let mut status = VmcRunStatus::Optimal;
        assert_eq!(vmc_result_status(res, &mut status), VmcStatus::Ok);
        assert_eq!(status, VmcRunStatus::NoSolution);
        let mut obj = 0.0;
        assert_eq!(vmc_result_objective(res, &mut obj), VmcStatus::NoSolution);
        let mut plan = ptr::null_mut();
        assert_eq!(vmc_result_plan_json(res, &mut plan), VmcStatus::NoSolution);
        assert!(plan.is_null());
        vmc_result_free(res);
        vmc_instance_free(big);
        vmc_instance_free(inst);
    }
}

#[test]
fn status_messages_are_static() {
    for s in [VmcStatus::Ok, VmcStatus::Parse, VmcStatus::Panic] {
        let m = unsafe { CStr::from_ptr(vmc_status_message(s)) };
        assert!(!m.to_bytes().is_empty());
    }
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/vmc.h")
}

#[test]
fn header_declares_the_api() {
    let text = std::fs::read_to_string(header()).unwrap();
    for name in [
        "VMC_H",
        "typedef struct VmcInstance VmcInstance",
        "typedef struct VmcResult VmcResult",
        "VMC_STATUS_OK = 0",
        "VMC_ALGORITHM_KSFVG",
        "VmcSolveOptions",
        "vmc_instance_generate",
        "vmc_instance_from_json",
        "vmc_instance_to_json",
        "vmc_instance_free",
        "vmc_solve",
        "vmc_result_objective",
        "vmc_result_plan_json",
        "vmc_result_free",
        "vmc_check_plan_json",
        "vmc_last_error",
        "vmc_string_free",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include "vmc.h"

int main(void) {
    VmcInstance *inst = NULL;
    if (vmc_instance_generate(10, 0.5, 0.2, 0.5, 4, &inst) != VMC_STATUS_OK) return 10;
    VmcSolveOptions opts = vmc_solve_options_default();
    opts.time_limit = 30.0;
    VmcResult *res = NULL;
    if (vmc_solve(inst, VMC_ALGORITHM_KSFVG, &opts, &res) != VMC_STATUS_OK) return 11;
    double obj = 0.0;
    if (vmc_result_objective(res, &obj) != VMC_STATUS_OK) return 12;
    char *plan = NULL;
    if (vmc_result_plan_json(res, &plan) != VMC_STATUS_OK) return 13;
    size_t violations = 1;
    if (vmc_check_plan_json(inst, plan, &violations) != VMC_STATUS_OK || violations != 0) return 14;
    VmcInstance *bad = NULL;
    if (vmc_instance_generate(0, 0.5, 0.2, 0.5, 4, &bad) != VMC_STATUS_INVALID_INPUT || bad != NULL) return 15;
    if (vmc_last_error() == NULL) return 16;
    printf("%.4f\n", obj);
    vmc_string_free(plan);
    vmc_result_free(res);
    vmc_instance_free(inst);
    return 0;
}
"#;

/// Builds the static library, which `cargo test` does not produce, into a
/// separate target directory.
fn static_library() -> PathBuf {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let target = manifest.join("../../target/c-client");
    let cargo = std::env::var("CARGO").unwrap_or_else(|_| "cargo".into());
    let status = Command::new(cargo)
        .args(["build", "--offline", "-p", "vmc-ffi", "--lib", "--target-dir"])
        .arg(&target)
        .current_dir(manifest)
        .status()
        .expect("cargo");
    assert!(status.success());
    target.join("debug/libvmc_ffi.a")
}

/// Compiles a C client against the header and the static library.
#[test]
fn c_client_links_against_the_static_library() {
    let lib = static_library();
    assert!(lib.exists(), "{} missing", lib.display());
    let dir = tempfile_dir();
    let src = dir.join("client.c");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let bin = dir.join("client");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("cc");
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let obj: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!(obj > 0.0);
}

fn tempfile_dir() -> PathBuf {
    let dir = std::env::temp_dir().join(format!("vmc_ffi_c_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
