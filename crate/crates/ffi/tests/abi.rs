use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use condensim_ffi::*;

#[test]
fn kernel_rates_and_errors() {
    let mut k = ptr::null_mut();
    assert_eq!(cs_kernel_zero_range(4.0, &mut k), CsStatus::Ok);
    let mut v = 0.0;
    unsafe {
        assert_eq!(cs_kernel_rate(k, 2, 9, &mut v), CsStatus::Ok);
        assert_eq!(v, 3.0);
        cs_kernel_free(k);
    }
    let mut bad = ptr::null_mut();
    assert_eq!(cs_kernel_zero_range(-1.0, &mut bad), CsStatus::Config);
    assert!(bad.is_null());
    let msg = unsafe { CStr::from_ptr(cs_last_error()) }.to_string_lossy().into_owned();
    assert!(msg.contains("kernel") || msg.contains("parameter"), "{msg}");
    assert_eq!(cs_kernel_independent(ptr::null_mut()), CsStatus::NullPointer);
}

#[test]
fn meanfield_through_handles() {
    let mut k = ptr::null_mut();
    assert_eq!(cs_kernel_independent(&mut k), CsStatus::Ok);
    let mut sol = ptr::null_mut();
    unsafe {
        assert_eq!(cs_meanfield_solve(k, 1.0, 2.0, 0.1, 1e-10, &mut sol), CsStatus::Ok);
        let mut len = 0usize;
        assert_eq!(cs_meanfield_f_at(sol, 1.0, ptr::null_mut(), 0, &mut len), CsStatus::BufferTooSmall);
        let mut buf = vec![0.0; len];
        assert_eq!(cs_meanfield_f_at(sol, 1.0, buf.as_mut_ptr(), len, &mut len), CsStatus::Ok);
        assert!((buf[0] - (-1.0f64).exp()).abs() < 1e-6);
        let mut m1 = 0.0;
        assert_eq!(cs_meanfield_moment(sol, 2.0, 1, &mut m1), CsStatus::Ok);
        assert!((m1 - 1.0).abs() < 1e-8);
        assert_eq!(cs_meanfield_moment(sol, 5.0, 1, &mut m1), CsStatus::Numerical);
        cs_meanfield_free(sol);
        cs_kernel_free(k);
    }
}

#[test]
fn tagged_simulator_is_seeded() {
    let run = |seed| {
        let mut k = ptr::null_mut();
        assert_eq!(cs_kernel_zero_range(4.0, &mut k), CsStatus::Ok);
        let mut sim = ptr::null_mut();
        let mut ws = Vec::new();
        unsafe {
            assert_eq!(cs_tagged_new(k, 20, 40, seed, &mut sim), CsStatus::Ok);
            for _ in 0..5 {
                let mut w = 0;
                assert_eq!(cs_tagged_advance(sim, 0.2, &mut w), CsStatus::Ok);
                assert!((1..=40).contains(&w));
                ws.push(w);
            }
            assert!((cs_tagged_time(sim) - 1.0).abs() < 1e-12);
            cs_tagged_free(sim);
            cs_kernel_free(k);
        }
        ws
    };
    assert_eq!(run(9), run(9));
    assert_eq!(cs_derive_seed(42, 7), 0xCBBD_05C7_DE73_A889);
}

#[test]
fn header_compiles_and_links_from_c() {
    let Ok(cc) = which_cc() else { return };
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = root.join("include");
    // deps/<test binary> -> profile dir holding the static library
    let exe = std::env::current_exe().unwrap();
    let lib_dir = exe.parent().unwrap().parent().unwrap().to_path_buf();
    if !lib_dir.join("libcondensim_ffi.a").exists() {
        return;
    }
    let tmp = tempdir();
    let src = tmp.join("smoke.c");
    std::fs::write(
        &src,
        r#"#include "condensim.h"
#include <stdio.h>
int main(void) {
    CsKernel *k = NULL;
    if (cs_kernel_zero_range(4.0, &k) != CS_STATUS_OK) return 1;
    double v = 0.0;
    if (cs_kernel_rate(k, 1, 0, &v) != CS_STATUS_OK || v != 5.0) return 2;
    cs_kernel_free(k);
    if (cs_kernel_inclusion(-1.0, &k) != CS_STATUS_CONFIG) return 3;
    if (cs_last_error() == NULL) return 4;
    printf("%llx\n", (unsigned long long)cs_derive_seed(42, 7));
    return 0;
}
"#,
    )
    .unwrap();
    let bin = tmp.join("smoke");
    let st = Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(&header)
        .arg(lib_dir.join("libcondensim_ffi.a"))
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(st.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "{:?}", out);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "cbbd05c7de73a889");
}

fn which_cc() -> Result<String, ()> {
    for cc in ["cc", "gcc", "clang"] {
        if Command::new(cc).arg("--version").output().is_ok_and(|o| o.status.success()) {
            return Ok(cc.to_string());
        }
    }
    Err(())
}

fn tempdir() -> PathBuf {
    let d = std::env::temp_dir().join(format!("condensim-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}
