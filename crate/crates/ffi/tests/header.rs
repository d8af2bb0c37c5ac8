use std::path::{Path, PathBuf};
use std::process::Command;

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/vstory.h")
}

#[test]
fn header_declares_the_api() {
    let h = std::fs::read_to_string(header()).unwrap();
    for name in [
        "vs_version",
        "vs_last_error_message",
        "vs_motion_dim",
        "vs_hoof",
        "vs_spp_hoof_frame",
        "vs_clip_motion_feature",
        "vs_dynamics_score",
        "vs_model_load",
        "vs_model_free",
        "vs_model_dims",
        "vs_greedy_compose",
        "vs_coherence_matrix",
        "vs_rank",
        "vs_bradley_terry",
    ] {
        assert!(h.contains(&format!("{name}(")), "{name} missing from header");
    }
    assert!(h.contains("typedef struct VsModel VsModel;"));
    assert!(h.contains("VS_STATUS_OK = 0"));
    assert!(h.contains("VS_STATUS_BUFFER_TOO_SMALL"));
}

fn cc() -> Option<&'static str> {
    ["cc", "gcc", "clang"].into_iter().find(|c| {
        Command::new(c)
            .arg("--version")
            .output()
            .is_ok_and(|o| o.status.success())
    })
}

/// Directory holding the built shared library: `target/<profile>`.
fn lib_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "vstory.h"

int main(void) {
    double uv[8] = {0, 2, 0, 2, 1, 0, 1, 0};
    double h[4];
    if (vs_hoof(uv, 2, 2, 4, h, 4) != VS_STATUS_OK) return 1;
    if (h[1] < 0.66 || h[1] > 0.67) return 2;
    if (vs_hoof(uv, 2, 2, 4, h, 2) != VS_STATUS_BUFFER_TOO_SMALL) return 3;
    if (vs_last_error_message() == NULL) return 4;

    uint64_t wins[4] = {0, 3, 1, 0};
    double s[2];
    bool smoothed;
    if (vs_bradley_terry(wins, 2, s, &smoothed) != VS_STATUS_OK) return 5;

    double rel[9] = {0, .5, .2, .4, 0, .9, .3, .1, 0};
    double phi[3] = {2, 1, 3};
    size_t order[3];
    if (vs_rank(rel, phi, 3, 0.3, true, order, NULL) != VS_STATUS_OK) return 6;
    if (order[0] != 1) return 7;

    VsModel *m = NULL;
    if (vs_model_load("missing-a", "missing-b", 0.5, &m) != VS_STATUS_IO) return 8;
    vs_model_free(m);
    printf("%s %.6f %.6f\n", vs_version(), s[0], s[1]);
    return 0;
}
"#;

#[test]
fn c_program_links_against_the_library() {
    let Some(cc) = cc() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(&src, PROGRAM).unwrap();
    let bin = dir.path().join("smoke");
    let lib = lib_dir();
    assert!(
        lib.join("libvstory_ffi.so").exists() || lib.join("libvstory_ffi.dylib").exists(),
        "no cdylib in {}",
        lib.display()
    );
    let out = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&bin)
        .arg(&src)
        .arg(format!("-I{}", header().parent().unwrap().display()))
        .arg(format!("-L{}", lib.display()))
        .arg(format!("-Wl,-rpath,{}", lib.display()))
        .arg("-lvstory_ffi")
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "compile failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success(), "smoke exited with {:?}", run.status.code());
    let line = String::from_utf8(run.stdout).unwrap();
    assert_eq!(line.trim(), format!("{} 0.750000 0.250000", env!("CARGO_PKG_VERSION")));
}
