use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include "confspec.h"

int main(void) {
    ConfspecMesh *mesh = NULL;
    if (confspec_mesh_generate("flat-torus:equilateral:12", &mesh) != CONFSPEC_STATUS_OK) return 1;
    size_t v, g; double a;
    if (confspec_mesh_stats(mesh, &v, &g, &a) != CONFSPEC_STATUS_OK || v != 144 || g != 1) return 2;
    double ev[6];
    if (confspec_spectrum(mesh, NULL, 0, 6, ev) != CONFSPEC_STATUS_OK) return 3;
    double target = 8.0 * M_PI * M_PI / sqrt(3.0);
    if (fabs(ev[0] / target - 1.0) > 0.03) return 4;
    ConfspecMesh *none = NULL;
    if (confspec_mesh_generate("cube:3", &none) != CONFSPEC_STATUS_INPUT_ERROR) return 5;
    if (confspec_last_error() == NULL) return 6;
    confspec_mesh_free(mesh);
    printf("%s %.6f\n", confspec_version(), ev[0]);
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    // tests/<binary> lives in target/<profile>/deps.
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = crate_dir.join("include/confspec.h");
    assert!(header.exists(), "cbindgen header missing");
    // Test builds only produce the rlib; build the static library for this profile.
    let mut build = Command::new(env!("CARGO"));
    build.args(["build", "--quiet", "-p", "confspec-ffi", "--lib"]);
    if !cfg!(debug_assertions) {
        build.arg("--release");
    }
    assert!(build.status().expect("run cargo").success());
    let lib = target_dir().join("libconfspec_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());

    let work = tempfile::tempdir().unwrap();
    let src = work.path().join("main.c");
    std::fs::write(&src, PROGRAM).unwrap();
    let exe = work.path().join("main");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(&cc)
        .args(["-std=c99", "-D_DEFAULT_SOURCE", "-Wall", "-Werror", "-o"])
        .arg(&exe)
        .arg(&src)
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .status()
        .expect("run C compiler");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with(env!("CARGO_PKG_VERSION")), "{stdout}");
}
