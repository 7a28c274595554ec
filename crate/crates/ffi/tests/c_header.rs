//! Compiles a C program against the generated header and the static library.

use std::path::{Path, PathBuf};
use std::process::Command;

use captor::fixture::{self, suggested_config};
use captor::inference::caption;
use captor::DecodeConfig;

/// `target/<profile>`, two levels above this test binary.
fn target_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

fn compile(out: &Path) {
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib = target_dir().join("libcaptor_ffi.a");
    assert!(lib.exists(), "missing {}", lib.display());
    let status = Command::new(std::env::var("CC").unwrap_or_else(|_| "cc".into()))
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(crate_dir.join("include"))
        .arg(crate_dir.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(out)
        .status()
        .expect("run the C compiler");
    assert!(status.success());
}

#[test]
fn c_program_links_and_captions() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixture::generate(3, 42).unwrap();
    let cfg = suggested_config(42);
    fixture::write(dir.path(), &fx, &cfg).unwrap();
    let model = captor::trainer::train(&fx.grids, &fx.captions, &captor::TrainConfig { epochs: 30, ..cfg })
        .unwrap()
        .model;
    let ckpt = dir.path().join("m.ckpt");
    captor::save_checkpoint(&model, &ckpt).unwrap();

    let exe = dir.path().join("smoke");
    compile(&exe);
    let out = Command::new(&exe)
        .arg(&ckpt)
        .arg(dir.path().join("features/img00.saf"))
        .arg(dir.path().join("captions.tsv"))
        .output()
        .unwrap();
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(out.status.success(), "{stdout}{}", String::from_utf8_lossy(&out.stderr));

    let want = caption(&model, &fx.grids[0], &DecodeConfig { beam_width: 3, ..DecodeConfig::default() }).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines[0], format!("caption {}", want.text()));
    let lp: f64 = lines[1].strip_prefix("log_prob ").unwrap().parse().unwrap();
    assert_eq!(lp, want.log_prob);
    assert_eq!(lines[2], "bleu1 1.000000 rouge_l 1.000000");
    assert_eq!(lines[3], format!("version {}", captor::VERSION));
}
