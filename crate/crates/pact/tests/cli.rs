use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use pact::error::{exit, PactError};
use pact::format;

const TINY: &str = r#"
projections = [32, 64, 128, 256]
[acquisition]
ring_radius_m = 0.01
n_samples = 256
[grid]
nx = 32
ny = 32
pixel_m = 2e-4
[phantom]
preset = "disk"
[mb]
n_iters = 3
[inr.model.hash]
n_levels = 4
table_size_log2 = 10
finest_resolution = 32
[inr.model.mlp]
hidden_width = 16
[inr.train]
max_epochs = 1
"#;

fn pact(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pact")).args(args).env("RUST_LOG", "info").output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, format!("{TINY}\n{extra}")).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn missing_config_is_a_usage_error_naming_the_path() {
    let o = pact(&["--config", "/no/such/run.toml", "simulate"]);
    assert_eq!(o.status.code(), Some(exit::USAGE));
    assert!(stderr(&o).contains("/no/such/run.toml"), "{}", stderr(&o));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[grid]\nnx = 32\nsize = 4\n").unwrap();
    let o = pact(&["--config", s(&cfg), "simulate"]);
    assert_eq!(o.status.code(), Some(exit::USAGE));
    assert!(stderr(&o).contains("size"), "{}", stderr(&o));
}

#[test]
fn unknown_method_lists_the_valid_ones() {
    let o = pact(&["reconstruct", "--method", "fbp", "--projections", "32"]);
    assert_eq!(o.status.code(), Some(exit::USAGE));
    assert!(stderr(&o).contains("ubp, mb, inr"), "{}", stderr(&o));
}

#[test]
fn bad_inputs_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("o");
    assert!(pact(&["--config", s(&cfg), "--out", s(&out), "simulate"]).status.success());

    let o = pact(&["--config", s(&cfg), "--out", s(&out), "reconstruct", "--method", "ubp", "--projections", "96"]);
    assert_eq!(o.status.code(), Some(exit::USAGE));
    assert!(stderr(&o).contains("96"));

    let sino = out.join("sinogram.sgm");
    let mut bytes = fs::read(&sino).unwrap();
    let k = bytes.len() / 2;
    bytes[k] ^= 1;
    fs::write(&sino, bytes).unwrap();
    let o = pact(&["--config", s(&cfg), "--out", s(&out), "reconstruct", "--method", "ubp", "--projections", "32"]);
    assert_eq!(o.status.code(), Some(exit::DATA));
    assert!(stderr(&o).contains("checksum"), "{}", stderr(&o));

    let numerical = PactError::Core(pact_core::Error::Numerical("loss is NaN".into()));
    assert_eq!(numerical.exit_code(), exit::NUMERICAL);
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = pact(&["--config", s(&cfg), "--out", s(out), "--seed", "5", "simulate"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["sinogram.sgm", "phantom.img", "preview.png"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let resolved = fs::read_to_string(a.join("config.toml")).unwrap();
    assert!(resolved.contains("seeds = [5]"));
}

#[test]
fn default_acquisition_and_dense_ubp() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("disk.toml");
    fs::write(&cfg, "[phantom]\npreset = \"disk\"\n").unwrap();
    let out = dir.path().join("o");
    let o = pact(&["--config", s(&cfg), "--out", s(&out), "simulate"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let sino = format::load_sinogram(&out.join("sinogram.sgm")).unwrap();
    assert_eq!((sino.n_detectors(), sino.n_samples()), (256, 1024));

    let t = Instant::now();
    let o = pact(&["--config", s(&cfg), "--out", s(&out), "reconstruct", "--method", "ubp", "--projections", "256"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(t.elapsed().as_secs_f64() < 60.0);
    let img = format::load_image(&out.join("proj_256/ubp/image.img")).unwrap();
    assert_eq!((img.grid().nx, img.grid().ny), (512, 512));
    assert!(out.join("proj_256/ubp/preview.png").exists());
}

#[test]
fn inr_smoke_writes_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let text = fs::read_to_string(&cfg).unwrap().replace("max_epochs = 1", "max_epochs = 5");
    fs::write(&cfg, text).unwrap();
    let out = dir.path().join("o");
    assert!(pact(&["--config", s(&cfg), "--out", s(&out), "simulate"]).status.success());
    let o = pact(&["--config", s(&cfg), "--out", s(&out), "reconstruct", "--method", "inr", "--projections", "64"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let run = out.join("proj_64/inr");
    let model = format::load_inr(&run.join("model.inr")).unwrap();
    assert_eq!(model.config().mlp.hidden_width, 16);
    assert!(run.join("image.img").exists() && run.join("preview.png").exists());
    let trace = fs::read_to_string(run.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 5);
    assert!(trace.starts_with("epoch,lr,data,tv,total,gain"));
}

#[test]
fn evaluate_against_itself_and_without_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("o");
    assert!(pact(&["--config", s(&cfg), "--out", s(&out), "simulate"]).status.success());
    let gt = out.join("phantom.img");

    let o = pact(&["--config", s(&cfg), "--out", s(&out), "evaluate", "--image", s(&gt), "--gt", s(&gt)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("1.0000") && stdout(&o).contains("inf"), "{}", stdout(&o));
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[3], "1");
    assert_eq!(row[4], "inf");

    let o = pact(&["--config", s(&cfg), "--out", s(&out), "evaluate", "--image", s(&gt)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("no ground truth"), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(&row[3..6], ["", "", ""]);
}

#[test]
fn sweep_covers_every_projection_and_method() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("o");
    let o = pact(&["--config", s(&cfg), "--out", s(&out), "sweep"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "seed,projections,method,ssim,psnr,mse,snr,cnr");
    assert_eq!(lines.len(), 1 + 12);
    for n in [32, 64, 128, 256] {
        for m in ["ubp", "mb", "inr"] {
            assert!(lines.iter().any(|l| l.starts_with(&format!("0,{n},{m},"))), "{n} {m}");
            assert!(out.join(format!("seed_0/proj_{n}/{m}/image.img")).exists());
        }
    }
    assert!(out.join("config.toml").exists() && out.join("timings.txt").exists());
}
