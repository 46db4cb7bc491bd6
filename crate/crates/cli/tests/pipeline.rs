use std::fs;
use std::path::Path;
use std::process::Command;

use clap::Parser;
use tempfile::TempDir;
use xfield::Region;
use xfield_cli::commands::{self, RegionReport};
use xfield_cli::{Cli, Context, RunConfig};

fn ctx(dir: &Path) -> Context {
    Context {
        timestamp: "2024-01-01T00:00:00Z".into(),
        ..Context::new(dir)
    }
}

fn cfg(args: &[&str]) -> RunConfig {
    let mut argv = vec!["xfield"];
    argv.extend_from_slice(args);
    Cli::try_parse_from(argv).unwrap().resolve().unwrap()
}

fn bin(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_xfield"))
        .args(args)
        .output()
        .unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn read_column(path: &Path, name: &str) -> Vec<f64> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let col = lines.next().unwrap().split(',').position(|h| h == name).unwrap();
    lines.map(|l| l.split(',').nth(col).unwrap().parse().unwrap()).collect()
}

#[test]
fn case1_manifest_reads_far_field() {
    let dir = TempDir::new().unwrap();
    let out = commands::synth(&ctx(dir.path()), &cfg(&["synth", "--case", "1"])).unwrap();
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("ctf.json")).unwrap()).unwrap();
    assert_eq!(m["rayleigh"]["region"], "FF");
    assert_eq!(m["schema_version"], "1");
    assert_eq!(m["geometry"]["rows"], 16);
    assert_eq!(m["sweep"]["n_points"], 1001);
    assert_eq!(out.manifest.rayleigh.unwrap().region, Region::FarField);
    let lines = fs::read_to_string(dir.path().join("ctf.csv")).unwrap().lines().count();
    assert_eq!(lines, 1 + 256 * 1001);
}

#[test]
fn case3_synth_is_byte_identical_on_rerun() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let c = cfg(&["synth", "--case", "3", "--seed", "7"]);
    commands::synth(&ctx(a.path()), &c).unwrap();
    let mut seq = ctx(b.path());
    seq.execution = xfield::Execution::Sequential;
    commands::synth(&seq, &c).unwrap();
    for name in ["ctf.csv", "ctf.json"] {
        let (x, y) = (fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap());
        assert!(x == y, "{name} differs between runs");
    }
    let rows = fs::read_to_string(a.path().join("ctf.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + 4096 * 1001);
}

#[test]
fn single_element_synth_then_extract() {
    let dir = TempDir::new().unwrap();
    let c = ctx(dir.path());
    commands::synth(&c, &cfg(&["synth", "--rows", "1", "--cols", "1"])).unwrap();
    let out = commands::extract(&c, &cfg(&["extract", "x"]), &dir.path().join("ctf.json")).unwrap();
    assert_eq!(out.summary.elements, 1);
    assert!((out.summary.center_distance_m - 0.86).abs() < 5e-5);
    assert_eq!(out.summary.gain_span_db, 0.0);
}

struct Run {
    dir: TempDir,
    extract: commands::ExtractSummary,
    fit: xfield::FitReport,
    region: RegionReport,
}

fn pipeline(case: &str, extra: &[&str]) -> Run {
    let dir = TempDir::new().unwrap();
    let c = ctx(dir.path());
    let mut args = vec!["synth", "--case", case];
    args.extend_from_slice(extra);
    commands::synth(&c, &cfg(&args)).unwrap();
    let e = commands::extract(&c, &cfg(&["extract", "x"]), &dir.path().join("ctf.json")).unwrap();
    let obs = dir.path().join("observations.json");
    let f = commands::fit(&c, &cfg(&["fit", "x"]), &obs).unwrap();
    let r = commands::report(&c, &cfg(&["report", "x"]), &obs, Some(&dir.path().join("fit.json"))).unwrap();
    Run {
        dir,
        extract: e.summary,
        fit: f.report,
        region: r.region,
    }
}

#[test]
fn case3_pipeline_report() {
    let run = pipeline("3", &[]);
    assert!((run.extract.center_delay_s - 2.87e-9).abs() < 0.01e-9);
    assert!((run.extract.gain_span_db - 0.6).abs() <= 0.15, "span {}", run.extract.gain_span_db);
    assert!(run.fit.mse <= 0.01);
    assert!(!run.region.within_pi_over_8);
    assert!((run.region.measured_max_phase_error_rad - 1.7529).abs() < 0.01);
    assert_eq!(run.region.assessment.region, Region::NearField);

    // surface files reproduce the fit MSE
    let model = read_column(&run.dir.path().join("model_surface.csv"), "gain_db");
    let measured = read_column(&run.dir.path().join("measured_surface.csv"), "gain_db");
    assert_eq!(model.len(), 4096);
    let mse = model.iter().zip(&measured).map(|(m, g)| (m - g).powi(2)).sum::<f64>() / 4096.0;
    assert!((mse - run.fit.mse).abs() < 1e-12, "{mse} vs {}", run.fit.mse);

    let fit_json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.dir.path().join("fit.json")).unwrap()).unwrap();
    assert!((fit_json["mse"].as_f64().unwrap() - mse).abs() < 1e-12);

    // each row starts at zero phase change
    let change = read_column(&run.dir.path().join("phase_rows.csv"), "phase_change_rad");
    assert_eq!(change.len(), 4096);
    assert_eq!(change[0], 0.0);
    let residuals = read_column(&run.dir.path().join("residuals.csv"), "residual_db");
    assert_eq!(residuals.len(), run.fit.residual_db.len());
    for (a, b) in residuals.iter().zip(&run.fit.residual_db) {
        assert!((a - b).abs() <= 1e-15 * b.abs().max(1e-3));
    }
}

#[test]
fn case1_report_within_pi_over_8() {
    let run = pipeline("1", &[]);
    assert!(run.region.within_pi_over_8);
    assert!((run.region.measured_max_phase_error_rad - 0.0994).abs() < 0.005);
    assert_eq!(run.region.assessment.region, Region::FarField);
}

#[test]
fn spherical_only_gain_span_is_tiny() {
    let dir = TempDir::new().unwrap();
    let c = ctx(dir.path());
    commands::synth(&c, &cfg(&["synth", "--case", "3", "--qx", "0", "--qz", "0", "--n-points", "201"])).unwrap();
    let e = commands::extract(&c, &cfg(&["extract", "x"]), &dir.path().join("ctf.json")).unwrap();
    assert!((e.summary.gain_span_db - 0.003).abs() < 0.001, "span {}", e.summary.gain_span_db);
}

#[test]
fn gzip_bodies_round_trip() {
    let dir = TempDir::new().unwrap();
    let c = ctx(dir.path());
    commands::synth(&c, &cfg(&["synth", "--rows", "4", "--cols", "5", "--gzip"])).unwrap();
    assert!(dir.path().join("ctf.csv.gz").exists());
    let e = commands::extract(&c, &cfg(&["extract", "x", "--gzip"]), &dir.path().join("ctf.json")).unwrap();
    assert_eq!(e.summary.elements, 20);
    assert!(dir.path().join("observations.csv.gz").exists());
    let f = commands::fit(&c, &cfg(&["fit", "x"]), &dir.path().join("observations.json")).unwrap();
    assert!(f.report.mse.is_finite());
}

#[test]
fn flags_override_config_file_and_preset() {
    let dir = TempDir::new().unwrap();
    let file = dir.path().join("run.json");
    fs::write(&file, r#"{"case": 3, "cols": 8, "seed": 5, "window": "hann"}"#).unwrap();
    let path = file.to_str().unwrap();
    let c = cfg(&["--config", path, "synth", "--rows", "4"]);
    let g = c.geometry().unwrap();
    assert_eq!((g.rows, g.cols), (4, 8));
    assert_eq!(g.spacing_m, 0.0005);
    assert_eq!(c.seed(), 5);
    assert_eq!(c.window, Some(xfield::Window::Hann));
    let c = cfg(&["--config", path, "--seed", "9", "synth"]);
    assert_eq!(c.seed(), 9);
    assert_eq!(c.geometry().unwrap().rows, 64);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let ok = dir.path().join("ok");
    let ok_s = ok.to_str().unwrap();

    let (code, stdout, _) = bin(&["synth", "--rows", "1", "--cols", "1", "--out-dir", ok_s]);
    assert_eq!(code, 0);
    assert!(stdout.contains("region FF"));

    let ctf = ok.join("ctf.json");
    let (code, stdout, _) = bin(&["extract", ctf.to_str().unwrap(), "--out-dir", ok_s]);
    assert_eq!(code, 0, "{stdout}");

    // too few elements to fit: domain error
    let (code, _, stderr) = bin(&["fit", ok.join("observations.json").to_str().unwrap(), "--out-dir", ok_s]);
    assert_eq!(code, 1, "{stderr}");
    assert!(stderr.contains("degenerate"));

    // output directory below a regular file
    let blocked = dir.path().join("file");
    fs::write(&blocked, "x").unwrap();
    let (code, _, _) = bin(&["synth", "--rows", "1", "--cols", "1", "--out-dir", blocked.join("sub").to_str().unwrap()]);
    assert_eq!(code, 2);

    // malformed and unknown-key configs
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{ not json").unwrap();
    let (code, _, _) = bin(&["--config", bad.to_str().unwrap(), "rayleigh", "--out-dir", ok_s]);
    assert_eq!(code, 2);
    fs::write(&bad, r#"{"colz": 3}"#).unwrap();
    let (code, _, _) = bin(&["--config", bad.to_str().unwrap(), "rayleigh", "--out-dir", ok_s]);
    assert_eq!(code, 2);

    // invalid values and unknown presets
    let (code, _, _) = bin(&["rayleigh", "--spacing-m", "-1", "--out-dir", ok_s]);
    assert_eq!(code, 2);
    let (code, _, _) = bin(&["synth", "--case", "4", "--out-dir", ok_s]);
    assert_eq!(code, 2);
}

#[test]
fn truncated_body_fails_without_partial_outputs() {
    let dir = TempDir::new().unwrap();
    let src = dir.path().join("src");
    let dst = dir.path().join("dst");
    commands::synth(&ctx(&src), &cfg(&["synth", "--rows", "2", "--cols", "2", "--n-points", "64"])).unwrap();
    let body = src.join("ctf.csv");
    let text = fs::read_to_string(&body).unwrap();
    let keep: Vec<&str> = text.lines().take(100).collect();
    fs::write(&body, keep.join("\n") + "\n").unwrap();

    let (code, _, stderr) = bin(&["extract", src.join("ctf.json").to_str().unwrap(), "--out-dir", dst.to_str().unwrap()]);
    assert_eq!(code, 2, "{stderr}");
    assert!(stderr.contains("dimension mismatch"));
    let leftovers: Vec<_> = fs::read_dir(&dst).map(|d| d.collect()).unwrap_or_default();
    assert!(leftovers.is_empty());
}

#[test]
fn silent_channel_has_no_path() {
    let dir = TempDir::new().unwrap();
    commands::synth(&ctx(dir.path()), &cfg(&["synth", "--rows", "1", "--cols", "1", "--n-points", "16"])).unwrap();
    let body = dir.path().join("ctf.csv");
    let zeroed: Vec<String> = fs::read_to_string(&body)
        .unwrap()
        .lines()
        .enumerate()
        .map(|(i, l)| {
            if i == 0 {
                l.to_string()
            } else {
                let f: Vec<&str> = l.split(',').collect();
                format!("{},{},0,0", f[0], f[1])
            }
        })
        .collect();
    fs::write(&body, zeroed.join("\n") + "\n").unwrap();
    let (code, _, stderr) = bin(&[
        "extract",
        dir.path().join("ctf.json").to_str().unwrap(),
        "--out-dir",
        dir.path().join("obs").to_str().unwrap(),
    ]);
    assert_eq!(code, 1, "{stderr}");
    assert!(stderr.contains("no path found"));
}

#[test]
fn rayleigh_presets_match_regions() {
    let dir = TempDir::new().unwrap();
    let expect = [("1", Region::FarField), ("2", Region::Boundary), ("3", Region::NearField)];
    for (case, region) in expect {
        let out = commands::rayleigh(&ctx(dir.path()), &cfg(&["rayleigh", "--case", case])).unwrap();
        assert_eq!(out.assessment.region, region, "case {case}");
    }
}
