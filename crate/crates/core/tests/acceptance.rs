//! Acceptance criteria. Every criterion runs even if an earlier one fails; the
//! test prints one PASS/FAIL line per criterion and fails if any did.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::time::{Duration, Instant};
use xfield::io::{write_ctf_csv, write_observations_csv};
use xfield::models::{cross_field_factor, DEFAULT_BOUNDARY_BAND};
use xfield::propagation::synth_ctf_with;
use xfield::spectral::{ctf_to_cir_with, extract_dominant_path_with};
use xfield::*;

const D0: f64 = 0.86;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn lambda_c() -> f64 {
    wavelength(290e9)
}

fn case(n: usize) -> ScenarioGeometry {
    ScenarioGeometry::broadside(build_upa(n, n, 0.0005).unwrap(), D0).unwrap()
}

fn within_time(start: Instant, limit: Duration) -> (bool, String) {
    let t = start.elapsed();
    (t <= limit, format!("{:.3}s/{}s", t.as_secs_f64(), limit.as_secs()))
}

fn friis_reproduction() -> Outcome {
    let a = friis_fspl(0.86, 1e-3).unwrap();
    let b = friis_fspl(0.8603, 1e-3).unwrap();
    check(
        (a - 80.674).abs() <= 0.001 && (b - 80.677).abs() <= 0.001,
        format!("FSPL(0.86 m) = {a:.4} dB, FSPL(0.8603 m) = {b:.4} dB"),
    )
}

fn cross_field_centre() -> Outcome {
    let p = CrossFieldParams::REFERENCE_FIT;
    let k = cross_field_factor(0.0, 0.0, lambda_c(), D0, &p).unwrap().k;
    let d_eq = p.d_ref * k;
    let pl = cross_field_pl(0.0, 0.0, lambda_c(), D0, &p).unwrap().db;
    check(
        (d_eq - 0.7829).abs() <= 0.0005 && (pl - 79.56).abs() <= 0.02,
        format!("d_ref·K(0,0) = {d_eq:.5} m, PL(centre) = {pl:.4} dB"),
    )
}

fn region_classification() -> Outcome {
    let got: Vec<Region> = [16, 32, 64]
        .iter()
        .map(|&n| classify_region(&case(n), lambda_c(), DEFAULT_BOUNDARY_BAND).unwrap().region)
        .collect();
    let want = [Region::FarField, Region::Boundary, Region::NearField];
    check(
        got == want,
        format!("16×16 {} / 32×32 {} / 64×64 {}", got[0], got[1], got[2]),
    )
}

fn phase_criterion() -> Outcome {
    let start = Instant::now();
    let errs: Vec<f64> = [16, 32, 64]
        .iter()
        .map(|&n| max_phase_error(&case(n), lambda_c()).unwrap())
        .collect();
    let (fast, t) = within_time(start, Duration::from_secs(1));
    let close = errs
        .iter()
        .zip([0.099, 0.424, 1.75])
        .all(|(e, want)| (e - want).abs() <= 0.05 * want);
    let sides = errs[0] < PI / 8.0 && errs[1] > PI / 8.0 && errs[2] > PI / 8.0;
    check(
        close && sides && fast,
        format!("{:.4} / {:.4} / {:.4} rad vs π/8 = {:.4}, {t}", errs[0], errs[1], errs[2], PI / 8.0),
    )
}

fn pipeline_oracle() -> Outcome {
    let start = Instant::now();
    let s = case(64);
    let ctf = synth_ctf(&s, &SweepPlan::default(), &[SynthPath::LOS], &AperturePattern::ISOTROPIC, None).unwrap();
    let cir = ctf_to_cir(&ctf, Window::Rectangular);
    let obs = extract_dominant_path(&cir, &ctf, &ExtractConfig::default()).unwrap();
    let l = lambda_c();
    let (mut worst_d, mut worst_g) = (0.0f64, 0.0f64);
    for (i, e) in obs.elements.iter().enumerate() {
        let d = element_distance(&s, s.upa.offset(i));
        worst_d = worst_d.max((e.path.distance_m - d).abs());
        let closed_form = 20.0 * (l / (4.0 * PI * d)).log10();
        worst_g = worst_g.max((e.path.gain_db - closed_form).abs());
    }
    let (fast, t) = within_time(start, Duration::from_secs(300));
    check(
        obs.len() == 4096 && worst_d <= 5e-5 && worst_g <= 0.02 && fast,
        format!("{} elements, max |Δd| = {worst_d:.2e} m, max |Δgain| = {worst_g:.2e} dB, {t}", obs.len()),
    )
}

fn model_grid(n: usize, params: &CrossFieldParams) -> ObservationGrid {
    let s = case(n);
    let paths = s
        .upa
        .offsets()
        .iter()
        .map(|&(dx, dz)| PathObservation {
            delay_s: 0.0,
            distance_m: 0.0,
            gain_db: -cross_field_pl(dx, dz, lambda_c(), D0, params).unwrap().db,
            phase_rad: 0.0,
        })
        .collect();
    ObservationGrid::from_scenario(&s, paths).unwrap()
}

fn fit_self_consistency() -> Outcome {
    let start = Instant::now();
    let truth = CrossFieldParams::REFERENCE_FIT;
    let grid = model_grid(64, &truth);
    let report = fit(&grid, lambda_c(), D0, &FitConfig::default()).unwrap();
    let worst = grid
        .elements
        .iter()
        .map(|e| {
            let a = cross_field_pl(e.dx_m, e.dz_m, lambda_c(), D0, &report.params).unwrap().db;
            let b = cross_field_pl(e.dx_m, e.dz_m, lambda_c(), D0, &truth).unwrap().db;
            (a - b).abs()
        })
        .fold(0.0, f64::max);
    let (fast, t) = within_time(start, Duration::from_secs(60));
    check(
        report.mse < 1e-10 && worst < 0.01 && fast,
        format!("MSE = {:.2e} dB², max surface gap = {worst:.2e} dB, {t}", report.mse),
    )
}

fn fit_physical_synthesis() -> Outcome {
    let start = Instant::now();
    let s = case(64);
    let ctf = synth_ctf(&s, &SweepPlan::default(), &[SynthPath::LOS], &AperturePattern::default(), None).unwrap();
    let cir = ctf_to_cir(&ctf, Window::Rectangular);
    let obs = extract_dominant_path(&cir, &ctf, &ExtractConfig::default()).unwrap();
    let report = fit(&obs, lambda_c(), D0, &FitConfig::default()).unwrap();
    let (fast, t) = within_time(start, Duration::from_secs(120));
    check(
        report.mse <= 0.01 && fast,
        format!("MSE = {:.2e} dB², {t}", report.mse),
    )
}

fn degeneracy() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let l = lambda_c();
    let mut worst = 0.0f64;
    for _ in 0..1_000_000 {
        let p = CrossFieldParams::new(
            rng.random_range(0.05..2.0),
            rng.random_range(1.01..3.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(0.2..3.0),
            rng.random_range(0.2..3.0),
        )
        .unwrap();
        let s: f64 = rng.random_range(0.2..5.0);
        let q = p.rescaled(s).unwrap();
        let (dx, dz, d0) = (
            rng.random_range(-0.03..0.03),
            rng.random_range(-0.03..0.03),
            rng.random_range(0.2..3.0),
        );
        let a = cross_field_factor(dx, dz, l, d0, &p).unwrap().k;
        let b = cross_field_factor(dx, dz, l, d0, &q).unwrap().k;
        worst = worst.max((a - b).abs() / a);
    }
    let (fast, t) = within_time(start, Duration::from_secs(1));
    check(
        worst <= 1e-10 && fast,
        format!("max relative |ΔK| = {worst:.2e} over 10⁶ inputs, {t}"),
    )
}

fn run_bytes(exec: Execution, threads: usize) -> (Vec<u8>, Vec<u8>, String) {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| {
        let s = case(16);
        let noise = Some(NoiseSpec { snr_db: 25.0, seed: 7 });
        let jittered = ScenarioGeometry::broadside(apply_position_jitter(&s.upa, 2e-5, 7).unwrap(), D0).unwrap();
        let ctf = synth_ctf_with(exec, &jittered, &SweepPlan::default(), &[SynthPath::LOS], &AperturePattern::default(), noise)
            .unwrap();
        let mut ctf_bytes = Vec::new();
        write_ctf_csv(&mut ctf_bytes, &ctf).unwrap();
        let cir = ctf_to_cir_with(exec, &ctf, Window::Rectangular);
        let obs = extract_dominant_path_with(exec, &cir, &ctf, &ExtractConfig::default()).unwrap();
        let mut obs_bytes = Vec::new();
        write_observations_csv(&mut obs_bytes, &obs, None).unwrap();
        let cfg = FitConfig { execution: exec, seed: 7, ..Default::default() };
        let report = fit(&obs, lambda_c(), D0, &cfg).unwrap();
        (ctf_bytes, obs_bytes, serde_json::to_string(&report).unwrap())
    })
}

fn parseval_and_determinism() -> Outcome {
    let s = case(16);
    let ctf = synth_ctf(&s, &SweepPlan::default(), &[SynthPath::LOS], &AperturePattern::default(), Some(NoiseSpec { snr_db: 0.0, seed: 3 }))
        .unwrap();
    let cir = ctf_to_cir(&ctf, Window::Rectangular);
    let n = ctf.sweep.n_points() as f64;
    let worst_ratio = (0..ctf.n_elements())
        .map(|e| {
            let time: f64 = cir.element(e).iter().map(|t| t.norm_sqr()).sum();
            let freq: f64 = ctf.element(e).iter().map(|h| h.norm_sqr()).sum::<f64>() / n;
            (time / freq - 1.0).abs()
        })
        .fold(0.0, f64::max);

    let reference = run_bytes(Execution::Sequential, 1);
    let repeat = run_bytes(Execution::Sequential, 1);
    let identical = reference == repeat
        && [1, 2, 4, 8]
            .iter()
            .all(|&t| run_bytes(Execution::Parallel, t) == reference);
    check(
        worst_ratio <= 1e-10 && identical,
        format!(
            "max |energy ratio − 1| = {worst_ratio:.1e}, outputs byte-identical across reruns and 1/2/4/8 workers: {identical}"
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> std::process::ExitCode {
    let criteria: [Criterion; 9] = [
        ("1 Friis reproduction", friis_reproduction),
        ("2 cross-field centre consistency", cross_field_centre),
        ("3 region classification", region_classification),
        ("4 phase criterion", phase_criterion),
        ("5 pipeline oracle equivalence", pipeline_oracle),
        ("6 fit self-consistency", fit_self_consistency),
        ("7 fit on physical synthesis", fit_physical_synthesis),
        ("8 degeneracy property", degeneracy),
        ("9 Parseval and determinism", parseval_and_determinism),
    ];
    let mut failed = Vec::new();
    for (name, run) in criteria {
        let o = run();
        println!("[{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed.push(name);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", criteria.len());
        std::process::ExitCode::SUCCESS
    } else {
        println!("acceptance: failed {failed:?}");
        std::process::ExitCode::FAILURE
    }
}
