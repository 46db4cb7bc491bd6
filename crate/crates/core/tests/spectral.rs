use num_complex::Complex64;
use std::f64::consts::{PI, TAU};
use xfield::spectral::DelayRefinement;
use xfield::*;

/// Naive O(N²) inverse DFT with 1/N normalization.
fn naive_idft(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(m, v)| v * Complex64::cis(TAU * (m * k % n) as f64 / n as f64))
                .sum::<Complex64>()
                / n as f64
        })
        .collect()
}

fn one_element(d: f64) -> (ScenarioGeometry, CtfGrid) {
    let s = ScenarioGeometry::broadside(build_upa(1, 1, 0.0005).unwrap(), d).unwrap();
    let ctf = synth_ctf(&s, &SweepPlan::default(), &[SynthPath::LOS], &AperturePattern::ISOTROPIC, None).unwrap();
    (s, ctf)
}

fn extract(ctf: &CtfGrid, window: Window, refinement: DelayRefinement) -> PathObservation {
    let cir = ctf_to_cir(ctf, window);
    let cfg = ExtractConfig { refinement, ..Default::default() };
    extract_dominant_path(&cir, ctf, &cfg).unwrap().elements[0].path
}

fn pseudo_random_ctf(n_el: usize, n: usize) -> CtfGrid {
    let s = ScenarioGeometry::broadside(build_upa(1, n_el, 0.0005).unwrap(), 1.0).unwrap();
    let sweep = SweepPlan::new(1e9, 2e9, n).unwrap();
    // deterministic LCG values in [-1, 1)
    let mut state = 0x2545_f491_4f6c_dd1du64;
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 52) as f64 - 1.0
    };
    let samples = (0..n_el * n).map(|_| Complex64::new(next(), next())).collect();
    CtfGrid::new(s, sweep, samples).unwrap()
}

#[test]
fn transform_matches_naive_oracle() {
    let ctf = pseudo_random_ctf(3, 97);
    let cir = ctf_to_cir(&ctf, Window::Rectangular);
    for e in 0..3 {
        let oracle = naive_idft(ctf.element(e));
        for (a, b) in cir.element(e).iter().zip(&oracle) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}

#[test]
fn parseval() {
    let ctf = pseudo_random_ctf(4, 1001);
    let cir = ctf_to_cir(&ctf, Window::Rectangular);
    for e in 0..4 {
        let time: f64 = cir.element(e).iter().map(|t| t.norm_sqr()).sum();
        let freq: f64 = ctf.element(e).iter().map(|h| h.norm_sqr()).sum::<f64>() / 1001.0;
        assert!((time / freq - 1.0).abs() < 1e-10);
    }
}

#[test]
fn tap_spacing_and_los_bin() {
    let (_, ctf) = one_element(0.8586);
    let cir = ctf_to_cir(&ctf, Window::Rectangular);
    assert!((cir.tap_spacing - 1.0 / (1001.0 * 60e6)).abs() < 1e-24);
    let obs = extract(&ctf, Window::Rectangular, DelayRefinement::CoherentPeak);
    assert_eq!((obs.delay_s / cir.tap_spacing).round(), 172.0);
    assert!((obs.delay_s - 2.8638e-9).abs() < 1e-12);
}

#[test]
fn bin_centred_path_is_exact() {
    let ts = 1.0 / (1001.0 * 60e6);
    let tau = 172.0 * ts;
    let (_, ctf) = one_element(tau * SPEED_OF_LIGHT);
    let expected_gain = -friis_fspl(tau * SPEED_OF_LIGHT, wavelength(290e9)).unwrap();
    for r in [DelayRefinement::Quadratic, DelayRefinement::CoherentPeak] {
        let obs = extract(&ctf, Window::Rectangular, r);
        assert!((obs.delay_s - tau).abs() < 1e-14, "{r:?}: {}", obs.delay_s - tau);
        assert!((obs.gain_db - expected_gain).abs() < 0.01);
    }
}

#[test]
fn between_bins_refinement() {
    let tau = 2.8721e-9;
    let (_, ctf) = one_element(tau * SPEED_OF_LIGHT);
    let cir = ctf_to_cir(&ctf, Window::Rectangular);
    let k = cir
        .element(0)
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
        .unwrap()
        .0;
    let coarse_err = (k as f64 * cir.tap_spacing - tau).abs();
    assert!(coarse_err <= 8.34e-12);
    let refined = extract(&ctf, Window::Rectangular, DelayRefinement::CoherentPeak);
    assert!((refined.delay_s - tau).abs() <= 0.5e-12);
}

#[test]
fn parabolic_refinement_bias_is_bounded_by_half_a_bin() {
    // the plain parabola through |tap| is biased for off-centre delays
    let (s, ctf) = one_element(0.86);
    let q = extract(&ctf, Window::Rectangular, DelayRefinement::Quadratic);
    let tau = element_distance(&s, (0.0, 0.0)) / SPEED_OF_LIGHT;
    let bias = (q.delay_s - tau).abs();
    assert!(bias > 1e-12 && bias < 0.5 / (1001.0 * 60e6));
}

#[test]
fn gain_is_window_invariant() {
    for d in [0.8586, 0.86, 0.8602883] {
        let (_, ctf) = one_element(d);
        let rect = extract(&ctf, Window::Rectangular, DelayRefinement::CoherentPeak);
        let hann = extract(&ctf, Window::Hann, DelayRefinement::CoherentPeak);
        assert!((rect.gain_db - hann.gain_db).abs() < 0.05);
        assert!((rect.delay_s - hann.delay_s).abs() < 1e-14);
    }
}

#[test]
fn phase_is_carrier_phase_at_centre_frequency() {
    let (_, ctf) = one_element(0.8601442);
    let obs = extract(&ctf, Window::Rectangular, DelayRefinement::CoherentPeak);
    let expected = -TAU * 290e9 * 0.8601442 / SPEED_OF_LIGHT;
    let diff = (obs.phase_rad - expected).rem_euclid(TAU);
    assert!(diff.min(TAU - diff) < 1e-6);
    assert!((-PI..PI).contains(&obs.phase_rad));
    assert!((obs.distance_m - obs.delay_s * SPEED_OF_LIGHT).abs() <= 1e-12 * obs.distance_m);
}

fn synthetic_grid(n: usize) -> (ScenarioGeometry, ObservationGrid) {
    let s = ScenarioGeometry::broadside(build_upa(n, n, 0.0005).unwrap(), 0.86).unwrap();
    let ctf = synth_ctf(&s, &SweepPlan::default(), &[SynthPath::LOS], &AperturePattern::ISOTROPIC, None).unwrap();
    let cir = ctf_to_cir(&ctf, Window::Rectangular);
    let obs = extract_dominant_path(&cir, &ctf, &ExtractConfig::default()).unwrap();
    (s, obs)
}

#[test]
fn unwrapped_phase_bowl() {
    // corner excess alone gives 1.75286 / 0.09938 rad (mpmath); even lattices have no
    // element at the exact centre, so the oracle uses the exact per-element distances.
    for (n, corner) in [(64, 1.752_859_130_88), (16, 0.099_384_147_97)] {
        let (s, obs) = synthetic_grid(n);
        let k = TAU / wavelength(290e9);
        let d = s.distances();
        let span = k * (d.iter().copied().fold(f64::MIN, f64::max) - d.iter().copied().fold(f64::MAX, f64::min));
        assert!((span - corner).abs() < 1e-3);
        let u = unwrap_phase_grid(&obs).unwrap();
        assert_eq!(u[0], obs.elements[0].path.phase_rad);
        let max = u.iter().copied().fold(f64::MIN, f64::max);
        let min = u.iter().copied().fold(f64::MAX, f64::min);
        assert!((max - min - span).abs() < 1e-6, "{n}: {}", max - min);
        // only whole turns were added
        for (w, e) in u.iter().zip(&obs.elements) {
            let turns = (w - e.path.phase_rad) / TAU;
            assert!((turns - turns.round()).abs() < 1e-9);
        }
    }
}

#[test]
fn unwrap_leaves_constant_grid_alone() {
    let s = ScenarioGeometry::broadside(build_upa(3, 4, 0.0005).unwrap(), 0.86).unwrap();
    let p = PathObservation { delay_s: 0.0, distance_m: 0.0, gain_db: 0.0, phase_rad: 2.5 };
    let g = ObservationGrid::from_scenario(&s, vec![p; 12]).unwrap();
    assert_eq!(unwrap_phase_grid(&g).unwrap(), vec![2.5; 12]);
    let mut partial = g.clone();
    partial.elements.pop();
    assert!(unwrap_phase_grid(&partial).is_err());
}

#[test]
fn round_trip_recovers_distances() {
    let (s, obs) = synthetic_grid(32);
    for (i, e) in obs.elements.iter().enumerate() {
        let d = element_distance(&s, s.upa.offset(i));
        assert!((e.path.distance_m - d).abs() < 5e-5);
    }
}
