//! Acceptance criteria for the full reconstruction chain. Runs without the
//! libtest harness so that every criterion prints one PASS/FAIL line; exits
//! nonzero if any criterion fails.

mod common;

use std::time::Instant;

use common::*;
use lamerecon::cgo::{assemble_v1, second_row_residual, solve_amplitude, tau_sweep, transport_residual, AmplitudeOptions, ComplexDirection};
use lamerecon::config::{smooth_phantom, PipelineConfig};
use lamerecon::pipeline::{run_pipeline, PipelineOutput};
use lamerecon::reduction::Variant;
use lamerecon::transport::{integrate_ray, TransportSystem};
use lamerecon::{Field, Grid, LameParameters, Mask, Phantom, Rank};
use num_complex::Complex64 as C;

// pinned tolerances
const FORWARD_MIN_ORDER: f64 = 1.9;
const FORWARD_MAX_SECONDS: f64 = 60.0;
const IDENTITY_RATIO: (f64, f64) = (3.2, 4.8);
const POLY_IDENTITY_TOL: f64 = 1e-9;
const ANNIHILATION_TOL: f64 = 1e-10;
const E2E_MU_TOL: f64 = 0.02;
const E2E_LAMBDA_TOL: f64 = 0.05;
const E2E_MIN_COVERAGE: f64 = 0.85;
const E2E_MAX_SECONDS: f64 = 300.0;
const RAY_TOL: f64 = 1e-6;
const CGO_RESIDUAL_TOL: f64 = 1e-6;
const TAU_SLOPE: (f64, f64) = (-1.3, -0.7);
const LADDER: [f64; 3] = [1e-4, 1e-3, 1e-2];
const LADDER_MAX_GROWTH: f64 = 30.0;

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.2e}")).collect();
    format!("[{}]", parts.join(", "))
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn forward_convergence() -> Outcome {
    let t = Instant::now();
    let errs: Vec<f64> = [33, 65, 129].iter().map(|&n| manufactured_forward_error(n)).collect();
    let secs = t.elapsed().as_secs_f64();
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let pass = orders.iter().all(|&o| o >= FORWARD_MIN_ORDER) && secs < FORWARD_MAX_SECONDS;
    outcome(pass, format!("errors {}, orders {orders:.3?} (>= {FORWARD_MIN_ORDER}), {secs:.1} s (< {FORWARD_MAX_SECONDS})", sci(&errs)))
}

fn identity_oracle() -> Outcome {
    let mut ratios = Vec::new();
    for (dim, coarse, fine) in [(2, 33, 65), (2, 65, 129), (3, 13, 25)] {
        for v in [Variant::Mu, Variant::Lambda] {
            ratios.push((dim, fine, v, identity_sup(dim, coarse, v) / identity_sup(dim, fine, v)));
        }
    }
    let pass = ratios.iter().all(|r| (IDENTITY_RATIO.0..=IDENTITY_RATIO.1).contains(&r.3));
    let text: Vec<String> = ratios.iter().map(|(d, n, v, r)| format!("{d}D {n} {}: {r:.2}", v.name())).collect();
    outcome(pass, format!("sup ratio on [1/4,3/4]^n per halving in {IDENTITY_RATIO:?}: {}", text.join(", ")))
}

fn polynomial_identity() -> Outcome {
    let (gap, scale) = three_dimensional_identity_gap();
    outcome(gap <= POLY_IDENTITY_TOL && scale > 0.0, format!("3D gap {gap:.2e} (<= {POLY_IDENTITY_TOL:e}) against |sum_i (Lu)_i| up to {scale:.2}"))
}

fn smooth_config(noise: f64) -> PipelineConfig {
    let mut c = PipelineConfig::parse("n = 65\nphantom = smooth\nk = 1\nseed = 11").unwrap();
    c.noise_amplitude = noise;
    c
}

fn annihilation(run: &PipelineOutput) -> Outcome {
    let e = &run.manifest.elimination;
    let worst = e.iter().map(|r| r.annihilation_sup).fold(0.0, f64::max);
    let cov: Vec<String> = e.iter().map(|r| format!("{} {:.3}", r.variant, r.coverage)).collect();
    outcome(worst <= ANNIHILATION_TOL, format!("sup relative annihilation {worst:.2e} (<= {ANNIHILATION_TOL:e}) on masks covering {}", cov.join(", ")))
}

fn end_to_end(run: &PipelineOutput, secs: f64) -> Outcome {
    let mu = &run.manifest.mu.errors;
    let lam = &run.manifest.lambda.errors;
    let traces = run.manifest.forward.labels.len();
    let pass = mu.sup_rel <= E2E_MU_TOL
        && lam.sup_rel <= E2E_LAMBDA_TOL
        && mu.coverage >= E2E_MIN_COVERAGE
        && lam.coverage >= E2E_MIN_COVERAGE
        && traces == 8
        && secs < E2E_MAX_SECONDS;
    outcome(
        pass,
        format!(
            "65^2 smooth phantom, {traces} designed traces: mu {:.2}% on {:.1}%, lambda {:.2}% on {:.1}%, {secs:.1} s",
            100.0 * mu.sup_rel,
            100.0 * mu.coverage,
            100.0 * lam.sup_rel,
            100.0 * lam.coverage
        ),
    )
}

fn ray_closed_forms() -> Outcome {
    let g = Grid::unit_box(2, 65).unwrap();
    let all = Mask::filled(g, true);
    let vec2 = |v: [f64; 2]| Field::from_fn(g, Rank::Vector(2), |_, o| o.copy_from_slice(&v));
    let c = 1.3;
    let expo = TransportSystem::from_coefficients(vec2([c, 0.0]), vec2([0.0, 0.0]), all.clone()).unwrap();
    let lin = TransportSystem::from_coefficients(vec2([0.0, 0.0]), vec2([1.0, 0.0]), all).unwrap();
    let mut worst = 0.0f64;
    for (x0, x1) in [(0.0, 0.9), (0.1, 0.75), (0.05, 1.0)] {
        let e = integrate_ray(&expo, 2.0, &[x0, 0.5], &[x1, 0.5]).unwrap_or(f64::NAN);
        worst = worst.max((e - 2.0 * (-c * (x1 - x0)).exp()).abs());
        let l = integrate_ray(&lin, 1.0, &[x0, 0.3], &[x1, 0.3]).unwrap_or(f64::NAN);
        worst = worst.max((l - (1.0 + (x1 - x0))).abs());
    }
    outcome(worst <= RAY_TOL, format!("step 1/64: sup deviation {worst:.2e} (<= {RAY_TOL:e})"))
}

fn cgo_diagnostics() -> Outcome {
    let g = Grid::unit_box(2, 65).unwrap();
    let p = LameParameters::from_phantom(g, &Phantom::inclusions(2)).unwrap();
    let v1 = assemble_v1(&p, 1.0).unwrap();
    let opts = AmplitudeOptions::default();
    let pin = [C::new(0.5, 0.0), C::new(0.0, 0.0), C::new(1.0, 0.0)];
    let dir = ComplexDirection::axes(2, 0, 1, 2.0).unwrap();
    let amp = solve_amplitude(&v1, &dir, &pin, &[0.5, 0.5], &opts).unwrap();
    let tr = transport_residual(&amp.rs, &v1, &dir, opts.frame).unwrap();
    let sr = second_row_residual(&amp, &p, opts.frame).unwrap();
    let smooth = LameParameters::from_phantom(g, &smooth_phantom(2)).unwrap();
    let sw = tau_sweep(&smooth, 1.0, &dir, &pin, &[0.5, 0.5], &[8.0, 16.0, 32.0, 64.0], &opts).unwrap();
    let pass = tr <= CGO_RESIDUAL_TOL && sr <= CGO_RESIDUAL_TOL && (TAU_SLOPE.0..=TAU_SLOPE.1).contains(&sw.slope);
    outcome(
        pass,
        format!(
            "transport {tr:.2e}, second row {sr:.2e} (<= {CGO_RESIDUAL_TOL:e}); tau 8..64 residuals {}, slope {:.3} in {TAU_SLOPE:?}",
            sci(&sw.residuals),
            sw.slope
        ),
    )
}

/// Largest relative gap between two recoveries on the common mask.
fn gap(a: &Field, am: &Mask, b: &Field, bm: &Mask, truth: &Field) -> f64 {
    let m = am.and(bm);
    (0..m.grid().len()).filter(|&p| m.get(p)).map(|p| (a.get(p) - b.get(p)).abs() / truth.get(p)).fold(0.0, f64::max)
}

fn ladder_ok(errs: &[f64]) -> bool {
    errs.windows(2).all(|w| w[1] >= w[0] && w[1] <= LADDER_MAX_GROWTH * w[0])
}

/// Recoveries from noisy data are compared with the recovery from the same
/// data without noise (the Lipschitz quantity), and, on the inclusions
/// phantom, with the truth. Against the truth on the smooth phantom the
/// discretization floor (~0.8%) hides the smallest noise level; that ladder is
/// reported but not asserted.
fn stability_ladder(clean: &PipelineOutput) -> Outcome {
    let mut mu_gap = Vec::new();
    let mut lam_gap = Vec::new();
    let mut mu_truth = Vec::new();
    for &d in &LADDER {
        let o = run_pipeline(&smooth_config(d)).unwrap();
        mu_gap.push(gap(&o.mu.mu, &o.mu.mask, &clean.mu.mu, &clean.mu.mask, &clean.truth.mu));
        lam_gap.push(gap(&o.lambda, &o.lambda_mask, &clean.lambda, &clean.lambda_mask, &clean.truth.lambda));
        mu_truth.push(o.manifest.mu.errors.sup_rel);
    }
    let base = PipelineConfig::parse("n = 65\nphantom = inclusions\nk = 1\nseed = 11").unwrap();
    let mut inc_mu = Vec::new();
    let mut inc_lam = Vec::new();
    for &d in &LADDER {
        let o = run_pipeline(&PipelineConfig { noise_amplitude: d, ..base.clone() }).unwrap();
        inc_mu.push(o.manifest.mu.errors.sup_rel);
        inc_lam.push(o.manifest.lambda.errors.sup_rel);
    }
    let pass = ladder_ok(&mu_gap) && ladder_ok(&lam_gap) && ladder_ok(&inc_mu) && ladder_ok(&inc_lam);
    outcome(
        pass,
        format!(
            "delta {LADDER:?}, growth <= {LADDER_MAX_GROWTH}: vs noiseless mu {} lambda {}; \
             vs truth (inclusions) mu {} lambda {}; vs truth (smooth, reported) mu {}",
            sci(&mu_gap),
            sci(&lam_gap),
            sci(&inc_mu),
            sci(&inc_lam),
            sci(&mu_truth)
        ),
    )
}

fn determinism() -> Outcome {
    let c = smooth_config(1e-3);
    let a = run_pipeline(&c).unwrap();
    let b = run_pipeline(&c).unwrap();
    let manifests = serde_json::to_vec(&a.manifest).unwrap() == serde_json::to_vec(&b.manifest).unwrap();
    let differing: Vec<&str> = a
        .artifacts
        .iter()
        .zip(&b.artifacts)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    let pass = manifests && differing.is_empty() && a.artifacts.len() == b.artifacts.len();
    outcome(pass, format!("{} artifacts, manifest identical: {manifests}, differing: {differing:?}", a.artifacts.len()))
}

fn main() {
    let t = Instant::now();
    let clean_run = run_pipeline(&smooth_config(0.0));
    let e2e_secs = t.elapsed().as_secs_f64();
    let clean = clean_run.expect("noiseless pipeline run");
    let results: Vec<(&str, Outcome)> = vec![
        ("forward-solver convergence", forward_convergence()),
        ("reduction identity oracle", identity_oracle()),
        ("3D b_ij polynomial identity", polynomial_identity()),
        ("elimination exactness", annihilation(&clean)),
        ("end-to-end recovery", end_to_end(&clean, e2e_secs)),
        ("transport closed forms", ray_closed_forms()),
        ("CGO diagnostics", cgo_diagnostics()),
        ("stability ladder", stability_ladder(&clean)),
        ("determinism", determinism()),
    ];
    let mut failed = 0;
    for (i, (name, o)) in results.iter().enumerate() {
        println!("criterion {} {name}: {} ({})", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} of {} criteria pass", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
