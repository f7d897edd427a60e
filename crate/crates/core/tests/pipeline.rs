use lamerecon::calculus::c2_norm;
use lamerecon::config::{DataSource, PipelineConfig};
use lamerecon::forward::solve_many;
use lamerecon::metrics::metrics;
use lamerecon::noise::inject_noise;
use lamerecon::pipeline::{analytic_family, run_pipeline, write_outputs};
use lamerecon::{lfld, store, Error, Field, Grid, LameParameters, Mask, Phantom};

fn config(text: &str) -> PipelineConfig {
    PipelineConfig::parse(text).unwrap()
}

#[test]
fn constant_phantom_with_analytic_family_is_exact() {
    let c = config("n = 17\nphantom = constant\nk = 0\nsource = analytic");
    let out = run_pipeline(&c).unwrap();
    let mu = &out.manifest.mu.errors;
    let lam = &out.manifest.lambda.errors;
    assert!(mu.sup_abs <= 1e-6 && lam.sup_abs <= 1e-6, "mu {:.3e} lambda {:.3e}", mu.sup_abs, lam.sup_abs);
    assert!(mu.points > 0 && lam.points > 0);
}

#[test]
fn analytic_traces_are_exact_constant_coefficient_solutions() {
    let g = Grid::unit_box(2, 9).unwrap();
    let fam = analytic_family(g);
    assert_eq!(fam.len(), 8);
    assert_eq!(analytic_family(Grid::unit_box(3, 5).unwrap()).len(), 12);
    let exact = |label: &str, x: &[f64]| -> [f64; 2] {
        let (a, b) = (x[0], x[1]);
        match label {
            "x2-3y2" => [a * a - 3.0 * b * b, 0.0],
            "y2-3x2" => [0.0, b * b - 3.0 * a * a],
            "xy,-x2" => [a * b, -a * a],
            "-y2,xy" => [-b * b, a * b],
            "x,0" => [a, 0.0],
            "0,y" => [0.0, b],
            "y,0" => [b, 0.0],
            "0,x" => [0.0, a],
            other => panic!("unexpected label {other}"),
        }
    };
    let p = LameParameters::constant(g, 1.0, 1.0).unwrap();
    for (bd, sol) in fam.iter().zip(solve_many(&p, 0.0, &fam).unwrap()) {
        for q in 0..g.len() {
            let want = exact(&bd.label, &g.coords(q));
            let got = sol.u.at(q);
            assert!((got[0] - want[0]).abs() < 1e-10 && (got[1] - want[1]).abs() < 1e-10, "{} at {q}", bd.label);
        }
    }
}

#[test]
fn repeated_runs_are_bit_identical() {
    let c = config("n = 33\nphantom = smooth\nnoise_amplitude = 1e-3\nseed = 7\ncross_check = true");
    let a = run_pipeline(&c).unwrap();
    let b = run_pipeline(&c).unwrap();
    assert_eq!(serde_json::to_vec(&a.manifest).unwrap(), serde_json::to_vec(&b.manifest).unwrap());
    assert_eq!(a.artifacts.len(), b.artifacts.len());
    for ((pa, da), (pb, db)) in a.artifacts.iter().zip(&b.artifacts) {
        assert_eq!(pa, pb);
        assert!(da == db, "{pa} differs");
    }
}

#[test]
fn written_fields_reproduce_the_reported_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let c = config("n = 33\nphantom = smooth");
    let out = run_pipeline(&c).unwrap();
    write_outputs(dir.path(), &out).unwrap();
    let read = |p: &str| lfld::read(dir.path().join(p)).unwrap();
    let mu_mask = Mask::from_field(&read("mu_mask.lfld")).unwrap();
    let lam_mask = Mask::from_field(&read("lambda_mask.lfld")).unwrap();
    assert_eq!(metrics(&read("mu.lfld"), &read("truth/mu.lfld"), &mu_mask).unwrap(), out.manifest.mu.errors);
    assert_eq!(metrics(&read("lambda.lfld"), &read("truth/lambda.lfld"), &lam_mask).unwrap(), out.manifest.lambda.errors);
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["artifacts"].as_object().unwrap().len(), out.manifest.artifacts.len());
    assert!(dir.path().join("timings.json").exists());
    let bundle = store::read_bundle(dir.path().join("bundle_mu")).unwrap();
    assert_eq!(bundle.len(), out.solutions.len());
    let traces = store::read_traces(dir.path().join("traces")).unwrap();
    assert_eq!(traces.len(), out.solutions.len());
}

#[test]
fn traces_from_a_directory_feed_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let g = Grid::unit_box(2, 17).unwrap();
    store::write_traces(dir.path(), &analytic_family(g)).unwrap();
    let mut c = config("n = 17\nphantom = constant\nk = 0");
    c.source = DataSource::File { dir: dir.path().to_path_buf() };
    let out = run_pipeline(&c).unwrap();
    assert!(out.manifest.mu.errors.sup_abs <= 1e-6);
    assert_eq!(out.manifest.forward.labels[0], "x2-3y2");
}

#[test]
fn stage_errors_are_tagged() {
    let mut c = config("n = 17\nphantom = constant\nk = 0");
    c.source = DataSource::File { dir: "/nonexistent/traces".into() };
    let e = run_pipeline(&c).err().expect("missing trace directory");
    assert!(e.stage().is_some(), "{e}");
    assert!(matches!(PipelineConfig::parse("n = 3"), Err(Error::Config(_))));
}

#[test]
fn noise_has_the_requested_c2_size() {
    let g = Grid::unit_box(2, 65).unwrap();
    let p = LameParameters::from_phantom(g, &Phantom::inclusions(2)).unwrap();
    let h: Vec<Field> = solve_many(&p, 1.0, &analytic_family(g)[..3]).unwrap().into_iter().map(|s| s.u).collect();
    for delta in [1e-4, 1e-2] {
        let (a, ra) = inject_noise(&h, delta, 0.05, 1).unwrap();
        let (b, _) = inject_noise(&h, delta, 0.05, 2).unwrap();
        for j in 0..h.len() {
            let want = delta * c2_norm(&h[j]).unwrap();
            for noisy in [&a[j], &b[j]] {
                let got = c2_norm(&noisy.axpby(1.0, &h[j], -1.0).unwrap()).unwrap();
                assert!((got / want - 1.0).abs() <= 0.01, "delta {delta}: {got:.4e} vs {want:.4e}");
            }
            assert!((ra.c2_ratios[j] / delta - 1.0).abs() <= 0.01);
            assert_ne!(a[j], b[j]);
        }
    }
    let (again, _) = inject_noise(&h, 1e-3, 0.05, 1).unwrap();
    let (once, _) = inject_noise(&h, 1e-3, 0.05, 1).unwrap();
    assert_eq!(again, once);
}
