//! End-to-end experiment: boundary data → forward solves → reductions →
//! independence maps → μ → λ → metrics, with every intermediate kept as an
//! artifact and hashed into the manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use num_complex::Complex64;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::cgo::{design_boundary_set, tau_sweep, AmplitudeOptions, ComplexDirection, DesignReport, TauSweep};
use crate::config::{DataSource, LambdaMuSource, PipelineConfig};
use crate::elimination::{eliminate, Eliminated, EliminationOptions};
use crate::error::{Error, Result};
use crate::forward::{residual, solve_many, BoundaryData};
use crate::grid::{Field, Grid, Mask};
use crate::lambda::{compute_kappa_sigma, default_eps_kappa, harmonic_inpaint, recover_lambda_multi, regularity_mask, KappaSigma};
use crate::lfld;
use crate::metrics::{metrics, ErrorReport};
use crate::noise::{inject_noise, NoiseReport};
use crate::params::LameParameters;
use crate::reduction::{reduce_lambda, reduce_mu, ReductionBundle};
use crate::transport::{build_transport, recover_global, BoundaryMu, MuRecovery, RecoveryMode, RecoveryOptions};

/// Polynomial traces of degree ≤ 2. For λ = μ = 1 and k = 0 each one is an exact
/// solution of the elasticity system, so every stencil in the chain is exact.
pub fn analytic_family(g: Grid) -> Vec<BoundaryData> {
    type Poly = fn(&[f64]) -> [f64; 3];
    let fam: Vec<(&str, Poly)> = if g.dim() == 2 {
        vec![
            ("x2-3y2", |x| [x[0] * x[0] - 3.0 * x[1] * x[1], 0.0, 0.0]),
            ("y2-3x2", |x| [0.0, x[1] * x[1] - 3.0 * x[0] * x[0], 0.0]),
            ("xy,-x2", |x| [x[0] * x[1], -x[0] * x[0], 0.0]),
            ("-y2,xy", |x| [-x[1] * x[1], x[0] * x[1], 0.0]),
            ("x,0", |x| [x[0], 0.0, 0.0]),
            ("0,y", |x| [0.0, x[1], 0.0]),
            ("y,0", |x| [x[1], 0.0, 0.0]),
            ("0,x", |x| [0.0, x[0], 0.0]),
        ]
    } else {
        vec![
            ("x2-3y2", |x| [x[0] * x[0] - 3.0 * x[1] * x[1], 0.0, 0.0]),
            ("y2-3z2", |x| [0.0, x[1] * x[1] - 3.0 * x[2] * x[2], 0.0]),
            ("z2-3x2", |x| [0.0, 0.0, x[2] * x[2] - 3.0 * x[0] * x[0]]),
            ("xy,-x2", |x| [x[0] * x[1], -x[0] * x[0], 0.0]),
            ("yz,-y2", |x| [0.0, x[1] * x[2], -x[1] * x[1]]),
            ("-z2,xz", |x| [-x[2] * x[2], 0.0, x[0] * x[2]]),
            ("x,0,0", |x| [x[0], 0.0, 0.0]),
            ("0,y,0", |x| [0.0, x[1], 0.0]),
            ("0,0,z", |x| [0.0, 0.0, x[2]]),
            ("y,0,0", |x| [x[1], 0.0, 0.0]),
            ("0,z,0", |x| [0.0, x[2], 0.0]),
            ("0,0,x", |x| [0.0, 0.0, x[0]]),
        ]
    };
    let d = g.dim();
    fam.into_iter().map(|(name, f)| BoundaryData::from_fn(g, name, |x, o| o.copy_from_slice(&f(x)[..d]))).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ForwardReport {
    pub labels: Vec<String>,
    pub condition: f64,
    /// Largest interior residual of the discrete system over all solutions.
    pub residual_sup: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EliminationReport {
    pub variant: String,
    pub threshold: f64,
    pub coverage: f64,
    pub annihilation_sup: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MuReport {
    pub mode: RecoveryMode,
    pub transport_coverage: f64,
    pub errors: ErrorReport,
    pub unreachable: usize,
    pub nonpositive: usize,
    pub disagreement_sup: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LambdaReport {
    pub mu_source: LambdaMuSource,
    pub eps_kappa: Vec<f64>,
    pub regularity_coverage: f64,
    pub errors: ErrorReport,
    pub negative: usize,
    /// Errors of the inpainted field on the points it filled, when inpainting ran.
    pub inpainted: Option<ErrorReport>,
}

/// Everything needed to reproduce and audit a run. Wall-clock timings live in a
/// separate file so that fixed inputs give a byte-identical manifest.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunManifest {
    pub version: String,
    pub config: PipelineConfig,
    pub stages: Vec<String>,
    pub design: Option<DesignReport>,
    pub forward: ForwardReport,
    pub noise: Option<NoiseReport>,
    pub elimination: Vec<EliminationReport>,
    pub mu: MuReport,
    pub lambda: LambdaReport,
    pub tau_sweep: Option<TauSweep>,
    /// SHA-256 of every artifact, keyed by its path relative to the output directory.
    pub artifacts: BTreeMap<String, String>,
}

pub struct PipelineOutput {
    pub manifest: RunManifest,
    pub timings: Vec<StageTiming>,
    pub truth: LameParameters,
    pub solutions: Vec<Field>,
    pub mu: MuRecovery,
    pub lambda: Field,
    pub lambda_mask: Mask,
    /// Artifact paths and contents, in write order.
    pub artifacts: Vec<(String, Vec<u8>)>,
}

fn tag<T>(stage: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage { stage, source: Box::new(e) })
}

struct Recorder {
    timings: Vec<StageTiming>,
    artifacts: Vec<(String, Vec<u8>)>,
    clock: Instant,
}

impl Recorder {
    fn stage(&mut self, name: &str) {
        let now = Instant::now();
        self.timings.push(StageTiming { stage: name.into(), seconds: (now - self.clock).as_secs_f64() });
        self.clock = now;
    }

    fn field(&mut self, path: String, f: &Field) {
        self.artifacts.push((path, lfld::to_bytes(f)));
    }

    fn json(&mut self, path: &str, v: &impl Serialize) -> Result<()> {
        self.artifacts.push((path.into(), serde_json::to_vec_pretty(v)?));
        Ok(())
    }
}

fn bundle_artifacts(rec: &mut Recorder, dir: &str, b: &ReductionBundle) -> Result<()> {
    rec.artifacts.push((format!("{dir}/meta.json"), crate::store::bundle_meta(b)?));
    for j in 0..b.len() {
        rec.field(format!("{dir}/sharp_{j:03}.lfld"), &b.sharp[j]);
        rec.field(format!("{dir}/flat_{j:03}.lfld"), &b.flat[j]);
        rec.field(format!("{dir}/star_{j:03}.lfld"), &b.star[j]);
    }
    Ok(())
}

fn elimination_report(e: &Eliminated) -> EliminationReport {
    EliminationReport {
        variant: e.plan.variant.name().into(),
        threshold: e.plan.threshold,
        coverage: e.plan.mask.interior_coverage(),
        annihilation_sup: e.thetas.iter().map(|t| t.annihilation.max_abs()).fold(0.0, f64::max),
    }
}

/// Boundary traces requested by `config.source`, with the design report when designed.
pub fn boundary_data(config: &PipelineConfig, g: &Grid) -> Result<(Vec<BoundaryData>, Option<DesignReport>)> {
    match &config.source {
        DataSource::Designed { variant, tau, anchors, guess_lambda, guess_mu, pad_fraction } => {
            let guess = tag("design-bc", LameParameters::constant(*g, *guess_lambda, *guess_mu))?;
            let opts = AmplitudeOptions { pad_fraction: *pad_fraction, ..AmplitudeOptions::default() };
            let d = tag("design-bc", design_boundary_set(&guess, config.k, *variant, anchors, *tau, &opts))?;
            Ok((d.data, Some(d.report)))
        }
        DataSource::Analytic => Ok((analytic_family(*g), None)),
        DataSource::File { dir } => {
            let data = tag("design-bc", crate::store::read_traces(dir))?;
            for d in &data {
                tag("design-bc", g.check_same(d.grid()))?;
            }
            Ok((data, None))
        }
    }
}

/// Runs every stage of `config`. Artifacts are written only when `config.output` is set.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineOutput> {
    tag("config", config.validate())?;
    let mut rec = Recorder { timings: Vec::new(), artifacts: Vec::new(), clock: Instant::now() };
    let g = tag("config", Grid::unit_box(config.dim, config.n))?;
    let truth = tag("config", LameParameters::from_phantom(g, &config.phantom))?;
    let k = config.k;

    let (data, design_report) = boundary_data(config, &g)?;
    if let Some(r) = &design_report {
        rec.json("design/report.json", r)?;
    }
    for (j, d) in data.iter().enumerate() {
        rec.field(format!("traces/trace_{j:03}.lfld"), d.values());
    }
    rec.json("traces/labels.json", &data.iter().map(|d| d.label.as_str()).collect::<Vec<_>>())?;
    rec.stage("design-bc");

    // forward solves
    let sols = tag("forward", solve_many(&truth, k, &data))?;
    let labels: Vec<String> = data.iter().map(|d| d.label.clone()).collect();
    let mut residual_sup = 0.0f64;
    for s in &sols {
        residual_sup = residual_sup.max(tag("forward", residual(&s.u, &truth, k))?.max_abs());
    }
    let forward = ForwardReport { labels: labels.clone(), condition: sols[0].condition, residual_sup };
    let mut us: Vec<Field> = sols.into_iter().map(|s| s.u).collect();
    rec.stage("forward");

    let noise = if config.noise_amplitude > 0.0 {
        let (noisy, report) = tag("noise", inject_noise(&us, config.noise_amplitude, config.noise_width, config.seed))?;
        us = noisy;
        rec.stage("noise");
        Some(report)
    } else {
        None
    };
    for (j, u) in us.iter().enumerate() {
        rec.field(format!("forward/u_{j:03}.lfld"), u);
    }

    // reductions and independence maps
    let bm = tag("reduce", reduce_mu(&us, &labels))?;
    let bl = tag("reduce", reduce_lambda(&us, &labels))?;
    bundle_artifacts(&mut rec, "bundle_mu", &bm)?;
    bundle_artifacts(&mut rec, "bundle_lambda", &bl)?;
    rec.stage("reduce");
    let eopts = EliminationOptions { threshold_factor: config.sigma_factor, threshold_abs: config.sigma_abs, ..Default::default() };
    let em = tag("diagnose", eliminate(&bm, &eopts))?;
    let el = tag("diagnose", eliminate(&bl, &eopts))?;
    rec.field("diagnose/sigma_min_mu.lfld".into(), &em.plan.sigma_min);
    rec.field("diagnose/mask_mu.lfld".into(), &em.plan.mask.to_field());
    rec.field("diagnose/sigma_min_lambda.lfld".into(), &el.plan.sigma_min);
    rec.field("diagnose/mask_lambda.lfld".into(), &el.plan.mask.to_field());
    rec.stage("diagnose");

    // μ
    let sys = tag("reconstruct-mu", build_transport(&em.vs, &em.rstars, k, &em.plan.mask, config.cond_cap))?;
    let ropts = RecoveryOptions { mode: config.mu_mode, reg_weight: config.reg_weight, cross_check: config.cross_check };
    let mu = tag("reconstruct-mu", recover_global(&sys, &BoundaryMu::Field(truth.mu.clone()), &ropts))?;
    rec.field("mu.lfld".into(), &mu.mu);
    rec.field("mu_mask.lfld".into(), &mu.mask.to_field());
    rec.stage("reconstruct-mu");

    // λ
    let regular = regularity_mask(&g, config.frame, config.corner_radius);
    let (mu_for_lambda, mut valid) = match config.lambda_mu {
        LambdaMuSource::Recovered => (&mu.mu, el.plan.mask.and(&mu.mask)),
        LambdaMuSource::True => (&truth.mu, el.plan.mask.clone()),
    };
    valid = valid.and(&regular);
    let mut eps = Vec::new();
    let kss = el
        .vs
        .iter()
        .zip(&el.rstars)
        .map(|(v, r)| {
            let e = default_eps_kappa(v, &valid, config.eps_kappa_factor);
            eps.push(e);
            compute_kappa_sigma(v, r, config.dim, e, &valid)
        })
        .collect::<Result<Vec<KappaSigma>>>();
    let kss = tag("reconstruct-lambda", kss)?;
    let lr = tag("reconstruct-lambda", recover_lambda_multi(&kss, mu_for_lambda, k))?;
    let mut lambda = lr.lambda.clone();
    let mut inpainted = None;
    if config.inpaint {
        let (filled, fmask) = tag("reconstruct-lambda", harmonic_inpaint(&lr.lambda, &lr.mask))?;
        lambda = filled;
        inpainted = Some(tag("metrics", metrics(&lambda, &truth.lambda, &fmask.and(&Mask::interior(g))))?);
        rec.field("lambda_inpainted_mask.lfld".into(), &fmask.to_field());
    }
    rec.field("lambda.lfld".into(), &lambda);
    rec.field("lambda_mask.lfld".into(), &lr.mask.to_field());
    rec.stage("reconstruct-lambda");

    // metrics
    let mu_report = MuReport {
        mode: config.mu_mode,
        transport_coverage: sys.mask.interior_coverage(),
        errors: tag("metrics", metrics(&mu.mu, &truth.mu, &mu.mask))?,
        unreachable: mu.unreachable.count(),
        nonpositive: mu.nonpositive.count(),
        disagreement_sup: mu.disagreement.as_ref().map(|d| d.max_abs()),
    };
    let lambda_report = LambdaReport {
        mu_source: config.lambda_mu,
        eps_kappa: eps,
        regularity_coverage: regular.interior_coverage(),
        errors: tag("metrics", metrics(&lr.lambda, &truth.lambda, &lr.mask))?,
        negative: lr.negative.count(),
        inpainted,
    };
    let sweep = if config.tau_sweep.is_empty() {
        None
    } else {
        let dir = tag("metrics", ComplexDirection::axes(config.dim, 0, 1, config.tau_sweep[0]))?;
        let mut pin = vec![Complex64::new(0.0, 0.0); config.dim + 1];
        pin[0] = Complex64::new(0.5, 0.0);
        pin[config.dim] = Complex64::new(1.0, 0.0);
        let centre = vec![0.5; config.dim];
        Some(tag("metrics", tau_sweep(&truth, k, &dir, &pin, &centre, &config.tau_sweep, &AmplitudeOptions::default()))?)
    };
    rec.field("truth/mu.lfld".into(), &truth.mu);
    rec.field("truth/lambda.lfld".into(), &truth.lambda);
    rec.stage("metrics");

    let artifacts = rec.artifacts.iter().map(|(p, b)| (p.clone(), format!("{:x}", Sha256::digest(b)))).collect();
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").into(),
        config: config.clone(),
        stages: rec.timings.iter().map(|t| t.stage.clone()).collect(),
        design: design_report,
        forward,
        noise,
        elimination: vec![elimination_report(&em), elimination_report(&el)],
        mu: mu_report,
        lambda: lambda_report,
        tau_sweep: sweep,
        artifacts,
    };
    let out = PipelineOutput {
        manifest,
        timings: rec.timings,
        truth,
        solutions: us,
        mu,
        lambda,
        lambda_mask: lr.mask,
        artifacts: rec.artifacts,
    };
    if let Some(dir) = &config.output {
        tag("write", write_outputs(dir, &out))?;
    }
    Ok(out)
}

/// Writes artifacts, `manifest.json` and `timings.json` under `dir`.
pub fn write_outputs(dir: &Path, out: &PipelineOutput) -> Result<()> {
    for (rel, bytes) in &out.artifacts {
        let path = dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, bytes)?;
    }
    fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&out.manifest)?)?;
    fs::write(dir.join("timings.json"), serde_json::to_vec_pretty(&out.timings)?)?;
    Ok(())
}
