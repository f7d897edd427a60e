use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use lamerecon::cgo::{design_boundary_set, AmplitudeOptions, DesignVariant};
use lamerecon::config::PipelineConfig;
use lamerecon::elimination::{eliminate, EliminationOptions};
use lamerecon::forward::{residual, solve_many};
use lamerecon::lambda::{compute_kappa_sigma, default_eps_kappa, harmonic_inpaint, recover_lambda_multi, regularity_mask};
use lamerecon::metrics::metrics;
use lamerecon::noise::inject_noise;
use lamerecon::pipeline::{boundary_data, run_pipeline};
use lamerecon::reduction::{reduce_variant, Variant};
use lamerecon::store::{read_bundle, write_bundle, write_traces};
use lamerecon::transport::{build_transport, recover_global, BoundaryMu, RecoveryMode, RecoveryOptions, DEFAULT_COND_CAP};
use lamerecon::{lfld, Field, Grid, LameParameters, Mask};
use serde_json::json;

#[derive(Parser)]
#[command(name = "lamerecon", version, about = "Reconstruct Lamé parameters from internal displacement data")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the forward problem for every trace a config describes.
    Forward {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reduce displacement fields to (u♯, u♭, u*) bundles.
    Reduce {
        #[arg(long)]
        variant: Variant,
        #[arg(long = "in", num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Design boundary traces from CGO solutions of a parameter guess.
    DesignBc(DesignArgs),
    /// Pointwise independence map of a bundle.
    Diagnose {
        #[arg(long)]
        bundle: PathBuf,
        /// σ_min output then mask output.
        #[arg(long, num_args = 2, value_names = ["SIGMA_MIN", "MASK"])]
        out: Vec<PathBuf>,
        #[arg(long, default_value_t = 1e-3)]
        sigma_factor: f64,
    },
    /// Recover μ or λ from a bundle.
    #[command(subcommand)]
    Reconstruct(Reconstruct),
    /// Add smoothed noise of prescribed C² size to fields.
    Noise {
        #[arg(long = "in", num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        amplitude: f64,
        #[arg(long, default_value_t = 0.05)]
        width: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Error summary of a recovered field.
    Metrics {
        #[arg(long)]
        recovered: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Mask field (nonzero = inside); defaults to the grid interior.
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full experiment a config describes.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DesignArgs {
    /// `λ,μ` constants or a directory holding lambda.lfld and mu.lfld.
    #[arg(long, default_value = "1,1")]
    guess: String,
    #[arg(long, default_value = "both")]
    variant: DesignVariant,
    /// Anchor points, `x,y;x,y`.
    #[arg(long)]
    anchors: String,
    #[arg(long)]
    tau: f64,
    #[arg(long, default_value_t = 1.0)]
    k: f64,
    /// Grid for constant guesses: unit box with n points per axis.
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 65)]
    n: usize,
    #[arg(long, default_value_t = 0.5)]
    pad_fraction: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Reconstruct {
    Mu {
        #[arg(long)]
        bundle: PathBuf,
        /// Constant or an LFLD field whose boundary values are used.
        #[arg(long)]
        boundary_mu: String,
        #[arg(long, default_value = "ls")]
        mode: RecoveryMode,
        #[arg(long, default_value_t = 1.0)]
        k: f64,
        #[arg(long, default_value_t = 1e-3)]
        sigma_factor: f64,
        #[arg(long, default_value_t = DEFAULT_COND_CAP)]
        cond_cap: f64,
        #[arg(long, default_value_t = 1e-2)]
        reg_weight: f64,
        #[arg(long)]
        cross_check: bool,
        /// μ output then JSON report.
        #[arg(long, num_args = 2, value_names = ["MU", "REPORT"])]
        out: Vec<PathBuf>,
    },
    Lambda {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        mu: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        k: f64,
        #[arg(long, default_value_t = 1e-3)]
        sigma_factor: f64,
        #[arg(long, default_value_t = 1e-3)]
        eps_kappa_factor: f64,
        #[arg(long, default_value_t = 2)]
        frame: usize,
        #[arg(long, default_value_t = 0.1)]
        corner_radius: f64,
        #[arg(long)]
        inpaint: bool,
        /// λ output then JSON report.
        #[arg(long, num_args = 2, value_names = ["LAMBDA", "REPORT"])]
        out: Vec<PathBuf>,
    },
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, serde_json::to_vec_pretty(v)?).with_context(|| format!("writing {}", path.display()))
}

fn read_fields(paths: &[PathBuf]) -> anyhow::Result<Vec<Field>> {
    paths.iter().map(|p| lfld::read(p).with_context(|| format!("reading {}", p.display()))).collect()
}

fn parse_points(s: &str) -> anyhow::Result<Vec<Vec<f64>>> {
    s.split(';')
        .map(|pt| pt.split(',').map(|t| t.trim().parse::<f64>().map_err(|_| anyhow!("bad anchor {pt:?}"))).collect())
        .collect()
}

fn forward(config: &Path, out: &Path) -> anyhow::Result<()> {
    let c = PipelineConfig::parse(&fs::read_to_string(config)?)?;
    let g = Grid::unit_box(c.dim, c.n)?;
    let truth = LameParameters::from_phantom(g, &c.phantom)?;
    let (data, _) = boundary_data(&c, &g)?;
    let sols = solve_many(&truth, c.k, &data)?;
    fs::create_dir_all(out)?;
    let mut res = 0.0f64;
    for (j, s) in sols.iter().enumerate() {
        lfld::write(out.join(format!("u_{j:03}.lfld")), &s.u)?;
        res = res.max(residual(&s.u, &truth, c.k)?.max_abs());
    }
    let labels: Vec<&str> = data.iter().map(|d| d.label.as_str()).collect();
    write_json(
        &out.join("manifest.json"),
        &json!({
            "grid": { "dim": c.dim, "n": c.n, "spacing": g.spacing() },
            "k": c.k,
            "labels": labels,
            "condition": sols[0].condition,
            "residual_sup": res,
        }),
    )
}

fn design(a: &DesignArgs) -> anyhow::Result<()> {
    let guess = match a.guess.split_once(',') {
        Some((l, m)) => {
            let g = Grid::unit_box(a.dim, a.n)?;
            LameParameters::constant(g, l.trim().parse()?, m.trim().parse()?)?
        }
        None => {
            let dir = Path::new(&a.guess);
            LameParameters::new(lfld::read(dir.join("lambda.lfld"))?, lfld::read(dir.join("mu.lfld"))?)?
        }
    };
    let opts = AmplitudeOptions { pad_fraction: a.pad_fraction, ..AmplitudeOptions::default() };
    let d = design_boundary_set(&guess, a.k, a.variant, &parse_points(&a.anchors)?, a.tau, &opts)?;
    write_traces(&a.out, &d.data)?;
    write_json(&a.out.join("design.json"), &d.report)
}

fn diagnose(bundle: &Path, out: &[PathBuf], sigma_factor: f64) -> anyhow::Result<()> {
    let b = read_bundle(bundle)?;
    let e = eliminate(&b, &EliminationOptions { threshold_factor: sigma_factor, ..Default::default() })?;
    lfld::write(&out[0], &e.plan.sigma_min)?;
    lfld::write(&out[1], &e.plan.mask.to_field())?;
    println!("independence mask covers {:.1}% of the interior", 100.0 * e.plan.mask.interior_coverage());
    Ok(())
}

fn reconstruct(r: Reconstruct) -> anyhow::Result<()> {
    match r {
        Reconstruct::Mu { bundle, boundary_mu, mode, k, sigma_factor, cond_cap, reg_weight, cross_check, out } => {
            let b = read_bundle(&bundle)?;
            if b.variant != Variant::Mu {
                bail!("reconstruct mu needs a mu-variant bundle");
            }
            let e = eliminate(&b, &EliminationOptions { threshold_factor: sigma_factor, ..Default::default() })?;
            let sys = build_transport(&e.vs, &e.rstars, k, &e.plan.mask, cond_cap)?;
            let bmu = match boundary_mu.parse::<f64>() {
                Ok(c) => BoundaryMu::Constant(c),
                Err(_) => BoundaryMu::Field(lfld::read(&boundary_mu)?),
            };
            let rec = recover_global(&sys, &bmu, &RecoveryOptions { mode, reg_weight, cross_check })?;
            lfld::write(&out[0], &rec.mu)?;
            write_json(
                &out[1],
                &json!({
                    "mode": mode,
                    "independence_coverage": e.plan.mask.interior_coverage(),
                    "transport_coverage": sys.mask.interior_coverage(),
                    "coverage": rec.mask.interior_coverage(),
                    "unreachable": rec.unreachable.count(),
                    "nonpositive": rec.nonpositive.count(),
                    "disagreement_sup": rec.disagreement.as_ref().map(|d| d.max_abs()),
                }),
            )
        }
        Reconstruct::Lambda { bundle, mu, k, sigma_factor, eps_kappa_factor, frame, corner_radius, inpaint, out } => {
            let b = read_bundle(&bundle)?;
            if b.variant != Variant::Lambda {
                bail!("reconstruct lambda needs a lambda-variant bundle");
            }
            let mu = lfld::read(&mu)?;
            let g = *b.grid();
            let e = eliminate(&b, &EliminationOptions { threshold_factor: sigma_factor, ..Default::default() })?;
            let positive = Mask::new(g, (0..g.len()).map(|p| mu.get(p) > 0.0).collect())?;
            let valid = e.plan.mask.and(&regularity_mask(&g, frame, corner_radius)).and(&positive);
            let mut eps = Vec::new();
            let kss = e
                .vs
                .iter()
                .zip(&e.rstars)
                .map(|(v, r)| {
                    let ek = default_eps_kappa(v, &valid, eps_kappa_factor);
                    eps.push(ek);
                    compute_kappa_sigma(v, r, g.dim(), ek, &valid)
                })
                .collect::<lamerecon::Result<Vec<_>>>()?;
            let lr = recover_lambda_multi(&kss, &mu, k)?;
            let (lambda, filled) = if inpaint { harmonic_inpaint(&lr.lambda, &lr.mask)? } else { (lr.lambda.clone(), Mask::filled(g, false)) };
            lfld::write(&out[0], &lambda)?;
            write_json(
                &out[1],
                &json!({
                    "eps_kappa": eps,
                    "coverage": lr.mask.interior_coverage(),
                    "negative": lr.negative.count(),
                    "inpainted": filled.count(),
                }),
            )
        }
    }
}

fn noise(inputs: &[PathBuf], amplitude: f64, width: f64, seed: u64, out: &Path) -> anyhow::Result<()> {
    let fields = read_fields(inputs)?;
    let (noisy, report) = inject_noise(&fields, amplitude, width, seed)?;
    fs::create_dir_all(out)?;
    for (p, f) in inputs.iter().zip(&noisy) {
        let name = p.file_name().ok_or_else(|| anyhow!("input {} has no file name", p.display()))?;
        lfld::write(out.join(name), f)?;
    }
    write_json(&out.join("noise.json"), &report)
}

fn metrics_cmd(recovered: &Path, truth: &Path, mask: Option<&Path>, out: Option<&Path>) -> anyhow::Result<()> {
    let r = lfld::read(recovered)?;
    let t = lfld::read(truth)?;
    let m = match mask {
        Some(p) => Mask::from_field(&lfld::read(p)?)?,
        None => Mask::interior(*t.grid()),
    };
    let report = metrics(&r, &t, &m)?;
    match out {
        Some(p) => write_json(p, &report),
        None => {
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
    }
}

fn pipeline(config: &Path, out: Option<PathBuf>) -> anyhow::Result<()> {
    let mut c = PipelineConfig::parse(&fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?)?;
    if out.is_some() {
        c.output = out;
    }
    let o = run_pipeline(&c)?;
    let m = &o.manifest;
    println!(
        "mu: sup rel error {:.3e} on {:.1}% of interior; lambda: sup rel error {:.3e} on {:.1}%",
        m.mu.errors.sup_rel,
        100.0 * m.mu.errors.coverage,
        m.lambda.errors.sup_rel,
        100.0 * m.lambda.errors.coverage
    );
    Ok(())
}

fn stage_of(cmd: &Cmd) -> &'static str {
    match cmd {
        Cmd::Forward { .. } => "forward",
        Cmd::Reduce { .. } => "reduce",
        Cmd::DesignBc(_) => "design-bc",
        Cmd::Diagnose { .. } => "diagnose",
        Cmd::Reconstruct(Reconstruct::Mu { .. }) => "reconstruct-mu",
        Cmd::Reconstruct(Reconstruct::Lambda { .. }) => "reconstruct-lambda",
        Cmd::Noise { .. } => "noise",
        Cmd::Metrics { .. } => "metrics",
        Cmd::Pipeline { .. } => "pipeline",
    }
}

fn run(cmd: Cmd) -> anyhow::Result<()> {
    match cmd {
        Cmd::Forward { config, out } => forward(&config, &out),
        Cmd::Reduce { variant, inputs, out } => {
            let us = read_fields(&inputs)?;
            let labels: Vec<String> = inputs.iter().map(|p| p.file_stem().unwrap_or_default().to_string_lossy().into_owned()).collect();
            write_bundle(&out, &reduce_variant(variant, &us, &labels)?)?;
            Ok(())
        }
        Cmd::DesignBc(a) => design(&a),
        Cmd::Diagnose { bundle, out, sigma_factor } => diagnose(&bundle, &out, sigma_factor),
        Cmd::Reconstruct(r) => reconstruct(r),
        Cmd::Noise { inputs, amplitude, width, seed, out } => noise(&inputs, amplitude, width, seed, &out),
        Cmd::Metrics { recovered, truth, mask, out } => metrics_cmd(&recovered, &truth, mask.as_deref(), out.as_deref()),
        Cmd::Pipeline { config, out } => pipeline(&config, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut stage = stage_of(&cli.cmd);
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // pipeline errors carry the failing inner stage
            match e.downcast_ref::<lamerecon::Error>() {
                Some(lamerecon::Error::Config(_)) => stage = "config",
                Some(le) => stage = le.stage().unwrap_or(stage),
                None => {}
            }
            eprintln!("error[{stage}]: {e:#}");
            ExitCode::FAILURE
        }
    }
}
