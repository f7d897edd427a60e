//! Flat `key = value` experiment configuration.
//!
//! Blank lines and `#` comments are ignored. Unknown keys are errors so typos
//! do not silently fall back to defaults. See [`PipelineConfig`] for the keys.

use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;

use crate::cgo::DesignVariant;
use crate::error::{Error, Result};
use crate::params::{Phantom, Profile};
use crate::transport::RecoveryMode;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    /// CGO-designed traces built from a constant parameter guess.
    Designed {
        variant: DesignVariant,
        tau: f64,
        anchors: Vec<Vec<f64>>,
        guess_lambda: f64,
        guess_mu: f64,
        pad_fraction: f64,
    },
    /// Fixed polynomial traces (see [`crate::pipeline::analytic_family`]).
    Analytic,
    /// Every `*.lfld` file in a directory, in name order.
    File { dir: PathBuf },
}

/// Which μ feeds the λ formula.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMuSource {
    Recovered,
    True,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub dim: usize,
    pub n: usize,
    pub phantom: Phantom,
    pub k: f64,
    pub source: DataSource,
    pub noise_amplitude: f64,
    pub noise_width: f64,
    pub seed: u64,
    pub mu_mode: RecoveryMode,
    pub reg_weight: f64,
    pub cross_check: bool,
    /// σ_min threshold relative to the median u♯ norm.
    pub sigma_factor: f64,
    pub sigma_abs: Option<f64>,
    /// ε_κ relative to the median |v|.
    pub eps_kappa_factor: f64,
    pub cond_cap: f64,
    /// Regularity mask for λ: boundary frame in cells and corner radius.
    pub frame: usize,
    pub corner_radius: f64,
    pub inpaint: bool,
    pub lambda_mu: LambdaMuSource,
    /// Optional τ ladder for a decay measurement on the true parameters.
    pub tau_sweep: Vec<f64>,
    pub output: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            dim: 2,
            n: 65,
            phantom: Phantom::inclusions(2),
            k: 1.0,
            source: DataSource::Designed {
                variant: DesignVariant::Both,
                tau: 2.0,
                anchors: vec![vec![0.5, 0.5]],
                guess_lambda: 1.0,
                guess_mu: 1.0,
                pad_fraction: 0.5,
            },
            noise_amplitude: 0.0,
            noise_width: 0.05,
            seed: 0,
            mu_mode: RecoveryMode::LeastSquares,
            reg_weight: 1e-2,
            cross_check: false,
            sigma_factor: 1e-3,
            sigma_abs: None,
            eps_kappa_factor: 1e-3,
            cond_cap: crate::transport::DEFAULT_COND_CAP,
            frame: 2,
            corner_radius: 0.1,
            inpaint: false,
            lambda_mu: LambdaMuSource::Recovered,
            tau_sweep: Vec::new(),
            output: None,
        }
    }
}

fn err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("line {line}: {msg}"))
}

fn num<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| err(line, format!("bad value {v:?} for {key}")))
}

fn list(v: &str) -> std::result::Result<Vec<f64>, std::num::ParseFloatError> {
    v.split(',').map(|t| t.trim().parse::<f64>()).collect()
}

/// Parses `constant(v)`, `gaussian(base, amp, c₁, …, c_dim, width)`,
/// `trig(base, amp, freq)` or `linear(base, slope, axis)`.
pub fn parse_profile(s: &str, dim: usize) -> Result<Profile> {
    let bad = || Error::Config(format!("bad profile {s:?}"));
    let s = s.trim();
    let open = s.find('(').ok_or_else(bad)?;
    if !s.ends_with(')') {
        return Err(bad());
    }
    let name = s[..open].trim();
    let args = list(&s[open + 1..s.len() - 1]).map_err(|_| bad())?;
    let want = |n: usize| if args.len() == n { Ok(()) } else { Err(bad()) };
    Ok(match name {
        "constant" => {
            want(1)?;
            Profile::Constant { value: args[0] }
        }
        "gaussian" => {
            want(3 + dim)?;
            let mut center = [0.0; 3];
            center[..dim].copy_from_slice(&args[2..2 + dim]);
            Profile::Gaussian { base: args[0], amplitude: args[1], center, width: args[2 + dim] }
        }
        "trig" => {
            want(3)?;
            Profile::Trig { base: args[0], amplitude: args[1], freq: args[2] }
        }
        "linear" => {
            want(3)?;
            if args[2].fract() != 0.0 || args[2] < 0.0 || args[2] as usize >= dim {
                return Err(bad());
            }
            Profile::Linear { base: args[0], slope: args[1], axis: args[2] as usize }
        }
        _ => return Err(bad()),
    })
}

/// Smooth phantom with a single Gaussian bump per parameter, μ ∈ [1,2], λ ∈ [1,3].
pub fn smooth_phantom(dim: usize) -> Phantom {
    let c = |v: [f64; 2]| if dim == 2 { [v[0], v[1], 0.0] } else { [v[0], v[1], 0.5] };
    Phantom {
        mu: Profile::Gaussian { base: 1.0, amplitude: 1.0, center: c([0.45, 0.55]), width: 0.3 },
        lambda: Profile::Gaussian { base: 1.0, amplitude: 2.0, center: c([0.55, 0.4]), width: 0.3 },
    }
}

impl PipelineConfig {
    /// Parses the text form. Keys:
    ///
    /// `dim`, `n`, `k`, `phantom` (inclusions | smooth | constant), `lambda`, `mu`
    /// (profile overrides), `source` (designed | analytic | file), `data_dir`,
    /// `variant`, `tau`, `anchors` (`x,y; x,y`), `guess_lambda`, `guess_mu`,
    /// `pad_fraction`, `noise_amplitude`, `noise_width`, `seed`, `mu_mode` (ls | ray),
    /// `reg_weight`, `cross_check`, `sigma_factor`, `sigma_abs`, `eps_kappa_factor`,
    /// `cond_cap`, `frame`, `corner_radius`, `inpaint`, `lambda_mu` (recovered | true),
    /// `tau_sweep` (comma list), `output`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv: Vec<(usize, String, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| err(i + 1, "expected key = value"))?;
            let k = k.trim().to_string();
            if kv.iter().any(|(_, kk, _)| *kk == k) {
                return Err(err(i + 1, format!("duplicate key {k}")));
            }
            kv.push((i + 1, k, v.trim().to_string()));
        }
        let get = |key: &str| kv.iter().find(|(_, k, _)| k == key).map(|(l, _, v)| (*l, v.as_str()));

        let mut c = PipelineConfig::default();
        if let Some((l, v)) = get("dim") {
            c.dim = num(l, "dim", v)?;
        }
        let dim = c.dim;
        c.phantom = match get("phantom") {
            None | Some((_, "inclusions")) => Phantom::inclusions(dim),
            Some((_, "smooth")) => smooth_phantom(dim),
            Some((_, "constant")) => Phantom::constant(1.0, 1.0),
            Some((l, v)) => return Err(err(l, format!("unknown phantom {v:?}"))),
        };
        if let Some((l, v)) = get("lambda") {
            c.phantom.lambda = parse_profile(v, dim).map_err(|e| err(l, e))?;
        }
        if let Some((l, v)) = get("mu") {
            c.phantom.mu = parse_profile(v, dim).map_err(|e| err(l, e))?;
        }
        let centre = vec![0.5; dim];
        let mut designed = (DesignVariant::Both, 2.0, vec![centre], 1.0, 1.0, 0.5);
        let mut data_dir = None;
        for (l, key, v) in &kv {
            let (l, v) = (*l, v.as_str());
            match key.as_str() {
                "dim" | "phantom" | "lambda" | "mu" | "source" => {}
                "n" => c.n = num(l, key, v)?,
                "k" => c.k = num(l, key, v)?,
                "data_dir" => data_dir = Some(PathBuf::from(v)),
                "variant" => designed.0 = v.parse().map_err(|e| err(l, e))?,
                "tau" => designed.1 = num(l, key, v)?,
                "anchors" => {
                    designed.2 = v
                        .split(';')
                        .map(|a| list(a).map_err(|_| err(l, format!("bad anchor {a:?}"))))
                        .collect::<Result<_>>()?;
                }
                "guess_lambda" => designed.3 = num(l, key, v)?,
                "guess_mu" => designed.4 = num(l, key, v)?,
                "pad_fraction" => designed.5 = num(l, key, v)?,
                "noise_amplitude" => c.noise_amplitude = num(l, key, v)?,
                "noise_width" => c.noise_width = num(l, key, v)?,
                "seed" => c.seed = num(l, key, v)?,
                "mu_mode" => c.mu_mode = v.parse().map_err(|e| err(l, e))?,
                "reg_weight" => c.reg_weight = num(l, key, v)?,
                "cross_check" => c.cross_check = num(l, key, v)?,
                "sigma_factor" => c.sigma_factor = num(l, key, v)?,
                "sigma_abs" => c.sigma_abs = Some(num(l, key, v)?),
                "eps_kappa_factor" => c.eps_kappa_factor = num(l, key, v)?,
                "cond_cap" => c.cond_cap = num(l, key, v)?,
                "frame" => c.frame = num(l, key, v)?,
                "corner_radius" => c.corner_radius = num(l, key, v)?,
                "inpaint" => c.inpaint = num(l, key, v)?,
                "lambda_mu" => {
                    c.lambda_mu = match v {
                        "recovered" => LambdaMuSource::Recovered,
                        "true" => LambdaMuSource::True,
                        _ => return Err(err(l, format!("bad value {v:?} for lambda_mu"))),
                    }
                }
                "tau_sweep" => c.tau_sweep = list(v).map_err(|_| err(l, "bad tau list"))?,
                "output" => c.output = Some(PathBuf::from(v)),
                _ => return Err(err(l, format!("unknown key {key}"))),
            }
        }
        c.source = match get("source") {
            None | Some((_, "designed")) => DataSource::Designed {
                variant: designed.0,
                tau: designed.1,
                anchors: designed.2,
                guess_lambda: designed.3,
                guess_mu: designed.4,
                pad_fraction: designed.5,
            },
            Some((_, "analytic")) => DataSource::Analytic,
            Some((l, "file")) => DataSource::File { dir: data_dir.ok_or_else(|| err(l, "source = file needs data_dir"))? },
            Some((l, v)) => return Err(err(l, format!("unknown source {v:?}"))),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.dim == 2 || self.dim == 3) {
            return bad("dim must be 2 or 3");
        }
        if self.n < 5 {
            return bad("n must be at least 5");
        }
        if !self.k.is_finite() || self.k < 0.0 {
            return bad("k must be finite and nonnegative");
        }
        let positive = [
            ("reg_weight", self.reg_weight),
            ("sigma_factor", self.sigma_factor),
            ("eps_kappa_factor", self.eps_kappa_factor),
            ("cond_cap", self.cond_cap),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.sigma_abs.is_some_and(|v| !(v > 0.0)) {
            return bad("sigma_abs must be positive");
        }
        if !(self.corner_radius >= 0.0) {
            return bad("corner_radius must be nonnegative");
        }
        if !(self.noise_amplitude >= 0.0) {
            return bad("noise_amplitude must be nonnegative");
        }
        if self.noise_amplitude > 0.0 && !(self.noise_width > 0.0) {
            return bad("noise_width must be positive when noise is injected");
        }
        if let DataSource::Designed { tau, anchors, guess_lambda, guess_mu, pad_fraction, .. } = &self.source {
            if !(*tau > 0.0) || !(*guess_lambda > 0.0) || !(*guess_mu > 0.0) {
                return bad("tau and the guess constants must be positive");
            }
            if *pad_fraction < 0.25 {
                return bad("pad_fraction must be at least 0.25");
            }
            if anchors.is_empty() || anchors.iter().any(|a| a.len() != self.dim) {
                return bad("anchors must be non-empty points of the grid dimension");
            }
        }
        if !self.tau_sweep.is_empty() && self.tau_sweep.len() < 4 {
            return bad("tau_sweep needs at least four values");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(PipelineConfig::parse("# nothing\n\n").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn keys_are_read() {
        let c = PipelineConfig::parse(
            "dim = 2\nn = 33\nk = 0.5 # trailing comment\nsource = designed\nvariant = mu\ntau = 3\nanchors = 0.5,0.5; 0.25,0.75\n\
             noise_amplitude = 1e-3\nseed = 42\nmu_mode = ray\nmu = gaussian(1, 1, 0.5, 0.5, 0.2)\n",
        )
        .unwrap();
        assert_eq!(c.n, 33);
        assert_eq!(c.k, 0.5);
        assert_eq!(c.seed, 42);
        assert_eq!(c.mu_mode, RecoveryMode::Ray);
        assert_eq!(c.phantom.mu, Profile::Gaussian { base: 1.0, amplitude: 1.0, center: [0.5, 0.5, 0.0], width: 0.2 });
        match c.source {
            DataSource::Designed { variant, tau, anchors, .. } => {
                assert_eq!(variant, DesignVariant::Mu);
                assert_eq!(tau, 3.0);
                assert_eq!(anchors, vec![vec![0.5, 0.5], vec![0.25, 0.75]]);
            }
            _ => panic!("wrong source"),
        }
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "nonsense = 1",
            "n = 3",
            "sigma_factor = 0",
            "cond_cap = -1",
            "noise_amplitude = -0.1",
            "n = 9\nn = 9",
            "source = file",
            "mu = gaussian(1, 1, 0.2)",
            "tau_sweep = 8, 16",
            "anchors = 0.5",
            "just text",
        ] {
            assert!(PipelineConfig::parse(text).is_err(), "{text}");
        }
    }

    #[test]
    fn profiles() {
        assert_eq!(parse_profile("constant(2)", 2).unwrap(), Profile::Constant { value: 2.0 });
        assert_eq!(parse_profile(" linear(1, 0.1, 1) ", 2).unwrap(), Profile::Linear { base: 1.0, slope: 0.1, axis: 1 });
        assert!(parse_profile("linear(1, 0.1, 2)", 2).is_err());
        assert!(parse_profile("trig(1,2", 2).is_err());
    }
}
