//! Boundary data from leading-order CGO displacements.
//!
//! Every anchor x₀ contributes a small family of solutions whose pins realize the
//! anchor conditions of the uniqueness argument (s(x₀)=1 with ρ·r(x₀)=1, or
//! s(x₀)=0 with r(x₀)=(1,−i), or ρ·r(x₀)=0 with s(x₀)=1), each paired where
//! needed with its iρ twin. Real and imaginary boundary traces become the
//! Dirichlet data.

use std::str::FromStr;

use num_complex::Complex64;
use serde::Serialize;

use super::{assemble_v1, build_displacement, solve_amplitude, AmplitudeOptions, CgoAmplitude, ComplexDirection};
use crate::error::{Error, Result};
use crate::forward::BoundaryData;
use crate::grid::Grid;
use crate::params::LameParameters;

type C = Complex64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignVariant {
    Mu,
    Lambda,
    Both,
}

impl FromStr for DesignVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mu" => Ok(DesignVariant::Mu),
            "lambda" => Ok(DesignVariant::Lambda),
            "both" => Ok(DesignVariant::Both),
            _ => Err(Error::InvalidArgument(format!("unknown design variant '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Family {
    /// ρ = τ(e₁ + ie₂)
    Rho,
    /// iρ
    Twin,
    /// τ(e₁ + ie₃)
    Third,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Pin {
    /// s = 1, r = e₁/τ, so ρ·r = 1.
    Scalar,
    /// s = 0, r = e₁ − i e_b with b the β axis.
    Vector,
    /// s = 1, r = e₁ + i e_b, so ρ·r = 0.
    Null,
}

struct Spec {
    label: &'static str,
    family: Family,
    pin: Pin,
}

fn specs(dim: usize, variant: DesignVariant) -> Vec<Spec> {
    let mut out = Vec::new();
    let mu = variant != DesignVariant::Lambda;
    let lambda = variant != DesignVariant::Mu;
    let mut push = |label, family, pin| out.push(Spec { label, family, pin });
    push("u0", Family::Rho, Pin::Scalar);
    if dim == 3 && mu {
        push("w0", Family::Third, Pin::Scalar);
    }
    push("u1", Family::Rho, Pin::Vector);
    push("u2", Family::Twin, Pin::Vector);
    if dim == 3 && mu {
        push("w1", Family::Third, Pin::Vector);
    }
    if lambda {
        push("v1", Family::Rho, Pin::Null);
        if dim == 3 {
            push("x1", Family::Third, Pin::Null);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolutionReport {
    pub label: String,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// (re, im) of s(x₀).
    pub s_at_anchor: [f64; 2],
    /// (re, im) of ρ·r(x₀) / τ.
    pub theta_dot_r_at_anchor: [f64; 2],
    /// (re, im) of (θ̄)·r(x₀), zero for the r(x₀) = θ̄ pins.
    pub conj_theta_dot_r_at_anchor: [f64; 2],
    pub amplitude_residual: f64,
    /// Distance from x₀ to the nearest point where a quantity required to be
    /// nonzero falls below half its anchor magnitude.
    pub radius: f64,
    /// Sup of |u| on the boundary before the traces were scaled to unit size.
    pub trace_scale: f64,
    pub warning: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnchorReport {
    pub requested: Vec<f64>,
    pub snapped: Vec<f64>,
    pub solutions: Vec<SolutionReport>,
    pub skipped: Option<String>,
    /// Smallest solution radius, a proxy for where independence is expected.
    pub predicted_radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DesignReport {
    pub variant: DesignVariant,
    pub tau: f64,
    pub k: f64,
    pub anchors: Vec<AnchorReport>,
    pub trace_count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Design {
    pub data: Vec<BoundaryData>,
    pub report: DesignReport,
}

fn dot(a: &[C], b: &[C]) -> C {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn radius(g: &Grid, x0: &[f64], q: impl Fn(usize) -> C, at: C) -> f64 {
    let floor = 0.5 * at.norm();
    let mut best = f64::INFINITY;
    for p in 0..g.len() {
        if q(p).norm() < floor {
            let x = g.coords(p);
            let d: f64 = (0..g.dim()).map(|i| (x[i] - x0[i]).powi(2)).sum::<f64>().sqrt();
            best = best.min(d);
        }
    }
    if best.is_finite() {
        best
    } else {
        (0..g.dim()).map(|i| (g.upper()[i] - g.origin()[i]).powi(2)).sum::<f64>().sqrt()
    }
}

/// Boundary data for the given anchors, built from CGO solutions of the guess.
pub fn design_boundary_set(
    guess: &LameParameters,
    k: f64,
    variant: DesignVariant,
    anchors: &[Vec<f64>],
    tau: f64,
    opts: &AmplitudeOptions,
) -> Result<Design> {
    let g = *guess.grid();
    let d = g.dim();
    if anchors.is_empty() {
        return Err(Error::InvalidArgument("at least one anchor is required".into()));
    }
    let v1 = assemble_v1(guess, k)?;
    let rho_dir = ComplexDirection::axes(d, 0, 1, tau)?;
    let third = if d == 3 { Some(ComplexDirection::axes(d, 0, 2, tau)?) } else { None };
    let mut data = Vec::new();
    let mut reports = Vec::new();
    for (ai, x0) in anchors.iter().enumerate() {
        if x0.len() != d || !g.contains(x0) {
            reports.push(AnchorReport {
                requested: x0.clone(),
                snapped: vec![],
                solutions: vec![],
                skipped: Some("anchor outside the grid".into()),
                predicted_radius: 0.0,
            });
            continue;
        }
        let p0 = g.nearest(x0);
        let snapped: Vec<f64> = g.coords(p0)[..d].to_vec();
        match design_anchor(guess, &v1, variant, &snapped, rho_dir, third, opts, ai) {
            Ok((traces, sols)) => {
                let predicted_radius = sols.iter().map(|s| s.radius).fold(f64::INFINITY, f64::min);
                data.extend(traces);
                reports.push(AnchorReport { requested: x0.clone(), snapped, solutions: sols, skipped: None, predicted_radius });
            }
            Err(e) => reports.push(AnchorReport {
                requested: x0.clone(),
                snapped,
                solutions: vec![],
                skipped: Some(e.to_string()),
                predicted_radius: 0.0,
            }),
        }
    }
    let trace_count = data.len();
    Ok(Design { data, report: DesignReport { variant, tau, k, anchors: reports, trace_count } })
}

#[allow(clippy::too_many_arguments)]
fn design_anchor(
    guess: &LameParameters,
    v1: &super::V1Field,
    variant: DesignVariant,
    x0: &[f64],
    rho_dir: ComplexDirection,
    third: Option<ComplexDirection>,
    opts: &AmplitudeOptions,
    index: usize,
) -> Result<(Vec<BoundaryData>, Vec<SolutionReport>)> {
    let g = *guess.grid();
    let d = g.dim();
    let tau = rho_dir.tau;
    let mut cache: Vec<((Family, Pin), CgoAmplitude)> = Vec::new();
    let mut traces = Vec::new();
    let mut sols = Vec::new();
    for spec in specs(d, variant) {
        let base_dir = match spec.family {
            Family::Rho | Family::Twin => rho_dir,
            Family::Third => third.expect("third family only in 3D"),
        };
        let b_axis = if spec.family == Family::Third { 2 } else { 1 };
        let mut pin = vec![C::new(0.0, 0.0); d + 1];
        match spec.pin {
            Pin::Scalar => {
                pin[0] = C::new(1.0 / tau, 0.0);
                pin[d] = C::new(1.0, 0.0);
            }
            Pin::Vector => {
                pin[0] = C::new(1.0, 0.0);
                pin[b_axis] = C::new(0.0, -1.0);
            }
            Pin::Null => {
                pin[0] = C::new(1.0, 0.0);
                pin[b_axis] = C::new(0.0, 1.0);
                pin[d] = C::new(1.0, 0.0);
            }
        }
        // the twin shares the transport system, hence the amplitude, of ρ
        let key_family = if spec.family == Family::Twin { Family::Rho } else { spec.family };
        let amp = match cache.iter().find(|(key, _)| *key == (key_family, spec.pin)) {
            Some((_, a)) => a.clone(),
            None => {
                let a = solve_amplitude(v1, &base_dir, &pin, x0, opts)?;
                cache.push(((key_family, spec.pin), a.clone()));
                a
            }
        };
        let amp = if spec.family == Family::Twin { amp.rotated() } else { amp };
        let u = build_displacement(&amp, guess)?;
        let (re, im) = (u.re(), u.im());
        let scale = g
            .boundary_points()
            .into_iter()
            .map(|p| (0..d).map(|i| u.get_c(p, i).norm_sqr()).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Factorization(format!("solution {} has a degenerate boundary trace", spec.label)));
        }
        for (part, f) in [("re", re), ("im", im)] {
            let scaled = f.map(|v| v / scale);
            traces.push(BoundaryData::from_field(&scaled, format!("a{index}/{}/{part}", spec.label))?);
        }

        let p0 = amp.anchor;
        let theta = amp.direction.theta();
        let conj: Vec<C> = theta.iter().map(|t| t.conj()).collect();
        let r0 = amp.r(p0);
        let s0 = amp.s(p0);
        let tr0 = dot(&theta, &r0);
        let mut rad = f64::INFINITY;
        let theta_dot_r = |p: usize| dot(&theta, &amp.r(p));
        match spec.pin {
            Pin::Scalar => {
                rad = rad.min(radius(&g, x0, |p| amp.s(p), s0));
                rad = rad.min(radius(&g, x0, theta_dot_r, tr0));
            }
            Pin::Vector => rad = rad.min(radius(&g, x0, theta_dot_r, tr0)),
            Pin::Null => rad = rad.min(radius(&g, x0, |p| amp.s(p), s0)),
        }
        sols.push(SolutionReport {
            label: spec.label.to_string(),
            alpha: amp.direction.alpha[..d].to_vec(),
            beta: amp.direction.beta[..d].to_vec(),
            s_at_anchor: [s0.re, s0.im],
            theta_dot_r_at_anchor: [tr0.re, tr0.im],
            conj_theta_dot_r_at_anchor: {
                let z = dot(&conj, &r0);
                [z.re, z.im]
            },
            amplitude_residual: amp.residual_norm,
            radius: rad,
            trace_scale: scale,
            warning: amp.warning.clone(),
        });
    }
    Ok((traces, sols))
}
