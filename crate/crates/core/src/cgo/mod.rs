//! Leading-order complex geometrical optics (CGO) solutions.
//!
//! With ρ = τθ, θ = α + iβ, the elasticity system has solutions
//! u = μ^{-1/2}w + μ^{-1}∇f − f∇μ^{-1} where (w, f) ≈ e^{iρ·x}(r, s) and the
//! amplitude Y = (r, s) solves the transport system −2θ·∇Y = V₁M_θY with
//! M_θ = [[0, θ], [θᵀ, 0]]. For θ in a coordinate plane θ·∇ is a ∂̄ operator,
//! which is inverted spectrally on a padded periodic box.

mod dbar;
mod design;

pub use design::{design_boundary_set, AnchorReport, Design, DesignReport, DesignVariant, SolutionReport};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::calculus::{d1_high, d1_stencil};
use crate::error::{contract, Error, Result};
use crate::grid::{Field, Grid, Rank};
use crate::params::{LameParameters, Phantom};

type C = Complex64;

/// Stencil width used when measuring equation residuals (eighth order).
const RESIDUAL_POINTS: usize = 9;

/// Three nested seven point stencils reach nine cells.
const SWEEP_FRAME: usize = 9;

/// ρ = τ(α + iβ) with orthonormal α, β.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ComplexDirection {
    pub alpha: [f64; 3],
    pub beta: [f64; 3],
    pub tau: f64,
    dim: usize,
}

impl ComplexDirection {
    pub fn new(alpha: &[f64], beta: &[f64], tau: f64) -> Result<Self> {
        let dim = alpha.len();
        if !(2..=3).contains(&dim) || beta.len() != dim {
            return Err(Error::InvalidArgument("direction vectors must have 2 or 3 entries".into()));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
        }
        let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        if (dot(alpha, alpha) - 1.0).abs() > 1e-12 || (dot(beta, beta) - 1.0).abs() > 1e-12 || dot(alpha, beta).abs() > 1e-12 {
            return Err(Error::InvalidArgument("alpha and beta must be orthonormal".into()));
        }
        let mut a = [0.0; 3];
        let mut b = [0.0; 3];
        a[..dim].copy_from_slice(alpha);
        b[..dim].copy_from_slice(beta);
        Ok(ComplexDirection { alpha: a, beta: b, tau, dim })
    }

    /// τ(e_a + i e_b).
    pub fn axes(dim: usize, a: usize, b: usize, tau: f64) -> Result<Self> {
        if a >= dim || b >= dim || a == b {
            return Err(Error::InvalidArgument(format!("axes ({a}, {b}) invalid in {dim}D")));
        }
        let mut alpha = vec![0.0; dim];
        let mut beta = vec![0.0; dim];
        alpha[a] = 1.0;
        beta[b] = 1.0;
        ComplexDirection::new(&alpha, &beta, tau)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn theta(&self) -> Vec<C> {
        (0..self.dim).map(|i| C::new(self.alpha[i], self.beta[i])).collect()
    }

    pub fn rho(&self) -> Vec<C> {
        self.theta().into_iter().map(|t| t * self.tau).collect()
    }

    /// The direction of iρ, i.e. (α, β) → (−β, α).
    pub fn rotated(&self) -> Self {
        let mut r = *self;
        for i in 0..3 {
            r.alpha[i] = -self.beta[i];
            r.beta[i] = self.alpha[i];
        }
        r
    }

    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        ComplexDirection::new(&self.alpha[..self.dim], &self.beta[..self.dim], tau)
    }

    /// (a, b, σ₁, s) with α = σ₁e_a and β = σ₁s·e_b, so θ = σ₁(e_a + i s e_b).
    fn plane(&self) -> Result<(usize, usize, f64, f64)> {
        let signed_axis = |v: &[f64; 3]| {
            let nz: Vec<usize> = (0..self.dim).filter(|&i| v[i] != 0.0).collect();
            match nz[..] {
                [i] if v[i].abs() == 1.0 => Some((i, v[i])),
                _ => None,
            }
        };
        match (signed_axis(&self.alpha), signed_axis(&self.beta)) {
            (Some((a, s1)), Some((b, s2))) => Ok((a, b, s1, s1 * s2)),
            _ => Err(Error::UnsupportedDirection(format!(
                "alpha={:?}, beta={:?}: only signed coordinate axes are supported",
                &self.alpha[..self.dim],
                &self.beta[..self.dim]
            ))),
        }
    }
}

/// V₁ as a real (dim+1)×(dim+1) matrix field.
#[derive(Clone, Debug, PartialEq)]
pub struct V1Field {
    pub values: Field,
    pub k: f64,
    model: Option<Phantom>,
}

impl V1Field {
    pub fn grid(&self) -> &Grid {
        self.values.grid()
    }

    /// V₁ sampled on a box that contains the base grid, `offset` cells from it
    /// along each axis. Uses the analytic model when available and valid there,
    /// otherwise a nearest-point extension.
    fn extended(&self, padded: Grid, offset: [usize; 3]) -> Result<Vec<f64>> {
        if let Some(model) = &self.model {
            if let Some(v) = model_v1(model, self.k, padded) {
                return Ok(v.into_values());
            }
        }
        let g = self.grid();
        let nc = self.values.components();
        let mut out = vec![0.0; padded.len() * nc];
        for q in 0..padded.len() {
            let mi = padded.multi_index(q);
            let mut bi = [0usize; 3];
            for a in 0..g.dim() {
                bi[a] = (mi[a] as isize - offset[a] as isize).clamp(0, g.extents()[a] as isize - 1) as usize;
            }
            let p = g.index(&bi[..g.dim()]);
            out[q * nc..(q + 1) * nc].copy_from_slice(self.values.at(p));
        }
        Ok(out)
    }
}

fn high_gradient(g: &Grid, data: &[f64]) -> Vec<Vec<f64>> {
    (0..g.dim()).map(|a| d1_high(g, data, a)).collect()
}

/// V₁ = [[−2μ^{1/2}Hess(μ⁻¹) + μ^{-3/2}k²I, −∇log μ], [0, (λ+μ)/(λ+2μ)·μ^{1/2}]]
/// with sixth-order differences.
///
/// When the parameters carry their analytic model, derivatives are taken on a
/// slightly larger grid so that edge values use central stencils too.
pub fn assemble_v1(params: &LameParameters, k: f64) -> Result<V1Field> {
    let g = *params.grid();
    let model = params.model.as_ref().filter(|m| m.lambda.sample(g) == params.lambda && m.mu.sample(g) == params.mu);
    if let Some(m) = model {
        if let Some(values) = model_v1(m, k, g) {
            return Ok(V1Field { values, k, model: Some(m.clone()) });
        }
    }
    Ok(V1Field { values: v1_from_samples(params, k)?, k, model: None })
}

/// Cells added per side before differentiating a sampled model.
const MODEL_MARGIN: usize = 6;

fn model_v1(model: &Phantom, k: f64, target: Grid) -> Option<Field> {
    let d = target.dim();
    let mut ext = [0usize; 3];
    let mut origin = [0.0; 3];
    for a in 0..d {
        ext[a] = target.extents()[a] + 2 * MODEL_MARGIN;
        origin[a] = target.origin()[a] - MODEL_MARGIN as f64 * target.spacing()[a];
    }
    let big = Grid::new(&ext[..d], &origin[..d], &target.spacing()[..d]).ok()?;
    let params = LameParameters::from_phantom(big, model).ok()?;
    let full = v1_from_samples(&params, k).ok()?;
    let nc = full.components();
    let mut out = vec![0.0; target.len() * nc];
    for p in 0..target.len() {
        let mi = target.multi_index(p);
        let mut bi = [0usize; 3];
        for a in 0..d {
            bi[a] = mi[a] + MODEL_MARGIN;
        }
        let q = big.index(&bi[..d]);
        out[p * nc..(p + 1) * nc].copy_from_slice(full.at(q));
    }
    Field::from_values(target, full.rank(), false, out).ok()
}

fn v1_from_samples(params: &LameParameters, k: f64) -> Result<Field> {
    let g = *params.grid();
    let d = g.dim();
    let mu = params.mu.values();
    let lam = params.lambda.values();
    if let Some(m) = mu.iter().cloned().find(|m| !(*m > 0.0)) {
        return Err(Error::NonPositive { what: "mu", min: m });
    }
    let inv: Vec<f64> = mu.iter().map(|m| 1.0 / m).collect();
    let grad_inv = high_gradient(&g, &inv);
    let mut hess = vec![vec![Vec::new(); d]; d];
    for a in 0..d {
        for b in 0..d {
            hess[a][b] = d1_high(&g, &grad_inv[a], b);
        }
    }
    let grad_mu = high_gradient(&g, mu);
    let n = d + 1;
    let mut out = Field::zeros(g, Rank::Matrix(n, n));
    for p in 0..g.len() {
        let m = mu[p];
        let sq = m.sqrt();
        let v = out.at_mut(p);
        for a in 0..d {
            for b in 0..d {
                let h = 0.5 * (hess[a][b][p] + hess[b][a][p]);
                v[a * n + b] = -2.0 * sq * h + if a == b { k * k / (m * sq) } else { 0.0 };
            }
            v[a * n + d] = -grad_mu[a][p] / m;
        }
        v[d * n + d] = (lam[p] + m) / (lam[p] + 2.0 * m) * sq;
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AmplitudeOptions {
    /// Padding per side as a fraction of the domain width (at least 0.25).
    pub pad_fraction: f64,
    pub gmres_tol: f64,
    pub gmres_restart: usize,
    pub gmres_max_iter: usize,
    /// Relative transport residual above which a warning is attached.
    pub residual_tol: f64,
    /// Cells excluded next to the edges when measuring the residual.
    pub frame: usize,
}

impl Default for AmplitudeOptions {
    fn default() -> Self {
        AmplitudeOptions { pad_fraction: 0.5, gmres_tol: 1e-13, gmres_restart: 80, gmres_max_iter: 4000, residual_tol: 1e-6, frame: 3 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CgoAmplitude {
    /// (r, s) as a complex (dim+1)-vector field.
    pub rs: Field,
    pub direction: ComplexDirection,
    /// Grid point where (r, s) equals the pin.
    pub anchor: usize,
    /// Sup of the transport residual over the interior, relative to the size
    /// of its terms.
    pub residual_norm: f64,
    pub gmres_iterations: usize,
    pub warning: Option<String>,
}

impl CgoAmplitude {
    pub fn r(&self, p: usize) -> Vec<C> {
        let d = self.rs.grid().dim();
        (0..d).map(|i| self.rs.get_c(p, i)).collect()
    }

    pub fn s(&self, p: usize) -> C {
        self.rs.get_c(p, self.rs.grid().dim())
    }

    /// Same amplitude read as a solution for the direction iρ, whose transport
    /// system coincides with that of ρ.
    pub fn rotated(&self) -> CgoAmplitude {
        CgoAmplitude { direction: self.direction.rotated(), ..self.clone() }
    }
}

fn m_theta(theta: &[C]) -> Vec<C> {
    let d = theta.len();
    let n = d + 1;
    let mut m = vec![C::new(0.0, 0.0); n * n];
    for i in 0..d {
        m[i * n + d] = theta[i];
        m[d * n + i] = theta[i];
    }
    m
}

/// V₁(p)·M as a complex n×n matrix.
fn v1_times(v1: &[f64], m: &[C], n: usize) -> Vec<C> {
    let mut out = vec![C::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = (0..n).map(|l| v1[i * n + l] * m[l * n + j]).sum();
        }
    }
    out
}

/// Solve the transport system for the amplitude equal to `pin` at the grid point
/// nearest `anchor`.
pub fn solve_amplitude(v1: &V1Field, dir: &ComplexDirection, pin: &[C], anchor: &[f64], opts: &AmplitudeOptions) -> Result<CgoAmplitude> {
    let g = *v1.grid();
    let d = g.dim();
    let n = d + 1;
    if dir.dim() != d {
        return Err(contract("direction dimension differs from grid"));
    }
    if pin.len() != n {
        return Err(contract(format!("pin must have {n} entries")));
    }
    if anchor.len() != d {
        return Err(contract("anchor dimension differs from grid"));
    }
    if !(opts.pad_fraction >= 0.25) {
        return Err(Error::InvalidArgument("padding fraction must be at least 0.25".into()));
    }
    let (a, b, sigma, s) = dir.plane()?;
    let p0 = g.nearest(anchor);
    let i0 = g.multi_index(p0);

    // padded box, extended along the plane axes only
    let ext = g.extents();
    let mut pext = [0usize; 3];
    let mut offset = [0usize; 3];
    let mut porigin = [0.0; 3];
    for ax in 0..d {
        pext[ax] = ext[ax];
        porigin[ax] = g.origin()[ax];
        if ax == a || ax == b {
            pext[ax] = dbar::fft_size(ext[ax], opts.pad_fraction);
            offset[ax] = (pext[ax] - ext[ax]) / 2;
            porigin[ax] -= offset[ax] as f64 * g.spacing()[ax];
        }
    }
    let pg = Grid::new(&pext[..d], &porigin[..d], &g.spacing()[..d])?;
    let v1p = v1.extended(pg, offset)?;

    let (na, nb) = (pext[a], pext[b]);
    let (ha, hb) = (g.spacing()[a], g.spacing()[b]);
    let chi_axis = |ax: usize, i: usize| {
        let lo = offset[ax];
        let hi = offset[ax] + ext[ax] - 1;
        let t = if i < lo {
            (lo - i) as f64 / lo as f64
        } else if i > hi {
            (i - hi) as f64 / (pext[ax] - 1 - hi) as f64
        } else {
            0.0
        };
        dbar::cutoff(t / 0.85)
    };
    let chi: Vec<f64> = (0..na * nb).map(|q| chi_axis(a, q / nb) * chi_axis(b, q % nb)).collect();

    // θ' = e_a + i s e_b; ∂_w̄ Y = −¼ V₁ M_θ' Y
    let theta_plane: Vec<C> = dir.theta().iter().map(|t| t * sigma).collect();
    let mp = m_theta(&theta_plane);
    let c_axis = (0..d).find(|&ax| ax != a && ax != b);
    let nslices = c_axis.map_or(1, |c| ext[c]);
    let anchor_q = (i0[a] + offset[a]) * nb + (i0[b] + offset[b]);
    let op = dbar::DbarInverse::new(na, nb, ha, hb, s, anchor_q);

    let slice_point = |q: usize, ic: usize| {
        let mut mi = [0usize; 3];
        mi[a] = q / nb;
        mi[b] = q % nb;
        if let Some(c) = c_axis {
            mi[c] = ic;
        }
        pg.index(&mi[..d])
    };

    let solved: Vec<(Vec<C>, usize, f64)> = (0..nslices)
        .into_par_iter()
        .map(|ic| {
            let npl = na * nb;
            let raw: Vec<DMatrix<C>> = (0..npl)
                .map(|q| {
                    let p = slice_point(q, ic);
                    let vm = v1_times(&v1p[p * n * n..(p + 1) * n * n], &mp, n);
                    DMatrix::from_fn(n, n, |i, j| vm[i * n + j] * -0.25)
                })
                .collect();
            // frozen-coefficient gauge, Q₀ the mean over the base box: Y = E Z with
            // E = exp((w̄ − w̄₀)Q₀) exact for constant Q, so Z only sees Q − Q₀
            let inside: Vec<usize> = (0..npl).filter(|&q| chi[q] == 1.0).collect();
            let q0 = inside.iter().fold(DMatrix::zeros(n, n), |acc, &q| acc + &raw[q]) / C::new(inside.len() as f64, 0.0);
            let gauge: Vec<DMatrix<C>> = (0..npl)
                .map(|q| if q == anchor_q { DMatrix::identity(n, n) } else { (&q0 * op.wbar()[q]).exp() })
                .collect();
            let q_mat: Vec<Vec<C>> = (0..npl)
                .map(|q| {
                    if chi[q] == 0.0 {
                        return vec![C::new(0.0, 0.0); n * n];
                    }
                    let inv = if q == anchor_q { DMatrix::identity(n, n) } else { (&q0 * -op.wbar()[q]).exp() };
                    let qt = inv * (&raw[q] - &q0) * &gauge[q] * C::new(chi[q], 0.0);
                    (0..n * n).map(|e| qt[(e / n, e % n)]).collect()
                })
                .collect();
            let potential = |y: &[C], out: &mut [C]| {
                for q in 0..npl {
                    let qm = &q_mat[q];
                    for i in 0..n {
                        out[i * npl + q] = (0..n).map(|j| qm[i * n + j] * y[j * npl + q]).sum();
                    }
                }
                for i in 0..n {
                    op.apply(&mut out[i * npl..(i + 1) * npl]);
                }
            };
            let apply = |y: &[C], out: &mut [C]| {
                potential(y, out);
                for (o, yi) in out.iter_mut().zip(y) {
                    *o = yi - *o;
                }
            };
            let rhs: Vec<C> = (0..n * npl).map(|k| pin[k / npl]).collect();
            let res = dbar::gmres(apply, &rhs, rhs.clone(), opts.gmres_restart, opts.gmres_tol, opts.gmres_max_iter);
            // one fixed-point sweep pins Z(anchor), hence Y(anchor), to the pin exactly
            let mut z = vec![C::new(0.0, 0.0); n * npl];
            potential(&res.x, &mut z);
            for (zi, r) in z.iter_mut().zip(&rhs) {
                *zi += r;
            }
            let mut y = vec![C::new(0.0, 0.0); n * npl];
            for q in 0..npl {
                for i in 0..n {
                    y[i * npl + q] = (0..n).map(|j| gauge[q][(i, j)] * z[j * npl + q]).sum();
                }
            }
            (y, res.iterations, res.relative_residual)
        })
        .collect();

    let mut vals = vec![C::new(0.0, 0.0); g.len() * n];
    let npl = na * nb;
    let mut iterations = 0;
    let mut worst_gmres = 0.0f64;
    for p in 0..g.len() {
        let mi = g.multi_index(p);
        let ic = c_axis.map_or(0, |c| mi[c]);
        let q = (mi[a] + offset[a]) * nb + (mi[b] + offset[b]);
        for i in 0..n {
            vals[p * n + i] = solved[ic].0[i * npl + q];
        }
    }
    for (_, it, rr) in &solved {
        iterations = iterations.max(*it);
        worst_gmres = worst_gmres.max(*rr);
    }
    let rs = Field::from_complex(g, Rank::Vector(n), &vals)?;
    if !rs.is_finite() {
        return Err(Error::Factorization("amplitude solve produced non-finite values".into()));
    }
    let residual_norm = transport_residual(&rs, v1, dir, opts.frame)?;
    let mut warning = None;
    if worst_gmres > opts.gmres_tol {
        warning = Some(format!("GMRES stopped at relative residual {worst_gmres:.2e}"));
    }
    if !(residual_norm <= opts.residual_tol) {
        warning = Some(format!("transport residual {residual_norm:.2e} above {:.1e}", opts.residual_tol));
    }
    Ok(CgoAmplitude { rs, direction: *dir, anchor: p0, residual_norm, gmres_iterations: iterations, warning })
}

/// Gradient of one component of a complex field with `points`-wide stencils.
fn grad_complex(g: &Grid, f: &Field, comp: usize, points: usize) -> Vec<Vec<C>> {
    let re = f.channel(2 * comp);
    let im = f.channel(2 * comp + 1);
    (0..g.dim())
        .map(|ax| {
            let dr = d1_stencil(g, &re, ax, points);
            let di = d1_stencil(g, &im, ax, points);
            dr.into_iter().zip(di).map(|(x, y)| C::new(x, y)).collect()
        })
        .collect()
}

fn in_frame(g: &Grid, p: usize, frame: usize, axes: &[usize]) -> bool {
    let mi = g.multi_index(p);
    axes.iter().all(|&ax| mi[ax] >= frame && mi[ax] + frame < g.extents()[ax])
}

/// Sup over the framed interior of |−2θ·∇Y − V₁M_θY|, divided by the larger of
/// sup|V₁M_θY| + sup|2θ·∇Y| and sup|Y|.
pub fn transport_residual(rs: &Field, v1: &V1Field, dir: &ComplexDirection, frame: usize) -> Result<f64> {
    let g = *rs.grid();
    g.check_same(v1.grid())?;
    let d = g.dim();
    let n = d + 1;
    let theta = dir.theta();
    let (a, b, _, _) = dir.plane()?;
    let m = m_theta(&theta);
    let grads: Vec<Vec<Vec<C>>> = (0..n).map(|i| grad_complex(&g, rs, i, RESIDUAL_POINTS)).collect();
    let (mut worst, mut lhs_scale, mut rhs_scale, mut y_scale) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for p in 0..g.len() {
        if !in_frame(&g, p, frame, &[a, b]) {
            continue;
        }
        let vm = v1_times(v1.values.at(p), &m, n);
        let y: Vec<C> = (0..n).map(|i| rs.get_c(p, i)).collect();
        let (mut r2, mut l2, mut q2, mut y2) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            let lhs: C = -2.0 * (0..d).map(|ax| theta[ax] * grads[i][ax][p]).sum::<C>();
            let rhs: C = (0..n).map(|j| vm[i * n + j] * y[j]).sum();
            r2 += (lhs - rhs).norm_sqr();
            l2 += lhs.norm_sqr();
            q2 += rhs.norm_sqr();
            y2 += y[i].norm_sqr();
        }
        worst = worst.max(r2.sqrt());
        lhs_scale = lhs_scale.max(l2.sqrt());
        rhs_scale = rhs_scale.max(q2.sqrt());
        y_scale = y_scale.max(y2.sqrt());
    }
    let scale = (lhs_scale + rhs_scale).max(y_scale);
    Ok(if scale > 0.0 { worst / scale } else { worst })
}

/// Relative residual of the second row, −2ρ·∇s = (λ+μ)/(λ+2μ)·μ^{1/2}·ρ·r, over
/// the framed interior.
pub fn second_row_residual(amp: &CgoAmplitude, params: &LameParameters, frame: usize) -> Result<f64> {
    let g = *amp.rs.grid();
    g.check_same(params.grid())?;
    let d = g.dim();
    let rho = amp.direction.rho();
    let (a, b, _, _) = amp.direction.plane()?;
    let gs = grad_complex(&g, &amp.rs, d, RESIDUAL_POINTS);
    let (mut worst, mut scale) = (0.0f64, 0.0f64);
    for p in 0..g.len() {
        if !in_frame(&g, p, frame, &[a, b]) {
            continue;
        }
        let (l, m) = (params.lambda.get(p), params.mu.get(p));
        let lhs: C = -2.0 * (0..d).map(|ax| rho[ax] * gs[ax][p]).sum::<C>();
        let rr: C = amp.r(p).iter().zip(&rho).map(|(r, q)| r * q).sum();
        let rhs = rr * ((l + m) / (l + 2.0 * m) * m.sqrt());
        worst = worst.max((lhs - rhs).norm());
        scale = scale.max(lhs.norm().max(rhs.norm()));
    }
    Ok(if scale > 0.0 { worst / scale } else { worst })
}

/// U with u = e^{iρ·x}U: U = μ^{-1/2}r + μ^{-1}(iρs + ∇s) − s∇μ^{-1}.
pub fn phase_factored(amp: &CgoAmplitude, params: &LameParameters) -> Result<Field> {
    let g = *amp.rs.grid();
    g.check_same(params.grid())?;
    let d = g.dim();
    let mu = params.mu.values();
    if let Some(m) = mu.iter().cloned().find(|m| !(*m > 0.0)) {
        return Err(Error::NonPositive { what: "mu", min: m });
    }
    let inv: Vec<f64> = mu.iter().map(|m| 1.0 / m).collect();
    let grad_inv = high_gradient(&g, &inv);
    let gs = grad_complex(&g, &amp.rs, d, 7);
    let rho = amp.direction.rho();
    let mut out = vec![C::new(0.0, 0.0); g.len() * d];
    for p in 0..g.len() {
        let s = amp.s(p);
        let r = amp.r(p);
        for i in 0..d {
            out[p * d + i] = r[i] / mu[p].sqrt() + inv[p] * (C::i() * rho[i] * s + gs[i][p]) - s * grad_inv[i][p];
        }
    }
    Field::from_complex(g, Rank::Vector(d), &out)
}

/// Leading-order CGO displacement e^{iρ·x}U.
pub fn build_displacement(amp: &CgoAmplitude, params: &LameParameters) -> Result<Field> {
    let u = phase_factored(amp, params)?;
    let g = *u.grid();
    let d = g.dim();
    let rho = amp.direction.rho();
    let mut vals = u.complex_values();
    for p in 0..g.len() {
        let x = g.coords(p);
        let phase = (C::i() * (0..d).map(|i| rho[i] * x[i]).sum::<C>()).exp();
        for v in &mut vals[p * d..(p + 1) * d] {
            *v *= phase;
        }
    }
    Field::from_complex(g, Rank::Vector(d), &vals)
}

/// e^{−iρ·x}·(elasticity operator)(e^{iρ·x}U), with ∇ → ∇ + iρ on U and
/// sixth-order differences.
pub fn shifted_residual(u: &Field, params: &LameParameters, rho: &[C], k: f64) -> Result<Vec<C>> {
    let g = *u.grid();
    g.check_same(params.grid())?;
    let d = g.dim();
    u.expect_vector(d)?;
    if !u.is_complex() {
        return Err(contract("expected a complex field"));
    }
    let np = g.len();
    let i = C::i();
    // ∂_b U_a and ∂_b∂_b U_a
    let du: Vec<Vec<Vec<C>>> = (0..d).map(|c| grad_complex(&g, u, c, 7)).collect();
    let mut d2u = vec![vec![vec![C::new(0.0, 0.0); np]; d]; d];
    for (c, dc) in du.iter().enumerate() {
        for (ax, dca) in dc.iter().enumerate() {
            let re: Vec<f64> = dca.iter().map(|z| z.re).collect();
            let im: Vec<f64> = dca.iter().map(|z| z.im).collect();
            let dr = d1_high(&g, &re, ax);
            let di = d1_high(&g, &im, ax);
            d2u[c][ax] = dr.into_iter().zip(di).map(|(x, y)| C::new(x, y)).collect();
        }
    }
    let uv = u.complex_values();
    let mut div = vec![C::new(0.0, 0.0); np];
    for (p, dv) in div.iter_mut().enumerate() {
        *dv = (0..d).map(|c| du[c][c][p] + i * rho[c] * uv[p * d + c]).sum();
    }
    let dre = d1_high_complex(&g, &div);
    let grad_l = high_gradient(&g, params.lambda.values());
    let grad_m = high_gradient(&g, params.mu.values());
    let mut out = vec![C::new(0.0, 0.0); np * d];
    for p in 0..np {
        let (l, m) = (params.lambda.get(p), params.mu.get(p));
        for a in 0..d {
            let ua = uv[p * d + a];
            let grad_div = dre[a][p] + i * rho[a] * div[p];
            let lap: C = (0..d).map(|b| d2u[a][b][p] + 2.0 * i * rho[b] * du[a][b][p] - rho[b] * rho[b] * ua).sum();
            let strain: C = (0..d)
                .map(|b| {
                    let dab = du[a][b][p] + i * rho[b] * ua;
                    let dba = du[b][a][p] + i * rho[a] * uv[p * d + b];
                    (dab + dba) * grad_m[b][p]
                })
                .sum();
            out[p * d + a] = (l + m) * grad_div + m * lap + grad_l[a][p] * div[p] + strain + k * k * ua;
        }
    }
    Ok(out)
}

fn d1_high_complex(g: &Grid, f: &[C]) -> Vec<Vec<C>> {
    let re: Vec<f64> = f.iter().map(|z| z.re).collect();
    let im: Vec<f64> = f.iter().map(|z| z.im).collect();
    (0..g.dim())
        .map(|ax| d1_high(g, &re, ax).into_iter().zip(d1_high(g, &im, ax)).map(|(x, y)| C::new(x, y)).collect())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TauSweep {
    pub taus: Vec<f64>,
    /// sup|L_ρU| / (|ρ| sup|U|) over the framed interior, per τ. The remainder R
    /// of the amplitude solves an equation whose principal part Δ + 2iρ·∇ has an
    /// inverse of size 1/|ρ|, so this estimates |R|/|U|.
    pub residuals: Vec<f64>,
    /// Least-squares slope of log residual against log τ.
    pub slope: f64,
    pub amplitude_residual: f64,
}

/// Decay of the leading-order residual as τ grows, for a fixed direction family.
pub fn tau_sweep(
    params: &LameParameters,
    k: f64,
    dir: &ComplexDirection,
    pin: &[C],
    anchor: &[f64],
    taus: &[f64],
    opts: &AmplitudeOptions,
) -> Result<TauSweep> {
    if taus.len() < 4 {
        return Err(Error::InvalidArgument(format!("tau sweep needs at least 4 values, got {}", taus.len())));
    }
    if taus.windows(2).any(|w| !(w[1] > w[0])) || !(taus[0] > 0.0) {
        return Err(Error::InvalidArgument("tau values must be positive and strictly increasing".into()));
    }
    let v1 = assemble_v1(params, k)?;
    let amp = solve_amplitude(&v1, &dir.with_tau(taus[0])?, pin, anchor, opts)?;
    let g = *params.grid();
    // U already carries one derivative of s and L_ρ two more; keep every nested
    // stencil central
    let frame = opts.frame.max(SWEEP_FRAME);
    let all_axes: Vec<usize> = (0..g.dim()).collect();
    let residuals = taus
        .iter()
        .map(|&tau| {
            let amp_t = CgoAmplitude { direction: dir.with_tau(tau)?, ..amp.clone() };
            let u = phase_factored(&amp_t, params)?;
            let rho = amp_t.direction.rho();
            let res = shifted_residual(&u, params, &rho, k)?;
            let uv = u.complex_values();
            let d = g.dim();
            let (mut worst, mut scale) = (0.0f64, 0.0f64);
            for p in 0..g.len() {
                if !in_frame(&g, p, frame, &all_axes) {
                    continue;
                }
                let r: f64 = res[p * d..(p + 1) * d].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                let n: f64 = uv[p * d..(p + 1) * d].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                worst = worst.max(r);
                scale = scale.max(n);
            }
            Ok(worst / (std::f64::consts::SQRT_2 * tau * scale))
        })
        .collect::<Result<Vec<f64>>>()?;
    let xs: Vec<f64> = taus.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = residuals.iter().map(|r| r.max(f64::MIN_POSITIVE).ln()).collect();
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(TauSweep { taus: taus.to_vec(), residuals, slope: sxy / sxx, amplitude_residual: amp.residual_norm })
}
