//! Finite-difference Dirichlet solver for the isotropic elasticity system
//!
//! ∇·(λ(∇·u)I + 2μS(∇u)) + k²u = f,
//!
//! discretized in expanded form
//! (λ+μ)∇(∇·u) + μΔu + (∇λ)(∇·u) + 2S(∇u)∇μ + k²u.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Col, Mat};
use rayon::prelude::*;

use crate::calculus::{d1, d2};
use crate::error::{contract, Error, Result};
use crate::grid::{Field, Grid, Rank};
use crate::params::LameParameters;

/// Condition estimates above this are reported as a probable eigenvalue hit.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Dirichlet data: a full-grid vector field of which only boundary points matter.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryData {
    values: Field,
    pub label: String,
}

impl BoundaryData {
    /// Keep the boundary trace of `u`; interior entries are zeroed.
    pub fn from_field(u: &Field, label: impl Into<String>) -> Result<Self> {
        let g = *u.grid();
        u.expect_vector(g.dim())?;
        u.expect_real()?;
        let mut values = u.clone();
        for p in 0..g.len() {
            if !g.is_boundary(p) {
                values.at_mut(p).fill(0.0);
            }
        }
        Ok(BoundaryData { values, label: label.into() })
    }

    pub fn from_fn(grid: Grid, label: impl Into<String>, f: impl Fn(&[f64], &mut [f64])) -> Self {
        let d = grid.dim();
        let values = Field::from_fn(grid, Rank::Vector(d), f);
        BoundaryData::from_field(&values, label).expect("shape is correct by construction")
    }

    pub fn zero(grid: Grid) -> Self {
        BoundaryData { values: Field::zeros(grid, Rank::Vector(grid.dim())), label: "zero".into() }
    }

    pub fn grid(&self) -> &Grid {
        self.values.grid()
    }

    /// Full-grid field, zero in the interior.
    pub fn values(&self) -> &Field {
        &self.values
    }
}

/// Sparse system over interior unknowns, ordered point-major then component.
pub struct LinearSystem {
    pub matrix: SparseColMat<usize, f64>,
    pub rhs: Vec<f64>,
    /// Unknown block index of each grid point (`None` on the boundary).
    pub ordering: Vec<Option<usize>>,
    boundary: Field,
}

impl LinearSystem {
    pub fn grid(&self) -> &Grid {
        self.boundary.grid()
    }

    pub fn size(&self) -> usize {
        self.rhs.len()
    }
}

#[derive(Clone, Debug)]
pub struct ForwardSolution {
    pub u: Field,
    /// Estimated 1-norm condition number of the interior operator.
    pub condition: f64,
}

struct Coeffs {
    lam: Vec<f64>,
    mu: Vec<f64>,
    glam: Vec<Vec<f64>>,
    gmu: Vec<Vec<f64>>,
}

fn coeffs(params: &LameParameters) -> Coeffs {
    let g = *params.grid();
    let lam = params.lambda.values().to_vec();
    let mu = params.mu.values().to_vec();
    let glam = (0..g.dim()).map(|a| d1(&g, &lam, a)).collect();
    let gmu = (0..g.dim()).map(|a| d1(&g, &mu, a)).collect();
    Coeffs { lam, mu, glam, gmu }
}

/// Stencil entries (point, component, weight) of row `i` at interior point `p`.
fn row_stencil(g: &Grid, c: &Coeffs, k: f64, p: usize, i: usize, out: &mut Vec<(usize, usize, f64)>) {
    let d = g.dim();
    let h = g.spacing();
    let (l, m) = (c.lam[p], c.mu[p]);
    let s = |a: usize| g.stride(a);
    // (λ+μ)∂_i∂_j u_j
    for j in 0..d {
        if j == i {
            let w = (l + m) / (h[i] * h[i]);
            out.push((p + s(i), j, w));
            out.push((p - s(i), j, w));
            out.push((p, j, -2.0 * w));
        } else {
            let w = (l + m) / (4.0 * h[i] * h[j]);
            out.push((p + s(i) + s(j), j, w));
            out.push((p - s(i) - s(j), j, w));
            out.push((p + s(i) - s(j), j, -w));
            out.push((p - s(i) + s(j), j, -w));
        }
    }
    // μΔu_i
    for j in 0..d {
        let w = m / (h[j] * h[j]);
        out.push((p + s(j), i, w));
        out.push((p - s(j), i, w));
        out.push((p, i, -2.0 * w));
    }
    // ∂_iλ ∂_j u_j  and  ∂_jμ (∂_j u_i + ∂_i u_j)
    for j in 0..d {
        let wl = c.glam[i][p] / (2.0 * h[j]);
        out.push((p + s(j), j, wl));
        out.push((p - s(j), j, -wl));
        let wm = c.gmu[j][p];
        out.push((p + s(j), i, wm / (2.0 * h[j])));
        out.push((p - s(j), i, -wm / (2.0 * h[j])));
        out.push((p + s(i), j, wm / (2.0 * h[i])));
        out.push((p - s(i), j, -wm / (2.0 * h[i])));
    }
    out.push((p, i, k * k));
}

pub fn assemble(
    params: &LameParameters,
    grid: &Grid,
    k: f64,
    g: &BoundaryData,
    body_force: Option<&Field>,
) -> Result<LinearSystem> {
    grid.check_same(params.grid())?;
    grid.check_same(g.grid())?;
    if !(k >= 0.0) || !k.is_finite() {
        return Err(Error::InvalidArgument(format!("frequency k = {k} must be finite and >= 0")));
    }
    if params.mu.min() <= 0.0 {
        return Err(Error::NonPositive { what: "mu", min: params.mu.min() });
    }
    let d = grid.dim();
    if let Some(f) = body_force {
        grid.check_same(f.grid())?;
        f.expect_vector(d)?;
        f.expect_real()?;
    }
    let mut ordering = vec![None; grid.len()];
    let interior = grid.interior_points();
    for (q, &p) in interior.iter().enumerate() {
        ordering[p] = Some(q);
    }
    let c = coeffs(params);
    let bvals = g.values();

    let rows: Vec<(Vec<(usize, f64)>, f64)> = interior
        .par_iter()
        .flat_map_iter(|&p| {
            let mut rows = Vec::with_capacity(d);
            let mut st = Vec::with_capacity(32);
            for i in 0..d {
                st.clear();
                row_stencil(grid, &c, k, p, i, &mut st);
                let mut rhs = body_force.map_or(0.0, |f| f.at(p)[i]);
                let mut entries: Vec<(usize, f64)> = Vec::with_capacity(st.len());
                for &(np, j, w) in &st {
                    match ordering[np] {
                        Some(qn) => entries.push((qn * d + j, w)),
                        None => rhs -= w * bvals.at(np)[j],
                    }
                }
                entries.sort_by_key(|e| e.0);
                let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
                for (col, w) in entries {
                    match merged.last_mut() {
                        Some(last) if last.0 == col => last.1 += w,
                        _ => merged.push((col, w)),
                    }
                }
                rows.push((merged, rhs));
            }
            rows
        })
        .collect();

    let n = interior.len() * d;
    let mut trips = Vec::with_capacity(rows.iter().map(|r| r.0.len()).sum());
    let mut rhs = Vec::with_capacity(n);
    for (r, (entries, b)) in rows.into_iter().enumerate() {
        for (col, w) in entries {
            trips.push(Triplet::new(r, col, w));
        }
        rhs.push(b);
    }
    let matrix = SparseColMat::try_new_from_triplets(n, n, &trips)
        .map_err(|e| Error::Factorization(format!("{e:?}")))?;
    Ok(LinearSystem { matrix, rhs, ordering, boundary: bvals.clone() })
}

fn one_norm(a: &SparseColMat<usize, f64>) -> f64 {
    let ar = a.as_ref();
    (0..ar.ncols()).map(|j| ar.val_of_col(j).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

fn col_norm1(x: &Col<f64>) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

/// Hager–Higham estimate of ‖A⁻¹‖₁ from an LU factorization.
fn inverse_norm_estimate(lu: &impl Solve<f64>, n: usize) -> f64 {
    let mut x = Col::<f64>::from_fn(n, |_| 1.0 / n as f64);
    let mut est = 0.0;
    for it in 0..5 {
        let y = lu.solve(&x);
        let ny = col_norm1(&y);
        if it > 0 && ny <= est {
            break;
        }
        est = ny;
        let xi = Col::<f64>::from_fn(n, |i| if y[i] >= 0.0 { 1.0 } else { -1.0 });
        let z = lu.solve_transpose(&xi);
        let (jmax, zmax) = z.iter().enumerate().fold((0, 0.0), |(bj, bv), (j, v)| if v.abs() > bv { (j, v.abs()) } else { (bj, bv) });
        let ztx: f64 = z.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
        if zmax <= ztx {
            break;
        }
        x = Col::<f64>::from_fn(n, |i| if i == jmax { 1.0 } else { 0.0 });
    }
    let alt = Col::<f64>::from_fn(n, |i| {
        let s = if i % 2 == 0 { 1.0 } else { -1.0 };
        s * (1.0 + i as f64 / (n.max(2) - 1) as f64)
    });
    let ya = lu.solve(&alt);
    est.max(2.0 * col_norm1(&ya) / (3.0 * n as f64))
}

pub fn solve(system: &LinearSystem) -> Result<ForwardSolution> {
    let n = system.size();
    let lu = system.matrix.sp_lu().map_err(|_| Error::PossibleEigenvalue { cond: f64::INFINITY })?;
    let b = Col::<f64>::from_fn(n, |i| system.rhs[i]);
    let x = lu.solve(&b);
    let cond = one_norm(&system.matrix) * inverse_norm_estimate(&lu, n);
    if !cond.is_finite() || cond > CONDITION_LIMIT || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::PossibleEigenvalue { cond });
    }
    let g = *system.grid();
    let d = g.dim();
    let mut u = system.boundary.clone();
    for p in 0..g.len() {
        if let Some(q) = system.ordering[p] {
            for i in 0..d {
                u.at_mut(p)[i] = x[q * d + i];
            }
        }
    }
    Ok(ForwardSolution { u, condition: cond })
}

/// Solve for several Dirichlet data sharing one factorization.
pub fn solve_many(params: &LameParameters, k: f64, data: &[BoundaryData]) -> Result<Vec<ForwardSolution>> {
    let grid = *params.grid();
    let first = data.first().ok_or_else(|| contract("no boundary data"))?;
    let sys = assemble(params, &grid, k, first, None)?;
    let n = sys.size();
    let lu = sys.matrix.sp_lu().map_err(|_| Error::PossibleEigenvalue { cond: f64::INFINITY })?;
    let cond = one_norm(&sys.matrix) * inverse_norm_estimate(&lu, n);
    if !cond.is_finite() || cond > CONDITION_LIMIT {
        return Err(Error::PossibleEigenvalue { cond });
    }
    let mut rhs = Mat::<f64>::zeros(n, data.len());
    let mut systems = Vec::with_capacity(data.len());
    for (c, bd) in data.iter().enumerate() {
        let s = if c == 0 { None } else { Some(assemble(params, &grid, k, bd, None)?) };
        let r = s.as_ref().map_or(&sys.rhs, |s| &s.rhs);
        for i in 0..n {
            rhs[(i, c)] = r[i];
        }
        systems.push(s);
    }
    lu.solve_in_place(&mut rhs);
    let d = grid.dim();
    let mut out = Vec::with_capacity(data.len());
    for (c, bd) in data.iter().enumerate() {
        let mut u = bd.values().clone();
        for p in 0..grid.len() {
            if let Some(q) = sys.ordering[p] {
                for i in 0..d {
                    u.at_mut(p)[i] = rhs[(q * d + i, c)];
                }
            }
        }
        if !u.is_finite() {
            return Err(Error::PossibleEigenvalue { cond });
        }
        out.push(ForwardSolution { u, condition: cond });
    }
    Ok(out)
}

/// Expanded-form operator applied to `u` at interior points; zero on the boundary.
///
/// Uses the same stencils as [`assemble`], so a discrete solution returns its body force.
pub fn residual(u: &Field, params: &LameParameters, k: f64) -> Result<Field> {
    let g = *u.grid();
    g.check_same(params.grid())?;
    let d = g.dim();
    u.expect_vector(d)?;
    u.expect_real()?;
    let c = coeffs(params);
    let comps: Vec<Vec<f64>> = (0..d).map(|i| u.channel(i)).collect();
    // first derivatives du[i][a] = ∂_a u_i
    let du: Vec<Vec<Vec<f64>>> = comps.iter().map(|ui| (0..d).map(|a| d1(&g, ui, a)).collect()).collect();
    let div: Vec<f64> = (0..g.len()).map(|p| (0..d).map(|a| du[a][a][p]).sum()).collect();
    let mut out = Field::zeros(g, Rank::Vector(d));
    for i in 0..d {
        let mut acc = vec![0.0; g.len()];
        for j in 0..d {
            // ∂_i∂_j u_j, ∂_jj u_i
            let dij = if i == j { d2(&g, &comps[j], i) } else { d1(&g, &du[j][i], j) };
            let djj = d2(&g, &comps[i], j);
            for p in 0..g.len() {
                acc[p] += (c.lam[p] + c.mu[p]) * dij[p]
                    + c.mu[p] * djj[p]
                    + c.gmu[j][p] * (du[i][j][p] + du[j][i][p]);
            }
        }
        for p in 0..g.len() {
            acc[p] += c.glam[i][p] * div[p] + k * k * comps[i][p];
        }
        for p in 0..g.len() {
            if !g.is_boundary(p) {
                out.at_mut(p)[i] = acc[p];
            }
        }
    }
    Ok(out)
}
