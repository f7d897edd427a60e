//! Second-order finite differences on grid fields.
//!
//! Interior points use central stencils. Boundary points use one-sided three
//! point (first derivative) and four point (second derivative) stencils, so every
//! operator is exact on polynomials of total degree two.

use crate::error::{contract, Result};
use crate::grid::{Field, Grid, Rank};

/// First derivative of per-point samples along `axis`.
pub fn d1(grid: &Grid, data: &[f64], axis: usize) -> Vec<f64> {
    let n = grid.extents()[axis];
    let s = grid.stride(axis);
    let h = grid.spacing()[axis];
    let inv2h = 0.5 / h;
    let mut out = vec![0.0; data.len()];
    for (p, o) in out.iter_mut().enumerate() {
        let i = (p / s) % n;
        *o = if i == 0 {
            (-3.0 * data[p] + 4.0 * data[p + s] - data[p + 2 * s]) * inv2h
        } else if i == n - 1 {
            (3.0 * data[p] - 4.0 * data[p - s] + data[p - 2 * s]) * inv2h
        } else {
            (data[p + s] - data[p - s]) * inv2h
        };
    }
    out
}

/// Pure second derivative along `axis` with the compact three point stencil.
pub fn d2(grid: &Grid, data: &[f64], axis: usize) -> Vec<f64> {
    let n = grid.extents()[axis];
    let s = grid.stride(axis);
    let h = grid.spacing()[axis];
    let ih2 = 1.0 / (h * h);
    let mut out = vec![0.0; data.len()];
    for (p, o) in out.iter_mut().enumerate() {
        let i = (p / s) % n;
        *o = if i == 0 {
            (2.0 * data[p] - 5.0 * data[p + s] + 4.0 * data[p + 2 * s] - data[p + 3 * s]) * ih2
        } else if i == n - 1 {
            (2.0 * data[p] - 5.0 * data[p - s] + 4.0 * data[p - 2 * s] - data[p - 3 * s]) * ih2
        } else {
            (data[p + s] - 2.0 * data[p] + data[p - s]) * ih2
        };
    }
    out
}

/// Second derivative ∂_a∂_b; mixed entries apply [`d1`] twice.
pub fn d_ab(grid: &Grid, data: &[f64], a: usize, b: usize) -> Vec<f64> {
    if a == b {
        d2(grid, data, a)
    } else {
        d1(grid, &d1(grid, data, a), b)
    }
}

/// Finite difference weights for the first derivative at `z` from nodes `x`
/// (Fornberg's recursion, truncated to orders 0 and 1).
fn fd_weights(z: f64, x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut c = vec![[0.0f64; 2]; n];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(1);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.iter().map(|w| w[1]).collect()
}

/// Sixth-order first derivative along `axis` from seven point stencils, central
/// in the interior and shifted near the ends.
pub fn d1_high(grid: &Grid, data: &[f64], axis: usize) -> Vec<f64> {
    d1_stencil(grid, data, axis, 7)
}

/// First derivative of order `points − 1` from `points`-wide stencils (odd
/// `points` ≥ 3). Axes shorter than the stencil fall back to [`d1`].
pub fn d1_stencil(grid: &Grid, data: &[f64], axis: usize, points: usize) -> Vec<f64> {
    let n = grid.extents()[axis];
    if n < points || points < 3 {
        return d1(grid, data, axis);
    }
    let half = points / 2;
    let s = grid.stride(axis);
    let h = grid.spacing()[axis];
    let nodes: Vec<f64> = (0..points).map(|j| j as f64).collect();
    let table: Vec<Vec<f64>> = (0..points).map(|z| fd_weights(z as f64, &nodes).iter().map(|w| w / h).collect()).collect();
    let mut out = vec![0.0; data.len()];
    for (p, o) in out.iter_mut().enumerate() {
        let i = (p / s) % n;
        let start = i.saturating_sub(half).min(n - points);
        let w = &table[i - start];
        let base = p - (i - start) * s;
        *o = w.iter().enumerate().map(|(j, wj)| wj * data[base + j * s]).sum();
    }
    out
}

fn parts(f: &Field) -> usize {
    if f.is_complex() {
        2
    } else {
        1
    }
}

fn empty_like(f: &Field, rank: Rank) -> Field {
    if f.is_complex() {
        Field::zeros_complex(*f.grid(), rank)
    } else {
        Field::zeros(*f.grid(), rank)
    }
}

pub fn gradient(f: &Field) -> Result<Field> {
    f.expect_scalar()?;
    let g = *f.grid();
    let np = parts(f);
    let mut out = empty_like(f, Rank::Vector(g.dim()));
    for part in 0..np {
        let data = f.channel(part);
        for a in 0..g.dim() {
            out.set_channel(a * np + part, &d1(&g, &data, a));
        }
    }
    Ok(out)
}

pub fn divergence(v: &Field) -> Result<Field> {
    let g = *v.grid();
    v.expect_vector(g.dim())?;
    let np = parts(v);
    let mut out = empty_like(v, Rank::Scalar);
    for part in 0..np {
        let mut acc = vec![0.0; g.len()];
        for a in 0..g.dim() {
            let da = d1(&g, &v.channel(a * np + part), a);
            for (x, y) in acc.iter_mut().zip(da) {
                *x += y;
            }
        }
        out.set_channel(part, &acc);
    }
    Ok(out)
}

/// Jacobian J[a][b] = ∂_b u_a, stored row-major as a matrix field.
pub fn jacobian(u: &Field) -> Result<Field> {
    let g = *u.grid();
    let nc = u.components();
    if matches!(u.rank(), Rank::Matrix(..)) {
        return Err(contract("jacobian of a matrix field"));
    }
    let d = g.dim();
    let np = parts(u);
    let mut out = empty_like(u, Rank::Matrix(nc, d));
    for c in 0..nc {
        for part in 0..np {
            let data = u.channel(c * np + part);
            for b in 0..d {
                out.set_channel((c * d + b) * np + part, &d1(&g, &data, b));
            }
        }
    }
    Ok(out)
}

/// Symmetric gradient S(∇u) = (∇u + ∇uᵀ)/2.
pub fn sym_grad(u: &Field) -> Result<Field> {
    let g = *u.grid();
    let d = g.dim();
    u.expect_vector(d)?;
    let jac = jacobian(u)?;
    let np = parts(u);
    let mut out = empty_like(u, Rank::Matrix(d, d));
    for a in 0..d {
        for b in a..d {
            for part in 0..np {
                let jab = jac.channel((a * d + b) * np + part);
                let jba = jac.channel((b * d + a) * np + part);
                let s: Vec<f64> = jab.iter().zip(&jba).map(|(x, y)| 0.5 * (x + y)).collect();
                out.set_channel((a * d + b) * np + part, &s);
                out.set_channel((b * d + a) * np + part, &s);
            }
        }
    }
    Ok(out)
}

/// Hessian of a scalar field; the two mixed entries are stored bitwise equal.
pub fn second_derivatives(f: &Field) -> Result<Field> {
    f.expect_scalar()?;
    let g = *f.grid();
    let d = g.dim();
    let np = parts(f);
    let mut out = empty_like(f, Rank::Matrix(d, d));
    for part in 0..np {
        let data = f.channel(part);
        for a in 0..d {
            for b in a..d {
                let h = d_ab(&g, &data, a, b);
                out.set_channel((a * d + b) * np + part, &h);
                if a != b {
                    out.set_channel((b * d + a) * np + part, &h);
                }
            }
        }
    }
    Ok(out)
}

pub fn laplacian(f: &Field) -> Result<Field> {
    f.expect_scalar()?;
    let g = *f.grid();
    let np = parts(f);
    let mut out = empty_like(f, Rank::Scalar);
    for part in 0..np {
        let data = f.channel(part);
        let mut acc = vec![0.0; g.len()];
        for a in 0..g.dim() {
            for (x, y) in acc.iter_mut().zip(d2(&g, &data, a)) {
                *x += y;
            }
        }
        out.set_channel(part, &acc);
    }
    Ok(out)
}

/// Discrete C² norm: max over points of |f| + |∇f| + |Hess f|, Euclidean/Frobenius
/// per point and summed over components of a vector field.
pub fn c2_norm(f: &Field) -> Result<f64> {
    f.expect_real()?;
    let g = *f.grid();
    let d = g.dim();
    let mut best = 0.0f64;
    let mut per_point = vec![0.0; g.len()];
    for c in 0..f.components() {
        let data = f.channel(c);
        let mut g1 = vec![0.0; g.len()];
        let mut g2 = vec![0.0; g.len()];
        for a in 0..d {
            for (acc, v) in g1.iter_mut().zip(d1(&g, &data, a)) {
                *acc += v * v;
            }
            for b in a..d {
                let w = if a == b { 1.0 } else { 2.0 };
                for (acc, v) in g2.iter_mut().zip(d_ab(&g, &data, a, b)) {
                    *acc += w * v * v;
                }
            }
        }
        for p in 0..g.len() {
            per_point[p] += data[p].abs() + g1[p].sqrt() + g2[p].sqrt();
        }
    }
    for v in per_point {
        best = best.max(v);
    }
    Ok(best)
}
