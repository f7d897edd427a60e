//! Closed-form fields for integration tests: values, gradients and Hessians
//! written out by hand, independent of the library stencils.

#![allow(dead_code)]

use lamerecon::forward::{assemble, solve, BoundaryData};
use lamerecon::reduction::{identity_residual, reduce_variant, Variant};
use lamerecon::{Field, Grid, LameParameters, Mask, Rank};

/// Scalar function with exact first and second derivatives.
pub trait Smooth {
    fn val(&self, x: &[f64]) -> f64;
    fn grad(&self, x: &[f64]) -> [f64; 3];
    fn hess(&self, x: &[f64]) -> [[f64; 3]; 3];
}

/// sin(a·x + c)
pub struct Wave {
    pub a: [f64; 3],
    pub c: f64,
}

impl Smooth for Wave {
    fn val(&self, x: &[f64]) -> f64 {
        (dot(&self.a, x) + self.c).sin()
    }
    fn grad(&self, x: &[f64]) -> [f64; 3] {
        let c = (dot(&self.a, x) + self.c).cos();
        self.a.map(|a| a * c)
    }
    fn hess(&self, x: &[f64]) -> [[f64; 3]; 3] {
        let s = -(dot(&self.a, x) + self.c).sin();
        let a = self.a;
        a.map(|ai| a.map(|aj| s * ai * aj))
    }
}

/// base + amp·exp(−|x − c|²/w²)
pub struct Bump {
    pub base: f64,
    pub amp: f64,
    pub c: [f64; 3],
    pub w: f64,
}

impl Bump {
    fn e(&self, x: &[f64]) -> f64 {
        (-x.iter().zip(&self.c).map(|(x, c)| (x - c) * (x - c)).sum::<f64>() / (self.w * self.w)).exp()
    }
}

impl Smooth for Bump {
    fn val(&self, x: &[f64]) -> f64 {
        self.base + self.amp * self.e(x)
    }
    fn grad(&self, x: &[f64]) -> [f64; 3] {
        let e = self.amp * self.e(x);
        let mut g = [0.0; 3];
        for (a, ga) in g.iter_mut().enumerate().take(x.len()) {
            *ga = -2.0 * (x[a] - self.c[a]) / (self.w * self.w) * e;
        }
        g
    }
    fn hess(&self, x: &[f64]) -> [[f64; 3]; 3] {
        let e = self.amp * self.e(x);
        let w2 = self.w * self.w;
        let mut h = [[0.0; 3]; 3];
        for a in 0..x.len() {
            for b in 0..x.len() {
                let da = x[a] - self.c[a];
                let db = x[b] - self.c[b];
                h[a][b] = 4.0 * da * db / (w2 * w2) * e - if a == b { 2.0 / w2 * e } else { 0.0 };
            }
        }
        h
    }
}

/// c + b·x + ½xᵀAx with A symmetric.
#[derive(Clone, Debug)]
pub struct Quadratic {
    pub c: f64,
    pub b: [f64; 3],
    pub a: [[f64; 3]; 3],
}

impl Smooth for Quadratic {
    fn val(&self, x: &[f64]) -> f64 {
        let mut v = self.c;
        for i in 0..x.len() {
            v += self.b[i] * x[i];
            for j in 0..x.len() {
                v += 0.5 * self.a[i][j] * x[i] * x[j];
            }
        }
        v
    }
    fn grad(&self, x: &[f64]) -> [f64; 3] {
        let mut g = self.b;
        for (i, gi) in g.iter_mut().enumerate().take(x.len()) {
            for j in 0..x.len() {
                *gi += self.a[i][j] * x[j];
            }
        }
        g
    }
    fn hess(&self, _: &[f64]) -> [[f64; 3]; 3] {
        self.a
    }
}

fn dot(a: &[f64; 3], x: &[f64]) -> f64 {
    x.iter().zip(a).map(|(x, a)| x * a).sum()
}

/// (Lu)_i = ∂_i(λ∇·u) + Σ_j ∂_j(μ(∂_j u_i + ∂_i u_j)) + k²u_i, expanded by the
/// product rule.
pub fn elasticity_operator(u: &[&dyn Smooth], lam: &dyn Smooth, mu: &dyn Smooth, k: f64, x: &[f64]) -> Vec<f64> {
    let d = x.len();
    let gu: Vec<[f64; 3]> = u.iter().map(|c| c.grad(x)).collect();
    let hu: Vec<[[f64; 3]; 3]> = u.iter().map(|c| c.hess(x)).collect();
    let (l, gl) = (lam.val(x), lam.grad(x));
    let (m, gm) = (mu.val(x), mu.grad(x));
    let div: f64 = (0..d).map(|j| gu[j][j]).sum();
    (0..d)
        .map(|i| {
            let ddiv: f64 = (0..d).map(|j| hu[j][j][i]).sum();
            let mut v = gl[i] * div + l * ddiv + k * k * u[i].val(x);
            for j in 0..d {
                v += gm[j] * (gu[i][j] + gu[j][i]) + m * (hu[i][j][j] + hu[j][i][j]);
            }
            v
        })
        .collect()
}

pub fn sample_vector(g: Grid, u: &[&dyn Smooth]) -> Field {
    Field::from_fn(g, Rank::Vector(g.dim()), |x, o| {
        for (c, oc) in u.iter().zip(o.iter_mut()) {
            *oc = c.val(x);
        }
    })
}

pub fn sample_scalar(g: Grid, f: &dyn Smooth) -> Field {
    Field::scalar_fn(g, |x| f.val(x))
}

pub fn params(g: Grid, lam: &dyn Smooth, mu: &dyn Smooth) -> LameParameters {
    LameParameters::new(sample_scalar(g, lam), sample_scalar(g, mu)).unwrap()
}

/// Points whose coordinates all lie in [lo, hi].
pub fn sub_box(g: Grid, lo: f64, hi: f64) -> Mask {
    let flags = (0..g.len())
        .map(|p| {
            let x = g.coords(p);
            (0..g.dim()).all(|a| x[a] >= lo - 1e-12 && x[a] <= hi + 1e-12)
        })
        .collect();
    Mask::new(g, flags).unwrap()
}

pub fn sup_on(f: &Field, m: &Mask) -> f64 {
    (0..f.grid().len()).filter(|&p| m.get(p)).flat_map(|p| f.at(p).iter().map(|v| v.abs())).fold(0.0, f64::max)
}

/// Largest relative error of `f` against `truth` on the mask.
pub fn sup_rel_on(f: &Field, truth: &Field, m: &Mask) -> f64 {
    (0..f.grid().len())
        .filter(|&p| m.get(p))
        .map(|p| ((f.get(p) - truth.get(p)) / truth.get(p)).abs())
        .fold(0.0, f64::max)
}

/// Smooth, clearly non-polynomial Dirichlet data used by several oracles.
pub fn wavy_trace(g: Grid) -> BoundaryData {
    BoundaryData::from_fn(g, "wavy", |x, o| {
        o[0] = (x[0] + 2.0 * x[1]).sin();
        o[1] = (2.0 * x[0] - x[1]).cos();
        if o.len() == 3 {
            o[2] = (x[2] + x[0]).sin();
        }
    })
}

/// Log-log least-squares slope.
pub fn slope(hs: &[f64], es: &[f64]) -> f64 {
    let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = es.iter().map(|e| e.ln()).collect();
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Sup error of the discrete solution for a manufactured smooth field with
/// variable λ, μ and k = 1.
pub fn manufactured_forward_error(n: usize) -> f64 {
    let g = Grid::unit_box(2, n).unwrap();
    let u1 = Wave { a: [1.3, -0.7, 0.0], c: 0.2 };
    let u2 = Wave { a: [0.4, 1.9, 0.0], c: 1.0 };
    let lam = Bump { base: 2.0, amp: 1.0, c: [0.4, 0.6, 0.0], w: 0.35 };
    let mu = Bump { base: 1.0, amp: 0.6, c: [0.55, 0.45, 0.0], w: 0.3 };
    let comps: [&dyn Smooth; 2] = [&u1, &u2];
    let params = params(g, &lam, &mu);
    let u = sample_vector(g, &comps);
    let f = Field::from_fn(g, Rank::Vector(2), |x, o| o.copy_from_slice(&elasticity_operator(&comps, &lam, &mu, 1.0, x)));
    let bd = BoundaryData::from_field(&u, "manufactured").unwrap();
    let sol = solve(&assemble(&params, &g, 1.0, &bd, Some(&f)).unwrap()).unwrap();
    sol.u.axpby(1.0, &u, -1.0).unwrap().max_abs()
}

pub fn quadratic(c: f64, b: [f64; 3], a: [[f64; 3]; 3]) -> Quadratic {
    Quadratic { c, b, a: sym(a) }
}

fn sym(m: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut s = m;
    for i in 0..3 {
        for j in 0..3 {
            s[i][j] = 0.5 * (m[i][j] + m[j][i]);
        }
    }
    s
}

/// Σ_i (Lu)_i from the product-rule expansion against u♯·F + u♭·G + k²u* of both
/// variants: (largest gap, size of Σ_i (Lu)_i).
pub fn polynomial_identity_gap(dim: usize, n: usize, u: &[Quadratic], lam: &Quadratic, mu: &Quadratic, k: f64) -> (f64, f64) {
    let g = Grid::unit_box(dim, n).unwrap();
    let comps: Vec<&dyn Smooth> = u.iter().map(|q| q as &dyn Smooth).collect();
    let field = sample_vector(g, &comps);
    let p = params(g, lam, mu);
    let expected = Field::scalar_fn(g, |x| elasticity_operator(&comps, lam, mu, k, x).iter().sum());
    let mut worst = 0.0f64;
    for v in [Variant::Mu, Variant::Lambda] {
        let b = reduce_variant(v, std::slice::from_ref(&field), &[]).unwrap();
        let r = &identity_residual(&b, &p, k).unwrap()[0];
        worst = worst.max(r.axpby(1.0, &expected, -1.0).unwrap().max_abs());
    }
    (worst, expected.max_abs())
}

/// Quadratic u, λ, μ in 3D on 9³ with k = 1.3.
pub fn three_dimensional_identity_gap() -> (f64, f64) {
    let u = [
        quadratic(0.1, [1.0, -0.5, 0.3], [[1.0, 0.4, -0.2], [0.0, -0.6, 0.5], [0.3, 0.0, 0.8]]),
        quadratic(-0.2, [0.2, 0.7, -1.1], [[0.3, -0.9, 0.0], [0.1, 1.2, 0.4], [0.0, 0.6, -0.5]]),
        quadratic(0.4, [-0.6, 0.1, 0.9], [[-0.7, 0.2, 0.5], [0.2, 0.4, -0.3], [0.9, 0.0, 1.1]]),
    ];
    let lam = quadratic(2.0, [0.5, -0.3, 0.2], [[0.4, 0.1, 0.0], [0.1, -0.2, 0.3], [0.0, 0.3, 0.6]]);
    let mu = quadratic(1.0, [0.2, 0.4, -0.1], [[0.3, 0.0, 0.2], [0.0, 0.5, -0.1], [0.2, -0.1, 0.2]]);
    polynomial_identity_gap(3, 9, &u, &lam, &mu, 1.3)
}

/// Sup of the identity residual of one forward solution (inclusions phantom,
/// k = 1) on the sub-box [1/4, 3/4]ⁿ.
pub fn identity_sup(dim: usize, n: usize, v: Variant) -> f64 {
    let g = Grid::unit_box(dim, n).unwrap();
    let p = LameParameters::from_phantom(g, &lamerecon::Phantom::inclusions(dim)).unwrap();
    let sol = solve(&assemble(&p, &g, 1.0, &wavy_trace(g), None).unwrap()).unwrap();
    let b = reduce_variant(v, &[sol.u], &[]).unwrap();
    let r = &identity_residual(&b, &p, 1.0).unwrap()[0];
    sup_on(r, &sub_box(g, 0.25, 0.75))
}
