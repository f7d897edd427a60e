//! Algebraic recovery of λ from λ-variant eliminated combinations.
//!
//! With G = (λ+μ, …, λ+μ, μ, …, μ) the eliminated identity v·G = −k² r* reads
//! κλ − σμ = −k² r*, where κ sums the first `dim` entries of v and σ = −Σv.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Col;

use crate::error::{contract, Error, Result};
use crate::grid::{Field, Grid, Mask};

#[derive(Clone, Debug, PartialEq)]
pub struct KappaSigma {
    pub kappa: Field,
    pub sigma: Field,
    pub rhs_star: Field,
    pub eps_kappa: f64,
    pub mask: Mask,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Default ε_κ: `factor` times the median Euclidean norm of v over `valid`.
pub fn default_eps_kappa(v: &Field, valid: &Mask, factor: f64) -> f64 {
    let g = v.grid();
    let norms = (0..g.len())
        .filter(|&p| valid.get(p))
        .map(|p| v.at(p).iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    factor * median(norms)
}

pub fn compute_kappa_sigma(v: &Field, rhs_star: &Field, dim: usize, eps_kappa: f64, valid: &Mask) -> Result<KappaSigma> {
    let g = *v.grid();
    g.check_same(rhs_star.grid())?;
    g.check_same(valid.grid())?;
    if g.dim() != dim {
        return Err(contract("dimension differs from grid"));
    }
    v.expect_vector(2 * dim)?;
    rhs_star.expect_scalar()?;
    let mut kappa = Field::zeros(g, crate::grid::Rank::Scalar);
    let mut sigma = Field::zeros(g, crate::grid::Rank::Scalar);
    let mut flags = vec![false; g.len()];
    for p in 0..g.len() {
        let vp = v.at(p);
        let k: f64 = vp[..dim].iter().sum();
        let s: f64 = -vp.iter().sum::<f64>();
        kappa.values_mut()[p] = k;
        sigma.values_mut()[p] = s;
        flags[p] = valid.get(p) && k.abs() >= eps_kappa && k.is_finite() && s.is_finite();
    }
    Ok(KappaSigma { kappa, sigma, rhs_star: rhs_star.clone(), eps_kappa, mask: Mask::new(g, flags)? })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LambdaRecovery {
    pub lambda: Field,
    pub mask: Mask,
    /// Mask points where the formula produced λ ≤ 0.
    pub negative: Mask,
    /// Points filled by harmonic inpainting (not backed by data).
    pub inpainted: Mask,
}

/// λ = σμ/κ − (k²/κ) r* on the κ mask.
pub fn recover_lambda(ks: &KappaSigma, mu: &Field, k: f64) -> Result<LambdaRecovery> {
    recover_lambda_multi(std::slice::from_ref(ks), mu, k)
}

/// Least-squares combination over several targets:
/// λ = Σ_t κ_t(σ_t μ − k² r*_t) / Σ_t κ_t², using targets whose mask is set.
pub fn recover_lambda_multi(kss: &[KappaSigma], mu: &Field, k: f64) -> Result<LambdaRecovery> {
    let first = kss.first().ok_or_else(|| contract("no κ/σ data"))?;
    let g = *first.kappa.grid();
    g.check_same(mu.grid())?;
    mu.expect_scalar()?;
    let mut lam = Field::zeros(g, crate::grid::Rank::Scalar);
    let mut flags = vec![false; g.len()];
    let mut neg = vec![false; g.len()];
    for p in 0..g.len() {
        let mut num = 0.0;
        let mut den = 0.0;
        for ks in kss {
            if ks.mask.get(p) {
                let kap = ks.kappa.get(p);
                num += kap * (ks.sigma.get(p) * mu.get(p) - k * k * ks.rhs_star.get(p));
                den += kap * kap;
            }
        }
        if den == 0.0 {
            continue;
        }
        if !(mu.get(p) > 0.0) {
            return Err(Error::NonPositive { what: "mu", min: mu.get(p) });
        }
        let l = num / den;
        lam.values_mut()[p] = l;
        if l > 0.0 {
            flags[p] = true;
        } else {
            neg[p] = true;
        }
    }
    Ok(LambdaRecovery {
        lambda: lam,
        mask: Mask::new(g, flags)?,
        negative: Mask::new(g, neg)?,
        inpainted: Mask::filled(g, false),
    })
}

/// Points at least `frame` cells from every face and farther than `corner_radius`
/// (physical units) from every corner or edge of the box.
///
/// Second differences of the data use one-sided stencils inside the frame, and
/// Dirichlet solutions on a box lose second-derivative regularity at corners and
/// edges, so the algebraic λ formula is unreliable there.
pub fn regularity_mask(g: &Grid, frame: usize, corner_radius: f64) -> Mask {
    let d = g.dim();
    let upper = g.upper();
    let flags = (0..g.len())
        .map(|p| {
            let idx = g.multi_index(p);
            if (0..d).any(|a| idx[a] < frame || idx[a] + frame >= g.extents()[a]) {
                return false;
            }
            let x = g.coords(p);
            let dist: Vec<f64> = (0..d).map(|a| (x[a] - g.origin()[a]).min(upper[a] - x[a])).collect();
            (0..d).all(|a| (a + 1..d).all(|b| dist[a].hypot(dist[b]) > corner_radius))
        })
        .collect();
    Mask::new(*g, flags).expect("same grid")
}

/// Discrete harmonic fill of the points outside `known`.
///
/// Unknown points satisfy Σ_q (f_q − f_p) = 0 over grid neighbours; regions with
/// no path to a known point are left at zero and reported unfilled.
pub fn harmonic_inpaint(f: &Field, known: &Mask) -> Result<(Field, Mask)> {
    let g: Grid = *f.grid();
    g.check_same(known.grid())?;
    f.expect_scalar()?;
    if known.count() == 0 {
        return Ok((f.clone(), Mask::filled(g, false)));
    }
    // unknowns connected to a known point
    let mut reach = vec![false; g.len()];
    let mut stack: Vec<usize> = (0..g.len()).filter(|&p| known.get(p)).collect();
    for &p in &stack {
        reach[p] = true;
    }
    while let Some(p) = stack.pop() {
        for q in neighbours(&g, p) {
            if !reach[q] {
                reach[q] = true;
                stack.push(q);
            }
        }
    }
    let mut col = vec![usize::MAX; g.len()];
    let mut n = 0;
    for p in 0..g.len() {
        if !known.get(p) && reach[p] {
            col[p] = n;
            n += 1;
        }
    }
    let mut out = f.clone();
    let mut filled = vec![false; g.len()];
    if n == 0 {
        return Ok((out, Mask::new(g, filled)?));
    }
    let mut trips = Vec::new();
    let mut rhs = vec![0.0; n];
    for p in 0..g.len() {
        if col[p] == usize::MAX {
            continue;
        }
        let r = col[p];
        let nb = neighbours(&g, p);
        trips.push(Triplet::new(r, r, nb.len() as f64));
        for q in nb {
            if known.get(q) {
                rhs[r] += f.get(q);
            } else {
                trips.push(Triplet::new(r, col[q], -1.0));
            }
        }
    }
    let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &trips).map_err(|e| Error::Factorization(format!("{e:?}")))?;
    let lu = a.sp_lu().map_err(|e| Error::Factorization(format!("{e:?}")))?;
    let x = lu.solve(&Col::<f64>::from_fn(n, |i| rhs[i]));
    for p in 0..g.len() {
        if col[p] != usize::MAX {
            out.values_mut()[p] = x[col[p]];
            filled[p] = true;
        }
    }
    Ok((out, Mask::new(g, filled)?))
}

fn neighbours(g: &Grid, p: usize) -> Vec<usize> {
    let idx = g.multi_index(p);
    let mut out = Vec::with_capacity(2 * g.dim());
    for a in 0..g.dim() {
        let s = g.stride(a);
        if idx[a] > 0 {
            out.push(p - s);
        }
        if idx[a] + 1 < g.extents()[a] {
            out.push(p + s);
        }
    }
    out
}
