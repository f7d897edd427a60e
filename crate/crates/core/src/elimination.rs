//! Per-point basis selection among u♯ vectors and Θ elimination.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, Mask, Rank};
use crate::reduction::{ReductionBundle, Variant};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EliminationOptions {
    /// σ_min threshold relative to the median u♯ norm.
    pub threshold_factor: f64,
    /// Absolute threshold; overrides the relative one when set.
    pub threshold_abs: Option<f64>,
    /// Largest number of basis subsets enumerated per point.
    pub subset_cap: usize,
}

impl Default for EliminationOptions {
    fn default() -> Self {
        EliminationOptions { threshold_factor: 1e-3, threshold_abs: None, subset_cap: 200 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EliminationPlan {
    pub variant: Variant,
    pub basis_count: usize,
    /// Non-basis solutions per point (all of them act as targets).
    pub target_count: usize,
    /// Chosen basis solution indices per point, ascending.
    pub selection: Vec<Vec<usize>>,
    pub sigma_min: Field,
    pub threshold: f64,
    pub mask: Mask,
}

impl EliminationPlan {
    /// Solution index of target `t` at point `p`: the t-th solution not in the basis.
    pub fn target_solution(&self, p: usize, t: usize, total: usize) -> usize {
        let sel = &self.selection[p];
        (0..total).filter(|j| !sel.contains(j)).nth(t).expect("target index in range")
    }
}

/// Θ coefficients for one target, one scalar field per basis slot.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaField {
    pub target_index: usize,
    pub theta: Vec<Field>,
    /// Relative annihilation residual |B·Θ + t| / |t| per point (0 off-mask).
    pub annihilation: Field,
    pub mask: Mask,
}

fn distinct(bundle: &ReductionBundle, j: usize, p: usize) -> Vec<f64> {
    let idx = bundle.variant.distinct_sharp(bundle.dim);
    let s = bundle.sharp[j].at(p);
    idx.iter().map(|&i| s[i]).collect()
}

fn sigma_min_of(cols: &[Vec<f64>]) -> f64 {
    let m = cols[0].len();
    let a = DMatrix::from_fn(m, cols.len(), |r, c| cols[c][r]);
    let sv = a.singular_values();
    sv.iter().copied().fold(f64::INFINITY, f64::min)
}

fn n_choose_k(n: usize, k: usize) -> usize {
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
        if r > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    r as usize
}

/// Lexicographic k-subsets of 0..n.
fn for_each_subset(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for t in i + 1..k {
            idx[t] = idx[t - 1] + 1;
        }
    }
}

/// Column-pivoted Gram–Schmidt pick of `k` columns.
fn greedy_subset(cols: &[Vec<f64>], k: usize) -> Vec<usize> {
    let mut work: Vec<Vec<f64>> = cols.to_vec();
    let mut chosen = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best = None;
        let mut best_norm = -1.0;
        for (j, c) in work.iter().enumerate() {
            if chosen.contains(&j) {
                continue;
            }
            let nrm = c.iter().map(|v| v * v).sum::<f64>();
            if nrm > best_norm {
                best_norm = nrm;
                best = Some(j);
            }
        }
        let j = best.expect("enough columns");
        chosen.push(j);
        let nrm = best_norm.sqrt();
        if nrm == 0.0 {
            continue;
        }
        let q: Vec<f64> = work[j].iter().map(|v| v / nrm).collect();
        for (i, c) in work.iter_mut().enumerate() {
            if chosen.contains(&i) {
                continue;
            }
            let dot: f64 = c.iter().zip(&q).map(|(a, b)| a * b).sum();
            for (a, b) in c.iter_mut().zip(&q) {
                *a -= dot * b;
            }
        }
    }
    chosen.sort_unstable();
    chosen
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

pub fn independence_map(bundle: &ReductionBundle, opts: &EliminationOptions) -> Result<EliminationPlan> {
    let m = bundle.variant.basis_count(bundle.dim);
    let needed = m + 1;
    let total = bundle.len();
    if total < needed {
        return Err(Error::TooFewSolutions { needed, got: total });
    }
    let g: Grid = *bundle.grid();
    let norms: Vec<f64> = (0..total)
        .flat_map(|j| (0..g.len()).map(move |p| (j, p)))
        .map(|(j, p)| distinct(bundle, j, p).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let threshold = opts.threshold_abs.unwrap_or(opts.threshold_factor * median(norms));
    let enumerate = n_choose_k(total, m) <= opts.subset_cap;

    let per_point: Vec<(Vec<usize>, f64)> = (0..g.len())
        .into_par_iter()
        .map(|p| {
            let cols: Vec<Vec<f64>> = (0..total).map(|j| distinct(bundle, j, p)).collect();
            if cols.iter().any(|c| c.iter().any(|v| !v.is_finite())) {
                return ((0..m).collect(), 0.0);
            }
            if enumerate {
                let mut best: (Vec<usize>, f64) = ((0..m).collect(), -1.0);
                for_each_subset(total, m, |s| {
                    let sub: Vec<Vec<f64>> = s.iter().map(|&j| cols[j].clone()).collect();
                    let sm = sigma_min_of(&sub);
                    if sm > best.1 {
                        best = (s.to_vec(), sm);
                    }
                });
                best
            } else {
                let s = greedy_subset(&cols, m);
                let sub: Vec<Vec<f64>> = s.iter().map(|&j| cols[j].clone()).collect();
                let sm = sigma_min_of(&sub);
                (s, sm)
            }
        })
        .collect();

    let mut selection = Vec::with_capacity(g.len());
    let mut smin = Vec::with_capacity(g.len());
    let mut flags = Vec::with_capacity(g.len());
    for (s, v) in per_point {
        let v = v.max(0.0);
        flags.push(v >= threshold && v > 0.0);
        selection.push(s);
        smin.push(v);
    }
    Ok(EliminationPlan {
        variant: bundle.variant,
        basis_count: m,
        target_count: total - m,
        selection,
        sigma_min: Field::scalar(g, smin)?,
        threshold,
        mask: Mask::new(g, flags)?,
    })
}

/// Solve B·Θ = −t with one step of iterative refinement.
fn solve_small(b: &DMatrix<f64>, t: &DVector<f64>) -> Option<DVector<f64>> {
    let lu = b.clone().lu();
    let rhs = -t;
    let mut x = lu.solve(&rhs)?;
    let r = &rhs - b * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

pub fn solve_theta(plan: &EliminationPlan, bundle: &ReductionBundle, target_index: usize) -> Result<ThetaField> {
    if target_index >= plan.target_count {
        return Err(Error::InvalidArgument(format!(
            "target {target_index} out of range ({} targets)",
            plan.target_count
        )));
    }
    let g = *bundle.grid();
    let m = plan.basis_count;
    let total = bundle.len();
    let rows: Vec<Option<(Vec<f64>, f64)>> = (0..g.len())
        .into_par_iter()
        .map(|p| {
            if !plan.mask.get(p) {
                return None;
            }
            let sel = &plan.selection[p];
            let tj = plan.target_solution(p, target_index, total);
            let cols: Vec<Vec<f64>> = sel.iter().map(|&j| distinct(bundle, j, p)).collect();
            let b = DMatrix::from_fn(m, m, |r, c| cols[c][r]);
            let t = DVector::from_vec(distinct(bundle, tj, p));
            let th = solve_small(&b, &t)?;
            // residual on the full sharp vector
            let full_t = bundle.sharp[tj].at(p);
            let mut res = full_t.to_vec();
            for (k, &j) in sel.iter().enumerate() {
                for (r, s) in res.iter_mut().zip(bundle.sharp[j].at(p)) {
                    *r += th[k] * s;
                }
            }
            let tn = full_t.iter().map(|v| v * v).sum::<f64>().sqrt();
            let rn = res.iter().map(|v| v * v).sum::<f64>().sqrt();
            let rel = if tn > 0.0 { rn / tn } else { rn };
            Some((th.iter().copied().collect(), rel))
        })
        .collect();
    let mut theta = vec![Field::zeros(g, Rank::Scalar); m];
    let mut ann = Field::zeros(g, Rank::Scalar);
    let mut flags = vec![false; g.len()];
    for (p, r) in rows.into_iter().enumerate() {
        if let Some((th, rel)) = r {
            for k in 0..m {
                theta[k].values_mut()[p] = th[k];
            }
            ann.values_mut()[p] = rel;
            flags[p] = true;
        }
    }
    Ok(ThetaField { target_index, theta, annihilation: ann, mask: Mask::new(g, flags)? })
}

/// v = t♭ + ΣΘ_j b♭_j and r* = t* + ΣΘ_j b*_j on the Θ mask (zero elsewhere).
pub fn combine_flat(
    plan: &EliminationPlan,
    bundle: &ReductionBundle,
    theta: &ThetaField,
) -> Result<(Field, Field)> {
    let g = *bundle.grid();
    let nc = 2 * bundle.dim;
    let total = bundle.len();
    let mut v = Field::zeros(g, Rank::Vector(nc));
    let mut rs = Field::zeros(g, Rank::Scalar);
    for p in 0..g.len() {
        if !theta.mask.get(p) {
            continue;
        }
        let tj = plan.target_solution(p, theta.target_index, total);
        let mut acc = bundle.flat[tj].at(p).to_vec();
        let mut star = bundle.star[tj].get(p);
        for (k, &j) in plan.selection[p].iter().enumerate() {
            let th = theta.theta[k].get(p);
            for (a, f) in acc.iter_mut().zip(bundle.flat[j].at(p)) {
                *a += th * f;
            }
            star += th * bundle.star[j].get(p);
        }
        v.at_mut(p).copy_from_slice(&acc);
        rs.values_mut()[p] = star;
    }
    Ok((v, rs))
}

/// Eliminated combinations for every target.
pub struct Eliminated {
    pub plan: EliminationPlan,
    pub thetas: Vec<ThetaField>,
    pub vs: Vec<Field>,
    pub rstars: Vec<Field>,
}

pub fn eliminate(bundle: &ReductionBundle, opts: &EliminationOptions) -> Result<Eliminated> {
    let plan = independence_map(bundle, opts)?;
    let mut thetas = Vec::with_capacity(plan.target_count);
    let mut vs = Vec::with_capacity(plan.target_count);
    let mut rstars = Vec::with_capacity(plan.target_count);
    for t in 0..plan.target_count {
        let th = solve_theta(&plan, bundle, t)?;
        let (v, r) = combine_flat(&plan, bundle, &th)?;
        thetas.push(th);
        vs.push(v);
        rstars.push(r);
    }
    Ok(Eliminated { plan, thetas, vs, rstars })
}
