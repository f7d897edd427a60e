//! Transport system ∇μ + Γμ = Φ and recovery of μ from boundary values.

use faer::linalg::solvers::SolveLstsq;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::grid::{Field, Grid, Mask, Rank};

/// Points whose β-matrix condition number exceeds this are masked out.
pub const DEFAULT_COND_CAP: f64 = 1e6;

#[derive(Clone, Debug, PartialEq)]
pub struct TransportSystem {
    pub gamma_vec: Field,
    pub phi: Field,
    pub beta: Vec<Field>,
    pub gamma: Vec<Field>,
    pub rhs: Vec<Field>,
    /// Condition number of the β-matrix per point (∞ where undefined).
    pub cond: Field,
    pub mask: Mask,
}

impl TransportSystem {
    pub fn grid(&self) -> &Grid {
        self.phi.grid()
    }

    /// System with prescribed Γ and Φ, valid wherever `mask` is set.
    pub fn from_coefficients(gamma_vec: Field, phi: Field, mask: Mask) -> Result<Self> {
        let g = *phi.grid();
        g.check_same(gamma_vec.grid())?;
        g.check_same(mask.grid())?;
        gamma_vec.expect_vector(g.dim())?;
        phi.expect_vector(g.dim())?;
        Ok(TransportSystem {
            gamma_vec,
            phi,
            beta: Vec::new(),
            gamma: Vec::new(),
            rhs: Vec::new(),
            cond: Field::constant(g, 1.0),
            mask,
        })
    }
}

/// β_l·∇μ + γ_l μ = −k² r*_l for every target, solved pointwise for (Γ, Φ).
///
/// With more targets than dimensions the β-matrix is inverted in the least-squares sense.
pub fn build_transport(vs: &[Field], rhs_stars: &[Field], k: f64, valid: &Mask, cond_cap: f64) -> Result<TransportSystem> {
    let first = vs.first().ok_or_else(|| contract("no eliminated combinations"))?;
    let g = *first.grid();
    let n = g.dim();
    if vs.len() < n {
        return Err(Error::TooFewSolutions { needed: n, got: vs.len() });
    }
    if rhs_stars.len() != vs.len() {
        return Err(contract("one right-hand side per combination"));
    }
    for v in vs {
        g.check_same(v.grid())?;
        v.expect_vector(2 * n)?;
    }
    g.check_same(valid.grid())?;
    let m = vs.len();
    let mut beta = vec![Field::zeros(g, Rank::Vector(n)); m];
    let mut gam = vec![Field::zeros(g, Rank::Scalar); m];
    for l in 0..m {
        for p in 0..g.len() {
            let v = vs[l].at(p);
            beta[l].at_mut(p).copy_from_slice(&v[..n]);
            gam[l].values_mut()[p] = v[n..].iter().sum();
        }
    }
    let per: Vec<Option<(Vec<f64>, Vec<f64>, f64)>> = (0..g.len())
        .into_par_iter()
        .map(|p| {
            let a = DMatrix::from_fn(m, n, |r, c| beta[r].at(p)[c]);
            let sv = a.clone().svd(true, true);
            let smax = sv.singular_values.max();
            let smin = sv.singular_values.min();
            let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
            if !valid.get(p) || !(cond <= cond_cap) {
                return Some((Vec::new(), Vec::new(), cond));
            }
            let gv = nalgebra::DVector::from_fn(m, |r, _| gam[r].get(p));
            let rv = nalgebra::DVector::from_fn(m, |r, _| -k * k * rhs_stars[r].get(p));
            let gs = sv.solve(&gv, 0.0).ok()?;
            let ps = sv.solve(&rv, 0.0).ok()?;
            Some((gs.iter().copied().collect(), ps.iter().copied().collect(), cond))
        })
        .collect();
    let mut gamma_vec = Field::zeros(g, Rank::Vector(n));
    let mut phi = Field::zeros(g, Rank::Vector(n));
    let mut cond = Field::zeros(g, Rank::Scalar);
    let mut flags = vec![false; g.len()];
    for (p, r) in per.into_iter().enumerate() {
        match r {
            Some((gs, ps, c)) => {
                cond.values_mut()[p] = if c.is_finite() { c } else { f64::MAX };
                if gs.len() == n && gs.iter().chain(&ps).all(|v| v.is_finite()) {
                    gamma_vec.at_mut(p).copy_from_slice(&gs);
                    phi.at_mut(p).copy_from_slice(&ps);
                    flags[p] = true;
                }
            }
            None => cond.values_mut()[p] = f64::MAX,
        }
    }
    Ok(TransportSystem { gamma_vec, phi, beta, gamma: gam, rhs: rhs_stars.to_vec(), cond, mask: Mask::new(g, flags)? })
}

/// Dirichlet values of μ.
#[derive(Clone, Debug, PartialEq)]
pub enum BoundaryMu {
    Constant(f64),
    /// Full-grid scalar field of which boundary entries are used.
    Field(Field),
}

impl BoundaryMu {
    pub fn at(&self, p: usize) -> f64 {
        match self {
            BoundaryMu::Constant(c) => *c,
            BoundaryMu::Field(f) => f.get(p),
        }
    }

    fn check(&self, g: &Grid) -> Result<()> {
        match self {
            BoundaryMu::Constant(c) if *c > 0.0 => Ok(()),
            BoundaryMu::Constant(c) => Err(Error::NonPositive { what: "boundary mu", min: *c }),
            BoundaryMu::Field(f) => {
                g.check_same(f.grid())?;
                f.expect_scalar()
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryMode {
    LeastSquares,
    Ray,
}

impl std::str::FromStr for RecoveryMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ls" | "least_squares" => Ok(RecoveryMode::LeastSquares),
            "ray" => Ok(RecoveryMode::Ray),
            _ => Err(Error::InvalidArgument(format!("unknown recovery mode {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RecoveryOptions {
    pub mode: RecoveryMode,
    /// Weight of the Laplacian rows at points outside the mask.
    pub reg_weight: f64,
    /// Also run the other mode and report the disagreement.
    pub cross_check: bool,
}

impl Default for RecoveryOptions {
    fn default() -> Self {
        RecoveryOptions { mode: RecoveryMode::LeastSquares, reg_weight: 1e-2, cross_check: false }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MuRecovery {
    pub mu: Field,
    /// Points where μ is backed by transport data reachable from the boundary.
    pub mask: Mask,
    /// Mask points in components not connected to the boundary.
    pub unreachable: Mask,
    /// Points where the recovered value is not positive.
    pub nonpositive: Mask,
    /// |μ_ls − μ_ray| where both modes produced a value.
    pub disagreement: Option<Field>,
}

/// Edge-graph components of the mask; a component is reachable when it holds
/// or touches a boundary point.
fn reachable(mask: &Mask) -> Mask {
    let g = *mask.grid();
    let mut seen = vec![false; g.len()];
    let mut reach = vec![false; g.len()];
    for start in 0..g.len() {
        if seen[start] || !mask.get(start) {
            continue;
        }
        let mut comp = Vec::new();
        let mut stack = vec![start];
        seen[start] = true;
        let mut touches = false;
        while let Some(p) = stack.pop() {
            comp.push(p);
            let idx = g.multi_index(p);
            if g.is_boundary(p) {
                touches = true;
            }
            for a in 0..g.dim() {
                let s = g.stride(a);
                if idx[a] > 0 {
                    let q = p - s;
                    touches |= g.is_boundary(q);
                    if mask.get(q) && !seen[q] {
                        seen[q] = true;
                        stack.push(q);
                    }
                }
                if idx[a] + 1 < g.extents()[a] {
                    let q = p + s;
                    touches |= g.is_boundary(q);
                    if mask.get(q) && !seen[q] {
                        seen[q] = true;
                        stack.push(q);
                    }
                }
            }
        }
        if touches {
            for p in comp {
                reach[p] = true;
            }
        }
    }
    Mask::new(g, reach).expect("same grid")
}

/// Global least squares: trapezoidal edge equations on masked edges, Dirichlet
/// values on the boundary, weak Laplacian rows elsewhere.
fn recover_ls(sys: &TransportSystem, bmu: &BoundaryMu, reg: f64) -> Result<Field> {
    let g = *sys.grid();
    let d = g.dim();
    let mut col = vec![usize::MAX; g.len()];
    let mut nunk = 0;
    for p in 0..g.len() {
        if !g.is_boundary(p) {
            col[p] = nunk;
            nunk += 1;
        }
    }
    let mut trips: Vec<Triplet<usize, usize, f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    let push_row = |entries: &[(usize, f64)], b: f64, trips: &mut Vec<Triplet<usize, usize, f64>>, rhs: &mut Vec<f64>| {
        if entries.iter().all(|&(p, _)| col[p] == usize::MAX) {
            return;
        }
        let r = rhs.len();
        let mut b = b;
        for &(p, w) in entries {
            if col[p] == usize::MAX {
                b -= w * bmu.at(p);
            } else {
                trips.push(Triplet::new(r, col[p], w));
            }
        }
        rhs.push(b);
    };
    let m = &sys.mask;
    for p in 0..g.len() {
        let idx = g.multi_index(p);
        for a in 0..d {
            if idx[a] + 1 >= g.extents()[a] {
                continue;
            }
            let q = p + g.stride(a);
            let h = g.spacing()[a];
            let (gp, gq, fp, fq) = match (m.get(p), m.get(q)) {
                (true, true) => (sys.gamma_vec.at(p)[a], sys.gamma_vec.at(q)[a], sys.phi.at(p)[a], sys.phi.at(q)[a]),
                (true, false) if g.is_boundary(q) => {
                    let (gg, ff) = (sys.gamma_vec.at(p)[a], sys.phi.at(p)[a]);
                    (gg, gg, ff, ff)
                }
                (false, true) if g.is_boundary(p) => {
                    let (gg, ff) = (sys.gamma_vec.at(q)[a], sys.phi.at(q)[a]);
                    (gg, gg, ff, ff)
                }
                _ => continue,
            };
            // (μ_q − μ_p)/h + (Γ_p μ_p + Γ_q μ_q)/2 = (Φ_p + Φ_q)/2
            push_row(&[(p, -1.0 / h + 0.5 * gp), (q, 1.0 / h + 0.5 * gq)], 0.5 * (fp + fq), &mut trips, &mut rhs);
        }
        if !g.is_boundary(p) && !m.get(p) {
            let mut entries = vec![(p, 0.0)];
            let hmin = g.min_spacing();
            for a in 0..d {
                let h = g.spacing()[a];
                let w = reg * hmin / (h * h);
                entries[0].1 -= 2.0 * w;
                entries.push((p - g.stride(a), w));
                entries.push((p + g.stride(a), w));
            }
            push_row(&entries, 0.0, &mut trips, &mut rhs);
        }
    }
    let nrows = rhs.len();
    if nrows < nunk {
        return Err(Error::Factorization(format!("{nrows} equations for {nunk} unknowns")));
    }
    let a = SparseColMat::try_new_from_triplets(nrows, nunk, &trips).map_err(|e| Error::Factorization(format!("{e:?}")))?;
    let qr = a.sp_qr().map_err(|e| Error::Factorization(format!("{e:?}")))?;
    let b = Mat::<f64>::from_fn(nrows, 1, |i, _| rhs[i]);
    let x = qr.solve_lstsq(&b);
    let mut mu = Field::zeros(g, Rank::Scalar);
    for p in 0..g.len() {
        mu.values_mut()[p] = if col[p] == usize::MAX { bmu.at(p) } else { x[(col[p], 0)] };
    }
    if !mu.is_finite() {
        return Err(Error::Factorization("least-squares solution not finite".into()));
    }
    Ok(mu)
}

/// Multilinear interpolation of all channels of `f` at physical point `x`.
pub fn interpolate(f: &Field, x: &[f64], out: &mut [f64]) {
    let g = f.grid();
    let d = g.dim();
    let mut base = [0usize; 3];
    let mut frac = [0.0; 3];
    for a in 0..d {
        let t = (x[a] - g.origin()[a]) / g.spacing()[a];
        let n = g.extents()[a];
        let i = (t.floor().max(0.0) as usize).min(n - 2);
        base[a] = i;
        frac[a] = (t - i as f64).clamp(0.0, 1.0);
    }
    out.fill(0.0);
    for corner in 0..(1usize << d) {
        let mut w = 1.0;
        let mut idx = [0usize; 3];
        for a in 0..d {
            let bit = (corner >> a) & 1;
            idx[a] = base[a] + bit;
            w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
        }
        if w == 0.0 {
            continue;
        }
        let v = f.at(g.index(&idx));
        for (o, vv) in out.iter_mut().zip(v) {
            *o += w * vv;
        }
    }
}

/// Integrate ∇μ + Γμ = Φ along the segment x0 → x by variation of constants:
/// μ(x) = e^{−A(1)} (μ₀ + ∫₀¹ e^{A(s)} Φ(ψ(s))·ψ′ ds), A(t) = ∫₀ᵗ Γ(ψ)·ψ′.
///
/// Returns `None` when a sample point along the path leaves the mask.
pub fn integrate_ray(sys: &TransportSystem, mu0: f64, x0: &[f64], x: &[f64]) -> Option<f64> {
    let g = *sys.grid();
    let d = g.dim();
    let dir: Vec<f64> = (0..d).map(|a| x[a] - x0[a]).collect();
    let len = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    if len == 0.0 {
        return Some(mu0);
    }
    let step = 0.5 * g.min_spacing();
    let nsteps = ((len / step).ceil() as usize).max(1);
    let mut a_vals = Vec::with_capacity(nsteps + 1);
    let mut b_vals = Vec::with_capacity(nsteps + 1);
    let mut gbuf = vec![0.0; d];
    let mut pbuf = vec![0.0; d];
    let mut pt = [0.0; 3];
    for i in 0..=nsteps {
        let t = i as f64 / nsteps as f64;
        for a in 0..d {
            pt[a] = x0[a] + t * dir[a];
        }
        if !sys.mask.get(g.nearest(&pt[..d])) {
            return None;
        }
        interpolate(&sys.gamma_vec, &pt[..d], &mut gbuf);
        interpolate(&sys.phi, &pt[..d], &mut pbuf);
        a_vals.push((0..d).map(|a| gbuf[a] * dir[a]).sum::<f64>());
        b_vals.push((0..d).map(|a| pbuf[a] * dir[a]).sum::<f64>());
    }
    let dt = 1.0 / nsteps as f64;
    let mut big_a = vec![0.0; nsteps + 1];
    for i in 1..=nsteps {
        big_a[i] = big_a[i - 1] + 0.5 * dt * (a_vals[i - 1] + a_vals[i]);
    }
    let mut integral = 0.0;
    for i in 1..=nsteps {
        integral += 0.5 * dt * (big_a[i - 1].exp() * b_vals[i - 1] + big_a[i].exp() * b_vals[i]);
    }
    let mu = (-big_a[nsteps]).exp() * (mu0 + integral);
    mu.is_finite().then_some(mu)
}

/// Boundary hits of the axis and diagonal lines through `x`.
fn ray_origins(g: &Grid, x: &[f64]) -> Vec<[f64; 3]> {
    let d = g.dim();
    let lo = g.origin();
    let hi = g.upper();
    let mut dirs: Vec<[f64; 3]> = Vec::new();
    for a in 0..d {
        for s in [-1.0, 1.0] {
            let mut v = [0.0; 3];
            v[a] = s;
            dirs.push(v);
        }
    }
    for a in 0..d {
        for b in a + 1..d {
            for (sa, sb) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                let mut v = [0.0; 3];
                v[a] = sa;
                v[b] = sb;
                dirs.push(v);
            }
        }
    }
    dirs.iter()
        .map(|v| {
            let mut t = f64::INFINITY;
            for a in 0..d {
                if v[a] > 0.0 {
                    t = t.min((hi[a] - x[a]) / v[a]);
                } else if v[a] < 0.0 {
                    t = t.min((lo[a] - x[a]) / v[a]);
                }
            }
            let mut o = [0.0; 3];
            for a in 0..d {
                o[a] = x[a] + t * v[a];
            }
            o
        })
        .collect()
}

fn boundary_value_at(bmu: &BoundaryMu, x: &[f64]) -> f64 {
    match bmu {
        BoundaryMu::Constant(c) => *c,
        BoundaryMu::Field(f) => {
            let mut o = [0.0];
            interpolate(f, x, &mut o);
            o[0]
        }
    }
}

/// Ray sweeps from boundary hits, then from already recovered points, averaging
/// all successful paths per point.
fn recover_ray(sys: &TransportSystem, bmu: &BoundaryMu) -> (Field, Mask) {
    let g = *sys.grid();
    let d = g.dim();
    let mut mu = Field::zeros(g, Rank::Scalar);
    let mut done = vec![false; g.len()];
    for p in g.boundary_points() {
        mu.values_mut()[p] = bmu.at(p);
        done[p] = true;
    }
    let targets: Vec<usize> = (0..g.len()).filter(|&p| !g.is_boundary(p) && sys.mask.get(p)).collect();
    let first: Vec<Option<f64>> = targets
        .par_iter()
        .map(|&p| {
            let x = g.coords(p);
            let mut acc = 0.0;
            let mut cnt = 0usize;
            for o in ray_origins(&g, &x[..d]) {
                let m0 = boundary_value_at(bmu, &o[..d]);
                if let Some(v) = integrate_ray(sys, m0, &o[..d], &x[..d]) {
                    acc += v;
                    cnt += 1;
                }
            }
            (cnt > 0).then(|| acc / cnt as f64)
        })
        .collect();
    let mut pending = Vec::new();
    for (&p, v) in targets.iter().zip(first) {
        match v {
            Some(v) => {
                mu.values_mut()[p] = v;
                done[p] = true;
            }
            None => pending.push(p),
        }
    }
    // chain from recovered points along axis/diagonal directions
    loop {
        let mut progress = Vec::new();
        for &p in &pending {
            let idx = g.multi_index(p);
            let x = g.coords(p);
            let mut acc = 0.0;
            let mut cnt = 0usize;
            let nb: Vec<[i64; 3]> = neighbour_offsets(d);
            for off in nb {
                let mut j = 1i64;
                loop {
                    let mut qi = [0usize; 3];
                    let mut inside = true;
                    for a in 0..d {
                        let v = idx[a] as i64 + j * off[a];
                        if v < 0 || v >= g.extents()[a] as i64 {
                            inside = false;
                        }
                        qi[a] = v.max(0) as usize;
                    }
                    if !inside {
                        break;
                    }
                    let q = g.index(&qi);
                    if done[q] && !g.is_boundary(q) {
                        let xq = g.coords(q);
                        if let Some(v) = integrate_ray(sys, mu.get(q), &xq[..d], &x[..d]) {
                            acc += v;
                            cnt += 1;
                        }
                        break;
                    }
                    if !sys.mask.get(q) {
                        break;
                    }
                    j += 1;
                }
            }
            if cnt > 0 {
                progress.push((p, acc / cnt as f64));
            }
        }
        if progress.is_empty() {
            break;
        }
        for (p, v) in &progress {
            mu.values_mut()[*p] = *v;
            done[*p] = true;
        }
        pending.retain(|p| !done[*p]);
    }
    let flags = (0..g.len()).map(|p| done[p] && !g.is_boundary(p)).collect();
    (mu, Mask::new(g, flags).expect("same grid"))
}

fn neighbour_offsets(d: usize) -> Vec<[i64; 3]> {
    let mut out = Vec::new();
    let r = |a: usize| if a < d { -1..=1 } else { 0..=0 };
    for i in r(0) {
        for j in r(1) {
            for k in r(2) {
                if (i, j, k) != (0, 0, 0) {
                    out.push([i, j, k]);
                }
            }
        }
    }
    out
}

pub fn recover_global(sys: &TransportSystem, bmu: &BoundaryMu, opts: &RecoveryOptions) -> Result<MuRecovery> {
    let g = *sys.grid();
    bmu.check(&g)?;
    let reach = reachable(&sys.mask);
    let unreachable = sys.mask.and(&reach.not());
    let interior = Mask::interior(g);
    let run = |mode: RecoveryMode| -> Result<(Field, Mask)> {
        match mode {
            RecoveryMode::LeastSquares => {
                let mu = recover_ls(sys, bmu, opts.reg_weight)?;
                Ok((mu, sys.mask.and(&reach).and(&interior)))
            }
            RecoveryMode::Ray => {
                let (mu, m) = recover_ray(sys, bmu);
                Ok((mu, m))
            }
        }
    };
    let (mu, mut mask) = run(opts.mode)?;
    let disagreement = if opts.cross_check {
        let other = match opts.mode {
            RecoveryMode::LeastSquares => RecoveryMode::Ray,
            RecoveryMode::Ray => RecoveryMode::LeastSquares,
        };
        let (mu2, m2) = run(other)?;
        let both = mask.and(&m2);
        let vals = (0..g.len())
            .map(|p| if both.get(p) { (mu.get(p) - mu2.get(p)).abs() } else { 0.0 })
            .collect();
        Some(Field::scalar(g, vals)?)
    } else {
        None
    };
    let nonpos: Vec<bool> = (0..g.len()).map(|p| mask.get(p) && !(mu.get(p) > 0.0)).collect();
    let nonpositive = Mask::new(g, nonpos)?;
    mask = mask.and(&nonpositive.not());
    Ok(MuRecovery { mu, mask, unreachable, nonpositive, disagreement })
}
