//! Periodic ∂̄ inverse on a padded plane and a restarted complex GMRES.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

type C = Complex64;

/// Smallest 5-smooth length ≥ n + 2·ceil(frac·(n−1)).
pub(crate) fn fft_size(n: usize, frac: f64) -> usize {
    let target = n + 2 * (frac * (n - 1) as f64).ceil() as usize;
    (target..)
        .find(|&m| {
            let mut m = m;
            for p in [2, 3, 5] {
                while m % p == 0 {
                    m /= p;
                }
            }
            m == 1
        })
        .expect("5-smooth numbers are unbounded")
}

/// C^∞ cutoff: 1 for t ≤ 0, 0 for t ≥ 1.
pub(crate) fn cutoff(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    if t >= 1.0 {
        return 0.0;
    }
    let f = |u: f64| if u <= 0.0 { 0.0 } else { (-1.0 / u).exp() };
    let a = f(1.0 - t);
    a / (a + f(t))
}

/// ∂_w̄ inverse for w = x_a + i·s·x_b on an na×nb periodic box (row-major, b fastest).
///
/// The zero mode is handled by w̄ itself, so the result T f satisfies ∂_w̄ T f = f
/// for any trigonometric polynomial f, and T0 f = T f − (T f)(anchor).
pub(crate) struct DbarInverse {
    na: usize,
    nb: usize,
    row: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    inv_symbol: Vec<C>,
    wbar: Vec<C>,
    anchor: usize,
}

impl DbarInverse {
    pub fn new(na: usize, nb: usize, ha: f64, hb: f64, s: f64, anchor: usize) -> Self {
        let mut planner = FftPlanner::new();
        let freq = |k: usize, n: usize, h: f64| {
            let k = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
            2.0 * std::f64::consts::PI * k / (n as f64 * h)
        };
        let mut inv_symbol = vec![C::new(0.0, 0.0); na * nb];
        for ka in 0..na {
            for kb in 0..nb {
                if ka == 0 && kb == 0 {
                    continue;
                }
                let sym = C::new(-0.5 * s * freq(kb, nb, hb), 0.5 * freq(ka, na, ha));
                inv_symbol[ka * nb + kb] = 1.0 / sym / (na * nb) as f64;
            }
        }
        let (ia, ib) = (anchor / nb, anchor % nb);
        let wbar = (0..na * nb)
            .map(|q| C::new(((q / nb) as f64 - ia as f64) * ha, -s * ((q % nb) as f64 - ib as f64) * hb))
            .collect();
        DbarInverse {
            na,
            nb,
            row: planner.plan_fft_forward(nb),
            row_inv: planner.plan_fft_inverse(nb),
            col: planner.plan_fft_forward(na),
            col_inv: planner.plan_fft_inverse(na),
            inv_symbol,
            wbar,
            anchor,
        }
    }

    /// w̄ − w̄(anchor) at every box point.
    pub fn wbar(&self) -> &[C] {
        &self.wbar
    }

    fn fft2(&self, data: &mut [C], forward: bool) {
        let (row, col) = if forward { (&self.row, &self.col) } else { (&self.row_inv, &self.col_inv) };
        row.process(data);
        let mut buf = vec![C::new(0.0, 0.0); self.na];
        for kb in 0..self.nb {
            for ka in 0..self.na {
                buf[ka] = data[ka * self.nb + kb];
            }
            col.process(&mut buf);
            for ka in 0..self.na {
                data[ka * self.nb + kb] = buf[ka];
            }
        }
    }

    /// In place f ← T0 f.
    pub fn apply(&self, f: &mut [C]) {
        let mean = f.iter().sum::<C>() / (self.na * self.nb) as f64;
        self.fft2(f, true);
        for (v, m) in f.iter_mut().zip(&self.inv_symbol) {
            *v *= m;
        }
        self.fft2(f, false);
        for (v, w) in f.iter_mut().zip(&self.wbar) {
            *v += mean * w;
        }
        let at = f[self.anchor];
        for v in f.iter_mut() {
            *v -= at;
        }
    }
}

fn dot(a: &[C], b: &[C]) -> C {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub(crate) struct GmresOutcome {
    pub x: Vec<C>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Restarted GMRES(m) with modified Gram–Schmidt and Givens rotations.
pub(crate) fn gmres(
    apply: impl Fn(&[C], &mut [C]),
    b: &[C],
    x0: Vec<C>,
    restart: usize,
    tol: f64,
    max_iter: usize,
) -> GmresOutcome {
    let n = b.len();
    let bnorm = norm(b).max(f64::MIN_POSITIVE);
    let mut x = x0;
    let mut tmp = vec![C::new(0.0, 0.0); n];
    let mut iterations = 0;
    loop {
        apply(&x, &mut tmp);
        let r: Vec<C> = b.iter().zip(&tmp).map(|(bi, ai)| bi - ai).collect();
        let beta = norm(&r);
        if beta / bnorm <= tol || iterations >= max_iter {
            return GmresOutcome { x, iterations, relative_residual: beta / bnorm };
        }
        let mut basis: Vec<Vec<C>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut h = vec![vec![C::new(0.0, 0.0); restart]; restart + 1];
        let mut cs = vec![C::new(0.0, 0.0); restart];
        let mut sn = vec![C::new(0.0, 0.0); restart];
        let mut g = vec![C::new(0.0, 0.0); restart + 1];
        g[0] = C::new(beta, 0.0);
        let mut used = 0;
        for j in 0..restart {
            let mut w = vec![C::new(0.0, 0.0); n];
            apply(&basis[j], &mut w);
            for (i, v) in basis.iter().enumerate() {
                let hij = dot(v, &w);
                h[i][j] = hij;
                for (wk, vk) in w.iter_mut().zip(v) {
                    *wk -= hij * vk;
                }
            }
            let wn = norm(&w);
            h[j + 1][j] = C::new(wn, 0.0);
            for i in 0..j {
                let t = cs[i].conj() * h[i][j] + sn[i].conj() * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let (a, bb) = (h[j][j], h[j + 1][j]);
            let den = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            if den == 0.0 {
                cs[j] = C::new(1.0, 0.0);
                sn[j] = C::new(0.0, 0.0);
            } else {
                cs[j] = a / den;
                sn[j] = bb / den;
            }
            h[j][j] = cs[j].conj() * a + sn[j].conj() * bb;
            h[j + 1][j] = C::new(0.0, 0.0);
            g[j + 1] = -sn[j] * g[j];
            g[j] = cs[j].conj() * g[j];
            used = j + 1;
            iterations += 1;
            if g[j + 1].norm() / bnorm <= tol || wn == 0.0 || iterations >= max_iter {
                break;
            }
            basis.push(w.iter().map(|v| v / wn).collect());
        }
        // back substitution on the upper triangular block
        let mut y = vec![C::new(0.0, 0.0); used];
        for i in (0..used).rev() {
            let mut acc = g[i];
            for k in i + 1..used {
                acc -= h[i][k] * y[k];
            }
            y[i] = acc / h[i][i];
        }
        for (k, yk) in y.iter().enumerate() {
            for (xi, vi) in x.iter_mut().zip(&basis[k]) {
                *xi += yk * vi;
            }
        }
    }
}
