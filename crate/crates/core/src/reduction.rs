//! Pointwise identity u♯·F + u♭·G + k²u* = 0 built from displacement data.
//!
//! The μ-variant groups the λ-dependent terms into F; the λ-variant groups the
//! derivatives of λ and μ into F. Outer derivatives (of ∇·u, a±b, b_ij) are taken
//! with the same first-derivative stencil as the inner ones.

use serde::{Deserialize, Serialize};

use crate::calculus::d1;
use crate::error::{contract, Result};
use crate::grid::{Field, Grid, Rank};
use crate::params::LameParameters;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Mu,
    Lambda,
}

impl Variant {
    /// Indices of the pairwise distinct entries of u♯.
    pub fn distinct_sharp(&self, dim: usize) -> &'static [usize] {
        match (self, dim) {
            (Variant::Mu, 2) => &[0, 1, 2],
            (Variant::Mu, _) => &[0, 1, 2, 3],
            (Variant::Lambda, 2) => &[0, 2, 3],
            (Variant::Lambda, _) => &[0, 3, 4, 5],
        }
    }

    /// Number of basis solutions needed for elimination.
    pub fn basis_count(&self, dim: usize) -> usize {
        self.distinct_sharp(dim).len()
    }

    /// Number of independent targets the variant consumes.
    pub fn target_count(&self, dim: usize) -> usize {
        match self {
            Variant::Mu => dim,
            Variant::Lambda => 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Mu => "mu",
            Variant::Lambda => "lambda",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mu" => Ok(Variant::Mu),
            "lambda" => Ok(Variant::Lambda),
            _ => Err(crate::Error::InvalidArgument(format!("unknown variant {s:?}"))),
        }
    }
}

/// Per-solution (u♯, u♭, u*) triples.
#[derive(Clone, Debug, PartialEq)]
pub struct ReductionBundle {
    pub variant: Variant,
    pub dim: usize,
    pub sharp: Vec<Field>,
    pub flat: Vec<Field>,
    pub star: Vec<Field>,
    pub source_labels: Vec<String>,
}

impl ReductionBundle {
    pub fn len(&self) -> usize {
        self.sharp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sharp.is_empty()
    }

    pub fn grid(&self) -> &Grid {
        self.star[0].grid()
    }
}

/// Derivative data shared by both variants.
struct Pieces {
    d: Vec<f64>,
    /// ∂_i(∇·u)
    dd: Vec<Vec<f64>>,
    /// 2D: [a+b, a−b]; 3D: [b₂₃, b₁₃, b₁₂]
    bl: Vec<Vec<f64>>,
    /// ∂_l of the entries of `bl` (∂₁(a+b), ∂₂(a−b) in 2D)
    dbl: Vec<Vec<f64>>,
    star: Vec<f64>,
}

fn pieces(u: &Field) -> Result<Pieces> {
    let g = *u.grid();
    let n = g.dim();
    u.expect_vector(n)?;
    u.expect_real()?;
    let comps: Vec<Vec<f64>> = (0..n).map(|i| u.channel(i)).collect();
    // j[i][a] = ∂_a u_i
    let j: Vec<Vec<Vec<f64>>> = comps.iter().map(|ui| (0..n).map(|a| d1(&g, ui, a)).collect()).collect();
    let len = g.len();
    let sum = |f: &dyn Fn(usize) -> f64| -> Vec<f64> { (0..len).map(f).collect() };
    let d = sum(&|p| (0..n).map(|a| j[a][a][p]).sum());
    let dd: Vec<Vec<f64>> = (0..n).map(|i| d1(&g, &d, i)).collect();
    let star = sum(&|p| (0..n).map(|i| comps[i][p]).sum());
    let bl: Vec<Vec<f64>> = if n == 2 {
        vec![
            sum(&|p| j[0][1][p] + j[1][0][p] + j[0][0][p] - j[1][1][p]),
            sum(&|p| j[0][1][p] + j[1][0][p] - j[0][0][p] + j[1][1][p]),
        ]
    } else {
        (0..3)
            .map(|l| {
                let (i, k) = match l {
                    0 => (1, 2),
                    1 => (0, 2),
                    _ => (0, 1),
                };
                // b = ∂_l u_l − ∂_i u_i − ∂_k u_k + ∂_i u_l + ∂_l u_i + ∂_k u_l + ∂_l u_k
                sum(&|p| j[l][l][p] - j[i][i][p] - j[k][k][p] + j[l][i][p] + j[i][l][p] + j[l][k][p] + j[k][l][p])
            })
            .collect()
    };
    let dbl = bl.iter().enumerate().map(|(l, b)| d1(&g, b, l)).collect();
    Ok(Pieces { d, dd, bl, dbl, star })
}

fn pack(grid: Grid, cols: &[&Vec<f64>]) -> Field {
    let mut f = Field::zeros(grid, Rank::Vector(cols.len()));
    for (c, col) in cols.iter().enumerate() {
        f.set_channel(c, col);
    }
    f
}

fn reduce_one(variant: Variant, u: &Field) -> Result<(Field, Field, Field)> {
    let g = *u.grid();
    let n = g.dim();
    let pc = pieces(u)?;
    let dref = &pc.d;
    let (sharp, flat) = match variant {
        Variant::Mu => {
            let mut s: Vec<&Vec<f64>> = pc.dd.iter().collect();
            s.extend(std::iter::repeat(dref).take(n));
            let mut f: Vec<&Vec<f64>> = pc.bl.iter().collect();
            f.extend(pc.dbl.iter());
            (pack(g, &s), pack(g, &f))
        }
        Variant::Lambda => {
            let mut s: Vec<&Vec<f64>> = std::iter::repeat(dref).take(n).collect();
            s.extend(pc.bl.iter());
            let mut f: Vec<&Vec<f64>> = pc.dd.iter().collect();
            f.extend(pc.dbl.iter());
            (pack(g, &s), pack(g, &f))
        }
    };
    let star = Field::scalar(g, pc.star)?;
    Ok((sharp, flat, star))
}

fn reduce(variant: Variant, us: &[Field], labels: &[String]) -> Result<ReductionBundle> {
    let first = us.first().ok_or_else(|| contract("no displacement fields"))?;
    let g = *first.grid();
    let mut b = ReductionBundle {
        variant,
        dim: g.dim(),
        sharp: Vec::with_capacity(us.len()),
        flat: Vec::with_capacity(us.len()),
        star: Vec::with_capacity(us.len()),
        source_labels: Vec::with_capacity(us.len()),
    };
    for (j, u) in us.iter().enumerate() {
        g.check_same(u.grid())?;
        let (s, f, st) = reduce_one(variant, u)?;
        b.sharp.push(s);
        b.flat.push(f);
        b.star.push(st);
        b.source_labels.push(labels.get(j).cloned().unwrap_or_else(|| format!("u{j}")));
    }
    Ok(b)
}

/// μ-variant triples for each displacement field.
pub fn reduce_mu(us: &[Field], labels: &[String]) -> Result<ReductionBundle> {
    reduce(Variant::Mu, us, labels)
}

/// λ-variant triples for each displacement field.
pub fn reduce_lambda(us: &[Field], labels: &[String]) -> Result<ReductionBundle> {
    reduce(Variant::Lambda, us, labels)
}

pub fn reduce_variant(variant: Variant, us: &[Field], labels: &[String]) -> Result<ReductionBundle> {
    reduce(variant, us, labels)
}

/// Per-point F and G coefficient vectors built from known parameters (test oracle).
pub fn coefficient_vectors(variant: Variant, params: &LameParameters) -> (Field, Field) {
    let g = *params.grid();
    let n = g.dim();
    let lam = params.lambda.values();
    let mu = params.mu.values();
    let lpm: Vec<f64> = lam.iter().zip(mu).map(|(a, b)| a + b).collect();
    let dlpm: Vec<Vec<f64>> = (0..n).map(|a| d1(&g, &lpm, a)).collect();
    let dmu: Vec<Vec<f64>> = (0..n).map(|a| d1(&g, mu, a)).collect();
    let mu_v = mu.to_vec();
    let (fc, gc): (Vec<&Vec<f64>>, Vec<&Vec<f64>>) = match variant {
        Variant::Mu => {
            let mut f: Vec<&Vec<f64>> = std::iter::repeat(&lpm).take(n).collect();
            f.extend(dlpm.iter());
            let mut gg: Vec<&Vec<f64>> = dmu.iter().collect();
            gg.extend(std::iter::repeat(&mu_v).take(n));
            (f, gg)
        }
        Variant::Lambda => {
            let mut f: Vec<&Vec<f64>> = dlpm.iter().collect();
            f.extend(dmu.iter());
            let mut gg: Vec<&Vec<f64>> = std::iter::repeat(&lpm).take(n).collect();
            gg.extend(std::iter::repeat(&mu_v).take(n));
            (f, gg)
        }
    };
    (pack(g, &fc), pack(g, &gc))
}

/// u♯·F + u♭·G + k²u* for each solution of the bundle.
pub fn identity_residual(bundle: &ReductionBundle, params: &LameParameters, k: f64) -> Result<Vec<Field>> {
    let g = *bundle.grid();
    g.check_same(params.grid())?;
    if bundle.dim != g.dim() {
        return Err(contract("bundle dimension differs from parameter grid"));
    }
    let (f, gv) = coefficient_vectors(bundle.variant, params);
    let m = 2 * g.dim();
    let mut out = Vec::with_capacity(bundle.len());
    for j in 0..bundle.len() {
        let (s, fl, st) = (&bundle.sharp[j], &bundle.flat[j], &bundle.star[j]);
        if s.components() != m || fl.components() != m {
            return Err(contract("sharp/flat component count"));
        }
        let vals = (0..g.len())
            .map(|p| {
                let a: f64 = s.at(p).iter().zip(f.at(p)).map(|(x, y)| x * y).sum();
                let b: f64 = fl.at(p).iter().zip(gv.at(p)).map(|(x, y)| x * y).sum();
                a + b + k * k * st.get(p)
            })
            .collect();
        out.push(Field::scalar(g, vals)?);
    }
    Ok(out)
}
