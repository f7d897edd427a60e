//! Rectilinear grids, sampled fields and point masks.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

/// Uniform rectilinear grid over an axis-aligned box. Axis 0 varies slowest.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    extents: [usize; 3],
    origin: [f64; 3],
    spacing: [f64; 3],
}

impl Grid {
    pub fn new(extents: &[usize], origin: &[f64], spacing: &[f64]) -> Result<Self> {
        let dim = extents.len();
        if !(2..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in {{2,3}}")));
        }
        if origin.len() != dim || spacing.len() != dim {
            return Err(Error::InvalidGrid("origin/spacing length differs from dimension".into()));
        }
        let mut g = Grid { dim, extents: [1; 3], origin: [0.0; 3], spacing: [1.0; 3] };
        for a in 0..dim {
            if extents[a] < 5 {
                return Err(Error::InvalidGrid(format!("axis {a} has {} points, need >= 5", extents[a])));
            }
            if !(spacing[a] > 0.0) || !spacing[a].is_finite() {
                return Err(Error::InvalidGrid(format!("axis {a} spacing {} not positive", spacing[a])));
            }
            if !origin[a].is_finite() {
                return Err(Error::InvalidGrid(format!("axis {a} origin not finite")));
            }
            g.extents[a] = extents[a];
            g.origin[a] = origin[a];
            g.spacing[a] = spacing[a];
        }
        Ok(g)
    }

    /// `n` points per axis on [0,1]^dim.
    pub fn unit_box(dim: usize, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGrid(format!("{n} points per axis")));
        }
        let h = 1.0 / (n - 1) as f64;
        Grid::new(&vec![n; dim], &vec![0.0; dim], &vec![h; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents[..self.dim]
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin[..self.dim]
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing[..self.dim]
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing().iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Number of grid points.
    pub fn len(&self) -> usize {
        self.extents().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat-index distance between neighbours along `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.extents[axis + 1..self.dim].iter().product()
    }

    pub fn index(&self, idx: &[usize]) -> usize {
        let mut p = 0;
        for a in 0..self.dim {
            p = p * self.extents[a] + idx[a];
        }
        p
    }

    pub fn multi_index(&self, mut p: usize) -> [usize; 3] {
        let mut out = [0; 3];
        for a in (0..self.dim).rev() {
            out[a] = p % self.extents[a];
            p /= self.extents[a];
        }
        out
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.origin[axis] + i as f64 * self.spacing[axis]
    }

    /// Physical coordinates of a point; unused trailing entries are zero.
    pub fn coords(&self, p: usize) -> [f64; 3] {
        let idx = self.multi_index(p);
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = self.coord(a, idx[a]);
        }
        x
    }

    /// Upper corner of the box.
    pub fn upper(&self) -> [f64; 3] {
        let mut u = [0.0; 3];
        for a in 0..self.dim {
            u[a] = self.coord(a, self.extents[a] - 1);
        }
        u
    }

    pub fn is_boundary(&self, p: usize) -> bool {
        let idx = self.multi_index(p);
        (0..self.dim).any(|a| idx[a] == 0 || idx[a] + 1 == self.extents[a])
    }

    pub fn boundary_points(&self) -> Vec<usize> {
        (0..self.len()).filter(|&p| self.is_boundary(p)).collect()
    }

    pub fn interior_points(&self) -> Vec<usize> {
        (0..self.len()).filter(|&p| !self.is_boundary(p)).collect()
    }

    /// Nearest grid point to a physical location (clamped to the box).
    pub fn nearest(&self, x: &[f64]) -> usize {
        let mut idx = [0usize; 3];
        for a in 0..self.dim {
            let t = ((x[a] - self.origin[a]) / self.spacing[a]).round();
            idx[a] = t.clamp(0.0, (self.extents[a] - 1) as f64) as usize;
        }
        self.index(&idx)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let up = self.upper();
        (0..self.dim).all(|a| {
            let tol = 1e-12 * self.spacing[a];
            x[a] >= self.origin[a] - tol && x[a] <= up[a] + tol
        })
    }

    pub fn check_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{:?} vs {:?}", self.extents(), other.extents())))
        }
    }
}

/// Value shape carried at each grid point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rank {
    Scalar,
    Vector(usize),
    Matrix(usize, usize),
}

impl Rank {
    pub fn components(&self) -> usize {
        match *self {
            Rank::Scalar => 1,
            Rank::Vector(n) => n,
            Rank::Matrix(r, c) => r * c,
        }
    }
}

/// Samples of a scalar, vector or matrix quantity over a grid.
///
/// Storage is point-major: for each point the components follow each other, and
/// complex entries are interleaved as (re, im).
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: Grid,
    rank: Rank,
    complex: bool,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Grid, rank: Rank) -> Self {
        let n = grid.len() * rank.components();
        Field { grid, rank, complex: false, values: vec![0.0; n] }
    }

    pub fn zeros_complex(grid: Grid, rank: Rank) -> Self {
        let n = grid.len() * rank.components() * 2;
        Field { grid, rank, complex: true, values: vec![0.0; n] }
    }

    pub fn from_values(grid: Grid, rank: Rank, complex: bool, values: Vec<f64>) -> Result<Self> {
        let want = grid.len() * rank.components() * if complex { 2 } else { 1 };
        if values.len() != want {
            return Err(contract(format!("expected {want} values, got {}", values.len())));
        }
        Ok(Field { grid, rank, complex, values })
    }

    pub fn from_complex(grid: Grid, rank: Rank, values: &[Complex64]) -> Result<Self> {
        let flat = values.iter().flat_map(|z| [z.re, z.im]).collect();
        Field::from_values(grid, rank, true, flat)
    }

    pub fn scalar(grid: Grid, values: Vec<f64>) -> Result<Self> {
        Field::from_values(grid, Rank::Scalar, false, values)
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Field { grid, rank: Rank::Scalar, complex: false, values: vec![c; grid.len()] }
    }

    /// Real field from a closure writing the point's components into `out`.
    pub fn from_fn(grid: Grid, rank: Rank, mut f: impl FnMut(&[f64], &mut [f64])) -> Self {
        let nc = rank.components();
        let mut values = vec![0.0; grid.len() * nc];
        for (p, chunk) in values.chunks_mut(nc).enumerate() {
            let x = grid.coords(p);
            f(&x[..grid.dim()], chunk);
        }
        Field { grid, rank, complex: false, values }
    }

    pub fn scalar_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        Field::from_fn(grid, Rank::Scalar, |x, out| out[0] = f(x))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn rank(&self) -> Rank {
        self.rank
    }

    pub fn components(&self) -> usize {
        self.rank.components()
    }

    pub fn is_complex(&self) -> bool {
        self.complex
    }

    /// Stored reals per point (components, doubled when complex).
    pub fn channels(&self) -> usize {
        self.components() * if self.complex { 2 } else { 1 }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Stored reals at point `p`.
    pub fn at(&self, p: usize) -> &[f64] {
        let c = self.channels();
        &self.values[p * c..(p + 1) * c]
    }

    pub fn at_mut(&mut self, p: usize) -> &mut [f64] {
        let c = self.channels();
        &mut self.values[p * c..(p + 1) * c]
    }

    /// Scalar value of a real scalar field.
    pub fn get(&self, p: usize) -> f64 {
        self.values[p * self.channels()]
    }

    /// Complex value of component `c` at point `p` (imaginary part zero for real fields).
    pub fn get_c(&self, p: usize, c: usize) -> Complex64 {
        if self.complex {
            let k = (p * self.components() + c) * 2;
            Complex64::new(self.values[k], self.values[k + 1])
        } else {
            Complex64::new(self.values[p * self.components() + c], 0.0)
        }
    }

    /// One stored channel as a dense per-point array.
    pub fn channel(&self, ch: usize) -> Vec<f64> {
        let c = self.channels();
        self.values.iter().skip(ch).step_by(c).copied().collect()
    }

    pub fn set_channel(&mut self, ch: usize, data: &[f64]) {
        let c = self.channels();
        for (p, v) in data.iter().enumerate() {
            self.values[p * c + ch] = *v;
        }
    }

    /// Real component `c` as a scalar field (real part for complex fields).
    pub fn component(&self, c: usize) -> Field {
        let ch = if self.complex { 2 * c } else { c };
        Field { grid: self.grid, rank: Rank::Scalar, complex: false, values: self.channel(ch) }
    }

    /// Stack real scalar fields into a vector field.
    pub fn stack(parts: &[Field]) -> Result<Field> {
        let first = parts.first().ok_or_else(|| contract("stack of zero fields"))?;
        let grid = first.grid;
        let n = parts.len();
        let mut out = Field::zeros(grid, Rank::Vector(n));
        for (c, f) in parts.iter().enumerate() {
            grid.check_same(&f.grid)?;
            if f.complex || f.components() != 1 {
                return Err(contract("stack expects real scalar fields"));
            }
            out.set_channel(c, &f.values);
        }
        Ok(out)
    }

    pub fn re(&self) -> Field {
        self.part(0)
    }

    pub fn im(&self) -> Field {
        if !self.complex {
            return Field::zeros(self.grid, self.rank);
        }
        self.part(1)
    }

    fn part(&self, which: usize) -> Field {
        if !self.complex {
            return self.clone();
        }
        let values = self.values.iter().skip(which).step_by(2).copied().collect();
        Field { grid: self.grid, rank: self.rank, complex: false, values }
    }

    pub fn complex_values(&self) -> Vec<Complex64> {
        if self.complex {
            self.values.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect()
        } else {
            self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect()
        }
    }

    pub fn expect_scalar(&self) -> Result<()> {
        if self.components() == 1 {
            Ok(())
        } else {
            Err(contract(format!("expected scalar field, got {:?}", self.rank)))
        }
    }

    pub fn expect_vector(&self, n: usize) -> Result<()> {
        if self.components() == n && !matches!(self.rank, Rank::Matrix(..)) {
            Ok(())
        } else {
            Err(contract(format!("expected {n}-vector field, got {:?}", self.rank)))
        }
    }

    pub fn expect_real(&self) -> Result<()> {
        if self.complex {
            Err(contract("expected a real field"))
        } else {
            Ok(())
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field { values: self.values.iter().map(|&v| f(v)).collect(), ..self.clone() }
    }

    /// Entry-wise linear combination `a*self + b*other`.
    pub fn axpby(&self, a: f64, other: &Field, b: f64) -> Result<Field> {
        self.grid.check_same(&other.grid)?;
        if self.rank != other.rank || self.complex != other.complex {
            return Err(contract("axpby on differently shaped fields"));
        }
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        Ok(Field { values, ..self.clone() })
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Boolean flag per grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    grid: Grid,
    flags: Vec<bool>,
}

impl Mask {
    pub fn new(grid: Grid, flags: Vec<bool>) -> Result<Self> {
        if flags.len() != grid.len() {
            return Err(contract("mask length differs from grid"));
        }
        Ok(Mask { grid, flags })
    }

    pub fn filled(grid: Grid, v: bool) -> Self {
        Mask { grid, flags: vec![v; grid.len()] }
    }

    pub fn interior(grid: Grid) -> Self {
        Mask { grid, flags: (0..grid.len()).map(|p| !grid.is_boundary(p)).collect() }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    pub fn get(&self, p: usize) -> bool {
        self.flags[p]
    }

    pub fn set(&mut self, p: usize, v: bool) {
        self.flags[p] = v;
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    pub fn and(&self, other: &Mask) -> Mask {
        let flags = self.flags.iter().zip(&other.flags).map(|(a, b)| *a && *b).collect();
        Mask { grid: self.grid, flags }
    }

    pub fn or(&self, other: &Mask) -> Mask {
        let flags = self.flags.iter().zip(&other.flags).map(|(a, b)| *a || *b).collect();
        Mask { grid: self.grid, flags }
    }

    pub fn not(&self) -> Mask {
        Mask { grid: self.grid, flags: self.flags.iter().map(|f| !f).collect() }
    }

    /// Fraction of interior points that are set.
    pub fn interior_coverage(&self) -> f64 {
        let interior = self.grid.interior_points();
        let hit = interior.iter().filter(|&&p| self.flags[p]).count();
        hit as f64 / interior.len().max(1) as f64
    }

    pub fn to_field(&self) -> Field {
        let values = self.flags.iter().map(|&f| if f { 1.0 } else { 0.0 }).collect();
        Field { grid: self.grid, rank: Rank::Scalar, complex: false, values }
    }

    pub fn from_field(f: &Field) -> Result<Mask> {
        f.expect_scalar()?;
        Ok(Mask { grid: *f.grid(), flags: f.values().iter().map(|&v| v != 0.0).collect() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trip_3d() {
        let g = Grid::new(&[5, 6, 7], &[0.0; 3], &[0.1, 0.2, 0.3]).unwrap();
        for p in 0..g.len() {
            let i = g.multi_index(p);
            assert_eq!(g.index(&i), p);
        }
        assert_eq!(g.stride(0), 42);
        assert_eq!(g.stride(2), 1);
    }

    #[test]
    fn rejects_small_extent_and_bad_spacing() {
        assert!(Grid::new(&[4, 5], &[0.0, 0.0], &[1.0, 1.0]).is_err());
        assert!(Grid::new(&[5, 5], &[0.0, 0.0], &[0.0, 1.0]).is_err());
        assert!(Grid::new(&[5], &[0.0], &[1.0]).is_err());
    }

    #[test]
    fn boundary_count() {
        let g = Grid::unit_box(2, 7).unwrap();
        assert_eq!(g.boundary_points().len(), 24);
        assert_eq!(g.interior_points().len(), 25);
    }

    #[test]
    fn complex_parts() {
        let g = Grid::unit_box(2, 5).unwrap();
        let z: Vec<_> = (0..g.len()).map(|p| Complex64::new(p as f64, -(p as f64))).collect();
        let f = Field::from_complex(g, Rank::Scalar, &z).unwrap();
        assert_eq!(f.re().get(3), 3.0);
        assert_eq!(f.im().get(3), -3.0);
        assert_eq!(f.get_c(4, 0), Complex64::new(4.0, -4.0));
    }

    #[test]
    fn mask_coverage() {
        let g = Grid::unit_box(2, 5).unwrap();
        let m = Mask::interior(g);
        assert_eq!(m.interior_coverage(), 1.0);
        assert_eq!(m.not().interior_coverage(), 0.0);
        let back = Mask::from_field(&m.to_field()).unwrap();
        assert_eq!(back, m);
    }
}
