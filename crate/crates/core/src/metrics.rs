//! Error summaries of recovered fields against a reference.

use serde::Serialize;

use crate::error::Result;
use crate::grid::{Field, Mask};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorReport {
    pub sup_abs: f64,
    pub sup_rel: f64,
    pub mean_abs: f64,
    pub mean_rel: f64,
    pub points: usize,
    /// Fraction of interior points in the mask.
    pub coverage: f64,
    /// Per axis and grid index: largest relative error over mask points in that slice.
    pub profiles: Vec<Vec<Option<f64>>>,
}

/// Errors of a scalar field on `mask`. Relative errors divide by |truth|,
/// falling back to the absolute error where the truth is zero.
pub fn metrics(recovered: &Field, truth: &Field, mask: &Mask) -> Result<ErrorReport> {
    let g = *truth.grid();
    g.check_same(recovered.grid())?;
    g.check_same(mask.grid())?;
    recovered.expect_scalar()?;
    truth.expect_scalar()?;
    let mut r = ErrorReport {
        sup_abs: 0.0,
        sup_rel: 0.0,
        mean_abs: 0.0,
        mean_rel: 0.0,
        points: 0,
        coverage: mask.interior_coverage(),
        profiles: g.extents().iter().map(|&n| vec![None; n]).collect(),
    };
    for p in 0..g.len() {
        if !mask.get(p) {
            continue;
        }
        let t = truth.get(p);
        let abs = (recovered.get(p) - t).abs();
        let rel = if t == 0.0 { abs } else { abs / t.abs() };
        r.sup_abs = r.sup_abs.max(abs);
        r.sup_rel = r.sup_rel.max(rel);
        r.mean_abs += abs;
        r.mean_rel += rel;
        r.points += 1;
        let idx = g.multi_index(p);
        for (a, prof) in r.profiles.iter_mut().enumerate() {
            let slot = &mut prof[idx[a]];
            *slot = Some(slot.map_or(rel, |v| v.max(rel)));
        }
    }
    if r.points > 0 {
        r.mean_abs /= r.points as f64;
        r.mean_rel /= r.points as f64;
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    #[test]
    fn exact_recovery_has_zero_error() {
        let g = Grid::unit_box(2, 9).unwrap();
        let t = Field::scalar_fn(g, |x| 1.0 + x[0]);
        let m = Mask::interior(g);
        let r = metrics(&t, &t, &m).unwrap();
        assert_eq!((r.sup_abs, r.sup_rel, r.mean_abs), (0.0, 0.0, 0.0));
        assert_eq!(r.coverage, 1.0);
        assert_eq!(r.points, 49);
        assert_eq!(r.profiles[0][0], None);
        assert_eq!(r.profiles[0][1], Some(0.0));
    }

    #[test]
    fn constant_offset() {
        let g = Grid::unit_box(2, 9).unwrap();
        let t = Field::scalar_fn(g, |x| 1.0 + x[1]);
        let r = metrics(&t.map(|v| v + 0.01), &t, &Mask::filled(g, true)).unwrap();
        assert!((r.sup_abs - 0.01).abs() < 1e-15);
        assert!(r.sup_rel <= 0.01 + 1e-15);
    }

    #[test]
    fn grid_mismatch_is_error() {
        let a = Field::constant(Grid::unit_box(2, 9).unwrap(), 1.0);
        let b = Field::constant(Grid::unit_box(2, 11).unwrap(), 1.0);
        assert!(metrics(&a, &b, &Mask::filled(*b.grid(), true)).is_err());
    }
}
