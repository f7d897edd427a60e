//! Smoothed pseudorandom perturbations with a prescribed discrete C² size.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::calculus::c2_norm;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NoiseReport {
    pub amplitude: f64,
    pub kernel_width: f64,
    pub seed: u64,
    /// ‖perturbation‖_{C²} / ‖field‖_{C²} per field.
    pub c2_ratios: Vec<f64>,
}

/// Truncated Gaussian smoothing along one axis, renormalized near the ends.
fn smooth_axis(g: &Grid, data: &mut [f64], axis: usize, width: f64) {
    let h = g.spacing()[axis];
    let half = ((4.0 * width / h).ceil() as usize).max(1);
    let w: Vec<f64> = (0..=half).map(|i| (-0.5 * (i as f64 * h / width).powi(2)).exp()).collect();
    let n = g.extents()[axis];
    let s = g.stride(axis);
    let src = data.to_vec();
    for p in 0..g.len() {
        let i = g.multi_index(p)[axis];
        let (mut acc, mut norm) = (src[p] * w[0], w[0]);
        for (o, &wo) in w.iter().enumerate().skip(1) {
            if i >= o {
                acc += wo * src[p - o * s];
                norm += wo;
            }
            if i + o < n {
                acc += wo * src[p + o * s];
                norm += wo;
            }
        }
        data[p] = acc / norm;
    }
}

/// Adds to each field a Gaussian-smoothed white-noise field scaled so that its
/// discrete C² norm is `amplitude` times the field's own.
///
/// Field j draws from ChaCha8 stream j of `seed`, so results do not depend on
/// the number of fields or on threading.
pub fn inject_noise(fields: &[Field], amplitude: f64, kernel_width: f64, seed: u64) -> Result<(Vec<Field>, NoiseReport)> {
    if !(amplitude >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise amplitude must be nonnegative, got {amplitude}")));
    }
    let mut report = NoiseReport { amplitude, kernel_width, seed, c2_ratios: Vec::with_capacity(fields.len()) };
    if amplitude == 0.0 {
        report.c2_ratios = vec![0.0; fields.len()];
        return Ok((fields.to_vec(), report));
    }
    if !(kernel_width > 0.0) {
        return Err(Error::InvalidArgument("noise kernel width must be positive".into()));
    }
    let mut out = Vec::with_capacity(fields.len());
    for (j, f) in fields.iter().enumerate() {
        f.expect_real()?;
        let g = *f.grid();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(j as u64);
        let mut pert = Field::zeros(g, f.rank());
        for v in pert.values_mut() {
            *v = rng.sample(StandardNormal);
        }
        for c in 0..f.components() {
            let mut ch = pert.channel(c);
            for a in 0..g.dim() {
                smooth_axis(&g, &mut ch, a, kernel_width);
            }
            pert.set_channel(c, &ch);
        }
        let target = amplitude * c2_norm(f)?;
        let have = c2_norm(&pert)?;
        let scaled = pert.map(|v| v * target / have);
        report.c2_ratios.push(c2_norm(&scaled)? / c2_norm(f)?);
        out.push(f.axpby(1.0, &scaled, 1.0)?);
    }
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Rank;

    fn field() -> Field {
        let g = Grid::unit_box(2, 33).unwrap();
        Field::from_fn(g, Rank::Vector(2), |x, o| {
            o[0] = (x[0] + x[1]).sin();
            o[1] = x[0] * x[1];
        })
    }

    #[test]
    fn zero_amplitude_is_identity() {
        let f = field();
        let (out, _) = inject_noise(std::slice::from_ref(&f), 0.0, 0.1, 3).unwrap();
        assert_eq!(out[0], f);
    }

    #[test]
    fn negative_amplitude_rejected() {
        assert!(inject_noise(&[field()], -1e-3, 0.1, 3).is_err());
    }

    #[test]
    fn smoothing_preserves_constants() {
        let g = Grid::unit_box(2, 17).unwrap();
        let mut data = vec![2.5; g.len()];
        smooth_axis(&g, &mut data, 0, 0.1);
        smooth_axis(&g, &mut data, 1, 0.1);
        assert!(data.iter().all(|v| (v - 2.5).abs() < 1e-14));
    }
}
