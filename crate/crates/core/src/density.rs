//! Gaussian kernel density estimate of the crowd, evaluated at cell centers.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{EvacError, Result};
use crate::field::{Grid, ScalarField};
use crate::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KdeConfig {
    /// Kernel bandwidth `h` in meters.
    pub bandwidth: f64,
    /// Rescale the estimate so it integrates to one on the grid.
    pub renormalize: bool,
}

impl KdeConfig {
    /// Bandwidth of 1.5 cells, renormalized.
    pub fn for_grid(grid: &Grid) -> Self {
        Self {
            bandwidth: 1.5 * grid.dx().max(grid.dy()),
            renormalize: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(EvacError::config("kde.bandwidth", "must be > 0"));
        }
        Ok(())
    }
}

/// `rho(x) = 1/(N h^2) sum_j H((x - X_j)/h)` with `H(z) = exp(-|z|^2/2) / 2 pi`.
///
/// The kernel is separable, so each agent contributes an outer product of a
/// row and a column factor. Agents are summed in a canonical (sorted) order,
/// which makes the result independent of the order of `positions` bit for bit.
pub fn kde_estimate(positions: &[Vec2], cfg: &KdeConfig, grid: &Grid) -> Result<ScalarField> {
    cfg.validate()?;
    if positions.is_empty() {
        return Err(EvacError::Estimation("no agent positions".into()));
    }
    if let Some(p) = positions.iter().find(|p| !grid.bounds().contains(**p)) {
        return Err(EvacError::Input(format!(
            "agent at ({}, {}) lies outside the workspace",
            p.x, p.y
        )));
    }

    let mut sorted = positions.to_vec();
    sorted.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));

    let (nx, ny) = (grid.nx(), grid.ny());
    let h = cfg.bandwidth;
    let inv_2h2 = 1.0 / (2.0 * h * h);
    let mut acc = vec![0.0; grid.len()];
    let mut fx = vec![0.0; nx];
    let mut fy = vec![0.0; ny];
    for p in &sorted {
        for (i, f) in fx.iter_mut().enumerate() {
            let d = grid.center_x(i) - p.x;
            *f = (-d * d * inv_2h2).exp();
        }
        for (j, f) in fy.iter_mut().enumerate() {
            let d = grid.center_y(j) - p.y;
            *f = (-d * d * inv_2h2).exp();
        }
        for j in 0..ny {
            let row = &mut acc[j * nx..(j + 1) * nx];
            let wy = fy[j];
            for (cell, wx) in row.iter_mut().zip(&fx) {
                *cell += wy * wx;
            }
        }
    }

    let scale = 1.0 / (2.0 * PI * h * h * sorted.len() as f64);
    acc.iter_mut().for_each(|v| *v *= scale);
    let mut field = ScalarField::from_values(*grid, acc)?;
    if cfg.renormalize {
        field.normalize()?;
    }
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Bounds;

    fn grid() -> Grid {
        Grid::new(Bounds::square(150.0), 30, 30).unwrap()
    }

    fn raw(h: f64) -> KdeConfig {
        KdeConfig {
            bandwidth: h,
            renormalize: false,
        }
    }

    #[test]
    fn single_agent_peak() {
        let g = grid();
        let f = kde_estimate(&[g.center(12, 7)], &raw(7.5), &g).unwrap();
        let peak = 1.0 / (2.0 * PI * 7.5 * 7.5);
        assert!(((f.at(12, 7) - peak) / peak).abs() < 1e-10);
        assert_eq!(f.max(), f.at(12, 7));
    }

    #[test]
    fn repeated_agent_matches_single_agent() {
        let g = grid();
        let p = Vec2::new(40.0, 61.0);
        let one = kde_estimate(&[p], &raw(7.5), &g).unwrap();
        let many = kde_estimate(&[p; 17], &raw(7.5), &g).unwrap();
        for (a, b) in one.values().iter().zip(many.values()) {
            assert!((a - b).abs() <= 1e-15 * a.abs().max(1e-300));
        }
    }

    #[test]
    fn errors_on_empty_or_outside() {
        let g = grid();
        assert!(matches!(
            kde_estimate(&[], &raw(7.5), &g),
            Err(EvacError::Estimation(_))
        ));
        assert!(matches!(
            kde_estimate(&[Vec2::new(151.0, 3.0)], &raw(7.5), &g),
            Err(EvacError::Input(_))
        ));
        assert!(kde_estimate(&[Vec2::new(1.0, 1.0)], &raw(0.0), &g).is_err());
    }

    #[test]
    fn default_bandwidth_is_one_and_a_half_cells() {
        assert_eq!(KdeConfig::for_grid(&grid()).bandwidth, 7.5);
    }
}
