use serde::{Deserialize, Serialize};

use super::{Grid, ScalarField, VectorField};
use crate::error::{EvacError, Result};
use crate::Vec2;

/// Radially symmetric pairwise interaction potential between humans.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Potential {
    #[default]
    Zero,
    /// `W(z) = strength * exp(-|z|^2 / width)`, truncated beyond `support` meters.
    Gaussian {
        strength: f64,
        width: f64,
        support: f64,
    },
}

impl Potential {
    pub fn is_zero(&self) -> bool {
        match *self {
            Potential::Zero => true,
            Potential::Gaussian { strength, .. } => strength == 0.0,
        }
    }

    pub fn value(&self, z: Vec2) -> f64 {
        match *self {
            Potential::Zero => 0.0,
            Potential::Gaussian {
                strength,
                width,
                support,
            } => {
                let r2 = z.norm_squared();
                if r2 > support * support {
                    0.0
                } else {
                    strength * (-r2 / width).exp()
                }
            }
        }
    }

    /// `grad W(z)`; zero at the origin and outside the support.
    pub fn gradient(&self, z: Vec2) -> Vec2 {
        match *self {
            Potential::Zero => Vec2::zeros(),
            Potential::Gaussian { width, .. } => z * (-2.0 / width * self.value(z)),
        }
    }

    pub fn validate(&self, key: &str) -> Result<()> {
        if let Potential::Gaussian {
            strength,
            width,
            support,
        } = *self
        {
            if !strength.is_finite() {
                return Err(EvacError::config(format!("{key}.strength"), "must be finite"));
            }
            if !(width > 0.0 && width.is_finite()) {
                return Err(EvacError::config(format!("{key}.width"), "must be > 0"));
            }
            if !(support > 0.0 && support.is_finite()) {
                return Err(EvacError::config(format!("{key}.support"), "must be > 0"));
            }
        }
        Ok(())
    }
}

/// `(grad W * rho)(x) = sum_y grad W(x - y) rho(y) dx dy` by direct summation
/// over the truncated stencil.
pub fn convolve_grad_potential(w: &Potential, rho: &ScalarField) -> Result<VectorField> {
    let grid: Grid = *rho.grid();
    let mut out = VectorField::zeros(grid);
    let support = match *w {
        _ if w.is_zero() => return Ok(out),
        Potential::Gaussian { support, .. } => support,
        Potential::Zero => unreachable!(),
    };
    let (nx, ny) = (grid.nx(), grid.ny());
    let ri = (support / grid.dx()).ceil() as usize;
    let rj = (support / grid.dy()).ceil() as usize;
    if ri >= nx || rj >= ny {
        return Err(EvacError::config(
            "crowd.potential.support",
            format!(
                "stencil half-width ({ri}, {rj}) cells does not fit a {nx}x{ny} grid"
            ),
        ));
    }

    // Offset stencil: grad W at (di * dx, dj * dy) for |di| <= ri, |dj| <= rj.
    let sw = 2 * ri + 1;
    let stencil: Vec<Vec2> = (0..2 * rj + 1)
        .flat_map(|b| {
            (0..sw).map(move |a| {
                Vec2::new(
                    (a as f64 - ri as f64) * grid.dx(),
                    (b as f64 - rj as f64) * grid.dy(),
                )
            })
        })
        .map(|z| w.gradient(z))
        .collect();

    let area = grid.cell_area();
    let (ox, oy) = out.components_mut();
    for j in 0..ny {
        for i in 0..nx {
            let mut acc = Vec2::zeros();
            let j_lo = j.saturating_sub(rj);
            let j_hi = (j + rj).min(ny - 1);
            let i_lo = i.saturating_sub(ri);
            let i_hi = (i + ri).min(nx - 1);
            for jj in j_lo..=j_hi {
                for ii in i_lo..=i_hi {
                    let m = rho.at(ii, jj);
                    if m == 0.0 {
                        continue;
                    }
                    // offset x - y in cell units
                    let a = (i + ri) - ii;
                    let b = (j + rj) - jj;
                    acc += stencil[b * sw + a] * m;
                }
            }
            let k = grid.index(i, j);
            ox[k] = acc.x * area;
            oy[k] = acc.y * area;
        }
    }
    Ok(out)
}
