//! Finite-difference gradient and divergence on cell-centered grids.
//!
//! Interior cells use central differences; the first and last cell on each
//! line use the second-order one-sided formula `(-3f0 + 4f1 - f2) / 2h`, so the
//! operators are exact on quadratics everywhere.

use super::{Grid, ScalarField, VectorField};

/// Derivative along x of a row-major field, written into `out`.
fn d_dx(grid: &Grid, f: &[f64], out: &mut [f64]) {
    let (nx, ny) = (grid.nx(), grid.ny());
    let inv2h = 0.5 / grid.dx();
    for j in 0..ny {
        let row = &f[j * nx..(j + 1) * nx];
        let dst = &mut out[j * nx..(j + 1) * nx];
        dst[0] = (-3.0 * row[0] + 4.0 * row[1] - row[2]) * inv2h;
        for i in 1..nx - 1 {
            dst[i] = (row[i + 1] - row[i - 1]) * inv2h;
        }
        dst[nx - 1] = (3.0 * row[nx - 1] - 4.0 * row[nx - 2] + row[nx - 3]) * inv2h;
    }
}

fn d_dy(grid: &Grid, f: &[f64], out: &mut [f64]) {
    let (nx, ny) = (grid.nx(), grid.ny());
    let inv2h = 0.5 / grid.dy();
    for i in 0..nx {
        let at = |j: usize| f[j * nx + i];
        out[i] = (-3.0 * at(0) + 4.0 * at(1) - at(2)) * inv2h;
        for j in 1..ny - 1 {
            out[j * nx + i] = (at(j + 1) - at(j - 1)) * inv2h;
        }
        out[(ny - 1) * nx + i] = (3.0 * at(ny - 1) - 4.0 * at(ny - 2) + at(ny - 3)) * inv2h;
    }
}

pub fn gradient(f: &ScalarField) -> VectorField {
    let grid = *f.grid();
    let mut out = VectorField::zeros(grid);
    let (gx, gy) = out.components_mut();
    d_dx(&grid, f.values(), gx);
    d_dy(&grid, f.values(), gy);
    out
}

pub fn divergence(v: &VectorField) -> ScalarField {
    let grid = *v.grid();
    let mut ddx = vec![0.0; grid.len()];
    let mut ddy = vec![0.0; grid.len()];
    d_dx(&grid, v.x(), &mut ddx);
    d_dy(&grid, v.y(), &mut ddy);
    let values = ddx.iter().zip(&ddy).map(|(a, b)| a + b).collect();
    ScalarField::from_values(grid, values).expect("shape preserved")
}

/// `divergence(gradient(f))`; a wide-stencil Laplacian consistent with the
/// operators above.
pub fn laplacian(f: &ScalarField) -> ScalarField {
    divergence(&gradient(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Bounds;
    use crate::Vec2;

    fn grid(n: usize, side: f64) -> Grid {
        Grid::new(Bounds::square(side), n, n).unwrap()
    }

    #[test]
    fn constants_have_zero_gradient_and_divergence() {
        let g = grid(7, 3.0);
        let grad = gradient(&ScalarField::constant(g, 4.2));
        assert!(grad.x().iter().chain(grad.y()).all(|&v| v.abs() < 1e-12));
        let div = divergence(&VectorField::from_fn(g, |_| Vec2::new(1.5, -2.0)));
        assert!(div.values().iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn exact_on_affine_fields() {
        let g = grid(9, 2.0);
        let grad = gradient(&ScalarField::from_fn(g, |p| 2.0 * p.x));
        for k in 0..g.len() {
            assert!((grad.get(k) - Vec2::new(2.0, 0.0)).norm() < 1e-12);
        }
        let div = divergence(&VectorField::from_fn(g, |p| p));
        assert!(div.values().iter().all(|v| (v - 2.0).abs() < 1e-12));
    }

    #[test]
    fn exact_on_quadratics_including_boundary() {
        let g = grid(6, 1.0);
        let grad = gradient(&ScalarField::from_fn(g, |p| p.x * p.x + 3.0 * p.y * p.y));
        for j in 0..6 {
            for i in 0..6 {
                let c = g.center(i, j);
                let v = grad.at(i, j);
                assert!((v.x - 2.0 * c.x).abs() < 1e-12);
                assert!((v.y - 6.0 * c.y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gaussian_laplacian_is_second_order() {
        // f = exp(-|x - mu|^2 / s), Laplacian = f * (4 r^2 / s^2 - 4 / s).
        let err = |n: usize| {
            let g = grid(n, 10.0);
            let mu = Vec2::new(5.0, 5.0);
            let s = 4.0;
            let f = ScalarField::from_fn(g, |p| (-(p - mu).norm_squared() / s).exp());
            let lap = laplacian(&f);
            let mut worst: f64 = 0.0;
            for j in 0..n {
                for i in 0..n {
                    let r2 = (g.center(i, j) - mu).norm_squared();
                    let exact = (-r2 / s).exp() * (4.0 * r2 / (s * s) - 4.0 / s);
                    worst = worst.max((lap.at(i, j) - exact).abs());
                }
            }
            worst
        };
        let (coarse, fine) = (err(40), err(80));
        assert!(coarse / fine > 3.5, "ratio {}", coarse / fine);
    }
}
