//! Damped Newton iteration for small dense nonlinear systems.
//!
//! Damping uses the natural monotonicity test: a trial step is accepted when
//! the simplified Newton correction at the trial point, measured in scaled
//! variables, shrinks. That keeps the iteration independent of how the
//! residual equations are scaled, which matters here because the equations
//! mix rates spanning many decades.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    /// Converged once the Euclidean residual norm drops below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Residual accepted when the iteration stagnates at rounding level.
    pub residual_floor: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOutcome<const D: usize> {
    pub x: [f64; D],
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn norm2<const D: usize>(v: &[f64; D]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

struct ScaledLu {
    lu: nalgebra::linalg::FullPivLU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    row_scale: Vec<f64>,
    col_scale: Vec<f64>,
}

impl ScaledLu {
    fn new(jac: DMatrix<f64>, col_scale: Vec<f64>) -> Option<Self> {
        let d = jac.nrows();
        let mut m = jac;
        for j in 0..d {
            for i in 0..d {
                m[(i, j)] *= col_scale[j];
            }
        }
        let mut row_scale = vec![1.0; d];
        for (i, rs) in row_scale.iter_mut().enumerate() {
            let mx = m.row(i).iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if mx > 0.0 {
                *rs = 1.0 / mx;
            }
        }
        for i in 0..d {
            for j in 0..d {
                m[(i, j)] *= row_scale[i];
            }
        }
        let lu = m.full_piv_lu();
        if !lu.is_invertible() {
            return None;
        }
        Some(Self { lu, row_scale, col_scale })
    }

    /// Returns the Newton correction `-J⁻¹ f`.
    fn correction<const D: usize>(&self, f: &[f64; D]) -> Option<[f64; D]> {
        let b = DVector::from_iterator(D, f.iter().zip(&self.row_scale).map(|(v, s)| -v * s));
        let y = self.lu.solve(&b)?;
        let mut out = [0.0; D];
        for i in 0..D {
            out[i] = y[i] * self.col_scale[i];
        }
        out.iter().all(|v| v.is_finite()).then_some(out)
    }
}

fn weighted_max<const D: usize>(dx: &[f64; D], x: &[f64; D], scale: &[f64; D]) -> f64 {
    (0..D).map(|i| dx[i].abs() / x[i].abs().max(scale[i])).fold(0.0, f64::max)
}

/// Solves `residual(x) = 0` starting from `x0`.
///
/// `scale` gives a typical magnitude per unknown; it sets the floor of the
/// weights used to measure corrections.
pub fn newton<const D: usize, R, J>(
    residual: R,
    jacobian: J,
    x0: [f64; D],
    scale: &[f64; D],
    opts: &NewtonOptions,
) -> NewtonOutcome<D>
where
    R: Fn(&[f64; D]) -> [f64; D],
    J: Fn(&[f64; D]) -> DMatrix<f64>,
{
    let mut x = x0;
    let mut f = residual(&x);
    let mut rho = norm2(&f);
    let mut iterations = 0;
    if !rho.is_finite() {
        return NewtonOutcome { x, residual: rho, iterations, converged: false };
    }

    while iterations < opts.max_iter {
        if rho <= opts.tol {
            return NewtonOutcome { x, residual: rho, iterations, converged: true };
        }
        iterations += 1;
        let col_scale: Vec<f64> = (0..D).map(|i| x[i].abs().max(scale[i])).collect();
        let Some(lu) = ScaledLu::new(jacobian(&x), col_scale) else {
            break;
        };
        let Some(dx) = lu.correction(&f) else {
            break;
        };
        let dx_norm = weighted_max(&dx, &x, scale);
        if dx_norm < 4.0 * f64::EPSILON {
            // Stagnated at rounding level.
            let ok = rho <= opts.tol.max(opts.residual_floor);
            return NewtonOutcome { x, residual: rho, iterations, converged: ok };
        }

        let mut lambda = 1.0f64;
        let mut accepted = false;
        while lambda >= 1e-10 {
            let mut xt = x;
            for i in 0..D {
                xt[i] += lambda * dx[i];
            }
            let ft = residual(&xt);
            let rt = norm2(&ft);
            if rt.is_finite() {
                let simplified = lu.correction(&ft).map(|d| weighted_max(&d, &x, scale));
                let monotone = simplified.is_some_and(|s| s <= (1.0 - lambda / 4.0) * dx_norm);
                if monotone || rt <= opts.tol || (lambda == 1.0 && dx_norm < 1e-10) {
                    x = xt;
                    f = ft;
                    rho = rt;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let converged = rho <= opts.tol || (rho <= opts.residual_floor && iterations > 0);
    NewtonOutcome { x, residual: rho, iterations, converged }
}

/// Forward-difference Jacobian, column `j` stepped by `h_j = √ε·max(|x_j|, scale_j)`.
pub fn fd_jacobian<const D: usize, R>(residual: &R, x: &[f64; D], scale: &[f64; D]) -> DMatrix<f64>
where
    R: Fn(&[f64; D]) -> [f64; D],
{
    let f0 = residual(x);
    let mut jac = DMatrix::zeros(D, D);
    for j in 0..D {
        let h = f64::EPSILON.sqrt() * x[j].abs().max(scale[j]);
        let mut xp = *x;
        xp[j] += h;
        let fp = residual(&xp);
        for i in 0..D {
            jac[(i, j)] = (fp[i] - f0[i]) / h;
        }
    }
    jac
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_badly_scaled_quadratic() {
        // x = 1e6 and y = 1e-6 with equations of wildly different size
        let r = |v: &[f64; 2]| [v[0] * v[0] - 1e12, 1e8 * (v[1] * v[0] - 1.0)];
        let out = newton(
            r,
            |v| fd_jacobian(&r, v, &[1.0, 1e-9]),
            [3e5, 1e-7],
            &[1.0, 1e-9],
            &NewtonOptions { tol: 1e-3, max_iter: 100, residual_floor: 1e-3 },
        );
        assert!(out.converged, "{out:?}");
        assert!((out.x[0] - 1e6).abs() < 1e-6);
        assert!((out.x[1] - 1e-6).abs() < 1e-18);
    }

    #[test]
    fn singular_jacobian_does_not_converge() {
        let r = |v: &[f64; 2]| [v[0] * v[0] + 1.0, v[1]];
        let out = newton(
            r,
            |v| fd_jacobian(&r, v, &[1.0, 1.0]),
            [0.0, 1.0],
            &[1.0, 1.0],
            &NewtonOptions { tol: 1e-12, max_iter: 50, residual_floor: 0.0 },
        );
        assert!(!out.converged);
    }
}
