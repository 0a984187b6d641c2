//! Small dense Levenberg-Marquardt solver for the spectral fits.

use nalgebra::{DMatrix, DVector};

type Residuals<'a> = &'a dyn Fn(&[f64]) -> (Vec<f64>, DMatrix<f64>);

pub(crate) struct LmProblem<'a> {
    /// Residuals and Jacobian (rows = residuals) at a parameter vector.
    pub eval: Residuals<'a>,
    /// Maps a proposed parameter vector back into the feasible set.
    pub project: &'a dyn Fn(&mut [f64]),
    /// Per-parameter tolerance scale: a step converges when
    /// `|dx_k| <= tol * scale_k(x)` for every k.
    pub scale: &'a dyn Fn(&[f64]) -> Vec<f64>,
}

pub(crate) struct LmOutcome {
    pub params: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn cost_of(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

pub(crate) fn minimize(problem: &LmProblem<'_>, x0: &[f64], tol: f64, max_iter: usize) -> LmOutcome {
    let n = x0.len();
    let mut x = x0.to_vec();
    (problem.project)(&mut x);
    let (mut r, mut jac) = (problem.eval)(&x);
    let mut cost = cost_of(&r);
    let mut lambda = 1e-3;

    for iter in 1..=max_iter {
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let grad = &jt * DVector::from_column_slice(&r);
        let mut accepted = false;
        // inner loop: raise damping until the step lowers the cost
        for _ in 0..40 {
            let mut a = jtj.clone();
            for k in 0..n {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&(-&grad)) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            (problem.project)(&mut trial);
            let (r_t, j_t) = (problem.eval)(&trial);
            let c_t = cost_of(&r_t);
            if c_t.is_finite() && c_t <= cost {
                let scale = (problem.scale)(&x);
                let small = trial
                    .iter()
                    .zip(&x)
                    .zip(&scale)
                    .all(|((t, o), s)| (t - o).abs() <= tol * s);
                x = trial;
                r = r_t;
                jac = j_t;
                cost = c_t;
                lambda = (lambda / 10.0).max(1e-15);
                accepted = true;
                if small {
                    return LmOutcome {
                        params: x,
                        cost,
                        iterations: iter,
                        converged: true,
                    };
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no descent direction left: at a minimum to machine precision
            return LmOutcome {
                params: x,
                cost,
                iterations: iter,
                converged: true,
            };
        }
    }
    LmOutcome {
        params: x,
        cost,
        iterations: max_iter,
        converged: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fits_exponential_decay() {
        let ts: Vec<f64> = (0..50).map(|k| k as f64 * 0.1).collect();
        let ys: Vec<f64> = ts.iter().map(|t| 2.5 * (-1.3 * t).exp()).collect();
        let eval = |p: &[f64]| {
            let mut r = Vec::new();
            let mut j = DMatrix::zeros(ts.len(), 2);
            for (k, (t, y)) in ts.iter().zip(&ys).enumerate() {
                let e = (-p[1] * t).exp();
                r.push(p[0] * e - y);
                j[(k, 0)] = e;
                j[(k, 1)] = -p[0] * t * e;
            }
            (r, j)
        };
        let project = |_: &mut [f64]| {};
        let scale = |p: &[f64]| p.iter().map(|v| v.abs()).collect();
        let out = minimize(
            &LmProblem {
                eval: &eval,
                project: &project,
                scale: &scale,
            },
            &[1.0, 0.5],
            1e-10,
            500,
        );
        assert!(out.converged);
        assert!((out.params[0] - 2.5).abs() < 1e-8 && (out.params[1] - 1.3).abs() < 1e-8);
    }
}
