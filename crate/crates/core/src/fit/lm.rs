//! Damped Gauss–Newton (Levenberg–Marquardt) for weighted scalar models.

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    pub initial_lambda: f64,
    /// Relative parameter change that counts as converged.
    pub xtol: f64,
    /// Relative change of the residual norm that counts as converged.
    pub ftol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions { max_iterations: 200, initial_lambda: 1e-3, xtol: 1e-10, ftol: 1e-12 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    /// Standard errors from the Jacobian covariance, scaled by the reduced χ².
    pub stderr: Vec<f64>,
    /// Weighted residual norm `‖r‖`.
    pub residual_norm: f64,
    pub chi2_reduced: f64,
    pub converged: bool,
    pub iterations: usize,
    /// `max_j |J_jᵀ r| / (‖J_j‖ ‖r‖)`; zero at an exact stationary point.
    pub optimality: f64,
}

pub struct Problem<'a> {
    pub model: &'a dyn Fn(&[f64], f64) -> f64,
    pub x: &'a [f64],
    pub y: &'a [f64],
    /// Per-point weights `1/σ²`.
    pub weights: &'a [f64],
}

impl Problem<'_> {
    fn residuals(&self, p: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.x.len(),
            self.x.iter().zip(self.y).zip(self.weights).map(|((&x, &y), &w)| w.sqrt() * (y - (self.model)(p, x))),
        )
    }

    /// Jacobian of the weighted model values (`−∂r/∂p`), forward differences.
    fn jacobian(&self, p: &[f64], r0: &DVector<f64>) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.x.len(), p.len());
        let mut q = p.to_vec();
        for k in 0..p.len() {
            let h = (1e-6 * p[k].abs()).max(1e-8);
            q[k] = p[k] + h;
            let r1 = self.residuals(&q);
            q[k] = p[k];
            for i in 0..self.x.len() {
                j[(i, k)] = (r0[i] - r1[i]) / h;
            }
        }
        j
    }
}

fn solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Some(ch.solve(b));
    }
    a.clone().lu().solve(b)
}

pub fn levenberg_marquardt(problem: &Problem<'_>, p0: &[f64], opts: &LmOptions) -> LmOutcome {
    let n = p0.len();
    let mut p = p0.to_vec();
    let mut r = problem.residuals(&p);
    let mut cost = r.norm_squared();
    let mut lambda = opts.initial_lambda;
    let mut converged = !cost.is_finite() || cost == 0.0;
    let mut iterations = 0;
    let mut jac = problem.jacobian(&p, &r);
    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        let dmax = jtj.diagonal().max().max(f64::MIN_POSITIVE);
        let mut a = jtj.clone();
        for k in 0..n {
            a[(k, k)] += lambda * jtj[(k, k)].max(1e-12 * dmax);
        }
        let Some(step) = solve(&a, &g) else {
            lambda *= 10.0;
            continue;
        };
        let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
        let r_new = problem.residuals(&trial);
        let cost_new = r_new.norm_squared();
        if cost_new.is_finite() && cost_new <= cost {
            let small_step = step.iter().zip(&p).all(|(d, q)| d.abs() <= opts.xtol * (q.abs() + opts.xtol));
            let small_cost = cost - cost_new <= opts.ftol * cost;
            p = trial;
            r = r_new;
            cost = cost_new;
            lambda = (lambda / 10.0).max(1e-12);
            converged = small_step || small_cost || cost == 0.0;
            jac = problem.jacobian(&p, &r);
        } else {
            lambda *= 10.0;
            if lambda > 1e16 {
                // no downhill direction left at machine precision
                converged = true;
            }
        }
    }
    let m = problem.x.len();
    let dof = m.saturating_sub(n).max(1) as f64;
    let chi2_reduced = cost / dof;
    let jtj = jac.transpose() * &jac;
    let stderr = match jtj.clone().try_inverse() {
        Some(inv) => (0..n).map(|k| (inv[(k, k)].abs() * chi2_reduced).sqrt()).collect(),
        None => vec![f64::INFINITY; n],
    };
    let rn = r.norm();
    let optimality = (0..n)
        .map(|k| {
            let col = jac.column(k);
            let denom = col.norm() * rn;
            if denom == 0.0 {
                0.0
            } else {
                col.dot(&r).abs() / denom
            }
        })
        .fold(0.0, f64::max);
    LmOutcome { params: p, stderr, residual_norm: rn, chi2_reduced, converged, iterations, optimality }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_recovery() {
        let model = |p: &[f64], x: f64| p[0] * (-p[1] * x).exp() + p[2];
        let x: Vec<f64> = (0..30).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|&x| model(&[2.0, 1.3, 0.5], x)).collect();
        let w = vec![1.0; x.len()];
        let out = levenberg_marquardt(&Problem { model: &model, x: &x, y: &y, weights: &w }, &[1.0, 0.5, 0.0], &LmOptions::default());
        assert!(out.converged);
        for (a, b) in out.params.iter().zip([2.0, 1.3, 0.5]) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn linear_fit_matches_normal_equations() {
        // y = a + b x with noise; closed-form weighted least squares
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().enumerate().map(|(i, &x)| 1.0 + 0.3 * x + if i % 2 == 0 { 0.1 } else { -0.07 }).collect();
        let w: Vec<f64> = (0..20).map(|i| 1.0 + (i % 3) as f64).collect();
        let model = |p: &[f64], x: f64| p[0] + p[1] * x;
        let out = levenberg_marquardt(&Problem { model: &model, x: &x, y: &y, weights: &w }, &[0.0, 0.0], &LmOptions::default());
        let (sw, swx, swy, swxx, swxy) = x
            .iter()
            .zip(&y)
            .zip(&w)
            .fold((0.0, 0.0, 0.0, 0.0, 0.0), |a, ((&x, &y), &w)| (a.0 + w, a.1 + w * x, a.2 + w * y, a.3 + w * x * x, a.4 + w * x * y));
        let det = sw * swxx - swx * swx;
        let b = (sw * swxy - swx * swy) / det;
        let a = (swy - b * swx) / sw;
        assert!((out.params[0] - a).abs() < 1e-7 && (out.params[1] - b).abs() < 1e-8);
        assert!(out.optimality < 1e-6);
        // slope error: sqrt(χ²_red · Σw / det)
        let se_b = (out.chi2_reduced * sw / det).sqrt();
        assert!((out.stderr[1] / se_b - 1.0).abs() < 1e-4);
    }

    #[test]
    fn iteration_cap_reports_unconverged() {
        let model = |p: &[f64], x: f64| (p[0] * x).sin();
        let x: Vec<f64> = (0..50).map(|i| i as f64 * 0.2).collect();
        let y: Vec<f64> = x.iter().map(|&x| (3.0 * x).sin()).collect();
        let w = vec![1.0; x.len()];
        let opts = LmOptions { max_iterations: 2, ..Default::default() };
        let out = levenberg_marquardt(&Problem { model: &model, x: &x, y: &y, weights: &w }, &[1.0], &opts);
        assert!(!out.converged);
        assert_eq!(out.iterations, 2);
    }
}
