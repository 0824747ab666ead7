//! Levenberg–Marquardt with Marquardt diagonal scaling and box constraints.
//!
//! Minimizes `Σ ((y − f(x; p)) / σ)²`. Steps leaving the box are projected
//! back onto it. Standard errors come from the diagonal of `(JᵀJ)⁻¹` at the
//! solution, scaled by the reduced chi-square.

use nalgebra::{DMatrix, DVector};

use super::{FitError, FitResult};

/// A parametric curve `y = f(x; p)`.
pub trait Model {
    fn param_names(&self) -> Vec<String>;

    fn value(&self, x: f64, p: &[f64]) -> f64;

    /// `∂f/∂p` at `x`. Defaults to central differences.
    fn gradient(&self, x: f64, p: &[f64], grad: &mut [f64]) {
        central_difference(|q| self.value(x, q), p, grad);
    }

    fn n_params(&self) -> usize {
        self.param_names().len()
    }
}

/// Fourth-order central difference of a scalar function of the parameters.
pub fn central_difference<F: Fn(&[f64]) -> f64>(f: F, p: &[f64], grad: &mut [f64]) {
    let mut q = p.to_vec();
    for j in 0..p.len() {
        let h = 1e-3 * p[j].abs().max(1e-3);
        let mut at = |offset: f64| {
            q[j] = p[j] + offset;
            let v = f(&q);
            q[j] = p[j];
            v
        };
        let (f1, f_1, f2, f_2) = (at(h), at(-h), at(2.0 * h), at(-2.0 * h));
        grad[j] = (8.0 * (f1 - f_1) - (f2 - f_2)) / (12.0 * h);
    }
}

/// Closure-backed model with finite-difference gradients.
pub struct FnModel<F> {
    names: Vec<String>,
    f: F,
}

impl<F: Fn(f64, &[f64]) -> f64> FnModel<F> {
    pub fn new(names: &[&str], f: F) -> Self {
        Self { names: names.iter().map(|s| s.to_string()).collect(), f }
    }
}

impl<F: Fn(f64, &[f64]) -> f64> Model for FnModel<F> {
    fn param_names(&self) -> Vec<String> {
        self.names.clone()
    }
    fn value(&self, x: f64, p: &[f64]) -> f64 {
        (self.f)(x, p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn unbounded(n: usize) -> Self {
        Self { lower: vec![f64::NEG_INFINITY; n], upper: vec![f64::INFINITY; n] }
    }

    fn project(&self, p: &mut [f64]) {
        for (j, v) in p.iter_mut().enumerate() {
            *v = v.clamp(self.lower[j], self.upper[j]);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Relative parameter-change tolerance.
    pub xtol: f64,
    /// Relative residual-change tolerance.
    pub ftol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { max_iterations: 500, xtol: 1e-10, ftol: 1e-12 }
    }
}

struct Problem<'a, M: ?Sized> {
    model: &'a M,
    x: &'a [f64],
    y: &'a [f64],
    sigma: &'a [f64],
}

impl<M: Model + ?Sized> Problem<'_, M> {
    fn cost(&self, p: &[f64]) -> f64 {
        self.x
            .iter()
            .zip(self.y)
            .zip(self.sigma)
            .map(|((&x, &y), &s)| {
                let r = (y - self.model.value(x, p)) / s;
                r * r
            })
            .sum()
    }

    /// Weighted Jacobian of the model and the weighted residual vector.
    fn linearize(&self, p: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
        let (m, n) = (self.x.len(), p.len());
        let mut jac = DMatrix::zeros(m, n);
        let mut res = DVector::zeros(m);
        let mut grad = vec![0.0; n];
        for i in 0..m {
            let s = self.sigma[i];
            res[i] = (self.y[i] - self.model.value(self.x[i], p)) / s;
            self.model.gradient(self.x[i], p, &mut grad);
            for j in 0..n {
                jac[(i, j)] = grad[j] / s;
            }
        }
        (jac, res)
    }
}

fn validate(x: &[f64], y: &[f64], sigma: &[f64]) -> Result<(), FitError> {
    if x.is_empty() {
        return Err(FitError::EmptyData);
    }
    if x.len() != y.len() || x.len() != sigma.len() {
        return Err(FitError::LengthMismatch(x.len(), y.len(), sigma.len()));
    }
    for i in 0..x.len() {
        if !(x[i].is_finite() && y[i].is_finite() && sigma[i].is_finite() && sigma[i] > 0.0) {
            return Err(FitError::BadData(i));
        }
    }
    Ok(())
}

/// Weighted damped least squares; see the module docs.
///
/// Non-convergence within the iteration budget is reported through
/// `converged = false`, not as an error.
pub fn nlls_minimize<M: Model + ?Sized>(
    model: &M,
    x: &[f64],
    y: &[f64],
    sigma: &[f64],
    init: &[f64],
    bounds: Option<&Bounds>,
    options: SolverOptions,
) -> Result<FitResult, FitError> {
    validate(x, y, sigma)?;
    let names = model.param_names();
    let n = names.len();
    if init.len() != n {
        return Err(FitError::InvalidInput(format!("{} initial values for {n} parameters", init.len())));
    }
    let bounds = bounds.cloned().unwrap_or_else(|| Bounds::unbounded(n));
    for j in 0..n {
        if !(init[j].is_finite() && init[j] >= bounds.lower[j] && init[j] <= bounds.upper[j]) {
            return Err(FitError::InitOutOfBounds { name: names[j].clone(), value: init[j] });
        }
    }

    let problem = Problem { model, x, y, sigma };
    let mut p = init.to_vec();
    let mut cost = problem.cost(&p);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    'outer: while iterations < options.max_iterations {
        iterations += 1;
        let (jac, res) = problem.linearize(&p);
        let jt = jac.transpose();
        let normal = &jt * &jac;
        let gradient = &jt * &res;
        let max_diag = (0..n).map(|j| normal[(j, j)]).fold(0.0, f64::max);
        let floor = (max_diag * 1e-12).max(f64::MIN_POSITIVE);

        loop {
            let mut damped = normal.clone();
            for j in 0..n {
                damped[(j, j)] += lambda * normal[(j, j)].max(floor);
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= 10.0;
                if lambda > 1e20 {
                    break 'outer;
                }
                continue;
            };
            let delta = chol.solve(&gradient);
            let mut trial: Vec<f64> = p.iter().zip(delta.iter()).map(|(a, d)| a + d).collect();
            bounds.project(&mut trial);

            let step = trial.iter().zip(&p).map(|(t, q)| (t - q).abs() / (q.abs() + options.xtol)).fold(0.0, f64::max);
            if step <= options.xtol {
                converged = true;
                break 'outer;
            }

            let trial_cost = problem.cost(&trial);
            if trial_cost.is_finite() && trial_cost < cost {
                let relative = (cost - trial_cost) / cost;
                p = trial;
                cost = trial_cost;
                lambda = (lambda * 0.1).max(1e-15);
                if relative < options.ftol {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e20 {
                // No descent direction left: a stationary point.
                converged = true;
                break 'outer;
            }
        }
    }

    let mut result = FitResult {
        names,
        params: p.clone(),
        stderr: None,
        covariance: None,
        residual_norm: cost,
        converged,
        iterations,
        derived: Vec::new(),
    };
    if converged {
        let (jac, _) = problem.linearize(&p);
        let normal = jac.transpose() * &jac;
        let inverse = normal.clone().cholesky().ok_or(FitError::SingularJacobian)?.inverse();
        // Variance inflation normal_jj · inverse_jj >= 1; beyond 1e12 the
        // parameter is not resolved by the data.
        if (0..n).any(|j| !(normal[(j, j)] * inverse[(j, j)] < 1e12)) {
            return Err(FitError::SingularJacobian);
        }
        let dof = x.len() as isize - n as isize;
        let scale = if dof > 0 { cost / dof as f64 } else { 1.0 };
        let cov: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| inverse[(i, j)] * scale).collect()).collect();
        if cov.iter().flatten().any(|v| !v.is_finite()) {
            return Err(FitError::SingularJacobian);
        }
        result.stderr = Some((0..n).map(|j| cov[j][j].max(0.0).sqrt()).collect());
        result.covariance = Some(cov);
    }
    Ok(result)
}
