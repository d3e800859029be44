//! Dense Levenberg-Marquardt for small nonlinear least-squares problems.
//!
//! Minimizes `sum r_i(x)^2` with Marquardt's diagonal scaling of the damping
//! term. Only steps that lower the objective are accepted, so the recorded cost
//! history is non-increasing.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub trait LeastSquaresProblem {
    fn residuals(&self, params: &DVector<f64>) -> Result<DVector<f64>>;

    /// Central-difference step for parameter `index` at `value`.
    fn difference_step(&self, _index: usize, value: f64) -> f64 {
        1e-6 * value.abs().max(1.0)
    }

    fn jacobian(&self, params: &DVector<f64>) -> Result<DMatrix<f64>> {
        numeric_jacobian(self, params)
    }
}

/// Central differences, one column per parameter.
pub fn numeric_jacobian<P: LeastSquaresProblem + ?Sized>(
    problem: &P,
    params: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let mut x = params.clone();
    let mut columns = Vec::with_capacity(params.len());
    for j in 0..params.len() {
        let h = problem.difference_step(j, params[j]);
        x[j] = params[j] + h;
        let plus = problem.residuals(&x)?;
        x[j] = params[j] - h;
        let minus = problem.residuals(&x)?;
        x[j] = params[j];
        columns.push((plus - minus) / (2.0 * h));
    }
    Ok(DMatrix::from_columns(&columns))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmConfig {
    pub max_iterations: usize,
    /// Infinity norm of `J^T r`.
    pub gradient_tolerance: f64,
    /// Step norm, relative to `1 + |x|`.
    pub step_tolerance: f64,
    /// Relative objective decrease of an accepted step.
    pub cost_tolerance: f64,
    pub initial_lambda: f64,
    pub lambda_factor: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            gradient_tolerance: 1e-10,
            step_tolerance: 1e-12,
            cost_tolerance: 1e-15,
            initial_lambda: 1e-3,
            lambda_factor: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Gradient,
    Step,
    Cost,
    /// Damping grew without finding a lower objective.
    NoDescent,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub params: DVector<f64>,
    pub residuals: DVector<f64>,
    /// Sum of squared residuals.
    pub cost: f64,
    pub iterations: usize,
    pub termination: Termination,
    /// Objective after each accepted step, starting with the initial value.
    pub cost_history: Vec<f64>,
}

impl LmOutcome {
    pub fn converged(&self) -> bool {
        self.termination != Termination::MaxIterations
    }
}

const MAX_LAMBDA: f64 = 1e16;

pub fn minimize<P: LeastSquaresProblem + ?Sized>(
    problem: &P,
    init: DVector<f64>,
    config: &LmConfig,
) -> Result<LmOutcome> {
    let mut x = init;
    let mut r = problem.residuals(&x)?;
    let mut cost = r.norm_squared();
    if !cost.is_finite() {
        return Err(Error::NonFinite);
    }
    let mut history = vec![cost];
    let mut lambda = config.initial_lambda;
    let mut iterations = 0;
    let mut termination = Termination::MaxIterations;

    'outer: while iterations < config.max_iterations {
        if cost == 0.0 {
            termination = Termination::Cost;
            break;
        }
        let j = problem.jacobian(&x)?;
        let gradient = j.transpose() * &r;
        if !gradient.iter().all(|g| g.is_finite()) {
            return Err(Error::NonFinite);
        }
        if gradient.amax() < config.gradient_tolerance {
            termination = Termination::Gradient;
            break;
        }
        let jtj = j.transpose() * &j;
        let diag_floor = 1e-12 * jtj.diagonal().amax().max(f64::MIN_POSITIVE);
        iterations += 1;

        loop {
            let mut damped = jtj.clone();
            for i in 0..damped.nrows() {
                damped[(i, i)] += lambda * jtj[(i, i)].max(diag_floor);
            }
            let step = match damped.cholesky() {
                Some(ch) => ch.solve(&(-&gradient)),
                None => {
                    lambda *= config.lambda_factor;
                    if lambda > MAX_LAMBDA {
                        termination = Termination::NoDescent;
                        break 'outer;
                    }
                    continue;
                }
            };
            if step.norm() < config.step_tolerance * (1.0 + x.norm()) {
                termination = Termination::Step;
                break 'outer;
            }
            let candidate = &x + &step;
            // A failed evaluation (e.g. a point swung behind the camera) is a rejected step.
            let trial = problem
                .residuals(&candidate)
                .ok()
                .map(|res| {
                    let c = res.norm_squared();
                    (res, c)
                })
                .filter(|(_, c)| c.is_finite());
            match trial {
                Some((res, new_cost)) if new_cost < cost => {
                    let decrease = (cost - new_cost) / cost;
                    x = candidate;
                    r = res;
                    cost = new_cost;
                    history.push(cost);
                    lambda = (lambda / config.lambda_factor).max(1e-15);
                    if decrease < config.cost_tolerance {
                        termination = Termination::Cost;
                        break 'outer;
                    }
                    break;
                }
                _ => {
                    lambda *= config.lambda_factor;
                    if lambda > MAX_LAMBDA {
                        termination = Termination::NoDescent;
                        break 'outer;
                    }
                }
            }
        }
    }

    Ok(LmOutcome {
        params: x,
        residuals: r,
        cost,
        iterations,
        termination,
        cost_history: history,
    })
}
