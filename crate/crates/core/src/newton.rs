//! Damped Newton iteration on small dense nonlinear systems.
//!
//! Shared by the block solvers, the homotopy corrector, and the asymptotic
//! system solvers. The Jacobian is always analytic; globalization is a plain
//! backtracking line search on the residual 2-norm plus an optional projection
//! hook that clamps iterates into their feasible boxes.

use crate::linalg::{solve_in_place, Matrix};
use crate::real::Real;

/// A square nonlinear system `F(x) = 0` with analytic Jacobian.
pub trait NonlinearSystem<R: Real> {
    fn dim(&self) -> usize;
    fn residual(&self, x: &[R], out: &mut [R]);
    fn jacobian(&self, x: &[R], out: &mut Matrix<R>);
    /// Clamp an iterate back into its feasible region (no-op by default).
    fn project(&self, _x: &mut [R]) {}
}

#[derive(Clone, Copy, Debug)]
pub struct NewtonOptions<R: Real> {
    /// Convergence threshold on the residual infinity norm.
    pub tol: R,
    pub max_iter: usize,
    /// Smallest admissible line-search fraction.
    pub min_damping: f64,
    /// Undamped extra iterations after convergence; the best iterate by
    /// residual norm wins. Pushes the residual to the precision floor.
    pub refine_steps: usize,
}

impl<R: Real> NewtonOptions<R> {
    pub fn with_tol(tol: R) -> Self {
        NewtonOptions {
            tol,
            max_iter: 40,
            min_damping: 1.0 / 65536.0,
            refine_steps: 0,
        }
    }

    pub fn polishing(tol: R) -> Self {
        NewtonOptions {
            refine_steps: 2,
            ..Self::with_tol(tol)
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum NewtonError {
    #[error("Newton iteration did not converge: residual {residual:e} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },
    #[error("Jacobian is singular: {0}")]
    Singular(#[from] crate::linalg::SingularMatrix),
}

#[derive(Debug, Clone)]
pub struct NewtonReport {
    pub iterations: usize,
    pub residual_norm: f64,
}

fn inf_norm<R: Real>(v: &[R]) -> R {
    let mut m = R::zero();
    for x in v {
        m = m.max_of(x.abs());
    }
    m
}

fn two_norm_sq<R: Real>(v: &[R]) -> R {
    let mut s = R::zero();
    for x in v {
        s += *x * *x;
    }
    s
}

/// Run damped Newton from `x` (updated in place).
pub fn solve<R: Real, S: NonlinearSystem<R> + ?Sized>(
    system: &S,
    x: &mut [R],
    options: &NewtonOptions<R>,
) -> Result<NewtonReport, NewtonError> {
    let n = system.dim();
    assert_eq!(n, x.len());
    let mut residual = vec![R::zero(); n];
    let mut step = vec![R::zero(); n];
    let mut trial = vec![R::zero(); n];
    let mut trial_residual = vec![R::zero(); n];
    let mut jac = Matrix::zeros(n, n);

    system.residual(x, &mut residual);
    let mut norm = inf_norm(&residual);
    for iter in 0..options.max_iter {
        if norm <= options.tol {
            refine(system, x, options, &mut jac, &mut residual, &mut step, &mut trial);
            system.residual(x, &mut residual);
            return Ok(NewtonReport {
                iterations: iter,
                residual_norm: inf_norm(&residual).to_f64(),
            });
        }
        system.jacobian(x, &mut jac);
        step.copy_from_slice(&residual);
        solve_in_place(&mut jac, &mut step)?;

        let current_sq = two_norm_sq(&residual);
        let mut lambda = 1.0f64;
        loop {
            for i in 0..n {
                trial[i] = x[i] - R::from_f64(lambda) * step[i];
            }
            system.project(&mut trial);
            system.residual(&trial, &mut trial_residual);
            let trial_sq = two_norm_sq(&trial_residual);
            let trial_inf = inf_norm(&trial_residual);
            if (trial_sq < current_sq && trial_inf.is_finite()) || trial_inf <= options.tol {
                x.copy_from_slice(&trial);
                residual.copy_from_slice(&trial_residual);
                norm = trial_inf;
                break;
            }
            lambda *= 0.5;
            if lambda < options.min_damping {
                // Stalled: no damped step reduces the residual.
                return Err(NewtonError::NoConvergence {
                    residual: norm.to_f64(),
                    iterations: iter,
                });
            }
        }
    }
    if norm <= options.tol {
        Ok(NewtonReport {
            iterations: options.max_iter,
            residual_norm: norm.to_f64(),
        })
    } else {
        Err(NewtonError::NoConvergence {
            residual: norm.to_f64(),
            iterations: options.max_iter,
        })
    }
}

/// Undamped endgame steps; keeps the iterate with the smallest residual.
fn refine<R: Real, S: NonlinearSystem<R> + ?Sized>(
    system: &S,
    x: &mut [R],
    options: &NewtonOptions<R>,
    jac: &mut Matrix<R>,
    residual: &mut [R],
    step: &mut [R],
    trial: &mut [R],
) {
    let n = x.len();
    for _ in 0..options.refine_steps {
        system.residual(x, residual);
        let current = inf_norm(residual);
        system.jacobian(x, jac);
        step.copy_from_slice(residual);
        if solve_in_place(jac, step).is_err() {
            return;
        }
        for i in 0..n {
            trial[i] = x[i] - step[i];
        }
        system.project(trial);
        system.residual(trial, residual);
        if inf_norm(residual) < current {
            x.copy_from_slice(trial);
        } else {
            return;
        }
    }
}
