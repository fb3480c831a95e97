//! Møller's scaled conjugate gradient, full batch.
//!
//! Second-order information enters only through a finite-difference
//! Hessian-vector product along the search direction, and a Levenberg-style
//! scale λ keeps the local quadratic model positive definite. Steps are
//! accepted only when the comparison ratio Δ is non-negative, so the sequence
//! of accepted objective values never increases.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// A differentiable scalar objective over a flat parameter vector.
pub trait Objective {
    fn value(&self, w: &DVector<f64>) -> f64;
    fn value_and_gradient(&self, w: &DVector<f64>) -> (f64, DVector<f64>);

    fn gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        self.value_and_gradient(w).1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScgOptions {
    pub max_epochs: usize,
    /// Stop once the gradient norm falls below this.
    pub grad_tol: f64,
    /// Stop once an accepted step changes the objective by less than this,
    /// relative to its previous value.
    pub loss_tol: f64,
    /// Base finite-difference step for the curvature estimate.
    pub sigma0: f64,
    /// Initial scale parameter.
    pub lambda0: f64,
}

impl Default for ScgOptions {
    fn default() -> Self {
        ScgOptions {
            max_epochs: 10_000,
            grad_tol: 1e-6,
            loss_tol: 1e-10,
            sigma0: 1e-5,
            lambda0: 1e-7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxEpochs,
    GradientTolerance,
    LossTolerance,
    /// λ grew past any useful value; no descent is possible at working precision.
    ScaleSaturated,
}

#[derive(Debug, Clone)]
pub struct ScgOutcome {
    pub params: DVector<f64>,
    pub epochs: usize,
    pub initial_value: f64,
    pub final_value: f64,
    /// Objective after the initial point and every accepted step.
    pub accepted_values: Vec<f64>,
    pub stop: StopReason,
}

const LAMBDA_MAX: f64 = 1e20;

pub fn minimize<O: Objective>(obj: &O, w0: DVector<f64>, opts: &ScgOptions) -> Result<ScgOutcome> {
    let n = w0.len();
    let mut w = w0;
    let (mut f, mut g) = obj.value_and_gradient(&w);
    if !f.is_finite() {
        return Err(Error::Training {
            epoch: 0,
            reason: "non-finite initial objective".into(),
            last_loss: f,
        });
    }
    let initial_value = f;
    let mut accepted = vec![f];

    let mut r = -&g;
    let mut p = r.clone();
    let mut lambda = opts.lambda0;
    let mut lambda_bar = 0.0;
    let mut success = true;
    let mut delta = 0.0;
    let mut since_restart = 0usize;
    let mut stop = StopReason::MaxEpochs;
    let mut epochs = 0;

    if g.norm() < opts.grad_tol {
        return Ok(ScgOutcome {
            params: w,
            epochs,
            initial_value,
            final_value: f,
            accepted_values: accepted,
            stop: StopReason::GradientTolerance,
        });
    }

    while epochs < opts.max_epochs {
        epochs += 1;
        let p_norm2 = p.norm_squared();
        if p_norm2 == 0.0 {
            stop = StopReason::GradientTolerance;
            break;
        }

        if success {
            let sigma = opts.sigma0 / p_norm2.sqrt();
            let g_plus = obj.gradient(&(&w + &p * sigma));
            delta = p.dot(&((g_plus - &g) / sigma));
        }

        // Scale the curvature and force it positive.
        delta += (lambda - lambda_bar) * p_norm2;
        if delta <= 0.0 {
            lambda_bar = 2.0 * (lambda - delta / p_norm2);
            delta = -delta + lambda * p_norm2;
            lambda = lambda_bar;
        }

        let mu = p.dot(&r);
        if mu <= 0.0 {
            // Lost conjugacy; restart along steepest descent.
            p = r.clone();
            since_restart = 0;
            success = true;
            continue;
        }
        let alpha = mu / delta;
        let w_new = &w + &p * alpha;
        let f_new = obj.value(&w_new);
        if !f_new.is_finite() {
            return Err(Error::Training {
                epoch: epochs,
                reason: format!("non-finite objective at step length {alpha:e}"),
                last_loss: f,
            });
        }

        let comparison = 2.0 * delta * (f - f_new) / (mu * mu);
        if comparison >= 0.0 {
            let f_prev = f;
            w = w_new;
            let (f_acc, g_new) = obj.value_and_gradient(&w);
            f = f_acc;
            g = g_new;
            let r_new = -&g;
            lambda_bar = 0.0;
            success = true;
            since_restart += 1;
            if since_restart >= n {
                p = r_new.clone();
                since_restart = 0;
            } else {
                let beta = (r_new.norm_squared() - r_new.dot(&r)) / mu;
                p = &r_new + &p * beta;
            }
            r = r_new;
            if comparison >= 0.75 {
                lambda *= 0.25;
            }
            accepted.push(f);

            if g.norm() < opts.grad_tol {
                stop = StopReason::GradientTolerance;
                break;
            }
            let scale = f_prev.abs().max(f64::MIN_POSITIVE);
            if (f_prev - f).abs() / scale < opts.loss_tol {
                stop = StopReason::LossTolerance;
                break;
            }
        } else {
            lambda_bar = lambda;
            success = false;
        }

        if comparison < 0.25 {
            lambda += delta * (1.0 - comparison) / p_norm2;
        }
        if lambda > LAMBDA_MAX {
            stop = StopReason::ScaleSaturated;
            break;
        }
    }

    Ok(ScgOutcome {
        params: w,
        epochs,
        initial_value,
        final_value: f,
        accepted_values: accepted,
        stop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    struct Quadratic {
        a: DMatrix<f64>,
        b: DVector<f64>,
    }

    impl Objective for Quadratic {
        fn value(&self, w: &DVector<f64>) -> f64 {
            0.5 * w.dot(&(&self.a * w)) - self.b.dot(w)
        }
        fn value_and_gradient(&self, w: &DVector<f64>) -> (f64, DVector<f64>) {
            (self.value(w), &self.a * w - &self.b)
        }
    }

    struct Rosenbrock;

    impl Objective for Rosenbrock {
        fn value(&self, w: &DVector<f64>) -> f64 {
            (1.0 - w[0]).powi(2) + 100.0 * (w[1] - w[0] * w[0]).powi(2)
        }
        fn value_and_gradient(&self, w: &DVector<f64>) -> (f64, DVector<f64>) {
            let (x, y) = (w[0], w[1]);
            let g = DVector::from_vec(vec![
                -2.0 * (1.0 - x) - 400.0 * x * (y - x * x),
                200.0 * (y - x * x),
            ]);
            (self.value(w), g)
        }
    }

    #[test]
    fn solves_spd_quadratic() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0]);
        let b = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let exact = a.clone().lu().solve(&b).unwrap();
        let out = minimize(&Quadratic { a, b }, DVector::zeros(3), &ScgOptions::default()).unwrap();
        assert!((out.params - exact).norm() < 1e-6);
        assert!(out.epochs < 100);
    }

    #[test]
    fn rosenbrock_converges_monotonically() {
        let opts = ScgOptions {
            max_epochs: 5000,
            grad_tol: 1e-9,
            loss_tol: 0.0,
            ..ScgOptions::default()
        };
        let out = minimize(&Rosenbrock, DVector::from_vec(vec![-1.2, 1.0]), &opts).unwrap();
        assert!(out.accepted_values.windows(2).all(|w| w[1] <= w[0]));
        assert!((out.params[0] - 1.0).abs() < 1e-4 && (out.params[1] - 1.0).abs() < 1e-4, "{:?}", out.params);
    }

    #[test]
    fn zero_gradient_start_returns_immediately() {
        let a = DMatrix::identity(2, 2);
        let b = DVector::zeros(2);
        let out = minimize(&Quadratic { a, b }, DVector::zeros(2), &ScgOptions::default()).unwrap();
        assert_eq!(out.epochs, 0);
        assert_eq!(out.stop, StopReason::GradientTolerance);
    }
}
