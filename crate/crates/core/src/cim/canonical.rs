//! Canonical parameters `theta00`, `theta0+` from the mean parameters.
//!
//! The fit minimizes the convex objective
//!
//! ```text
//! F(t) = -t00 mu00 - t0+ . mu0+ + mean_i log(exp(s_i) + exp(-s_i)),
//! s_i  = t00 + t0+ . L(x_i)
//! ```
//!
//! with damped Newton steps and Armijo backtracking, starting from zero.

use serde::Serialize;

use super::moments::MeanParams;
use super::patterns::Patterns;
use crate::edges::EdgeLabelMatrix;

pub const FIT_TOLERANCE: f64 = 1e-6;
pub const FIT_MAX_ITERATIONS: usize = 5000;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CanonicalFit {
    pub theta00: f64,
    pub theta0_plus: Vec<f64>,
    pub objective: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `log(exp(z) + exp(-z))` without overflow.
fn log_two_cosh(z: f64) -> f64 {
    let a = z.abs();
    a + (-2.0 * a).exp().ln_1p()
}

/// The objective over distinct label rows. Parameter vectors are laid out
/// as `[theta00, theta01, ..., theta0m]`.
pub struct CanonicalProblem {
    patterns: Patterns,
    /// `[mu00, mu01, ..., mu0m]`.
    target: Vec<f64>,
}

impl CanonicalProblem {
    pub fn new(matrix: &EdgeLabelMatrix, mu00: f64, mu0_plus: &[f64]) -> Self {
        assert_eq!(mu0_plus.len(), matrix.n_cols());
        let patterns = Patterns::from_rows(matrix.rows().take(matrix.n_rows()).map(|r| r.to_vec()));
        let mut target = vec![mu00];
        target.extend_from_slice(mu0_plus);
        CanonicalProblem { patterns, target }
    }

    pub fn dim(&self) -> usize {
        self.target.len()
    }

    fn score(theta: &[f64], row: &[i8]) -> f64 {
        theta[0]
            + row
                .iter()
                .zip(&theta[1..])
                .map(|(&l, t)| l as f64 * t)
                .sum::<f64>()
    }

    fn x(row: &[i8], k: usize) -> f64 {
        if k == 0 {
            1.0
        } else {
            row[k - 1] as f64
        }
    }

    pub fn objective(&self, theta: &[f64]) -> f64 {
        let linear: f64 = theta.iter().zip(&self.target).map(|(t, m)| t * m).sum();
        -linear + self.patterns.mean(|r| log_two_cosh(Self::score(theta, r)))
    }

    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let mut g: Vec<f64> = self.target.iter().map(|m| -m).collect();
        for (r, w) in self.patterns.rows.iter().zip(&self.patterns.weights) {
            let t = Self::score(theta, r).tanh();
            for (k, gk) in g.iter_mut().enumerate() {
                *gk += w * t * Self::x(r, k);
            }
        }
        g
    }

    fn hessian(&self, theta: &[f64]) -> Vec<Vec<f64>> {
        let d = self.dim();
        let mut h = vec![vec![0.0; d]; d];
        for (r, w) in self.patterns.rows.iter().zip(&self.patterns.weights) {
            let t = Self::score(theta, r).tanh();
            let s = w * (1.0 - t * t);
            for a in 0..d {
                let xa = Self::x(r, a);
                for b in a..d {
                    h[a][b] += s * xa * Self::x(r, b);
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                h[a][b] = h[b][a];
            }
        }
        h
    }

    /// Model moments `mean_i tanh(s_i) x_i`; equal to the targets at the
    /// optimum.
    pub fn model_moments(&self, theta: &[f64]) -> Vec<f64> {
        self.gradient(theta)
            .iter()
            .zip(&self.target)
            .map(|(g, m)| g + m)
            .collect()
    }

    pub fn fit(&self) -> CanonicalFit {
        let d = self.dim();
        let mut theta = vec![0.0; d];
        let mut value = self.objective(&theta);
        let mut grad = self.gradient(&theta);
        let mut iterations = 0;

        while norm(&grad) > FIT_TOLERANCE && iterations < FIT_MAX_ITERATIONS {
            iterations += 1;
            let newton = solve_spd(&self.hessian(&theta), &grad)
                .map(|v| v.into_iter().map(|x| -x).collect::<Vec<_>>())
                .filter(|dir| dot(dir, &grad) < 0.0);
            let steepest: Vec<f64> = grad.iter().map(|g| -g).collect();

            let mut moved = false;
            for dir in newton.iter().chain(std::iter::once(&steepest)) {
                if let Some((t, v)) = self.line_search(&theta, value, &grad, dir) {
                    for (th, di) in theta.iter_mut().zip(dir) {
                        *th += t * di;
                    }
                    value = v;
                    moved = true;
                    break;
                }
            }
            if !moved {
                break;
            }
            grad = self.gradient(&theta);
        }

        let gradient_norm = norm(&grad);
        CanonicalFit {
            theta00: theta[0],
            theta0_plus: theta[1..].to_vec(),
            objective: value,
            gradient_norm,
            iterations,
            converged: gradient_norm <= FIT_TOLERANCE,
        }
    }

    fn line_search(&self, theta: &[f64], value: f64, grad: &[f64], dir: &[f64]) -> Option<(f64, f64)> {
        let slope = dot(grad, dir);
        let mut t = 1.0;
        let mut trial = vec![0.0; theta.len()];
        for _ in 0..60 {
            for ((x, th), di) in trial.iter_mut().zip(theta).zip(dir) {
                *x = th + t * di;
            }
            let v = self.objective(&trial);
            if v <= value + 1e-4 * t * slope {
                return Some((t, v));
            }
            t *= 0.5;
        }
        None
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solve `h x = b` for symmetric positive definite `h` by Cholesky.
fn solve_spd(h: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = h[i][i] - s;
                if d <= 1e-14 {
                    return None;
                }
                l[i][i] = d.sqrt();
            } else {
                l[i][j] = (h[i][j] - s) / l[j][j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        y[i] = (b[i] - (0..i).map(|k| l[i][k] * y[k]).sum::<f64>()) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        x[i] = (y[i] - (i + 1..n).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
    }
    Some(x)
}

/// Parameters of the conditionally independent model with symmetric
/// accuracies: `theta00 = atanh(mu00)`, `theta0j = atanh(mu0j)`.
///
/// Used when the moment targets lie outside the set the fit can attain on
/// the observed label rows and [`CanonicalProblem::fit`] cannot converge.
pub fn closed_form_params(mean: &MeanParams) -> (f64, Vec<f64>) {
    let at = |v: f64| v.clamp(-0.999, 0.999).atanh();
    (at(mean.mu00), mean.mu0_plus.iter().map(|&v| at(v)).collect())
}

/// Fit `theta00` and `theta0+` to the mean parameters on `matrix`.
pub fn fit_canonical_params(mean: &MeanParams, matrix: &EdgeLabelMatrix) -> CanonicalFit {
    CanonicalProblem::new(matrix, mean.mu00, &mean.mu0_plus).fit()
}
