//! l1-penalized logistic regression by cyclic coordinate descent.

/// Weighted design: one row of features per distinct observation.
pub(crate) struct Design<'a> {
    pub features: &'a [Vec<f64>],
    /// Targets in {0, 1}.
    pub targets: &'a [f64],
    /// Observation weights summing to 1.
    pub weights: &'a [f64],
}

#[derive(Clone, Debug, PartialEq)]
pub struct LassoFit {
    pub intercept: f64,
    pub coefs: Vec<f64>,
    pub sweeps: usize,
    /// Largest violation of the optimality conditions.
    pub kkt_violation: f64,
    pub converged: bool,
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

impl Design<'_> {
    fn n_features(&self) -> usize {
        self.features.first().map_or(0, |f| f.len())
    }

    /// Feature `k` of row `i`; `None` is the intercept.
    fn x(&self, i: usize, k: Option<usize>) -> f64 {
        k.map_or(1.0, |k| self.features[i][k])
    }

    fn loss_along(&self, eta: &[f64], k: Option<usize>, delta: f64) -> f64 {
        eta.iter()
            .enumerate()
            .map(|(i, &e)| {
                let z = e + delta * self.x(i, k);
                self.weights[i] * (softplus(z) - self.targets[i] * z)
            })
            .sum()
    }

    fn grad_hess(&self, eta: &[f64], k: Option<usize>) -> (f64, f64) {
        let mut g = 0.0;
        let mut h = 0.0;
        for (i, &e) in eta.iter().enumerate() {
            let p = sigmoid(e);
            let x = self.x(i, k);
            g += self.weights[i] * x * (p - self.targets[i]);
            h += self.weights[i] * x * x * p * (1.0 - p);
        }
        (g, h)
    }
}

/// Minimize `mean log-loss + penalty * ||coefs||_1` (intercept unpenalized).
///
/// Each coordinate takes a proximal Newton step, halved until the penalized
/// objective does not increase. Stops when the optimality violation drops
/// to `tolerance` or after `max_sweeps` passes over all coordinates.
pub(crate) fn fit_l1_logistic(
    design: &Design<'_>,
    penalty: f64,
    tolerance: f64,
    max_sweeps: usize,
) -> LassoFit {
    let p = design.n_features();
    let n = design.targets.len();
    let mut intercept = 0.0;
    let mut coefs = vec![0.0; p];
    let mut eta = vec![0.0; n];
    let mut kkt = f64::INFINITY;
    let mut sweeps = 0;

    while sweeps < max_sweeps {
        sweeps += 1;
        for k in std::iter::once(None).chain((0..p).map(Some)) {
            let (g, h) = design.grad_hess(&eta, k);
            let current = k.map_or(intercept, |k| coefs[k]);
            // Curvature is floored so that nearly separable coordinates
            // still take bounded steps.
            let h = h.max(1e-4);
            let target = match k {
                None => current - g / h,
                Some(_) => soft_threshold(current - g / h, penalty / h),
            };
            let pen = |b: f64| if k.is_some() { penalty * b.abs() } else { 0.0 };
            let base = design.loss_along(&eta, k, 0.0) + pen(current);
            let mut delta = target - current;
            let mut accepted = false;
            for _ in 0..40 {
                if delta == 0.0 {
                    break;
                }
                if design.loss_along(&eta, k, delta) + pen(current + delta) <= base {
                    accepted = true;
                    break;
                }
                delta *= 0.5;
            }
            if !accepted {
                continue;
            }
            for (i, e) in eta.iter_mut().enumerate() {
                *e += delta * design.x(i, k);
            }
            match k {
                None => intercept += delta,
                Some(k) => coefs[k] += delta,
            }
        }

        kkt = kkt_violation(design, &eta, &coefs, penalty);
        if kkt <= tolerance {
            break;
        }
    }

    LassoFit {
        intercept,
        coefs,
        sweeps,
        kkt_violation: kkt,
        converged: kkt <= tolerance,
    }
}

fn kkt_violation(design: &Design<'_>, eta: &[f64], coefs: &[f64], penalty: f64) -> f64 {
    let (g0, _) = design.grad_hess(eta, None);
    let mut worst = g0.abs();
    for (k, &b) in coefs.iter().enumerate() {
        let (g, _) = design.grad_hess(eta, Some(k));
        let v = if b != 0.0 {
            (g + penalty * b.signum()).abs()
        } else {
            (g.abs() - penalty).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}
