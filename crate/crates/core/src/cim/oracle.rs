//! Exact joint probabilities of the Ising label model by enumeration.
//!
//! Test oracle for posterior inference; exponential in the number of
//! labeling sources.

use thiserror::Error;

pub const ORACLE_MAX_SOURCES: usize = 12;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("enumeration supports at most {ORACLE_MAX_SOURCES} sources, got {0}")]
    TooManySources(usize),
    #[error("assignment has {actual} labels, model has {expected} sources")]
    Width { expected: usize, actual: usize },
}

/// Full canonical parameters, including the terms inference never uses.
#[derive(Clone, Debug, PartialEq)]
pub struct IsingModel {
    pub theta00: f64,
    /// Per-source unary terms `theta_jj`.
    pub theta_plus: Vec<f64>,
    /// Source-truth terms `theta_0j`.
    pub theta0_plus: Vec<f64>,
    /// Source-source terms `theta_jk` for dependent pairs.
    pub theta_plus_plus: Vec<(usize, usize, f64)>,
}

impl IsingModel {
    pub fn n_sources(&self) -> usize {
        self.theta0_plus.len()
    }

    fn energy(&self, y: i8, labels: &[i8]) -> f64 {
        let y = y as f64;
        let mut e = self.theta00 * y;
        for (j, &l) in labels.iter().enumerate() {
            let l = l as f64;
            e += self.theta_plus[j] * l + self.theta0_plus[j] * l * y;
        }
        for &(a, b, t) in &self.theta_plus_plus {
            e += t * labels[a] as f64 * labels[b] as f64;
        }
        e
    }

    fn check(&self, labels: &[i8]) -> Result<(), OracleError> {
        let m = self.n_sources();
        if m > ORACLE_MAX_SOURCES {
            return Err(OracleError::TooManySources(m));
        }
        if labels.len() != m {
            return Err(OracleError::Width {
                expected: m,
                actual: labels.len(),
            });
        }
        Ok(())
    }

    /// Every `(y, labels)` state with its unnormalized weight.
    fn states(&self) -> impl Iterator<Item = (i8, Vec<i8>)> + '_ {
        let m = self.n_sources();
        (0..1u32 << (m + 1)).map(move |bits| {
            let y = if bits & 1 == 1 { 1 } else { -1 };
            let labels = (0..m)
                .map(|j| if bits >> (j + 1) & 1 == 1 { 1 } else { -1 })
                .collect();
            (y, labels)
        })
    }

    pub fn partition_function(&self) -> Result<f64, OracleError> {
        let m = self.n_sources();
        if m > ORACLE_MAX_SOURCES {
            return Err(OracleError::TooManySources(m));
        }
        Ok(self.states().map(|(y, l)| self.energy(y, &l).exp()).sum())
    }

    /// `P(Y = y, L = labels)`.
    pub fn joint_prob(&self, y: i8, labels: &[i8]) -> Result<f64, OracleError> {
        self.check(labels)?;
        Ok(self.energy(y, labels).exp() / self.partition_function()?)
    }

    /// `P(Y = 1 | L = labels)` from the joint.
    pub fn posterior_positive(&self, labels: &[i8]) -> Result<f64, OracleError> {
        let pos = self.joint_prob(1, labels)?;
        let neg = self.joint_prob(-1, labels)?;
        Ok(pos / (pos + neg))
    }

    /// Sum of the joint over all states.
    pub fn total_probability(&self) -> Result<f64, OracleError> {
        let z = self.partition_function()?;
        Ok(self.states().map(|(y, l)| self.energy(y, &l).exp() / z).sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_parameters_are_uniform() {
        let model = IsingModel {
            theta00: 0.0,
            theta_plus: vec![0.0; 3],
            theta0_plus: vec![0.0; 3],
            theta_plus_plus: vec![],
        };
        let p = model.joint_prob(1, &[1, -1, 1]).unwrap();
        assert!((p - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn normalizes() {
        let model = IsingModel {
            theta00: 0.3,
            theta_plus: vec![0.1, -0.2, 0.4],
            theta0_plus: vec![0.7, 0.2, -0.5],
            theta_plus_plus: vec![(0, 2, 0.6)],
        };
        assert!((model.total_probability().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        let model = IsingModel {
            theta00: 0.0,
            theta_plus: vec![0.0; 13],
            theta0_plus: vec![0.0; 13],
            theta_plus_plus: vec![],
        };
        assert_eq!(
            model.joint_prob(1, &[1; 13]),
            Err(OracleError::TooManySources(13))
        );
        let small = IsingModel {
            theta00: 0.0,
            theta_plus: vec![0.0; 2],
            theta0_plus: vec![0.0; 2],
            theta_plus_plus: vec![],
        };
        assert!(matches!(small.joint_prob(1, &[1]), Err(OracleError::Width { .. })));
    }
}
