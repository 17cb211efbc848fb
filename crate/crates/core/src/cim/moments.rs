//! Mean parameters of the Ising label model.

use serde::Serialize;

use super::patterns::Patterns;
use crate::edges::EdgeLabelMatrix;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentOptions {
    /// Triplets whose denominator `|E[L_k L_l]|` is below this are skipped.
    pub triplet_min: f64,
    pub clamp_min: f64,
    pub clamp_max: f64,
}

impl Default for MomentOptions {
    fn default() -> Self {
        MomentOptions {
            triplet_min: 0.01,
            clamp_min: 0.001,
            clamp_max: 0.999,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairMoment {
    pub a: usize,
    pub b: usize,
    pub value: f64,
}

/// Estimated `E[Y]`, `E[L_j]`, `E[L_j Y]` and `E[L_j L_k]` for dependent
/// pairs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeanParams {
    pub mu00: f64,
    pub mu_plus: Vec<f64>,
    pub mu0_plus: Vec<f64>,
    pub mu_plus_plus: Vec<PairMoment>,
    /// Columns whose `E[L_j Y]` came from the majority-vote fallback.
    pub fallback: Vec<usize>,
    /// Valid triplets behind each triplet estimate.
    pub triplets_used: Vec<usize>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Second moments `E[L_a L_b]` of all column pairs.
pub fn pair_moments(matrix: &EdgeLabelMatrix) -> Vec<Vec<f64>> {
    let patterns = Patterns::from_rows(matrix.rows().take(matrix.n_rows()).map(|r| r.to_vec()));
    let m = matrix.n_cols();
    let mut out = vec![vec![1.0; m]; m];
    for a in 0..m {
        for b in a + 1..m {
            let v = patterns.mean(|r| (r[a] * r[b]) as f64);
            out[a][b] = v;
            out[b][a] = v;
        }
    }
    out
}

/// `|E[L_j Y]|` from the median of `sqrt(|M_jk M_jl / M_kl|)` over valid
/// triplets; `None` when no triplet passes the denominator guard.
pub fn triplet_accuracy(second: &[Vec<f64>], j: usize, triplet_min: f64) -> Option<(f64, usize)> {
    let m = second.len();
    let mut estimates = Vec::new();
    for k in 0..m {
        for l in k + 1..m {
            if k == j || l == j || second[k][l].abs() < triplet_min {
                continue;
            }
            estimates.push((second[j][k] * second[j][l] / second[k][l]).abs().sqrt());
        }
    }
    if estimates.is_empty() {
        None
    } else {
        let used = estimates.len();
        Some((median(&mut estimates), used))
    }
}

/// Estimate the mean parameters from labels and majority-vote pseudo-truth.
///
/// `E[L_j Y]` is taken positive (every parser better than chance) and its
/// magnitude is clamped into `[clamp_min, clamp_max]`. With fewer than three
/// columns, or when a column has no valid triplet, `E[L_j Y]` falls back to
/// the empirical `E[L_j mv]`.
pub fn estimate_mean_params(
    matrix: &EdgeLabelMatrix,
    mv: &[i8],
    dependent_pairs: &[(usize, usize)],
    opts: &MomentOptions,
) -> MeanParams {
    let m = matrix.n_cols();
    let n = matrix.n_rows() as f64;
    let mu_plus: Vec<f64> = (0..m)
        .map(|j| (0..matrix.n_rows()).map(|i| matrix.get(i, j) as f64).sum::<f64>() / n)
        .collect();
    let mu00 = mv.iter().map(|&v| v as f64).sum::<f64>() / n;
    let second = pair_moments(matrix);

    let clamp = |v: f64| v.signum() * v.abs().clamp(opts.clamp_min, opts.clamp_max);
    let mut fallback = Vec::new();
    let mut triplets_used = vec![0; m];
    let mu0_plus = (0..m)
        .map(|j| {
            let triplet = if m >= 3 {
                triplet_accuracy(&second, j, opts.triplet_min)
            } else {
                None
            };
            match triplet {
                Some((v, used)) => {
                    triplets_used[j] = used;
                    v.clamp(opts.clamp_min, opts.clamp_max)
                }
                None => {
                    fallback.push(j);
                    let v = (0..matrix.n_rows())
                        .map(|i| (matrix.get(i, j) * mv[i]) as f64)
                        .sum::<f64>()
                        / n;
                    if v == 0.0 {
                        opts.clamp_min
                    } else {
                        clamp(v)
                    }
                }
            }
        })
        .collect();

    let mu_plus_plus = dependent_pairs
        .iter()
        .map(|&(a, b)| PairMoment {
            a,
            b,
            value: second[a][b],
        })
        .collect();

    MeanParams {
        mu00,
        mu_plus,
        mu0_plus,
        mu_plus_plus,
        fallback,
        triplets_used,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edges::majority_vote;
    use approx::assert_abs_diff_eq;

    #[test]
    fn worked_triplet_example() {
        // Accuracies 0.9, 0.8, 0.7 with balanced labels: E[L_j L_k] =
        // (2a_j - 1)(2a_k - 1).
        let second = vec![
            vec![1.0, 0.48, 0.32],
            vec![0.48, 1.0, 0.24],
            vec![0.32, 0.24, 1.0],
        ];
        let (v, used) = triplet_accuracy(&second, 0, 0.01).unwrap();
        assert_abs_diff_eq!(v, 0.8, epsilon = 1e-12);
        assert_eq!(used, 1);
        assert_abs_diff_eq!(triplet_accuracy(&second, 1, 0.01).unwrap().0, 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(triplet_accuracy(&second, 2, 0.01).unwrap().0, 0.4, epsilon = 1e-12);
        assert!(triplet_accuracy(&second, 0, 0.3).is_none());
    }

    #[test]
    fn identical_perfect_parsers_clamp() {
        let rows: Vec<Vec<i8>> = (0..40).map(|i| vec![if i % 4 == 0 { 1 } else { -1 }; 4]).collect();
        let mat = EdgeLabelMatrix::from_rows((0..4).map(|j| j.to_string()).collect(), &rows);
        let mv = majority_vote(&mat);
        let mp = estimate_mean_params(&mat, &mv, &[], &MomentOptions::default());
        for v in &mp.mu0_plus {
            assert_abs_diff_eq!(*v, 0.999, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(mp.mu00, -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(mp.mu_plus[0], -0.5, epsilon = 1e-15);
        assert!(mp.fallback.is_empty());
    }

    #[test]
    fn two_columns_fall_back_to_vote_moments() {
        let rows = vec![vec![1, 1], vec![1, -1], vec![-1, -1], vec![-1, 1]];
        let mat = EdgeLabelMatrix::from_rows(vec!["a".into(), "b".into()], &rows);
        let mv = majority_vote(&mat);
        // mv = [1, 1, -1, 1]
        let mp = estimate_mean_params(&mat, &mv, &[(0, 1)], &MomentOptions::default());
        assert_eq!(mp.fallback, vec![0, 1]);
        assert_abs_diff_eq!(mp.mu0_plus[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(mp.mu0_plus[1], 0.5, epsilon = 1e-15);
        assert_eq!(mp.mu_plus_plus.len(), 1);
        assert_abs_diff_eq!(mp.mu_plus_plus[0].value, 0.0, epsilon = 1e-15);
    }
}
