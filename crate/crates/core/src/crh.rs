//! Truth discovery by conflict resolution on heterogeneous sources (CRH).
//!
//! Block coordinate descent on
//!
//! ```text
//! f(truths, w) = sum_k w_k * (sum_e d(truth_e, L_k(e)) + eps)
//! ```
//!
//! subject to `sum_k exp(-w_k) = 1`. The weight step has the closed form
//! `w_k = -ln(cost_k / sum cost)`; the truth step is a weighted vote (edge
//! mode) or a weighted-support arborescence per sentence (UAS mode).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arborescence::{decode_sentences, ArborescenceError};
use crate::edges::{majority_vote, EdgeLabelMatrix};
use crate::model::DepTree;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrhDistance {
    /// 0-1 loss per candidate edge.
    EdgeZeroOne,
    /// `1 - UAS` per sentence between a parser's tree and the current
    /// aggregated tree.
    TreeUas,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrhOptions {
    pub distance: CrhDistance,
    pub max_iterations: usize,
    /// Stop once the objective decreases by less than this.
    pub tolerance: f64,
    /// Added to every source cost so that a perfect source gets a finite
    /// weight.
    pub epsilon: f64,
    pub single_root: bool,
}

impl Default for CrhOptions {
    fn default() -> Self {
        CrhOptions {
            distance: CrhDistance::EdgeZeroOne,
            max_iterations: 100,
            tolerance: 1e-9,
            epsilon: 1e-8,
            single_root: true,
        }
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum CrhError {
    #[error("CRH needs at least two sources, got {0}")]
    TooFewSources(usize),
    #[error("smoothing epsilon must be positive, got {0}")]
    Epsilon(f64),
    #[error(transparent)]
    Arborescence(#[from] ArborescenceError),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CrhState {
    pub weights: Vec<f64>,
    /// Aggregated label per candidate edge.
    #[serde(skip)]
    pub truths: Vec<i8>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every half-step, starting with the first weight
    /// update.
    pub objective_trace: Vec<f64>,
}

/// Per-source distance totals (without smoothing).
fn distances(truths: &[i8], matrix: &EdgeLabelMatrix, distance: CrhDistance) -> Vec<f64> {
    let m = matrix.n_cols();
    match distance {
        CrhDistance::EdgeZeroOne => {
            let mut miss = vec![0u64; m];
            for (i, &t) in truths.iter().enumerate() {
                for (k, &v) in matrix.row(i).iter().enumerate() {
                    if v != t {
                        miss[k] += 1;
                    }
                }
            }
            miss.into_iter().map(|c| c as f64).collect()
        }
        CrhDistance::TreeUas => {
            let union = matrix.union();
            let mut cost = vec![0.0; m];
            for (s, rows) in union.sentence_rows.iter().enumerate() {
                let q = union.sentence_lengths[s] as f64;
                let mut agree = vec![0usize; m];
                for i in rows.clone().filter(|&i| truths[i] > 0) {
                    for (k, &v) in matrix.row(i).iter().enumerate() {
                        if v > 0 {
                            agree[k] += 1;
                        }
                    }
                }
                for k in 0..m {
                    cost[k] += 1.0 - agree[k] as f64 / q;
                }
            }
            cost
        }
    }
}

/// The objective for given weights and truths.
pub fn objective(weights: &[f64], truths: &[i8], matrix: &EdgeLabelMatrix, opts: &CrhOptions) -> f64 {
    distances(truths, matrix, opts.distance)
        .iter()
        .zip(weights)
        .map(|(d, w)| w * (d + opts.epsilon))
        .sum()
}

/// Closed-form minimizer of the objective over the weights.
pub fn weight_update(truths: &[i8], matrix: &EdgeLabelMatrix, opts: &CrhOptions) -> Vec<f64> {
    let costs: Vec<f64> = distances(truths, matrix, opts.distance)
        .into_iter()
        .map(|d| d + opts.epsilon)
        .collect();
    weights_from_costs(&costs)
}

/// `w_k = -ln(cost_k / sum cost)`.
pub fn weights_from_costs(costs: &[f64]) -> Vec<f64> {
    let total: f64 = costs.iter().sum();
    costs.iter().map(|c| -(c / total).ln()).collect()
}

/// Weighted support of each candidate edge, normalized by the weight sum.
pub fn support_scores(weights: &[f64], matrix: &EdgeLabelMatrix) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    matrix
        .rows()
        .take(matrix.n_rows())
        .map(|r| {
            r.iter()
                .zip(weights)
                .filter(|(&v, _)| v > 0)
                .map(|(_, w)| w)
                .sum::<f64>()
                / total
        })
        .collect()
}

/// Weighted vote per edge; ties go to `+1`.
pub fn weighted_vote(weights: &[f64], matrix: &EdgeLabelMatrix) -> Vec<i8> {
    matrix
        .rows()
        .take(matrix.n_rows())
        .map(|r| {
            let (mut plus, mut minus) = (0.0, 0.0);
            for (&v, w) in r.iter().zip(weights) {
                if v > 0 {
                    plus += w;
                } else {
                    minus += w;
                }
            }
            if plus >= minus {
                1
            } else {
                -1
            }
        })
        .collect()
}

fn tree_truths(trees: &[DepTree], matrix: &EdgeLabelMatrix) -> Vec<i8> {
    matrix
        .edges()
        .iter()
        .map(|e| if trees[e.sentence].contains(e.edge()) { 1 } else { -1 })
        .collect()
}

/// Minimizer of the objective over the truths for fixed weights.
pub fn truth_update(
    weights: &[f64],
    matrix: &EdgeLabelMatrix,
    opts: &CrhOptions,
) -> Result<Vec<i8>, CrhError> {
    Ok(match opts.distance {
        CrhDistance::EdgeZeroOne => weighted_vote(weights, matrix),
        CrhDistance::TreeUas => {
            let scores = support_scores(weights, matrix);
            let trees = decode_sentences(matrix.union(), &scores, opts.single_root)?;
            tree_truths(&trees, matrix)
        }
    })
}

/// Run CRH from a majority-vote start until the truths stop changing, the
/// objective stalls, or the iteration cap is hit.
pub fn crh_run(matrix: &EdgeLabelMatrix, opts: &CrhOptions) -> Result<CrhState, CrhError> {
    let m = matrix.n_cols();
    if m < 2 {
        return Err(CrhError::TooFewSources(m));
    }
    if !(opts.epsilon > 0.0) {
        return Err(CrhError::Epsilon(opts.epsilon));
    }

    let mut truths = match opts.distance {
        CrhDistance::EdgeZeroOne => majority_vote(matrix),
        // Trees decoded from equal weights, i.e. the vote-MST trees.
        CrhDistance::TreeUas => truth_update(&vec![1.0; m], matrix, opts)?,
    };
    let mut weights = vec![(m as f64).ln(); m];
    let mut trace = Vec::new();
    let mut previous = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        weights = weight_update(&truths, matrix, opts);
        trace.push(objective(&weights, &truths, matrix, opts));

        let updated = truth_update(&weights, matrix, opts)?;
        let current = objective(&weights, &updated, matrix, opts);
        trace.push(current);

        let unchanged = updated == truths;
        truths = updated;
        if unchanged || previous - current < opts.tolerance {
            converged = true;
            break;
        }
        previous = current;
    }

    Ok(CrhState {
        objective: *trace.last().unwrap_or(&f64::NAN),
        weights,
        truths,
        iterations,
        converged,
        objective_trace: trace,
    })
}

/// Decode one tree per sentence from the weighted support of each edge.
pub fn crh_trees(
    state: &CrhState,
    matrix: &EdgeLabelMatrix,
    single_root: bool,
) -> Result<Vec<DepTree>, CrhError> {
    let scores = support_scores(&state.weights, matrix);
    Ok(decode_sentences(matrix.union(), &scores, single_root)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ids(m: usize) -> Vec<String> {
        (0..m).map(|j| format!("p{}", j)).collect()
    }

    fn random_matrix(rng: &mut impl Rng, n: usize, m: usize) -> EdgeLabelMatrix {
        let rows: Vec<Vec<i8>> = (0..n)
            .map(|_| {
                let mut r: Vec<i8> = (0..m).map(|_| if rng.gen_bool(0.5) { 1 } else { -1 }).collect();
                if r.iter().all(|&v| v < 0) {
                    r[rng.gen_range(0..m)] = 1;
                }
                r
            })
            .collect();
        EdgeLabelMatrix::from_rows(ids(m), &rows)
    }

    #[test]
    fn equal_costs_give_log_m() {
        for w in weights_from_costs(&[2.0; 4]) {
            assert_abs_diff_eq!(w, 4f64.ln(), epsilon = 1e-12);
        }
    }

    #[test]
    fn closed_form_two_sources() {
        let w = weights_from_costs(&[1.0, 3.0]);
        assert_abs_diff_eq!(w[0], 4f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(w[1], (4.0f64 / 3.0).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(w[0], 1.386, epsilon = 1e-3);
        assert_abs_diff_eq!(w[1], 0.288, epsilon = 1e-3);
    }

    #[test]
    fn zero_cost_stays_finite() {
        let eps = 1e-8;
        let w = weights_from_costs(&[eps, 10.0 + eps]);
        assert!(w[0].is_finite());
        assert_abs_diff_eq!(w[0], -(eps / (10.0 + 2.0 * eps)).ln(), epsilon = 1e-9);
    }

    #[test]
    fn weighted_vote_examples() {
        let m = EdgeLabelMatrix::from_rows(ids(3), &[vec![1, 1, 1], vec![1, -1, -1], vec![1, 1, -1]]);
        assert_eq!(weighted_vote(&[2.0, 1.0, 1.0], &m)[..2], [1, 1]);
        assert_eq!(weighted_vote(&[1.0, 1.0, 3.0], &m)[2], -1);
    }

    #[test]
    fn identical_sources_converge_immediately() {
        let rows: Vec<Vec<i8>> = (0..50).map(|i| vec![if i % 3 == 0 { -1 } else { 1 }; 3]).collect();
        // Rows with all -1 cannot come from trees; flip one column on them.
        let rows: Vec<Vec<i8>> = rows
            .into_iter()
            .map(|r| if r[0] < 0 { vec![1; 3] } else { r })
            .collect();
        let m = EdgeLabelMatrix::from_rows(ids(3), &rows);
        let state = crh_run(&m, &CrhOptions::default()).unwrap();
        assert_eq!(state.iterations, 1);
        assert!(state.converged);
        assert_eq!(state.truths, m.column(0));
        for w in &state.weights {
            assert_abs_diff_eq!(*w, 3f64.ln(), epsilon = 1e-12);
        }
    }

    #[test]
    fn objective_never_increases_and_constraint_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..30 {
            let m = rng.gen_range(2..7);
            let mat = random_matrix(&mut rng, 200, m);
            let state = crh_run(&mat, &CrhOptions::default()).unwrap();
            for w in state.objective_trace.windows(2) {
                assert!(w[1] <= w[0], "objective went up: {:?}", w);
            }
            let s: f64 = state.weights.iter().map(|w| (-w).exp()).sum();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn permuting_columns_permutes_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mat = random_matrix(&mut rng, 300, 4);
        let perm = [2, 0, 3, 1];
        let permuted = mat.select_columns(&perm);
        let a = crh_run(&mat, &CrhOptions::default()).unwrap();
        let b = crh_run(&permuted, &CrhOptions::default()).unwrap();
        assert_eq!(a.truths, b.truths);
        for (pos, &j) in perm.iter().enumerate() {
            assert_abs_diff_eq!(a.weights[j], b.weights[pos], epsilon = 1e-12);
        }
    }

    #[test]
    fn too_few_sources() {
        let m = EdgeLabelMatrix::from_rows(ids(1), &[vec![1]]);
        assert_eq!(crh_run(&m, &CrhOptions::default()), Err(CrhError::TooFewSources(1)));
    }
}
