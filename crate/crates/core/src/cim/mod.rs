//! Customized Ising model (CIM) aggregation.
//!
//! Pipeline over an edge label matrix:
//!
//! 1. estimate the dependency graph between parsers against the majority
//!    vote ([`estimate_correlation_graph`]);
//! 2. collapse each connected group of dependent parsers into one
//!    pseudo-parser ([`collapse_correlated`]);
//! 3. estimate the mean parameters with the triplet method
//!    ([`estimate_mean_params`]);
//! 4. fit `theta00`, `theta0+` ([`fit_canonical_params`]), falling back to
//!    [`closed_form_params`] when the moments cannot be matched;
//! 5. score each edge with `sigmoid(2 theta00 + 2 theta0+ . L)`
//!    ([`infer_scores`]) and decode trees from the scores ([`cim_trees`]).

mod canonical;
mod correlation;
mod lasso;
mod moments;
mod oracle;
mod patterns;

use serde::Serialize;
use thiserror::Error;

pub use canonical::{closed_form_params, fit_canonical_params, CanonicalFit, CanonicalProblem, FIT_MAX_ITERATIONS, FIT_TOLERANCE};
pub use correlation::{
    collapse_correlated, default_l1_penalty, estimate_correlation_graph, CollapseMap,
    CorrelatedPair, CorrelationGraph, LASSO_MAX_SWEEPS, LASSO_TOLERANCE,
};
pub use moments::{estimate_mean_params, pair_moments, triplet_accuracy, MeanParams, MomentOptions, PairMoment};
pub use oracle::{IsingModel, OracleError, ORACLE_MAX_SOURCES};

use crate::arborescence::{decode_sentences, ArborescenceError};
use crate::edges::{majority_vote, EdgeLabelMatrix, EdgeUnion};
use crate::model::DepTree;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CimOptions {
    /// `None` selects [`default_l1_penalty`].
    pub l1_penalty: Option<f64>,
    pub coef_threshold: f64,
    pub collapse: bool,
    pub moments: MomentOptions,
    /// Use [`closed_form_params`] when the canonical fit does not converge;
    /// otherwise keep the last iterate.
    pub closed_form_fallback: bool,
    pub single_root: bool,
}

impl Default for CimOptions {
    fn default() -> Self {
        CimOptions {
            l1_penalty: None,
            coef_threshold: 1.0,
            collapse: true,
            moments: MomentOptions::default(),
            closed_form_fallback: true,
            single_root: true,
        }
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum CimError {
    #[error("CIM needs at least two parsers, got {0}")]
    TooFewParsers(usize),
    #[error("l1 penalty must be positive, got {0}")]
    Penalty(f64),
    #[error("label matrix has no rows")]
    NoRows,
    #[error(transparent)]
    Arborescence(#[from] ArborescenceError),
}

/// Everything estimated by one CIM run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CimModel {
    pub l1_penalty: f64,
    pub graph: CorrelationGraph,
    pub collapse: CollapseMap,
    /// Pseudo-parser names after collapse.
    pub columns: Vec<String>,
    pub mean: MeanParams,
    pub fit: CanonicalFit,
    /// Parameters used for scoring.
    pub theta00: f64,
    pub theta0_plus: Vec<f64>,
    /// True when the parameters come from [`closed_form_params`].
    pub closed_form: bool,
    /// Posterior probability of every candidate edge.
    #[serde(skip)]
    pub scores: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `P(y = 1 | L) = sigmoid(2 theta00 + 2 theta0+ . L)` for every row.
pub fn infer_scores(theta00: f64, theta0_plus: &[f64], matrix: &EdgeLabelMatrix) -> Vec<f64> {
    assert_eq!(theta0_plus.len(), matrix.n_cols());
    matrix
        .rows()
        .take(matrix.n_rows())
        .map(|r| {
            let z: f64 = r.iter().zip(theta0_plus).map(|(&l, t)| l as f64 * t).sum();
            sigmoid(2.0 * theta00 + 2.0 * z)
        })
        .collect()
}

/// Run the full estimation and scoring pipeline.
pub fn cim_fit(matrix: &EdgeLabelMatrix, opts: &CimOptions) -> Result<CimModel, CimError> {
    let m = matrix.n_cols();
    if m < 2 {
        return Err(CimError::TooFewParsers(m));
    }
    if matrix.n_rows() == 0 {
        return Err(CimError::NoRows);
    }
    let penalty = opts
        .l1_penalty
        .unwrap_or_else(|| default_l1_penalty(m, matrix.n_rows()));
    if !(penalty > 0.0) {
        return Err(CimError::Penalty(penalty));
    }

    let mv = majority_vote(matrix);
    let graph = estimate_correlation_graph(matrix, &mv, penalty, opts.coef_threshold);

    let (reduced, collapse, pairs) = if opts.collapse {
        let (reduced, map) = collapse_correlated(matrix, &graph, &mv);
        (reduced, map, Vec::new())
    } else {
        (matrix.clone(), CollapseMap::identity(m), graph.pairs())
    };

    // The pseudo-truth is recomputed on the reduced columns so that a
    // collapsed duplicate no longer counts twice.
    let reduced_mv = majority_vote(&reduced);
    let mean = estimate_mean_params(&reduced, &reduced_mv, &pairs, &opts.moments);
    let fit = fit_canonical_params(&mean, &reduced);
    let closed_form = opts.closed_form_fallback && !fit.converged;
    let (theta00, theta0_plus) = if closed_form {
        closed_form_params(&mean)
    } else {
        (fit.theta00, fit.theta0_plus.clone())
    };
    let scores = infer_scores(theta00, &theta0_plus, &reduced);

    Ok(CimModel {
        l1_penalty: penalty,
        graph,
        collapse,
        columns: reduced.parser_ids().to_vec(),
        mean,
        fit,
        theta00,
        theta0_plus,
        closed_form,
        scores,
    })
}

/// Decode one tree per sentence using the posterior scores as edge weights.
pub fn cim_trees(scores: &[f64], union: &EdgeUnion, single_root: bool) -> Result<Vec<DepTree>, CimError> {
    Ok(decode_sentences(union, scores, single_root)?)
}
