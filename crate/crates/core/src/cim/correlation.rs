//! Dependency structure between parsers and the collapse of dependent
//! groups into single pseudo-parsers.

use serde::Serialize;

use super::lasso::{fit_l1_logistic, Design};
use super::patterns::Patterns;
use crate::edges::EdgeLabelMatrix;

/// Solver tolerance on the optimality conditions.
pub const LASSO_TOLERANCE: f64 = 1e-6;
pub const LASSO_MAX_SWEEPS: usize = 2000;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrelatedPair {
    pub a: usize,
    pub b: usize,
    /// Smaller of the two coefficients.
    pub strength: f64,
}

/// Undirected dependency graph over parser columns. The latent truth node is
/// implicit and connected to every parser.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrelationGraph {
    pub n_parsers: usize,
    /// Pairs with `a < b`, sorted.
    pub edges: Vec<CorrelatedPair>,
    /// `coefs[j][k]`: coefficient of column `k` when regressing column `j`.
    pub coefs: Vec<Vec<f64>>,
    /// Columns that vote identically on every edge; never regressed.
    pub constant_columns: Vec<usize>,
    /// Regressions that hit the sweep cap.
    pub unconverged: Vec<usize>,
}

impl CorrelationGraph {
    pub fn empty(n_parsers: usize) -> Self {
        CorrelationGraph {
            n_parsers,
            edges: Vec::new(),
            coefs: vec![vec![0.0; n_parsers]; n_parsers],
            constant_columns: Vec::new(),
            unconverged: Vec::new(),
        }
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        let (a, b) = (a.min(b), a.max(b));
        self.edges.iter().any(|e| e.a == a && e.b == b)
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.edges.iter().map(|e| (e.a, e.b)).collect()
    }
}

/// Default penalty: `0.1 * sqrt(ln m / n)`.
pub fn default_l1_penalty(m: usize, n: usize) -> f64 {
    0.1 * ((m.max(2) as f64).ln() / n.max(1) as f64).sqrt()
}

/// Neighborhood selection: regress every parser column on the other columns
/// plus the majority vote with an l1 penalty; keep `(j, k)` when both
/// directions have a coefficient above `threshold`.
///
/// Only positive coefficients count. Conditioning on the majority vote
/// makes independent parsers look negatively related (each one's vote
/// is part of the vote it is conditioned on); shared errors show up as
/// positive coefficients.
pub fn estimate_correlation_graph(
    matrix: &EdgeLabelMatrix,
    mv: &[i8],
    penalty: f64,
    threshold: f64,
) -> CorrelationGraph {
    let m = matrix.n_cols();
    assert_eq!(mv.len(), matrix.n_rows());
    assert!(penalty > 0.0, "l1 penalty must be positive");

    let patterns = Patterns::from_rows(
        matrix
            .rows()
            .take(matrix.n_rows())
            .zip(mv)
            .map(|(r, &v)| r.iter().copied().chain(std::iter::once(v)).collect()),
    );
    let constant_columns: Vec<usize> = (0..m)
        .filter(|&j| patterns.rows.iter().all(|r| r[j] == patterns.rows[0][j]))
        .collect();
    let active: Vec<usize> = (0..m).filter(|j| !constant_columns.contains(j)).collect();

    let mut coefs = vec![vec![0.0; m]; m];
    let mut unconverged = Vec::new();
    for &j in &active {
        let predictors: Vec<usize> = active.iter().copied().filter(|&k| k != j).collect();
        let features: Vec<Vec<f64>> = patterns
            .rows
            .iter()
            .map(|r| {
                predictors
                    .iter()
                    .map(|&k| r[k] as f64)
                    .chain(std::iter::once(r[m] as f64))
                    .collect()
            })
            .collect();
        let targets: Vec<f64> = patterns.rows.iter().map(|r| (r[j] as f64 + 1.0) / 2.0).collect();
        let fit = fit_l1_logistic(
            &Design {
                features: &features,
                targets: &targets,
                weights: &patterns.weights,
            },
            penalty,
            LASSO_TOLERANCE,
            LASSO_MAX_SWEEPS,
        );
        if !fit.converged {
            unconverged.push(j);
        }
        for (pos, &k) in predictors.iter().enumerate() {
            coefs[j][k] = fit.coefs[pos];
        }
    }

    let mut edges = Vec::new();
    for a in 0..m {
        for b in a + 1..m {
            let (ab, ba) = (coefs[a][b], coefs[b][a]);
            if ab > threshold && ba > threshold {
                edges.push(CorrelatedPair {
                    a,
                    b,
                    strength: ab.min(ba),
                });
            }
        }
    }

    CorrelationGraph {
        n_parsers: m,
        edges,
        coefs,
        constant_columns,
        unconverged,
    }
}

/// Partition of the parser columns into pseudo-parsers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CollapseMap {
    /// Members of each component, ascending; components ordered by their
    /// smallest member.
    pub components: Vec<Vec<usize>>,
    /// Component index of every original column.
    pub column_of: Vec<usize>,
    /// Member whose vote settles a tied component vote.
    pub tie_breakers: Vec<usize>,
}

impl CollapseMap {
    pub fn identity(m: usize) -> Self {
        CollapseMap {
            components: (0..m).map(|j| vec![j]).collect(),
            column_of: (0..m).collect(),
            tie_breakers: (0..m).collect(),
        }
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }
}

fn find(parent: &mut [usize], x: usize) -> usize {
    let mut root = x;
    while parent[root] != root {
        root = parent[root];
    }
    let mut x = x;
    while parent[x] != root {
        let next = parent[x];
        parent[x] = root;
        x = next;
    }
    root
}

/// Replace every connected component of `graph` by its majority vote.
///
/// A tied component vote takes the vote of the member that agrees most
/// often with the global majority vote `mv` (lowest index on equal rates).
pub fn collapse_correlated(
    matrix: &EdgeLabelMatrix,
    graph: &CorrelationGraph,
    mv: &[i8],
) -> (EdgeLabelMatrix, CollapseMap) {
    let m = matrix.n_cols();
    let mut parent: Vec<usize> = (0..m).collect();
    for e in &graph.edges {
        let (ra, rb) = (find(&mut parent, e.a), find(&mut parent, e.b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut components: Vec<Vec<usize>> = Vec::new();
    let mut column_of = vec![usize::MAX; m];
    for j in 0..m {
        let r = find(&mut parent, j);
        if column_of[r] == usize::MAX {
            column_of[r] = components.len();
            components.push(Vec::new());
        }
        column_of[j] = column_of[r];
        components[column_of[j]].push(j);
    }

    let agreement: Vec<usize> = (0..m)
        .map(|j| (0..matrix.n_rows()).filter(|&i| matrix.get(i, j) == mv[i]).count())
        .collect();
    let tie_breakers: Vec<usize> = components
        .iter()
        .map(|c| {
            *c.iter()
                .max_by(|&&a, &&b| agreement[a].cmp(&agreement[b]).then(b.cmp(&a)))
                .unwrap()
        })
        .collect();

    let columns: Vec<Vec<i8>> = components
        .iter()
        .zip(&tie_breakers)
        .map(|(members, &tb)| {
            (0..matrix.n_rows())
                .map(|i| {
                    let s: i32 = members.iter().map(|&j| matrix.get(i, j) as i32).sum();
                    match s.signum() {
                        0 => matrix.get(i, tb),
                        sign => sign as i8,
                    }
                })
                .collect()
        })
        .collect();
    let ids = components
        .iter()
        .map(|c| {
            c.iter()
                .map(|&j| matrix.parser_ids()[j].as_str())
                .collect::<Vec<_>>()
                .join("+")
        })
        .collect();

    (
        matrix.with_columns(ids, &columns),
        CollapseMap {
            components,
            column_of,
            tie_breakers,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edges::majority_vote;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ids(m: usize) -> Vec<String> {
        (0..m).map(|j| format!("p{}", j)).collect()
    }

    fn random_rows(rng: &mut impl Rng, n: usize, m: usize) -> Vec<Vec<i8>> {
        (0..n)
            .map(|_| (0..m).map(|_| if rng.gen_bool(0.5) { 1 } else { -1 }).collect())
            .collect()
    }

    #[test]
    fn independent_columns_with_strong_penalty_have_no_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows = random_rows(&mut rng, 10_000, 5);
        let mat = EdgeLabelMatrix::from_rows(ids(5), &rows);
        let mv = majority_vote(&mat);
        let g = estimate_correlation_graph(&mat, &mv, 0.5, 0.2);
        assert!(g.edges.is_empty());
        assert!(g.unconverged.is_empty());
    }

    #[test]
    fn duplicate_column_is_found() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut rows = random_rows(&mut rng, 5_000, 4);
        for r in &mut rows {
            r.push(r[1]);
        }
        let mat = EdgeLabelMatrix::from_rows(ids(5), &rows);
        let mv = majority_vote(&mat);
        let g = estimate_correlation_graph(&mat, &mv, default_l1_penalty(5, 5_000), 0.5);
        assert!(g.has_edge(1, 4));
        assert!(g.has_edge(4, 1));
    }

    #[test]
    fn two_columns_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows = random_rows(&mut rng, 2_000, 2);
        let mat = EdgeLabelMatrix::from_rows(ids(2), &rows);
        let mv = majority_vote(&mat);
        let g = estimate_correlation_graph(&mat, &mv, 0.01, 0.2);
        assert!(g.edges.len() <= 1);
        assert_eq!(
            g.has_edge(0, 1),
            g.coefs[0][1] > 0.2 && g.coefs[1][0] > 0.2
        );
    }

    #[test]
    fn negated_column_is_not_an_edge() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut rows = random_rows(&mut rng, 5_000, 4);
        for r in &mut rows {
            r.push(-r[1]);
        }
        let mat = EdgeLabelMatrix::from_rows(ids(5), &rows);
        let g = estimate_correlation_graph(&mat, &majority_vote(&mat), 0.01, 0.2);
        assert!(g.coefs[1][4] < -0.2 && g.coefs[4][1] < -0.2);
        assert!(!g.has_edge(1, 4));
    }

    #[test]
    fn constant_column_is_excluded() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut rows = random_rows(&mut rng, 500, 3);
        for r in &mut rows {
            r[2] = 1;
        }
        let mat = EdgeLabelMatrix::from_rows(ids(3), &rows);
        let g = estimate_correlation_graph(&mat, &majority_vote(&mat), 0.01, 0.2);
        assert_eq!(g.constant_columns, vec![2]);
        assert!(g.coefs[2].iter().all(|&c| c == 0.0));
    }

    #[test]
    fn collapse_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows = random_rows(&mut rng, 50, 3);
        let mat = EdgeLabelMatrix::from_rows(ids(3), &rows);
        let mv = majority_vote(&mat);

        let (same, map) = collapse_correlated(&mat, &CorrelationGraph::empty(3), &mv);
        assert_eq!(map, CollapseMap::identity(3));
        assert_eq!(same.column(1), mat.column(1));

        let mut g = CorrelationGraph::empty(3);
        g.edges.push(CorrelatedPair { a: 0, b: 1, strength: 1.0 });
        let dup_rows: Vec<Vec<i8>> = rows.iter().map(|r| vec![r[0], r[0], r[2]]).collect();
        let dup = EdgeLabelMatrix::from_rows(ids(3), &dup_rows);
        let (reduced, map) = collapse_correlated(&dup, &g, &majority_vote(&dup));
        assert_eq!(map.components, vec![vec![0, 1], vec![2]]);
        assert_eq!(reduced.n_cols(), 2);
        assert_eq!(reduced.column(0), dup.column(0));
        assert_eq!(reduced.parser_ids()[0], "p0+p1");

        g.edges.push(CorrelatedPair { a: 1, b: 2, strength: 1.0 });
        let one = EdgeLabelMatrix::from_rows(ids(3), &[vec![1, 1, -1]]);
        let (reduced, map) = collapse_correlated(&one, &g, &[1]);
        assert_eq!(map.components, vec![vec![0, 1, 2]]);
        assert_eq!(reduced.row(0), &[1]);
    }

    #[test]
    fn tied_component_uses_best_agreeing_member() {
        // Column 1 agrees with the global vote more often than column 0.
        let rows = vec![vec![1, -1, -1, -1], vec![-1, 1, 1, 1], vec![1, 1, 1, 1]];
        let mat = EdgeLabelMatrix::from_rows(ids(4), &rows);
        let mv = majority_vote(&mat);
        let mut g = CorrelationGraph::empty(4);
        g.edges.push(CorrelatedPair { a: 0, b: 1, strength: 1.0 });
        let (reduced, map) = collapse_correlated(&mat, &g, &mv);
        assert_eq!(map.tie_breakers[0], 1);
        assert_eq!(reduced.column(0), vec![-1, 1, 1]);
    }
}
