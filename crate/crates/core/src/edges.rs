//! Edge-level reduction of tree aggregation.
//!
//! Every directed edge proposed by at least one parser becomes a row of a
//! binary label matrix; parser `j` labels the row `+1` if its tree contains
//! the edge and `-1` otherwise.

use std::io::{self, Write};
use std::ops::Range;

use crate::model::{Edge, ParseEnsemble};

/// A candidate edge of one sentence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CandidateEdge {
    /// Position of the sentence in the ensemble.
    pub sentence: usize,
    pub head: usize,
    pub dependent: usize,
}

impl CandidateEdge {
    pub fn edge(&self) -> Edge {
        Edge::new(self.head, self.dependent)
    }
}

/// Per-sentence candidate sets and the corpus-wide edge order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeUnion {
    /// Edges in (sentence, head, dependent) order.
    pub edges: Vec<CandidateEdge>,
    /// Row range of each sentence within `edges`.
    pub sentence_rows: Vec<Range<usize>>,
    /// Token count of each sentence.
    pub sentence_lengths: Vec<usize>,
}

impl EdgeUnion {
    pub fn sentence_edges(&self, sentence: usize) -> &[CandidateEdge] {
        &self.edges[self.sentence_rows[sentence].clone()]
    }
}

/// Union of the parsers' edge sets, per sentence.
pub fn build_edge_union(ensemble: &ParseEnsemble) -> EdgeUnion {
    let mut edges = Vec::new();
    let mut sentence_rows = Vec::with_capacity(ensemble.n_sentences());
    let mut sentence_lengths = Vec::with_capacity(ensemble.n_sentences());
    for (i, s) in ensemble.sentences().iter().enumerate() {
        let start = edges.len();
        let mut local: Vec<Edge> = s.trees.iter().flat_map(|t| t.edges()).collect();
        local.sort_unstable();
        local.dedup();
        edges.extend(local.into_iter().map(|e| CandidateEdge {
            sentence: i,
            head: e.head,
            dependent: e.dependent,
        }));
        sentence_rows.push(start..edges.len());
        sentence_lengths.push(s.len());
    }
    EdgeUnion {
        edges,
        sentence_rows,
        sentence_lengths,
    }
}

/// Rows are candidate edges, columns are parsers, entries are `+1`/`-1`.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeLabelMatrix {
    union: EdgeUnion,
    parser_ids: Vec<String>,
    labels: Vec<i8>,
}

impl EdgeLabelMatrix {
    /// Build a matrix directly from rows of labels. Used for synthetic label
    /// sets that do not come from trees; all rows belong to one pseudo
    /// sentence.
    pub fn from_rows(parser_ids: Vec<String>, rows: &[Vec<i8>]) -> Self {
        let m = parser_ids.len();
        let mut labels = Vec::with_capacity(rows.len() * m);
        for r in rows {
            assert_eq!(r.len(), m, "row width must equal the parser count");
            assert!(r.iter().all(|&v| v == 1 || v == -1), "labels must be +1/-1");
            labels.extend_from_slice(r);
        }
        let edges = (0..rows.len())
            .map(|i| CandidateEdge {
                sentence: 0,
                head: 0,
                dependent: i + 1,
            })
            .collect();
        EdgeLabelMatrix {
            union: EdgeUnion {
                edges,
                sentence_rows: vec![0..rows.len()],
                sentence_lengths: vec![rows.len()],
            },
            parser_ids,
            labels,
        }
    }

    /// Same rows, with the columns replaced.
    pub fn with_columns(&self, parser_ids: Vec<String>, columns: &[Vec<i8>]) -> Self {
        assert_eq!(parser_ids.len(), columns.len());
        let n = self.n_rows();
        let m = columns.len();
        let mut labels = vec![0i8; n * m];
        for (j, col) in columns.iter().enumerate() {
            assert_eq!(col.len(), n);
            for (i, &v) in col.iter().enumerate() {
                labels[i * m + j] = v;
            }
        }
        EdgeLabelMatrix {
            union: self.union.clone(),
            parser_ids,
            labels,
        }
    }

    /// Keep the listed columns, in order.
    pub fn select_columns(&self, columns: &[usize]) -> Self {
        let ids = columns.iter().map(|&j| self.parser_ids[j].clone()).collect();
        let cols: Vec<Vec<i8>> = columns.iter().map(|&j| self.column(j)).collect();
        self.with_columns(ids, &cols)
    }

    pub fn n_rows(&self) -> usize {
        self.union.edges.len()
    }

    pub fn n_cols(&self) -> usize {
        self.parser_ids.len()
    }

    pub fn parser_ids(&self) -> &[String] {
        &self.parser_ids
    }

    pub fn union(&self) -> &EdgeUnion {
        &self.union
    }

    pub fn edges(&self) -> &[CandidateEdge] {
        &self.union.edges
    }

    pub fn row(&self, i: usize) -> &[i8] {
        let m = self.n_cols();
        &self.labels[i * m..(i + 1) * m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[i8]> {
        self.labels.chunks_exact(self.n_cols().max(1))
    }

    pub fn get(&self, i: usize, j: usize) -> i8 {
        self.labels[i * self.n_cols() + j]
    }

    pub fn column(&self, j: usize) -> Vec<i8> {
        (0..self.n_rows()).map(|i| self.get(i, j)).collect()
    }

    /// Number of `+1` votes on row `i`.
    pub fn votes(&self, i: usize) -> usize {
        self.row(i).iter().filter(|&&v| v > 0).count()
    }

    /// Debug dump: `sentence_id TAB head TAB dependent TAB votes...`.
    pub fn write_debug<W: Write>(&self, sentence_ids: &[String], mut out: W) -> io::Result<()> {
        for (i, e) in self.edges().iter().enumerate() {
            write!(out, "{}\t{}\t{}", sentence_ids[e.sentence], e.head, e.dependent)?;
            for v in self.row(i) {
                write!(out, "\t{}", v)?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Label every candidate edge with every parser's vote.
pub fn label_matrix(ensemble: &ParseEnsemble, union: &EdgeUnion) -> EdgeLabelMatrix {
    let m = ensemble.n_parsers();
    let mut labels = Vec::with_capacity(union.edges.len() * m);
    for e in &union.edges {
        let trees = &ensemble.sentences()[e.sentence].trees;
        labels.extend(
            trees
                .iter()
                .map(|t| if t.head(e.dependent) == e.head { 1i8 } else { -1 }),
        );
    }
    EdgeLabelMatrix {
        union: union.clone(),
        parser_ids: ensemble.parser_ids().to_vec(),
        labels,
    }
}

/// Build the edge union and label matrix in one step.
pub fn ensemble_matrix(ensemble: &ParseEnsemble) -> EdgeLabelMatrix {
    let union = build_edge_union(ensemble);
    label_matrix(ensemble, &union)
}

/// Sign of each row sum; ties go to `+1`.
pub fn majority_vote(matrix: &EdgeLabelMatrix) -> Vec<i8> {
    matrix
        .rows()
        .take(matrix.n_rows())
        .map(|r| {
            let s: i32 = r.iter().map(|&v| v as i32).sum();
            if s >= 0 {
                1
            } else {
                -1
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DepTree, EnsembleSentence};
    use proptest::prelude::*;

    fn ensemble(trees: Vec<Vec<Vec<usize>>>) -> ParseEnsemble {
        let m = trees[0].len();
        let sentences = trees
            .into_iter()
            .enumerate()
            .map(|(i, ts)| EnsembleSentence {
                id: format!("s{}", i),
                trees: ts.into_iter().map(|h| DepTree::new(h).unwrap()).collect(),
            })
            .collect();
        ParseEnsemble::new((0..m).map(|j| format!("p{}", j)).collect(), sentences).unwrap()
    }

    #[test]
    fn union_sizes() {
        let e = ensemble(vec![vec![vec![0, 1, 2], vec![0, 1, 2]]]);
        assert_eq!(build_edge_union(&e).edges.len(), 3);
        // Heads differ for token 3 only: {0->1, 1->2, 2->3} + {1->3}.
        let e = ensemble(vec![vec![vec![0, 1, 2], vec![0, 1, 1]]]);
        let u = build_edge_union(&e);
        let got: Vec<(usize, usize)> = u.edges.iter().map(|c| (c.head, c.dependent)).collect();
        assert_eq!(got, vec![(0, 1), (1, 2), (1, 3), (2, 3)]);
    }

    #[test]
    fn labels_follow_membership() {
        let e = ensemble(vec![vec![
            vec![0, 1],
            vec![0, 1],
            vec![2, 0],
            vec![0, 1],
        ]]);
        let m = ensemble_matrix(&e);
        // Rows: (0,1), (0,2), (1,2), (2,1).
        assert_eq!(m.row(0), &[1, 1, -1, 1]);
        assert_eq!(m.row(1), &[-1, -1, 1, -1]);
        assert_eq!(m.row(3), &[-1, -1, 1, -1]);
        assert_eq!(majority_vote(&m), vec![1, -1, 1, -1]);
    }

    #[test]
    fn majority_ties_to_plus() {
        let m = EdgeLabelMatrix::from_rows(
            vec!["a".into(), "b".into(), "c".into()],
            &[vec![1, 1, -1]],
        );
        assert_eq!(majority_vote(&m), vec![1]);
        let m = EdgeLabelMatrix::from_rows(vec!["a".into(), "b".into()], &[vec![1, -1]]);
        assert_eq!(majority_vote(&m), vec![1]);
    }

    #[test]
    fn debug_dump_format() {
        let e = ensemble(vec![vec![vec![0], vec![0]]]);
        let m = ensemble_matrix(&e);
        let mut buf = Vec::new();
        m.write_debug(&["s0".to_string()], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "s0\t0\t1\t1\t1\n");
    }

    fn arb_ensemble() -> impl Strategy<Value = ParseEnsemble> {
        (1usize..5, 1usize..4).prop_flat_map(|(m, n)| {
            proptest::collection::vec(
                proptest::collection::vec(crate::testutil::arb_tree(7), m),
                n,
            )
        })
        .prop_filter_map("same length per sentence", |sents| {
            let sentences: Vec<EnsembleSentence> = sents
                .into_iter()
                .enumerate()
                .map(|(i, trees)| {
                    let q = trees[0].len();
                    let trees = trees
                        .into_iter()
                        .map(|t| if t.len() == q { t } else { DepTree::new((0..q).collect()).unwrap() })
                        .collect();
                    EnsembleSentence { id: i.to_string(), trees }
                })
                .collect();
            let m = sentences[0].trees.len();
            ParseEnsemble::new((0..m).map(|j| j.to_string()).collect(), sentences).ok()
        })
    }

    proptest! {
        #[test]
        fn plus_labels_reconstruct_each_tree(e in arb_ensemble()) {
            let m = ensemble_matrix(&e);
            let mv = majority_vote(&m);
            prop_assert!(mv.len() == m.n_rows());
            for (s, sent) in e.sentences().iter().enumerate() {
                let rows = m.union().sentence_rows[s].clone();
                let q = sent.len();
                prop_assert!(rows.len() >= q && rows.len() <= e.n_parsers() * q);
                for (j, tree) in sent.trees.iter().enumerate() {
                    let picked: Vec<Edge> = rows.clone()
                        .filter(|&i| m.get(i, j) == 1)
                        .map(|i| m.edges()[i].edge())
                        .collect();
                    prop_assert_eq!(picked.len(), q);
                    prop_assert_eq!(&DepTree::from_edges(q, &picked).unwrap(), tree);
                }
            }
            for i in 0..m.n_rows() {
                let plus: i32 = m.row(i).iter().map(|&v| (v as i32 + 1) / 2).sum();
                prop_assert!(plus >= 1);
                prop_assert_eq!(plus as usize, m.votes(i));
            }
            prop_assert_eq!(ensemble_matrix(&e), m);
        }
    }
}
