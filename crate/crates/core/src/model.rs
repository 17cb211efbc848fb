//! Sentences, tokens and dependency trees.
//!
//! The artificial root is node `0`. It never appears as a [`Token`]; it only
//! shows up as a head value and as a graph node.

use std::fmt;

use thiserror::Error;

/// A syntactic word of a sentence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    /// 1-based position within the sentence.
    pub index: usize,
    pub form: String,
    /// The non-HEAD annotation columns in file order: FORM, LEMMA, UPOS,
    /// XPOS, FEATS, DEPREL, DEPS, MISC.
    pub passthrough: [String; 8],
}

impl Token {
    pub fn upos(&self) -> &str {
        &self.passthrough[2]
    }
}

/// A sentence as read from a treebank file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sentence {
    pub id: String,
    pub tokens: Vec<Token>,
    /// Comment lines, verbatim (including the leading `#`).
    pub comments: Vec<String>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn forms(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.form.as_str())
    }
}

/// A directed dependency edge from `head` to `dependent`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub head: usize,
    pub dependent: usize,
}

impl Edge {
    pub fn new(head: usize, dependent: usize) -> Self {
        Edge { head, dependent }
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.head, self.dependent)
    }
}

/// The first violated tree constraint of a head sequence.
#[derive(Clone, Copy, Debug, Error, PartialEq, Eq)]
pub enum TreeViolation {
    #[error("expected {expected} heads, got {actual}")]
    Length { expected: usize, actual: usize },
    #[error("head {head} of token {dependent} is out of range")]
    OutOfRange { dependent: usize, head: usize },
    #[error("token {dependent} is its own head")]
    SelfLoop { dependent: usize },
    #[error("token {dependent} is part of a cycle")]
    Cycle { dependent: usize },
    #[error("token {dependent} is not reachable from the root")]
    Unreachable { dependent: usize },
}

/// Check that `heads` describes a tree over `q` tokens rooted at node 0.
///
/// `heads[d - 1]` is the head of token `d`. Violations are reported in the
/// order length, range, self-loop, then reachability scanned by token.
pub fn validate_tree(heads: &[usize], q: usize) -> Result<(), TreeViolation> {
    if heads.len() != q {
        return Err(TreeViolation::Length {
            expected: q,
            actual: heads.len(),
        });
    }
    for (i, &head) in heads.iter().enumerate() {
        if head > q {
            return Err(TreeViolation::OutOfRange {
                dependent: i + 1,
                head,
            });
        }
    }
    for (i, &head) in heads.iter().enumerate() {
        if head == i + 1 {
            return Err(TreeViolation::SelfLoop { dependent: i + 1 });
        }
    }

    // 0 = unknown, 1 = reaches root, 2 = does not reach root.
    let mut state = vec![0u8; q + 1];
    state[0] = 1;
    let mut path = Vec::new();
    let mut on_path = vec![false; q + 1];
    for start in 1..=q {
        if state[start] != 0 {
            if state[start] == 2 {
                return Err(classify_failure(heads, start));
            }
            continue;
        }
        path.clear();
        let mut node = start;
        let outcome = loop {
            if state[node] != 0 {
                break state[node];
            }
            if on_path[node] {
                break 2;
            }
            on_path[node] = true;
            path.push(node);
            node = heads[node - 1];
        };
        for &n in &path {
            state[n] = outcome;
            on_path[n] = false;
        }
        if outcome == 2 {
            return Err(classify_failure(heads, start));
        }
    }
    Ok(())
}

fn classify_failure(heads: &[usize], dependent: usize) -> TreeViolation {
    // Follow heads for at most q steps; if we come back to `dependent`, it
    // sits on the cycle itself.
    let mut node = heads[dependent - 1];
    for _ in 0..heads.len() {
        if node == dependent {
            return TreeViolation::Cycle { dependent };
        }
        if node == 0 {
            break;
        }
        node = heads[node - 1];
    }
    TreeViolation::Unreachable { dependent }
}

/// A validated head assignment for one sentence.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DepTree {
    heads: Vec<usize>,
}

impl DepTree {
    /// Build a tree from a head sequence, validating the tree constraints.
    pub fn new(heads: Vec<usize>) -> Result<Self, TreeViolation> {
        validate_tree(&heads, heads.len())?;
        Ok(DepTree { heads })
    }

    /// Rebuild a tree from its edge set. Each dependent must occur once.
    pub fn from_edges(q: usize, edges: &[Edge]) -> Result<Self, TreeViolation> {
        let mut heads = vec![usize::MAX; q];
        for e in edges {
            if e.dependent == 0 || e.dependent > q {
                return Err(TreeViolation::OutOfRange {
                    dependent: e.dependent,
                    head: e.head,
                });
            }
            heads[e.dependent - 1] = e.head;
        }
        if let Some(missing) = heads.iter().position(|&h| h == usize::MAX) {
            return Err(TreeViolation::Length {
                expected: q,
                actual: missing,
            });
        }
        DepTree::new(heads)
    }

    pub fn heads(&self) -> &[usize] {
        &self.heads
    }

    /// Head of token `dependent` (1-based).
    pub fn head(&self, dependent: usize) -> usize {
        self.heads[dependent - 1]
    }

    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }

    /// Edges `(heads[d], d)` ordered by dependent.
    pub fn edges(&self) -> Vec<Edge> {
        self.heads
            .iter()
            .enumerate()
            .map(|(i, &h)| Edge::new(h, i + 1))
            .collect()
    }

    pub fn contains(&self, edge: Edge) -> bool {
        edge.dependent >= 1
            && edge.dependent <= self.heads.len()
            && self.heads[edge.dependent - 1] == edge.head
    }

    /// Number of tokens attached directly to the root.
    pub fn root_count(&self) -> usize {
        self.heads.iter().filter(|&&h| h == 0).count()
    }
}

/// Edge set of a tree, ordered by dependent index.
pub fn edges_of(tree: &DepTree) -> Vec<Edge> {
    tree.edges()
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EnsembleError {
    #[error("ensemble needs at least one parser")]
    NoParsers,
    #[error("sentence {sentence}: expected {expected} trees, got {actual}")]
    TreeCount {
        sentence: String,
        expected: usize,
        actual: usize,
    },
    #[error("sentence {sentence}: parser {parser} has {actual} tokens, expected {expected}")]
    TokenCount {
        sentence: String,
        parser: usize,
        expected: usize,
        actual: usize,
    },
}

/// The trees proposed by all parsers for one sentence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EnsembleSentence {
    pub id: String,
    pub trees: Vec<DepTree>,
}

impl EnsembleSentence {
    pub fn len(&self) -> usize {
        self.trees[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Parser outputs aligned by sentence position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseEnsemble {
    parser_ids: Vec<String>,
    sentences: Vec<EnsembleSentence>,
}

impl ParseEnsemble {
    pub fn new(
        parser_ids: Vec<String>,
        sentences: Vec<EnsembleSentence>,
    ) -> Result<Self, EnsembleError> {
        if parser_ids.is_empty() {
            return Err(EnsembleError::NoParsers);
        }
        let m = parser_ids.len();
        for s in &sentences {
            if s.trees.len() != m {
                return Err(EnsembleError::TreeCount {
                    sentence: s.id.clone(),
                    expected: m,
                    actual: s.trees.len(),
                });
            }
            let q = s.trees[0].len();
            for (j, t) in s.trees.iter().enumerate() {
                if t.len() != q {
                    return Err(EnsembleError::TokenCount {
                        sentence: s.id.clone(),
                        parser: j,
                        expected: q,
                        actual: t.len(),
                    });
                }
            }
        }
        Ok(ParseEnsemble {
            parser_ids,
            sentences,
        })
    }

    pub fn parser_ids(&self) -> &[String] {
        &self.parser_ids
    }

    pub fn n_parsers(&self) -> usize {
        self.parser_ids.len()
    }

    pub fn sentences(&self) -> &[EnsembleSentence] {
        &self.sentences
    }

    pub fn n_sentences(&self) -> usize {
        self.sentences.len()
    }

    /// All trees of parser `j`, in sentence order.
    pub fn parser_trees(&self, j: usize) -> Vec<DepTree> {
        self.sentences.iter().map(|s| s.trees[j].clone()).collect()
    }

    /// Restrict the ensemble to a subset of parsers, in the given order.
    pub fn select_parsers(&self, columns: &[usize]) -> Result<Self, EnsembleError> {
        let ids = columns.iter().map(|&j| self.parser_ids[j].clone()).collect();
        let sentences = self
            .sentences
            .iter()
            .map(|s| EnsembleSentence {
                id: s.id.clone(),
                trees: columns.iter().map(|&j| s.trees[j].clone()).collect(),
            })
            .collect();
        ParseEnsemble::new(ids, sentences)
    }
}
