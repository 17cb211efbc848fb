//! Synthetic ensembles with known gold trees and known parser noise.
//!
//! Gold trees are uniform over single-rooted trees (Wilson's algorithm on
//! the complete graph). A parser moves a binomial number of heads to random
//! alternatives that keep the output a valid tree.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::conllu::{SentenceBlock, TreebankFile};
use crate::model::{DepTree, EnsembleSentence, ParseEnsemble, Sentence, Token};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub n_sentences: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
    /// Head corruption rate of each parser.
    pub rates: Vec<f64>,
    /// Extra columns that copy an existing parser exactly (0-based index).
    pub duplicates: Vec<usize>,
    pub seed: u64,
}

impl SynthConfig {
    /// `n` rates evenly spaced over `[low, high]`.
    pub fn spaced_rates(low: f64, high: f64, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![low];
        }
        (0..n)
            .map(|j| low + (high - low) * j as f64 / (n - 1) as f64)
            .collect()
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("at least one sentence and one parser are required")]
    Empty,
    #[error("token range {min}..={max} is invalid")]
    TokenRange { min: usize, max: usize },
    #[error("corruption rate {0} is outside [0, 1)")]
    Rate(f64),
    #[error("duplicate refers to parser {0}, which does not exist")]
    Duplicate(usize),
}

#[derive(Clone, Debug)]
pub struct SynthCorpus {
    pub gold: TreebankFile,
    pub parsers: Vec<TreebankFile>,
    pub ensemble: ParseEnsemble,
    pub gold_trees: Vec<DepTree>,
    /// Corruption rate behind each column (duplicates inherit theirs).
    pub rates: Vec<f64>,
    /// Measured head accuracy of each column against gold, in [0, 1].
    pub accuracies: Vec<f64>,
}

/// Uniform random tree over `q` tokens with a single root attachment.
fn random_gold(rng: &mut impl Rng, q: usize) -> Vec<usize> {
    let root = rng.gen_range(1..=q);
    let mut in_tree = vec![false; q + 1];
    in_tree[root] = true;
    let mut next = vec![0usize; q + 1];
    for start in 1..=q {
        let mut u = start;
        while !in_tree[u] {
            let mut v = rng.gen_range(1..q);
            if v >= u {
                v += 1;
            }
            next[u] = v;
            u = v;
        }
        let mut u = start;
        while !in_tree[u] {
            in_tree[u] = true;
            u = next[u];
        }
    }
    next[root] = 0;
    next[1..].to_vec()
}

fn is_descendant(heads: &[usize], node: usize, ancestor: usize) -> bool {
    let mut u = node;
    while u != 0 {
        if u == ancestor {
            return true;
        }
        u = heads[u - 1];
    }
    false
}

/// Move `k ~ Binomial(q, rate)` distinct tokens of `gold` to other heads
/// that keep a single-rooted tree. Each step picks uniformly among the
/// tokens that still have such an alternative, then among the alternatives.
fn corrupt(rng: &mut impl Rng, gold: &[usize], rate: f64) -> DepTree {
    let q = gold.len();
    let k = (0..q).filter(|_| rng.gen::<f64>() < rate).count();
    let mut heads = gold.to_vec();
    let mut moved = vec![false; q];
    for _ in 0..k {
        let options: Vec<(usize, Vec<usize>)> = (1..=q)
            .filter(|&d| !moved[d - 1] && gold[d - 1] != 0)
            .map(|d| {
                let alternatives = (1..=q)
                    .filter(|&h| h != d && h != gold[d - 1] && !is_descendant(&heads, h, d))
                    .collect::<Vec<_>>();
                (d, alternatives)
            })
            .filter(|(_, alternatives)| !alternatives.is_empty())
            .collect();
        let Some((d, alternatives)) = options.choose(rng) else {
            break;
        };
        heads[d - 1] = *alternatives.choose(rng).expect("non-empty");
        moved[d - 1] = true;
    }
    DepTree::new(heads).expect("re-attachment to a non-descendant keeps a tree")
}

fn sentence(index: usize, q: usize) -> Sentence {
    let id = format!("synth-{:05}", index + 1);
    Sentence {
        comments: vec![format!("# sent_id = {}", id)],
        id,
        tokens: (1..=q)
            .map(|i| {
                let form = format!("w{}", i);
                Token {
                    index: i,
                    passthrough: [form.as_str(), "_", "_", "_", "_", "_", "_", "_"].map(String::from),
                    form,
                }
            })
            .collect(),
    }
}

/// Generate a corpus. Identical configs give identical corpora.
pub fn generate(config: &SynthConfig) -> Result<SynthCorpus, SynthError> {
    if config.n_sentences == 0 || config.rates.is_empty() {
        return Err(SynthError::Empty);
    }
    if config.min_tokens == 0 || config.min_tokens > config.max_tokens {
        return Err(SynthError::TokenRange {
            min: config.min_tokens,
            max: config.max_tokens,
        });
    }
    if let Some(&r) = config.rates.iter().find(|r| !(0.0..1.0).contains(*r)) {
        return Err(SynthError::Rate(r));
    }
    if let Some(&d) = config.duplicates.iter().find(|&&d| d >= config.rates.len()) {
        return Err(SynthError::Duplicate(d));
    }

    let base = config.rates.len();
    let columns: Vec<usize> = (0..base).chain(config.duplicates.iter().copied()).collect();

    let drawn: Vec<(Vec<usize>, Vec<DepTree>)> = (0..config.n_sentences)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i as u64);
            let q = rng.gen_range(config.min_tokens..=config.max_tokens);
            let gold = random_gold(&mut rng, q);
            let trees: Vec<DepTree> = config
                .rates
                .iter()
                .map(|&rate| corrupt(&mut rng, &gold, rate))
                .collect();
            (gold, trees)
        })
        .collect();

    let gold_trees: Vec<DepTree> = drawn
        .iter()
        .map(|(g, _)| DepTree::new(g.clone()).expect("Wilson's algorithm yields a tree"))
        .collect();
    let sentences: Vec<Sentence> = gold_trees
        .iter()
        .enumerate()
        .map(|(i, t)| sentence(i, t.len()))
        .collect();

    let width = (columns.len() + 1).to_string().len().max(2);
    let parser_ids: Vec<String> = (0..columns.len())
        .map(|c| format!("p{:0width$}", c + 1, width = width))
        .collect();

    let gold = TreebankFile::new(
        "gold",
        sentences
            .iter()
            .zip(&gold_trees)
            .map(|(s, t)| SentenceBlock::new(s.clone(), t.clone()))
            .collect(),
    );
    let parsers: Vec<TreebankFile> = columns
        .iter()
        .zip(&parser_ids)
        .map(|(&src, id)| {
            TreebankFile::new(
                id.clone(),
                sentences
                    .iter()
                    .zip(&drawn)
                    .map(|(s, (_, trees))| SentenceBlock::new(s.clone(), trees[src].clone()))
                    .collect(),
            )
        })
        .collect();

    let ensemble = ParseEnsemble::new(
        parser_ids,
        sentences
            .iter()
            .zip(&drawn)
            .map(|(s, (_, trees))| EnsembleSentence {
                id: s.id.clone(),
                trees: columns.iter().map(|&c| trees[c].clone()).collect(),
            })
            .collect(),
    )
    .expect("synthetic ensemble is consistent");

    let total: usize = gold_trees.iter().map(|t| t.len()).sum();
    let accuracies = columns
        .iter()
        .map(|&c| {
            let correct: usize = drawn
                .iter()
                .zip(&gold_trees)
                .map(|((_, trees), g)| {
                    trees[c]
                        .heads()
                        .iter()
                        .zip(g.heads())
                        .filter(|(a, b)| a == b)
                        .count()
                })
                .sum();
            correct as f64 / total as f64
        })
        .collect();

    Ok(SynthCorpus {
        gold,
        parsers,
        ensemble,
        gold_trees,
        rates: columns.iter().map(|&c| config.rates[c]).collect(),
        accuracies,
    })
}
