//! Evaluation protocol: filtering, sample-based parser ranking, UAS,
//! the vote-MST baseline and summary statistics.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arborescence::{decode_sentences, ArborescenceError};
use crate::conllu::{check_segmentation, SegmentationError, TreebankFile};
use crate::edges::ensemble_matrix;
use crate::model::{DepTree, EnsembleError, EnsembleSentence, ParseEnsemble};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("nothing to score")]
    Empty,
    #[error("expected {expected} sentences, got {actual}")]
    SentenceCount { expected: usize, actual: usize },
    #[error("sentence {sentence}: predicted {actual} tokens, gold has {expected}")]
    TokenCount {
        sentence: usize,
        expected: usize,
        actual: usize,
    },
    #[error("method {method} is missing treebank {treebank}")]
    MissingTreebank { method: String, treebank: String },
    #[error(transparent)]
    Segmentation(#[from] SegmentationError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessOptions {
    pub min_sentences: usize,
    pub min_parsers: usize,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        PreprocessOptions {
            min_sentences: 50,
            min_parsers: 9,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterLog {
    pub total: usize,
    pub seg_dropped: usize,
    pub agree_dropped: usize,
    pub kept: usize,
    pub n_parsers: usize,
}

#[derive(Clone, Debug, Error, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Rejection {
    #[error("{found} parsers, at least {min} required")]
    TooFewParsers { found: usize, min: usize },
    #[error("{found} sentences survive filtering, at least {min} required")]
    TooFewSentences { found: usize, min: usize },
}

#[derive(Clone, Debug)]
pub struct Preprocessed {
    pub parsers: Vec<TreebankFile>,
    pub gold: Option<TreebankFile>,
    /// Original positions of the surviving sentences.
    pub kept: Vec<usize>,
    pub log: FilterLog,
    pub rejection: Option<Rejection>,
}

/// Drop sentences with inconsistent segmentation (the gold file included
/// when given) and sentences on which every parser outputs the same tree,
/// then apply the treebank-level thresholds.
pub fn preprocess(
    parsers: &[TreebankFile],
    gold: Option<&TreebankFile>,
    opts: &PreprocessOptions,
) -> Result<Preprocessed, EvalError> {
    let mut files: Vec<&TreebankFile> = parsers.iter().collect();
    files.extend(gold);
    let segmented = check_segmentation(&files)?;

    let mut log = FilterLog {
        total: segmented.len(),
        n_parsers: parsers.len(),
        ..FilterLog::default()
    };
    let mut kept = Vec::new();
    for (i, ok) in segmented.into_iter().enumerate() {
        if !ok {
            log.seg_dropped += 1;
            continue;
        }
        let first = &parsers[0].blocks[i].tree;
        if parsers[1..].iter().all(|p| &p.blocks[i].tree == first) {
            log.agree_dropped += 1;
            continue;
        }
        kept.push(i);
    }
    log.kept = kept.len();

    let rejection = if parsers.len() < opts.min_parsers {
        Some(Rejection::TooFewParsers {
            found: parsers.len(),
            min: opts.min_parsers,
        })
    } else if kept.len() < opts.min_sentences {
        Some(Rejection::TooFewSentences {
            found: kept.len(),
            min: opts.min_sentences,
        })
    } else {
        None
    };

    Ok(Preprocessed {
        parsers: parsers.iter().map(|p| p.subset(&kept)).collect(),
        gold: gold.map(|g| g.subset(&kept)),
        kept,
        log,
        rejection,
    })
}

/// Assemble parser files into an ensemble, aligning sentences by position.
pub fn build_ensemble(files: &[TreebankFile]) -> Result<ParseEnsemble, EvalError> {
    let refs: Vec<&TreebankFile> = files.iter().collect();
    check_segmentation(&refs)?;
    let ids = files.iter().map(|f| f.parser_id.clone()).collect();
    let n = files.first().map_or(0, |f| f.len());
    let sentences = (0..n)
        .map(|i| EnsembleSentence {
            id: files[0].blocks[i].sentence.id.clone(),
            trees: files.iter().map(|f| f.blocks[i].tree.clone()).collect(),
        })
        .collect();
    Ok(ParseEnsemble::new(ids, sentences)?)
}

fn check_aligned(pred: &[DepTree], gold: &[DepTree]) -> Result<(), EvalError> {
    if gold.is_empty() || pred.is_empty() {
        return Err(EvalError::Empty);
    }
    if pred.len() != gold.len() {
        return Err(EvalError::SentenceCount {
            expected: gold.len(),
            actual: pred.len(),
        });
    }
    for (s, (p, g)) in pred.iter().zip(gold).enumerate() {
        if p.len() != g.len() {
            return Err(EvalError::TokenCount {
                sentence: s,
                expected: g.len(),
                actual: p.len(),
            });
        }
    }
    Ok(())
}

/// Unlabeled attachment score in percent.
pub fn uas(pred: &[DepTree], gold: &[DepTree]) -> Result<f64, EvalError> {
    check_aligned(pred, gold)?;
    let mut correct = 0usize;
    let mut total = 0usize;
    for (p, g) in pred.iter().zip(gold) {
        correct += p.heads().iter().zip(g.heads()).filter(|(a, b)| a == b).count();
        total += g.len();
    }
    Ok(100.0 * correct as f64 / total as f64)
}

/// UAS restricted to tokens whose mask entry is true.
pub fn uas_masked(pred: &[DepTree], gold: &[DepTree], mask: &[Vec<bool>]) -> Result<f64, EvalError> {
    check_aligned(pred, gold)?;
    let mut correct = 0usize;
    let mut total = 0usize;
    for ((p, g), m) in pred.iter().zip(gold).zip(mask) {
        for ((a, b), &keep) in p.heads().iter().zip(g.heads()).zip(m) {
            if keep {
                total += 1;
                correct += usize::from(a == b);
            }
        }
    }
    if total == 0 {
        return Err(EvalError::Empty);
    }
    Ok(100.0 * correct as f64 / total as f64)
}

/// Token mask that is false for punctuation (UPOS `PUNCT`).
pub fn punct_mask(gold: &TreebankFile) -> Vec<Vec<bool>> {
    gold.blocks
        .iter()
        .map(|b| b.sentence.tokens.iter().map(|t| t.upos() != "PUNCT").collect())
        .collect()
}

/// UAS of every parser of the ensemble against gold.
pub fn parser_uas(ensemble: &ParseEnsemble, gold: &[DepTree]) -> Result<Vec<f64>, EvalError> {
    (0..ensemble.n_parsers())
        .map(|j| uas(&ensemble.parser_trees(j), gold))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParserScore {
    pub parser_id: String,
    pub uas: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Sampled sentence positions, ascending.
    pub sample: Vec<usize>,
    /// All parsers, best first.
    pub ranking: Vec<ParserScore>,
    /// Chosen parser ids in input file order.
    pub selected: Vec<String>,
    /// Column indices of `selected`.
    #[serde(skip)]
    pub columns: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub warning: Option<String>,
}

/// Rank parsers by UAS on a seeded uniform sample of sentences and keep the
/// best `top_k`. Ties keep input file order.
pub fn rank_and_select(
    ensemble: &ParseEnsemble,
    gold: &[DepTree],
    sample_size: usize,
    top_k: usize,
    seed: u64,
) -> Result<Selection, EvalError> {
    let n = ensemble.n_sentences();
    if gold.len() != n {
        return Err(EvalError::SentenceCount {
            expected: n,
            actual: gold.len(),
        });
    }
    let sample: Vec<usize> = if sample_size >= n {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = rand::seq::index::sample(&mut rng, n, sample_size).into_vec();
        s.sort_unstable();
        s
    };
    let gold_sample: Vec<DepTree> = sample.iter().map(|&i| gold[i].clone()).collect();

    let mut scored = Vec::with_capacity(ensemble.n_parsers());
    for j in 0..ensemble.n_parsers() {
        let pred: Vec<DepTree> = sample
            .iter()
            .map(|&i| ensemble.sentences()[i].trees[j].clone())
            .collect();
        scored.push((j, uas(&pred, &gold_sample)?));
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));

    let m = ensemble.n_parsers();
    let warning = (top_k > m).then(|| format!("top-k {} exceeds {} parsers; selecting all", top_k, m));
    let mut columns: Vec<usize> = scored.iter().take(top_k).map(|&(j, _)| j).collect();
    columns.sort_unstable();

    Ok(Selection {
        sample,
        ranking: scored
            .iter()
            .map(|&(j, u)| ParserScore {
                parser_id: ensemble.parser_ids()[j].clone(),
                uas: u,
            })
            .collect(),
        selected: columns.iter().map(|&j| ensemble.parser_ids()[j].clone()).collect(),
        columns,
        warning,
    })
}

/// Baseline: each candidate edge weighted by its number of votes.
pub fn vote_mst(ensemble: &ParseEnsemble, single_root: bool) -> Result<Vec<DepTree>, ArborescenceError> {
    let matrix = ensemble_matrix(ensemble);
    let votes: Vec<f64> = (0..matrix.n_rows()).map(|i| matrix.votes(i) as f64).collect();
    decode_sentences(matrix.union(), &votes, single_root)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mu: f64,
    pub median: f64,
    /// Population standard deviation.
    pub sigma: f64,
}

/// Mean, median and population standard deviation.
pub fn summarize(values: &[f64]) -> Result<Summary, EvalError> {
    if values.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = values.len();
    let mu = values.iter().sum::<f64>() / n as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    let sigma = (values.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n as f64).sqrt();
    Ok(Summary { n, mu, median, sigma })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterCounts {
    pub seg_dropped: usize,
    pub agree_dropped: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreebankReport {
    pub treebank: String,
    pub n_sentences: usize,
    pub methods: BTreeMap<String, f64>,
    pub selected_parsers: Vec<String>,
    pub filters: FilterCounts,
    #[serde(default)]
    pub sample_uas: BTreeMap<String, f64>,
    /// Full-set UAS of every input parser.
    #[serde(default)]
    pub parsers: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub group: String,
    pub treebanks: Vec<String>,
    pub methods: BTreeMap<String, Summary>,
}

/// Summaries of every method present in all of `reports`.
pub fn summary_report(group: &str, reports: &[&TreebankReport]) -> Result<SummaryReport, EvalError> {
    let first = reports.first().ok_or(EvalError::Empty)?;
    let mut methods = BTreeMap::new();
    for name in first.methods.keys() {
        let values: Vec<f64> = reports
            .iter()
            .map(|r| {
                r.methods.get(name).copied().ok_or_else(|| EvalError::MissingTreebank {
                    method: name.clone(),
                    treebank: r.treebank.clone(),
                })
            })
            .collect::<Result<_, _>>()?;
        methods.insert(name.clone(), summarize(&values)?);
    }
    Ok(SummaryReport {
        group: group.to_string(),
        treebanks: reports.iter().map(|r| r.treebank.clone()).collect(),
        methods,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodDiff {
    pub method: String,
    pub baseline: String,
    /// `method - baseline` per treebank, by treebank name.
    pub diffs: BTreeMap<String, f64>,
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

/// Signed per-treebank differences `method - baseline`.
pub fn method_diffs(
    method: (&str, &BTreeMap<String, f64>),
    baseline: (&str, &BTreeMap<String, f64>),
) -> Result<MethodDiff, EvalError> {
    let missing = |name: &str, tb: &str| EvalError::MissingTreebank {
        method: name.to_string(),
        treebank: tb.to_string(),
    };
    if let Some(tb) = baseline.1.keys().find(|k| !method.1.contains_key(*k)) {
        return Err(missing(method.0, tb));
    }
    let mut diffs = BTreeMap::new();
    let (mut positive, mut negative, mut zero) = (0, 0, 0);
    for (tb, &a) in method.1 {
        let b = *baseline.1.get(tb).ok_or_else(|| missing(baseline.0, tb))?;
        let d = a - b;
        if d > 0.0 {
            positive += 1;
        } else if d < 0.0 {
            negative += 1;
        } else {
            zero += 1;
        }
        diffs.insert(tb.clone(), d);
    }
    Ok(MethodDiff {
        method: method.0.to_string(),
        baseline: baseline.0.to_string(),
        diffs,
        positive,
        negative,
        zero,
    })
}

/// Per-method UAS keyed by treebank, collected from reports.
pub fn method_table(reports: &[TreebankReport]) -> BTreeMap<String, BTreeMap<String, f64>> {
    let mut out: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for r in reports {
        for (m, &v) in &r.methods {
            out.entry(m.clone()).or_default().insert(r.treebank.clone(), v);
        }
    }
    out
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
