//! Command-line pipeline: synth, preprocess, rank, aggregate, evaluate,
//! report. Stages communicate through files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::cim::{cim_fit, cim_trees, CimOptions};
use crate::conllu::{read_conllu, write_conllu, TreebankFile};
use crate::crh::{crh_run, crh_trees, CrhDistance, CrhOptions};
use crate::edges::ensemble_matrix;
use crate::eval::{
    build_ensemble, method_diffs, method_table, parser_uas, preprocess, punct_mask, rank_and_select,
    summary_report, uas, uas_masked, vote_mst, FilterCounts, FilterLog, MethodDiff,
    PreprocessOptions, Rejection, Selection, SummaryReport, TreebankReport,
};
use crate::model::DepTree;
use crate::synth::{generate, SynthConfig};

pub const EXIT_ERROR: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_REJECTED: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "depagg", version, about = "Aggregate dependency parser outputs into consensus trees")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic ensemble with known gold trees.
    Synth(SynthArgs),
    /// Drop unusable sentences and reject treebanks that are too small.
    Preprocess(PreprocessArgs),
    /// Rank parsers on a gold sample and select the best ones.
    Rank(RankArgs),
    /// Aggregate parser outputs into one tree per sentence.
    Aggregate(AggregateArgs),
    /// Score predictions against gold for one treebank.
    Evaluate(EvaluateArgs),
    /// Summarize per-treebank reports.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output directory; receives parsers/, gold.conllu and truth.json.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub sentences: usize,
    #[arg(long, default_value_t = 10)]
    pub min_tokens: usize,
    #[arg(long, default_value_t = 10)]
    pub max_tokens: usize,
    /// Comma-separated corruption rates, one per parser.
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.09375,0.1375,0.18125,0.225,0.26875,0.3125,0.35625,0.4")]
    pub rates: Vec<f64>,
    /// 1-based parser to copy as an extra column; repeatable.
    #[arg(long)]
    pub duplicate: Vec<usize>,
}

#[derive(Args, Debug)]
pub struct PreprocessArgs {
    /// Directory of parser .conllu files.
    #[arg(long)]
    pub inputs: PathBuf,
    #[arg(long)]
    pub gold: Option<PathBuf>,
    /// Output directory; receives parsers/, gold.conllu and filter_log.json.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub min_sentences: usize,
    #[arg(long, default_value_t = 9)]
    pub min_parsers: usize,
}

#[derive(Args, Debug)]
pub struct RankArgs {
    #[arg(long)]
    pub inputs: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    /// Selection JSON.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub sample_size: usize,
    #[arg(long, default_value_t = 9)]
    pub top_k: usize,
    #[arg(long)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Mst,
    Crh,
    Cim,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CrhDistanceArg {
    Edge,
    Uas,
}

#[derive(Args, Debug)]
pub struct AggregateArgs {
    #[arg(long)]
    pub inputs: PathBuf,
    #[arg(long, value_enum)]
    pub method: Method,
    /// Predicted CoNLL-U.
    #[arg(long)]
    pub out: PathBuf,
    /// Selection JSON from `rank`; restricts the ensemble to its parsers.
    #[arg(long)]
    pub selection: Option<PathBuf>,
    /// Write estimated weights or parameters as JSON.
    #[arg(long)]
    pub diagnostics: Option<PathBuf>,
    /// Write the edge label matrix as TSV.
    #[arg(long)]
    pub dump_matrix: Option<PathBuf>,
    /// Allow several tokens attached to the root.
    #[arg(long)]
    pub no_single_root: bool,

    #[arg(long, value_enum)]
    pub crh_distance: Option<CrhDistanceArg>,
    #[arg(long)]
    pub crh_max_iter: Option<usize>,
    #[arg(long)]
    pub crh_eps: Option<f64>,

    #[arg(long)]
    pub cim_l1: Option<f64>,
    #[arg(long)]
    pub cim_coef_threshold: Option<f64>,
    #[arg(long)]
    pub cim_no_collapse: bool,
    #[arg(long)]
    pub cim_triplet_min: Option<f64>,
    /// Keep the last iterate of a non-convergent fit instead of the
    /// closed-form parameters.
    #[arg(long)]
    pub cim_no_fallback: bool,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub gold: PathBuf,
    /// Prediction as NAME=FILE; repeatable.
    #[arg(long = "pred", value_parser = parse_named_path, required = true)]
    pub preds: Vec<(String, PathBuf)>,
    /// Parser directory; adds per-parser scores and their average.
    #[arg(long)]
    pub inputs: Option<PathBuf>,
    #[arg(long)]
    pub selection: Option<PathBuf>,
    #[arg(long)]
    pub filter_log: Option<PathBuf>,
    /// Defaults to the gold file stem.
    #[arg(long)]
    pub treebank: Option<String>,
    /// Score only tokens whose gold UPOS is not PUNCT.
    #[arg(long)]
    pub exclude_punct: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Directory of per-treebank report JSON files.
    #[arg(long)]
    pub inputs: PathBuf,
    /// JSON object mapping group names to treebank names.
    #[arg(long)]
    pub groups: Option<PathBuf>,
    /// Method compared against every other method.
    #[arg(long, default_value = "cim")]
    pub target: String,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_named_path(s: &str) -> Result<(String, PathBuf), String> {
    let (name, path) = s.split_once('=').ok_or_else(|| format!("expected NAME=FILE, got {s}"))?;
    if name.is_empty() || path.is_empty() {
        return Err(format!("expected NAME=FILE, got {s}"));
    }
    Ok((name.to_string(), PathBuf::from(path)))
}

/// A failed command with its exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure {
            code: EXIT_ERROR,
            message: format!("{:#}", e),
        }
    }
}

type Outcome = Result<(), Failure>;

pub fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Preprocess(a) => preprocess_cmd(a),
        Command::Rank(a) => rank(a),
        Command::Aggregate(a) => aggregate(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Report(a) => report(a),
    }
}

/// Parse `args` and run; returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message.replace('\n', " "));
            f.code
        }
    }
}

fn write_file(path: &Path, contents: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, &text)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_dir_sorted(dir: &Path, extension: &str) -> anyhow::Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading directory {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    paths.retain(|p| p.is_file() && p.extension().is_some_and(|e| e == extension));
    paths.sort();
    if paths.is_empty() {
        bail!("no .{} files in {}", extension, dir.display());
    }
    Ok(paths)
}

/// Parser files of a directory, in file name order.
pub fn read_parser_dir(dir: &Path) -> anyhow::Result<Vec<TreebankFile>> {
    read_dir_sorted(dir, "conllu")?
        .iter()
        .map(|p| read_conllu(p).map_err(Into::into))
        .collect()
}

fn synth(a: SynthArgs) -> Outcome {
    let config = SynthConfig {
        n_sentences: a.sentences,
        min_tokens: a.min_tokens,
        max_tokens: a.max_tokens,
        duplicates: a
            .duplicate
            .iter()
            .map(|&d| d.checked_sub(1).ok_or_else(|| Failure::usage("--duplicate is 1-based")))
            .collect::<Result<_, _>>()?,
        rates: a.rates,
        seed: a.seed,
    };
    let corpus = generate(&config).map_err(anyhow::Error::from)?;
    for p in &corpus.parsers {
        write_file(&a.out.join("parsers").join(format!("{}.conllu", p.parser_id)), &p.to_conllu())?;
    }
    write_file(&a.out.join("gold.conllu"), &corpus.gold.to_conllu())?;

    #[derive(Serialize)]
    struct Truth<'a> {
        seed: u64,
        parsers: BTreeMap<&'a str, (f64, f64)>,
    }
    let truth = Truth {
        seed: a.seed,
        parsers: corpus
            .ensemble
            .parser_ids()
            .iter()
            .zip(corpus.rates.iter().zip(&corpus.accuracies))
            .map(|(id, (&r, &acc))| (id.as_str(), (r, acc)))
            .collect(),
    };
    write_json(&a.out.join("truth.json"), &truth)?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct FilterReport {
    #[serde(flatten)]
    log: FilterLog,
    rejection: Option<Rejection>,
}

fn preprocess_cmd(a: PreprocessArgs) -> Outcome {
    let parsers = read_parser_dir(&a.inputs)?;
    let gold = a.gold.as_deref().map(read_conllu).transpose().map_err(anyhow::Error::from)?;
    let opts = PreprocessOptions {
        min_sentences: a.min_sentences,
        min_parsers: a.min_parsers,
    };
    let out = preprocess(&parsers, gold.as_ref(), &opts).map_err(anyhow::Error::from)?;
    write_json(
        &a.out.join("filter_log.json"),
        &FilterReport {
            log: out.log,
            rejection: out.rejection.clone(),
        },
    )?;
    if let Some(r) = out.rejection {
        return Err(Failure {
            code: EXIT_REJECTED,
            message: format!("treebank rejected: {}", r),
        });
    }
    for p in &out.parsers {
        write_file(&a.out.join("parsers").join(format!("{}.conllu", p.parser_id)), &p.to_conllu())?;
    }
    if let Some(g) = &out.gold {
        write_file(&a.out.join("gold.conllu"), &g.to_conllu())?;
    }
    Ok(())
}

fn rank(a: RankArgs) -> Outcome {
    let files = read_parser_dir(&a.inputs)?;
    let gold = read_conllu(&a.gold).map_err(anyhow::Error::from)?;
    let ensemble = build_ensemble(&files).map_err(anyhow::Error::from)?;
    let selection = rank_and_select(&ensemble, &gold.trees(), a.sample_size, a.top_k, a.seed)
        .map_err(anyhow::Error::from)?;
    if let Some(w) = &selection.warning {
        eprintln!("warning: {}", w);
    }
    write_json(&a.out, &selection)?;
    Ok(())
}

fn select_files(files: Vec<TreebankFile>, selection: &Option<PathBuf>) -> anyhow::Result<Vec<TreebankFile>> {
    let Some(path) = selection else {
        return Ok(files);
    };
    let sel: Selection = read_json(path)?;
    for id in &sel.selected {
        if !files.iter().any(|f| &f.parser_id == id) {
            bail!("selected parser {} has no input file", id);
        }
    }
    Ok(files.into_iter().filter(|f| sel.selected.contains(&f.parser_id)).collect())
}

fn check_method_flags(a: &AggregateArgs) -> Result<(), Failure> {
    let crh = [
        ("--crh-distance", a.crh_distance.is_some()),
        ("--crh-max-iter", a.crh_max_iter.is_some()),
        ("--crh-eps", a.crh_eps.is_some()),
    ];
    let cim = [
        ("--cim-l1", a.cim_l1.is_some()),
        ("--cim-coef-threshold", a.cim_coef_threshold.is_some()),
        ("--cim-no-collapse", a.cim_no_collapse),
        ("--cim-triplet-min", a.cim_triplet_min.is_some()),
        ("--cim-no-fallback", a.cim_no_fallback),
    ];
    for (flags, method) in [(&crh[..], Method::Crh), (&cim[..], Method::Cim)] {
        if a.method != method {
            if let Some((name, _)) = flags.iter().find(|(_, set)| *set) {
                return Err(Failure::usage(format!("{} requires --method {:?}", name, method).to_lowercase()));
            }
        }
    }
    Ok(())
}

fn aggregate(a: AggregateArgs) -> Outcome {
    check_method_flags(&a)?;
    let files = select_files(read_parser_dir(&a.inputs)?, &a.selection)?;
    let ensemble = build_ensemble(&files).map_err(anyhow::Error::from)?;
    let matrix = ensemble_matrix(&ensemble);
    let single_root = !a.no_single_root;

    if let Some(path) = &a.dump_matrix {
        let ids: Vec<String> = ensemble.sentences().iter().map(|s| s.id.clone()).collect();
        let mut buf = Vec::new();
        matrix.write_debug(&ids, &mut buf).map_err(anyhow::Error::from)?;
        write_file(path, &String::from_utf8(buf).expect("matrix dump is UTF-8"))?;
    }

    let (trees, diagnostics): (Vec<DepTree>, serde_json::Value) = match a.method {
        Method::Mst => (vote_mst(&ensemble, single_root).map_err(anyhow::Error::from)?, serde_json::Value::Null),
        Method::Crh => {
            let defaults = CrhOptions::default();
            let opts = CrhOptions {
                distance: match a.crh_distance {
                    Some(CrhDistanceArg::Uas) => CrhDistance::TreeUas,
                    _ => CrhDistance::EdgeZeroOne,
                },
                max_iterations: a.crh_max_iter.unwrap_or(defaults.max_iterations),
                epsilon: a.crh_eps.unwrap_or(defaults.epsilon),
                single_root,
                ..defaults
            };
            let state = crh_run(&matrix, &opts).map_err(anyhow::Error::from)?;
            let trees = crh_trees(&state, &matrix, single_root).map_err(anyhow::Error::from)?;
            (trees, serde_json::json!({ "options": opts, "state": state }))
        }
        Method::Cim => {
            let defaults = CimOptions::default();
            let mut opts = CimOptions {
                l1_penalty: a.cim_l1,
                coef_threshold: a.cim_coef_threshold.unwrap_or(defaults.coef_threshold),
                collapse: !a.cim_no_collapse,
                closed_form_fallback: !a.cim_no_fallback,
                single_root,
                ..defaults
            };
            if let Some(t) = a.cim_triplet_min {
                opts.moments.triplet_min = t;
            }
            let model = cim_fit(&matrix, &opts).map_err(anyhow::Error::from)?;
            let trees = cim_trees(&model.scores, matrix.union(), single_root).map_err(anyhow::Error::from)?;
            (trees, serde_json::json!({ "options": opts, "model": model }))
        }
    };

    let text = write_conllu(&files[0], &trees).map_err(anyhow::Error::from)?;
    write_file(&a.out, &text)?;
    if let Some(path) = &a.diagnostics {
        write_json(
            path,
            &serde_json::json!({
                "method": a.method,
                "parsers": ensemble.parser_ids(),
                "diagnostics": diagnostics,
            }),
        )?;
    }
    Ok(())
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn evaluate(a: EvaluateArgs) -> Outcome {
    let gold = read_conllu(&a.gold).map_err(anyhow::Error::from)?;
    let gold_trees = gold.trees();
    let mask = a.exclude_punct.then(|| punct_mask(&gold));
    let score = |pred: &[DepTree]| -> anyhow::Result<f64> {
        Ok(match &mask {
            Some(m) => uas_masked(pred, &gold_trees, m)?,
            None => uas(pred, &gold_trees)?,
        })
    };

    let mut methods = BTreeMap::new();
    for (name, path) in &a.preds {
        let pred = read_conllu(path).map_err(anyhow::Error::from)?;
        let s = score(&pred.trees()).with_context(|| format!("scoring {}", name))?;
        if methods.insert(name.clone(), s).is_some() {
            return Err(Failure::usage(format!("prediction {} given twice", name)));
        }
    }

    let mut parsers = BTreeMap::new();
    if let Some(dir) = &a.inputs {
        let files = read_parser_dir(dir)?;
        let ensemble = build_ensemble(&files).map_err(anyhow::Error::from)?;
        let scores = if mask.is_some() {
            (0..ensemble.n_parsers())
                .map(|j| score(&ensemble.parser_trees(j)))
                .collect::<anyhow::Result<Vec<_>>>()?
        } else {
            parser_uas(&ensemble, &gold_trees).map_err(anyhow::Error::from)?
        };
        for (id, s) in ensemble.parser_ids().iter().zip(&scores) {
            parsers.insert(id.clone(), *s);
        }
        methods.insert("average".to_string(), scores.iter().sum::<f64>() / scores.len() as f64);
    }

    let selection: Option<Selection> = a.selection.as_deref().map(read_json).transpose()?;
    let filters = match &a.filter_log {
        Some(p) => {
            let f: FilterReport = read_json(p)?;
            FilterCounts {
                seg_dropped: f.log.seg_dropped,
                agree_dropped: f.log.agree_dropped,
            }
        }
        None => FilterCounts::default(),
    };

    let report = TreebankReport {
        treebank: a.treebank.unwrap_or_else(|| file_stem(&a.gold)),
        n_sentences: gold.len(),
        methods,
        selected_parsers: selection.as_ref().map(|s| s.selected.clone()).unwrap_or_default(),
        filters,
        sample_uas: selection
            .map(|s| s.ranking.into_iter().map(|r| (r.parser_id, r.uas)).collect())
            .unwrap_or_default(),
        parsers,
    };
    write_json(&a.out, &report)?;
    Ok(())
}

#[derive(Serialize)]
struct Summary {
    target: String,
    groups: Vec<SummaryReport>,
    diffs: Vec<MethodDiff>,
}

fn report(a: ReportArgs) -> Outcome {
    let mut reports: Vec<TreebankReport> = read_dir_sorted(&a.inputs, "json")?
        .iter()
        .map(|p| read_json(p))
        .collect::<anyhow::Result<_>>()?;
    reports.sort_by(|x, y| x.treebank.cmp(&y.treebank));

    let groups: BTreeMap<String, Vec<String>> = match &a.groups {
        Some(p) => read_json(p)?,
        None => [("all".to_string(), reports.iter().map(|r| r.treebank.clone()).collect())].into(),
    };

    let mut summaries = Vec::new();
    for (name, members) in &groups {
        let selected: Vec<&TreebankReport> = members
            .iter()
            .map(|tb| {
                reports
                    .iter()
                    .find(|r| &r.treebank == tb)
                    .ok_or_else(|| anyhow!("group {} lists treebank {} with no report", name, tb))
            })
            .collect::<anyhow::Result<_>>()?;
        summaries.push(summary_report(name, &selected).map_err(anyhow::Error::from)?);
    }

    let table = method_table(&reports);
    let target = table
        .get(&a.target)
        .ok_or_else(|| anyhow!("no report contains method {}", a.target))?;
    let diffs = table
        .iter()
        .filter(|(m, _)| **m != a.target)
        .map(|(m, scores)| method_diffs((&a.target, target), (m, scores)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(anyhow::Error::from)?;

    print!("{}", render_table(&summaries, &diffs));
    write_json(
        &a.out,
        &Summary {
            target: a.target,
            groups: summaries,
            diffs,
        },
    )?;
    Ok(())
}

/// Plain-text summary with two decimals.
pub fn render_table(groups: &[SummaryReport], diffs: &[MethodDiff]) -> String {
    let mut out = String::new();
    for g in groups {
        out.push_str(&format!("{} ({} treebanks)\n", g.group, g.treebanks.len()));
        out.push_str(&format!("  {:<16} {:>8} {:>8} {:>8}\n", "method", "mu", "M", "sigma"));
        for (m, s) in &g.methods {
            out.push_str(&format!("  {:<16} {:>8.2} {:>8.2} {:>8.2}\n", m, s.mu, s.median, s.sigma));
        }
    }
    for d in diffs {
        out.push_str(&format!(
            "{} - {}: +{} -{} ={}\n",
            d.method, d.baseline, d.positive, d.negative, d.zero
        ));
        for (tb, v) in &d.diffs {
            out.push_str(&format!("  {:<24} {:>+8.2}\n", tb, v));
        }
    }
    out
}
