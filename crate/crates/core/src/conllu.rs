//! CoNLL-U reading and writing.
//!
//! Files are kept with enough layout information to write them back
//! byte-for-byte: only the HEAD column of word lines whose head changed is
//! regenerated. Multiword-token ranges (`1-2`) and empty nodes (`3.1`) are
//! carried along verbatim and never enter the tree.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::model::{DepTree, Sentence, Token, TreeViolation};

const HEAD_COLUMN: usize = 6;
const N_COLUMNS: usize = 10;

#[derive(Debug, Error)]
pub enum ConlluError {
    #[error("line {line}: expected 10 tab-separated columns, found {found}")]
    ColumnCount { line: usize, found: usize },
    #[error("line {line}: invalid token id '{id}'")]
    BadId { line: usize, id: String },
    #[error("line {line}: token id {found} out of sequence, expected {expected}")]
    NonConsecutive {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: invalid HEAD value '{head}'")]
    BadHead { line: usize, head: String },
    #[error("line {line}: sentence has no word lines")]
    EmptySentence { line: usize },
    #[error("line {line}: invalid tree: {violation}")]
    InvalidTree {
        line: usize,
        violation: TreeViolation,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WriteError {
    #[error("expected {expected} predicted trees, got {actual}")]
    SentenceCount { expected: usize, actual: usize },
    #[error("sentence {sentence}: predicted tree has {actual} tokens, expected {expected}")]
    TokenCount {
        sentence: String,
        expected: usize,
        actual: usize,
    },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SegmentationError {
    #[error("no files to compare")]
    NoFiles,
    #[error("file {file} has {actual} sentences, expected {expected}")]
    SentenceCount {
        file: String,
        expected: usize,
        actual: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum LineKind {
    Comment,
    Word(usize),
    Other,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Line {
    raw: String,
    kind: LineKind,
}

/// One sentence block of a CoNLL-U file together with its tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SentenceBlock {
    pub sentence: Sentence,
    pub tree: DepTree,
    lines: Vec<Line>,
    /// Blank lines following the block.
    trailer: Vec<String>,
}

impl SentenceBlock {
    /// Create a block laid out in canonical form: comments, then one word
    /// line per token, then one blank line.
    pub fn new(sentence: Sentence, tree: DepTree) -> Self {
        assert_eq!(sentence.len(), tree.len(), "token count mismatch");
        let mut lines: Vec<Line> = sentence
            .comments
            .iter()
            .map(|c| Line {
                raw: c.clone(),
                kind: LineKind::Comment,
            })
            .collect();
        for (i, tok) in sentence.tokens.iter().enumerate() {
            lines.push(Line {
                raw: word_line(tok, tree.head(i + 1)),
                kind: LineKind::Word(i),
            });
        }
        SentenceBlock {
            sentence,
            tree,
            lines,
            trailer: vec![String::new()],
        }
    }

    /// Multiword ranges and empty nodes, verbatim.
    pub fn extra_lines(&self) -> impl Iterator<Item = &str> {
        self.lines
            .iter()
            .filter(|l| l.kind == LineKind::Other)
            .map(|l| l.raw.as_str())
    }

    fn write_into(&self, tree: &DepTree, out: &mut Vec<String>) {
        for line in &self.lines {
            match line.kind {
                LineKind::Word(i) if tree.head(i + 1) != self.tree.head(i + 1) => {
                    out.push(replace_head(&line.raw, tree.head(i + 1)));
                }
                _ => out.push(line.raw.clone()),
            }
        }
        out.extend(self.trailer.iter().cloned());
    }
}

fn word_line(tok: &Token, head: usize) -> String {
    let p = &tok.passthrough;
    format!(
        "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
        tok.index, p[0], p[1], p[2], p[3], p[4], head, p[5], p[6], p[7]
    )
}

fn replace_head(raw: &str, head: usize) -> String {
    let (body, cr) = match raw.strip_suffix('\r') {
        Some(b) => (b, "\r"),
        None => (raw, ""),
    };
    let head = head.to_string();
    let cols: Vec<&str> = body
        .split('\t')
        .enumerate()
        .map(|(i, c)| if i == HEAD_COLUMN { head.as_str() } else { c })
        .collect();
    format!("{}{}", cols.join("\t"), cr)
}

/// A parsed treebank file from one source (a parser or the gold standard).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreebankFile {
    pub parser_id: String,
    pub blocks: Vec<SentenceBlock>,
    leading: Vec<String>,
    trailing_newline: bool,
}

impl TreebankFile {
    pub fn new(parser_id: impl Into<String>, blocks: Vec<SentenceBlock>) -> Self {
        TreebankFile {
            parser_id: parser_id.into(),
            blocks,
            leading: Vec::new(),
            trailing_newline: true,
        }
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn trees(&self) -> Vec<DepTree> {
        self.blocks.iter().map(|b| b.tree.clone()).collect()
    }

    /// Keep only the blocks at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        TreebankFile {
            parser_id: self.parser_id.clone(),
            blocks: indices.iter().map(|&i| self.blocks[i].clone()).collect(),
            leading: self.leading.clone(),
            trailing_newline: self.trailing_newline,
        }
    }

    /// Serialize with the file's own trees.
    pub fn to_conllu(&self) -> String {
        let trees = self.trees();
        write_conllu(self, &trees).expect("own trees always match")
    }
}

fn sentence_id(comments: &[String], position: usize) -> String {
    comments
        .iter()
        .filter_map(|c| c.trim_start_matches('#').trim().strip_prefix("sent_id"))
        .filter_map(|rest| rest.trim_start().strip_prefix('='))
        .map(|id| id.trim().to_string())
        .next()
        .unwrap_or_else(|| position.to_string())
}

struct BlockBuilder {
    first_line: usize,
    lines: Vec<Line>,
    comments: Vec<String>,
    tokens: Vec<Token>,
    heads: Vec<usize>,
}

impl BlockBuilder {
    fn new(first_line: usize) -> Self {
        BlockBuilder {
            first_line,
            lines: Vec::new(),
            comments: Vec::new(),
            tokens: Vec::new(),
            heads: Vec::new(),
        }
    }

    fn push(&mut self, raw: &str, line_no: usize) -> Result<(), ConlluError> {
        let body = raw.strip_suffix('\r').unwrap_or(raw);
        if body.starts_with('#') {
            self.comments.push(body.to_string());
            self.lines.push(Line {
                raw: raw.to_string(),
                kind: LineKind::Comment,
            });
            return Ok(());
        }

        let cols: Vec<&str> = body.split('\t').collect();
        if cols.len() != N_COLUMNS {
            return Err(ConlluError::ColumnCount {
                line: line_no,
                found: cols.len(),
            });
        }
        let id = cols[0];
        if id.contains('-') || id.contains('.') {
            let valid = id
                .split(['-', '.'])
                .all(|p| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit()));
            if !valid {
                return Err(ConlluError::BadId {
                    line: line_no,
                    id: id.to_string(),
                });
            }
            self.lines.push(Line {
                raw: raw.to_string(),
                kind: LineKind::Other,
            });
            return Ok(());
        }

        let index: usize = id.parse().map_err(|_| ConlluError::BadId {
            line: line_no,
            id: id.to_string(),
        })?;
        let expected = self.tokens.len() + 1;
        if index != expected {
            return Err(ConlluError::NonConsecutive {
                line: line_no,
                expected,
                found: index,
            });
        }
        let head: usize = cols[HEAD_COLUMN]
            .parse()
            .map_err(|_| ConlluError::BadHead {
                line: line_no,
                head: cols[HEAD_COLUMN].to_string(),
            })?;
        let passthrough = [
            cols[1], cols[2], cols[3], cols[4], cols[5], cols[7], cols[8], cols[9],
        ]
        .map(str::to_string);
        self.lines.push(Line {
            raw: raw.to_string(),
            kind: LineKind::Word(self.tokens.len()),
        });
        self.tokens.push(Token {
            index,
            form: cols[1].to_string(),
            passthrough,
        });
        self.heads.push(head);
        Ok(())
    }

    fn finish(self, position: usize) -> Result<SentenceBlock, ConlluError> {
        if self.tokens.is_empty() {
            return Err(ConlluError::EmptySentence {
                line: self.first_line,
            });
        }
        let tree = DepTree::new(self.heads).map_err(|violation| ConlluError::InvalidTree {
            line: self.first_line,
            violation,
        })?;
        Ok(SentenceBlock {
            sentence: Sentence {
                id: sentence_id(&self.comments, position),
                tokens: self.tokens,
                comments: self.comments,
            },
            tree,
            lines: self.lines,
            trailer: Vec::new(),
        })
    }
}

/// Parse CoNLL-U text. Line numbers in errors are 1-based.
pub fn parse_conllu(text: &str, parser_id: &str) -> Result<TreebankFile, ConlluError> {
    let trailing_newline = text.ends_with('\n');
    let mut pieces: Vec<&str> = text.split('\n').collect();
    if trailing_newline || text.is_empty() {
        pieces.pop();
    }

    let mut leading = Vec::new();
    let mut blocks: Vec<SentenceBlock> = Vec::new();
    let mut current: Option<BlockBuilder> = None;

    for (i, raw) in pieces.iter().enumerate() {
        let line_no = i + 1;
        if raw.trim().is_empty() {
            match current.take() {
                Some(b) => {
                    let block = b.finish(blocks.len() + 1)?;
                    blocks.push(block);
                    blocks.last_mut().unwrap().trailer.push(raw.to_string());
                }
                None => match blocks.last_mut() {
                    Some(prev) => prev.trailer.push(raw.to_string()),
                    None => leading.push(raw.to_string()),
                },
            }
            continue;
        }
        current
            .get_or_insert_with(|| BlockBuilder::new(line_no))
            .push(raw, line_no)?;
    }
    if let Some(b) = current {
        let block = b.finish(blocks.len() + 1)?;
        blocks.push(block);
    }

    Ok(TreebankFile {
        parser_id: parser_id.to_string(),
        blocks,
        leading,
        trailing_newline,
    })
}

/// Read a CoNLL-U file; the parser id is the file stem.
pub fn read_conllu(path: &Path) -> Result<TreebankFile, ConlluError> {
    let text = fs::read_to_string(path).map_err(|source| ConlluError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_conllu(&text, &id)
}

/// Serialize `treebank` with its HEAD columns replaced by `predicted`.
///
/// Predictions are aligned to blocks by position.
pub fn write_conllu(treebank: &TreebankFile, predicted: &[DepTree]) -> Result<String, WriteError> {
    if predicted.len() != treebank.blocks.len() {
        return Err(WriteError::SentenceCount {
            expected: treebank.blocks.len(),
            actual: predicted.len(),
        });
    }
    let mut lines = treebank.leading.clone();
    for (block, tree) in treebank.blocks.iter().zip(predicted) {
        if tree.len() != block.tree.len() {
            return Err(WriteError::TokenCount {
                sentence: block.sentence.id.clone(),
                expected: block.tree.len(),
                actual: tree.len(),
            });
        }
        block.write_into(tree, &mut lines);
    }
    let mut out = lines.join("\n");
    if treebank.trailing_newline && !lines.is_empty() {
        out.push('\n');
    }
    Ok(out)
}

/// Per-sentence flag: do all files tokenize the sentence identically?
///
/// Sentences are aligned by position; forms are compared byte for byte.
pub fn check_segmentation(files: &[&TreebankFile]) -> Result<Vec<bool>, SegmentationError> {
    let first = files.first().ok_or(SegmentationError::NoFiles)?;
    let n = first.blocks.len();
    for f in files {
        if f.blocks.len() != n {
            return Err(SegmentationError::SentenceCount {
                file: f.parser_id.clone(),
                expected: n,
                actual: f.blocks.len(),
            });
        }
    }
    Ok((0..n)
        .map(|i| {
            let reference = &first.blocks[i].sentence;
            files[1..].iter().all(|f| {
                let s = &f.blocks[i].sentence;
                s.len() == reference.len() && s.forms().eq(reference.forms())
            })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "# sent_id = a\n1\tHe\the\tPRON\t_\t_\t2\tnsubj\t_\t_\n2\truns\trun\tVERB\t_\t_\t0\troot\t_\t_\n\n";

    fn block(forms: &[&str], heads: &[usize]) -> String {
        let mut s = String::new();
        for (i, (f, h)) in forms.iter().zip(heads).enumerate() {
            s.push_str(&format!("{}\t{}\t_\t_\t_\t_\t{}\t_\t_\t_\n", i + 1, f, h));
        }
        s.push('\n');
        s
    }

    #[test]
    fn parses_two_token_sentence() {
        let tb = parse_conllu(SMALL, "p").unwrap();
        assert_eq!(tb.len(), 1);
        assert_eq!(tb.blocks[0].tree.heads(), &[2, 0]);
        assert_eq!(tb.blocks[0].sentence.id, "a");
        assert_eq!(tb.blocks[0].sentence.tokens[1].upos(), "VERB");
    }

    #[test]
    fn counts_blocks() {
        let text = block(&["a", "b", "c"], &[0, 1, 1]) + &block(&["a", "b", "c", "d", "e"], &[0, 1, 2, 3, 4]);
        let tb = parse_conllu(&text, "p").unwrap();
        assert_eq!(tb.len(), 2);
        assert_eq!(tb.blocks[1].sentence.len(), 5);
        assert_eq!(tb.blocks[1].sentence.id, "2");
    }

    #[test]
    fn column_count_error_names_line() {
        let text = "1\ta\t_\t_\t_\t_\t0\troot\t_\t_\n2\tb\t_\t_\t_\t_\t1\t_\t_\n\n";
        match parse_conllu(text, "p") {
            Err(ConlluError::ColumnCount { line: 2, found: 9 }) => {}
            other => panic!("unexpected: {:?}", other),
        }
    }

    #[test]
    fn bad_head_and_invalid_tree() {
        let text = "1\ta\t_\t_\t_\t_\tx\t_\t_\t_\n\n";
        assert!(matches!(
            parse_conllu(text, "p"),
            Err(ConlluError::BadHead { line: 1, .. })
        ));
        let text = "\n1\ta\t_\t_\t_\t_\t2\t_\t_\t_\n2\tb\t_\t_\t_\t_\t1\t_\t_\t_\n";
        assert!(matches!(
            parse_conllu(text, "p"),
            Err(ConlluError::InvalidTree {
                line: 2,
                violation: TreeViolation::Cycle { .. }
            })
        ));
    }

    #[test]
    fn identity_round_trip() {
        let tb = parse_conllu(SMALL, "p").unwrap();
        assert_eq!(tb.to_conllu(), SMALL);
    }

    #[test]
    fn rewriting_heads_changes_only_head_fields() {
        let tb = parse_conllu(SMALL, "p").unwrap();
        let out = write_conllu(&tb, &[DepTree::new(vec![0, 1]).unwrap()]).unwrap();
        let before: Vec<&str> = SMALL.lines().collect();
        let after: Vec<&str> = out.lines().collect();
        assert_eq!(before.len(), after.len());
        for (b, a) in before.iter().zip(&after) {
            let bc: Vec<&str> = b.split('\t').collect();
            let ac: Vec<&str> = a.split('\t').collect();
            for (k, (x, y)) in bc.iter().zip(&ac).enumerate() {
                if k != HEAD_COLUMN {
                    assert_eq!(x, y);
                }
            }
        }
        assert!(after[1].split('\t').nth(6) == Some("0"));
        assert!(after[2].split('\t').nth(6) == Some("1"));
    }

    #[test]
    fn multiword_and_crlf_pass_through() {
        let text = "# text = vámonos\r\n1-2\tvámonos\t_\t_\t_\t_\t_\t_\t_\t_\r\n1\tvamos\tir\tVERB\t_\t_\t0\troot\t_\t_\r\n2\tnos\tnosotros\tPRON\t_\t_\t1\tobj\t_\t_\r\n2.1\tx\t_\t_\t_\t_\t_\t_\t_\t_\r\n\r\n";
        let tb = parse_conllu(text, "p").unwrap();
        assert_eq!(tb.blocks[0].sentence.len(), 2);
        assert_eq!(tb.blocks[0].extra_lines().count(), 2);
        assert_eq!(tb.to_conllu(), text);
        let out = write_conllu(&tb, &[DepTree::new(vec![2, 0]).unwrap()]).unwrap();
        assert!(out.contains("1-2\tvámonos\t_\t_\t_\t_\t_\t_\t_\t_\r\n"));
        assert!(out.contains("1\tvamos\tir\tVERB\t_\t_\t2\troot\t_\t_\r\n"));
    }

    #[test]
    fn write_rejects_token_mismatch() {
        let tb = parse_conllu(SMALL, "p").unwrap();
        let err = write_conllu(&tb, &[DepTree::new(vec![0]).unwrap()]).unwrap_err();
        assert!(matches!(err, WriteError::TokenCount { .. }));
    }

    #[test]
    fn segmentation_flags() {
        let a = parse_conllu(&block(&["a", "b", "c"], &[0, 1, 1]), "a").unwrap();
        let b = parse_conllu(&block(&["a", "b", "c"], &[2, 0, 2]), "b").unwrap();
        let c = parse_conllu(&block(&["a", "b", "x", "c"], &[0, 1, 1, 1]), "c").unwrap();
        assert_eq!(check_segmentation(&[&a, &b]).unwrap(), vec![true]);
        assert_eq!(check_segmentation(&[&a, &c]).unwrap(), vec![false]);
        assert_eq!(check_segmentation(&[&c]).unwrap(), vec![true]);
        let two = parse_conllu(&(block(&["a"], &[0]) + &block(&["b"], &[0])), "d").unwrap();
        assert!(matches!(
            check_segmentation(&[&a, &two]),
            Err(SegmentationError::SentenceCount { .. })
        ));
    }

    #[test]
    fn synthetic_blocks_reparse() {
        let sentence = Sentence {
            id: "x".into(),
            tokens: vec![Token {
                index: 1,
                form: "w1".into(),
                passthrough: Default::default(),
            }],
            comments: vec!["# sent_id = x".into()],
        };
        let mut sentence = sentence;
        sentence.tokens[0].passthrough = ["w1", "_", "_", "_", "_", "_", "_", "_"].map(String::from);
        let tb = TreebankFile::new("g", vec![SentenceBlock::new(sentence, DepTree::new(vec![0]).unwrap())]);
        let text = tb.to_conllu();
        assert_eq!(text, "# sent_id = x\n1\tw1\t_\t_\t_\t_\t0\t_\t_\t_\n\n");
        assert_eq!(parse_conllu(&text, "g").unwrap(), tb);
    }
}
