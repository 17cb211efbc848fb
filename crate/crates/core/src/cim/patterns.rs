use std::collections::BTreeMap;

/// Distinct label rows with their relative frequencies.
///
/// Label rows take at most `2^m` values, so every estimation pass runs over
/// the distinct rows instead of all candidate edges.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Patterns {
    pub rows: Vec<Vec<i8>>,
    /// Relative frequency of each row; sums to 1.
    pub weights: Vec<f64>,
    pub n: usize,
}

impl Patterns {
    pub fn from_rows<'a>(rows: impl Iterator<Item = Vec<i8>> + 'a) -> Self {
        let mut counts: BTreeMap<Vec<i8>, usize> = BTreeMap::new();
        let mut n = 0;
        for r in rows {
            *counts.entry(r).or_default() += 1;
            n += 1;
        }
        let mut out = Patterns {
            rows: Vec::with_capacity(counts.len()),
            weights: Vec::with_capacity(counts.len()),
            n,
        };
        for (r, c) in counts {
            out.rows.push(r);
            out.weights.push(c as f64 / n as f64);
        }
        out
    }

    /// Empirical mean of `f(row)`.
    pub fn mean(&self, f: impl Fn(&[i8]) -> f64) -> f64 {
        self.rows
            .iter()
            .zip(&self.weights)
            .map(|(r, w)| w * f(r))
            .sum()
    }
}
