//! Core dataset types and the encodings shared by every fitter.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Measurement scale of a single variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScaleKind {
    Ratio,
    Interval,
    Ordinal,
    Nominal,
    Binary,
}

impl ScaleKind {
    pub fn is_quantitative(self) -> bool {
        matches!(self, ScaleKind::Ratio | ScaleKind::Interval)
    }

    pub fn is_categorical(self) -> bool {
        !self.is_quantitative()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ScaleKind::Ratio => "ratio",
            ScaleKind::Interval => "interval",
            ScaleKind::Ordinal => "ordinal",
            ScaleKind::Nominal => "nominal",
            ScaleKind::Binary => "binary",
        }
    }
}

impl fmt::Display for ScaleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScaleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ratio" => Ok(ScaleKind::Ratio),
            "interval" => Ok(ScaleKind::Interval),
            "ordinal" => Ok(ScaleKind::Ordinal),
            "nominal" => Ok(ScaleKind::Nominal),
            "binary" => Ok(ScaleKind::Binary),
            other => Err(Error::UnknownScale(other.to_string())),
        }
    }
}

/// Raw readings of one variable.
#[derive(Clone, Debug, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<f64>),
    /// `codes[i]` indexes into `labels`; for ordinal variables `labels` is in
    /// ascending order.
    Categorical {
        codes: Vec<usize>,
        labels: Vec<String>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variable {
    pub name: String,
    pub scale: ScaleKind,
    pub data: ColumnData,
}

impl Variable {
    pub fn numeric(name: impl Into<String>, scale: ScaleKind, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if !scale.is_quantitative() {
            return Err(Error::Invalid(format!(
                "variable `{name}` is {scale}; numeric storage needs ratio or interval"
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NotNumeric {
                column: name,
                value: v.to_string(),
            });
        }
        Ok(Variable {
            name,
            scale,
            data: ColumnData::Numeric(values),
        })
    }

    /// Categorical variable from raw labels; every value must be declared.
    pub fn categorical<S: AsRef<str>>(
        name: impl Into<String>,
        scale: ScaleKind,
        values: &[S],
        labels: Vec<String>,
    ) -> Result<Self> {
        let name = name.into();
        if scale.is_quantitative() {
            return Err(Error::Invalid(format!(
                "variable `{name}` is {scale}; categorical storage needs ordinal, nominal or binary"
            )));
        }
        match scale {
            ScaleKind::Binary if labels.len() != 2 => {
                return Err(Error::Schema(format!(
                    "binary variable `{name}` needs exactly two labels, got {}",
                    labels.len()
                )))
            }
            ScaleKind::Nominal | ScaleKind::Ordinal if labels.len() < 2 => {
                return Err(Error::Schema(format!(
                    "variable `{name}` needs at least two labels"
                )))
            }
            _ => {}
        }
        let unique: HashSet<&str> = labels.iter().map(String::as_str).collect();
        if unique.len() != labels.len() {
            return Err(Error::Schema(format!("variable `{name}` repeats a label")));
        }
        let codes = encode_labels(&name, values, &labels)?;
        Ok(Variable {
            name,
            scale,
            data: ColumnData::Categorical { codes, labels },
        })
    }

    /// Binary variable from 0/1 readings, labelled `"0"` and `"1"`.
    pub fn binary(name: impl Into<String>, values: &[f64]) -> Result<Self> {
        let name = name.into();
        let mut codes = Vec::with_capacity(values.len());
        for &v in values {
            codes.push(match v {
                x if x == 0.0 => 0,
                x if x == 1.0 => 1,
                other => {
                    return Err(Error::LabelViolation {
                        column: name,
                        value: other.to_string(),
                    })
                }
            });
        }
        Ok(Variable {
            name,
            scale: ScaleKind::Binary,
            data: ColumnData::Categorical {
                codes,
                labels: vec!["0".into(), "1".into()],
            },
        })
    }

    pub fn len(&self) -> usize {
        match &self.data {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Numeric view: raw values for quantitative variables, category codes
    /// (0-based, in label order) for categorical ones.
    pub fn numeric_view(&self) -> Vec<f64> {
        match &self.data {
            ColumnData::Numeric(v) => v.clone(),
            ColumnData::Categorical { codes, .. } => codes.iter().map(|&c| c as f64).collect(),
        }
    }

    pub fn labels(&self) -> Option<&[String]> {
        match &self.data {
            ColumnData::Numeric(_) => None,
            ColumnData::Categorical { labels, .. } => Some(labels),
        }
    }

    pub fn indicator(&self) -> Result<IndicatorMatrix> {
        match &self.data {
            ColumnData::Numeric(_) => Err(Error::Invalid(format!(
                "variable `{}` is quantitative and has no indicator matrix",
                self.name
            ))),
            ColumnData::Categorical { codes, labels } => {
                let ind = IndicatorMatrix::from_codes(codes, labels)?;
                if ind.n_categories() < 2 {
                    return Err(Error::DegenerateVariable(self.name.clone()));
                }
                Ok(ind)
            }
        }
    }

    /// Midranks of an ordinal variable (or of any numeric view).
    pub fn midranks(&self) -> Vec<f64> {
        rank_encode(&self.numeric_view())
    }

    pub(crate) fn select_rows(&self, rows: &[usize]) -> Variable {
        let data = match &self.data {
            ColumnData::Numeric(v) => ColumnData::Numeric(rows.iter().map(|&r| v[r]).collect()),
            ColumnData::Categorical { codes, labels } => ColumnData::Categorical {
                codes: rows.iter().map(|&r| codes[r]).collect(),
                labels: labels.clone(),
            },
        };
        Variable {
            name: self.name.clone(),
            scale: self.scale,
            data,
        }
    }
}

fn encode_labels<S: AsRef<str>>(column: &str, values: &[S], labels: &[String]) -> Result<Vec<usize>> {
    values
        .iter()
        .map(|v| {
            let v = v.as_ref();
            labels
                .iter()
                .position(|l| l == v)
                .ok_or_else(|| Error::LabelViolation {
                    column: column.to_string(),
                    value: v.to_string(),
                })
        })
        .collect()
}

/// One data block: `I` samples by `J_k` variables.
#[derive(Clone, Debug, PartialEq)]
pub struct DataBlock {
    pub name: String,
    pub variables: Vec<Variable>,
}

impl DataBlock {
    pub fn new(name: impl Into<String>, variables: Vec<Variable>) -> Result<Self> {
        let name = name.into();
        if variables.is_empty() {
            return Err(Error::Invalid(format!("block `{name}` has no variables")));
        }
        let n = variables[0].len();
        if let Some(v) = variables.iter().find(|v| v.len() != n) {
            return Err(Error::Dimension(format!(
                "block `{name}`: variable `{}` has {} rows, expected {n}",
                v.name,
                v.len()
            )));
        }
        Ok(DataBlock { name, variables })
    }

    /// Block of quantitative variables from a numeric matrix.
    pub fn quantitative(name: impl Into<String>, x: &DMatrix<f64>, scale: ScaleKind) -> Result<Self> {
        let name = name.into();
        let vars = x
            .column_iter()
            .enumerate()
            .map(|(j, c)| Variable::numeric(format!("{name}_{}", j + 1), scale, c.iter().copied().collect()))
            .collect::<Result<Vec<_>>>()?;
        DataBlock::new(name, vars)
    }

    /// Block of binary variables from a 0/1 matrix.
    pub fn binary(name: impl Into<String>, x: &DMatrix<f64>) -> Result<Self> {
        let name = name.into();
        let vars = x
            .column_iter()
            .enumerate()
            .map(|(j, c)| Variable::binary(format!("{name}_{}", j + 1), c.as_slice()))
            .collect::<Result<Vec<_>>>()?;
        DataBlock::new(name, vars)
    }

    pub fn n_samples(&self) -> usize {
        self.variables[0].len()
    }

    pub fn n_variables(&self) -> usize {
        self.variables.len()
    }

    /// Numeric view of the block as an `I x J_k` matrix (see [`Variable::numeric_view`]).
    pub fn numeric_matrix(&self) -> DMatrix<f64> {
        let cols: Vec<Vec<f64>> = self.variables.iter().map(Variable::numeric_view).collect();
        DMatrix::from_fn(self.n_samples(), cols.len(), |i, j| cols[j][i])
    }

    pub fn all_scales(&self, pred: impl Fn(ScaleKind) -> bool) -> bool {
        self.variables.iter().all(|v| pred(v.scale))
    }
}

/// `K >= 1` blocks sharing the same sample mode.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiBlockDataset {
    pub sample_ids: Vec<String>,
    pub blocks: Vec<DataBlock>,
}

impl MultiBlockDataset {
    pub fn new(sample_ids: Vec<String>, blocks: Vec<DataBlock>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::Invalid("a dataset needs at least one block".into()));
        }
        let mut seen = HashSet::new();
        for id in &sample_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateSample(id.clone()));
            }
        }
        for b in &blocks {
            if b.n_samples() != sample_ids.len() {
                return Err(Error::Dimension(format!(
                    "block `{}` has {} samples, dataset has {}",
                    b.name,
                    b.n_samples(),
                    sample_ids.len()
                )));
            }
        }
        Ok(MultiBlockDataset { sample_ids, blocks })
    }

    /// Dataset with generated sample ids `s1..sI`.
    pub fn from_blocks(blocks: Vec<DataBlock>) -> Result<Self> {
        let n = blocks.first().map(DataBlock::n_samples).unwrap_or(0);
        let ids = (1..=n).map(|i| format!("s{i}")).collect();
        MultiBlockDataset::new(ids, blocks)
    }

    pub fn n_samples(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn n_variables(&self) -> usize {
        self.blocks.iter().map(DataBlock::n_variables).sum()
    }

    pub fn block_names(&self) -> Vec<String> {
        self.blocks.iter().map(|b| b.name.clone()).collect()
    }

    /// `(block index, variable)` pairs in block-by-block order.
    pub fn variables(&self) -> impl Iterator<Item = (usize, &Variable)> {
        self.blocks
            .iter()
            .enumerate()
            .flat_map(|(k, b)| b.variables.iter().map(move |v| (k, v)))
    }

    /// Reorder or subset the samples.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let ids = rows.iter().map(|&r| self.sample_ids[r].clone()).collect();
        let blocks = self
            .blocks
            .iter()
            .map(|b| DataBlock {
                name: b.name.clone(),
                variables: b.variables.iter().map(|v| v.select_rows(rows)).collect(),
            })
            .collect();
        MultiBlockDataset::new(ids, blocks)
    }
}

/// Zero/one indicator matrix of a categorical variable with its category counts.
#[derive(Clone, Debug, PartialEq)]
pub struct IndicatorMatrix {
    g: DMatrix<f64>,
    counts: Vec<usize>,
    labels: Vec<String>,
    codes: Vec<usize>,
}

impl IndicatorMatrix {
    /// Build from raw values and an ordered label list. Labels that never occur
    /// are dropped (with a warning) so that the marginal matrix stays invertible.
    pub fn new<S: AsRef<str>>(values: &[S], labels: &[String]) -> Result<Self> {
        let codes = encode_labels("<indicator>", values, labels)?;
        Self::from_codes(&codes, labels)
    }

    pub fn from_codes(codes: &[usize], labels: &[String]) -> Result<Self> {
        let mut counts = vec![0usize; labels.len()];
        for &c in codes {
            let slot = counts.get_mut(c).ok_or_else(|| {
                Error::Invalid(format!("category code {c} outside {} labels", labels.len()))
            })?;
            *slot += 1;
        }
        let kept: Vec<usize> = (0..labels.len()).filter(|&l| counts[l] > 0).collect();
        if kept.len() < labels.len() {
            let dropped: Vec<&str> = (0..labels.len())
                .filter(|&l| counts[l] == 0)
                .map(|l| labels[l].as_str())
                .collect();
            log::warn!("dropping unobserved categories {dropped:?}");
        }
        let mut remap = vec![usize::MAX; labels.len()];
        for (new, &old) in kept.iter().enumerate() {
            remap[old] = new;
        }
        let codes: Vec<usize> = codes.iter().map(|&c| remap[c]).collect();
        let mut g = DMatrix::zeros(codes.len(), kept.len());
        for (i, &c) in codes.iter().enumerate() {
            g[(i, c)] = 1.0;
        }
        Ok(IndicatorMatrix {
            g,
            counts: kept.iter().map(|&l| counts[l]).collect(),
            labels: kept.iter().map(|&l| labels[l].clone()).collect(),
            codes,
        })
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }

    /// Category counts, i.e. the diagonal of `D = G'G`.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn marginals(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.counts.len(),
            self.counts.iter().map(|&c| c as f64),
        ))
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Category index of every sample.
    pub fn codes(&self) -> &[usize] {
        &self.codes
    }

    pub fn n_samples(&self) -> usize {
        self.g.nrows()
    }

    pub fn n_categories(&self) -> usize {
        self.counts.len()
    }

    /// `D^{-1} G' v`: per-category means of `v`.
    pub fn category_means(&self, v: &[f64]) -> Vec<f64> {
        let mut sums = vec![0.0; self.n_categories()];
        for (&c, &x) in self.codes.iter().zip(v) {
            sums[c] += x;
        }
        sums.iter()
            .zip(&self.counts)
            .map(|(s, &n)| s / n as f64)
            .collect()
    }

    /// `G y`: expand category values to samples.
    pub fn expand(&self, y: &[f64]) -> Vec<f64> {
        self.codes.iter().map(|&c| y[c]).collect()
    }
}

/// Center `x` and scale it to unit Euclidean length.
pub fn standardize(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::DegenerateVariable("<empty>".into()));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let norm = centered.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if norm == 0.0 || norm <= 1e-13 * scale * n.sqrt() {
        return Err(Error::DegenerateVariable("<constant column>".into()));
    }
    Ok(centered.into_iter().map(|v| v / norm).collect())
}

/// Ranks `1..=I` with ties replaced by the average of the tied positions.
pub fn rank_encode(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && x[order[end]] == x[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end share their mean
        let mid = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = mid;
        }
        start = end;
    }
    ranks
}

/// Midranks of ordinal labels under a declared ascending order.
pub fn rank_encode_labels<S: AsRef<str>>(values: &[S], order: &[String]) -> Result<Vec<f64>> {
    let codes = encode_labels("<ordinal>", values, order)?;
    Ok(rank_encode(
        &codes.iter().map(|&c| c as f64).collect::<Vec<_>>(),
    ))
}
