//! Per-variable representation matrices and the association coefficients
//! they induce through trace inner products.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::{rank_encode, standardize, IndicatorMatrix, MultiBlockDataset, ScaleKind, Variable};
use crate::error::{Error, Result};

/// Tolerance on `trace(S'S) = 1` for standardized representations.
pub const STANDARDIZED_TOL: f64 = 1e-8;

/// Default cap on `I` for dense `I x I` representations.
pub const DEFAULT_MAX_SAMPLES: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RepresentationForm {
    /// `x1' - 1x'`, skew-symmetric.
    SkewDifference,
    /// `s s'` with `s` standardized.
    OuterProduct,
    /// `J G D^-1 G' J`, double centered.
    CenteredIndicator,
}

impl RepresentationForm {
    pub fn as_str(self) -> &'static str {
        match self {
            RepresentationForm::SkewDifference => "skew",
            RepresentationForm::OuterProduct => "outer",
            RepresentationForm::CenteredIndicator => "centered-indicator",
        }
    }
}

/// Which variable of a dataset a slab came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VariableId {
    pub block: usize,
    pub column: usize,
    pub name: String,
}

/// A trace-standardized `I x I` representation of one variable.
#[derive(Clone, Debug, PartialEq)]
pub struct RepresentationMatrix {
    pub s: DMatrix<f64>,
    pub form: RepresentationForm,
    pub origin: Option<VariableId>,
}

impl RepresentationMatrix {
    fn standardized(raw: DMatrix<f64>, form: RepresentationForm) -> Result<Self> {
        let ss = trace_inner(&raw, &raw);
        if ss <= 0.0 {
            return Err(Error::DegenerateVariable("<zero representation>".into()));
        }
        Ok(RepresentationMatrix {
            s: raw / ss.sqrt(),
            form,
            origin: None,
        })
    }

    pub fn with_origin(mut self, origin: VariableId) -> Self {
        self.origin = Some(origin);
        self
    }

    pub fn dim(&self) -> usize {
        self.s.nrows()
    }

    /// `trace(S'S)`.
    pub fn sum_of_squares(&self) -> f64 {
        trace_inner(&self.s, &self.s)
    }
}

/// `trace(A'B)` without forming the product.
pub fn trace_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// General association `2 tr(Sj'Sk) / (tr(Sj'Sj) + tr(Sk'Sk))` for raw representations.
pub fn assoc_general(sj: &DMatrix<f64>, sk: &DMatrix<f64>) -> Result<f64> {
    if sj.shape() != sk.shape() {
        return Err(Error::Dimension(format!(
            "representations of shape {:?} and {:?}",
            sj.shape(),
            sk.shape()
        )));
    }
    let denom = trace_inner(sj, sj) + trace_inner(sk, sk);
    if denom == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok(2.0 * trace_inner(sj, sk) / denom)
}

/// Association of two standardized representations, `tr(Sj'Sk)`.
pub fn assoc_standardized(sj: &RepresentationMatrix, sk: &RepresentationMatrix) -> Result<f64> {
    for s in [sj, sk] {
        let ss = s.sum_of_squares();
        if (ss - 1.0).abs() > STANDARDIZED_TOL {
            return Err(Error::NotStandardized(ss));
        }
    }
    if sj.s.shape() != sk.s.shape() {
        return Err(Error::Dimension("representations differ in size".into()));
    }
    Ok(trace_inner(&sj.s, &sk.s))
}

/// Unstandardized difference matrix `x1' - 1x'`.
pub fn skew_raw(x: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    DMatrix::from_fn(n, n, |i, j| x[i] - x[j])
}

pub fn repr_skew(x: &[f64]) -> Result<RepresentationMatrix> {
    standardize(x)?;
    RepresentationMatrix::standardized(skew_raw(x), RepresentationForm::SkewDifference)
}

pub fn repr_outer(x: &[f64]) -> Result<RepresentationMatrix> {
    let s = DVector::from_vec(standardize(x)?);
    Ok(RepresentationMatrix {
        s: &s * s.transpose(),
        form: RepresentationForm::OuterProduct,
        origin: None,
    })
}

/// `J G D^-1 G' J` before trace standardization.
pub fn centered_indicator_raw(ind: &IndicatorMatrix) -> DMatrix<f64> {
    let n = ind.n_samples();
    let counts = ind.counts();
    let codes = ind.codes();
    // G D^-1 G' has 1/n_c where samples share category c, 0 elsewhere
    let mut p = DMatrix::from_fn(n, n, |i, j| {
        if codes[i] == codes[j] {
            1.0 / counts[codes[i]] as f64
        } else {
            0.0
        }
    });
    double_center(&mut p);
    p
}

fn double_center(m: &mut DMatrix<f64>) {
    let n = m.nrows() as f64;
    let row_means: Vec<f64> = m.row_iter().map(|r| r.sum() / n).collect();
    let col_means: Vec<f64> = m.column_iter().map(|c| c.sum() / n).collect();
    let grand = row_means.iter().sum::<f64>() / n;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            m[(i, j)] += grand - row_means[i] - col_means[j];
        }
    }
}

pub fn repr_nominal(ind: &IndicatorMatrix) -> Result<RepresentationMatrix> {
    if ind.n_categories() < 2 {
        return Err(Error::DegenerateVariable("<single category>".into()));
    }
    RepresentationMatrix::standardized(centered_indicator_raw(ind), RepresentationForm::CenteredIndicator)
}

/// `z z'` with `z` the standardized 0/1 column; identical to the centered
/// indicator representation of the two-category variable.
pub fn repr_binary(x: &[f64]) -> Result<RepresentationMatrix> {
    if x.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Invalid("binary representation needs 0/1 values".into()));
    }
    let mut r = repr_outer(x)?;
    r.form = RepresentationForm::CenteredIndicator;
    Ok(r)
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!("{} vs {} samples", x.len(), y.len())));
    }
    let sx = standardize(x)?;
    let sy = standardize(y)?;
    Ok(sx.iter().zip(&sy).map(|(a, b)| a * b).sum())
}

/// Pearson correlation of midranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    pearson(&rank_encode(x), &rank_encode(y))
}

/// Tschuprow's T² from the standardized centered-indicator representations.
pub fn tschuprow_t2(x: &IndicatorMatrix, y: &IndicatorMatrix) -> Result<f64> {
    assoc_standardized(&repr_nominal(x)?, &repr_nominal(y)?)
}

/// `chi² / n`, the trace product of the unscaled centered-indicator matrices.
pub fn mean_square_contingency(x: &IndicatorMatrix, y: &IndicatorMatrix) -> Result<f64> {
    if x.n_samples() != y.n_samples() {
        return Err(Error::Dimension("indicator matrices differ in samples".into()));
    }
    Ok(trace_inner(&centered_indicator_raw(x), &centered_indicator_raw(y)))
}

/// 2x2 contingency counts of two binary variables; `n[a][b]` counts `x = a, y = b`.
pub fn contingency_2x2(x: &[f64], y: &[f64]) -> Result<[[u64; 2]; 2]> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!("{} vs {} samples", x.len(), y.len())));
    }
    let mut n = [[0u64; 2]; 2];
    for (&a, &b) in x.iter().zip(y) {
        let (a, b) = match (a, b) {
            (a, b) if (a == 0.0 || a == 1.0) && (b == 0.0 || b == 1.0) => (a as usize, b as usize),
            _ => return Err(Error::Invalid("phi needs 0/1 values".into())),
        };
        n[a][b] += 1;
    }
    Ok(n)
}

/// φ from 2x2 counts: `(n11 n00 - n10 n01) / sqrt(n1. n0. n.1 n.0)`.
pub fn phi_from_counts(n11: u64, n10: u64, n01: u64, n00: u64) -> Result<f64> {
    let (r1, r0) = (n11 + n10, n01 + n00);
    let (c1, c0) = (n11 + n01, n10 + n00);
    if r1 == 0 || r0 == 0 || c1 == 0 || c0 == 0 {
        return Err(Error::ZeroDenominator);
    }
    let num = n11 as f64 * n00 as f64 - n10 as f64 * n01 as f64;
    Ok(num / (r1 as f64 * r0 as f64 * c1 as f64 * c0 as f64).sqrt())
}

pub fn phi(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = contingency_2x2(x, y)?;
    phi_from_counts(n[1][1], n[1][0], n[0][1], n[0][0])
}

/// How ordinal variables enter the stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum OrdinalForm {
    /// Outer product of standardized midranks.
    #[default]
    MidrankOuter,
    /// Ignore the order and use the centered indicator.
    Nominal,
}

/// Per-scale choice of representation for fusion. All forms are symmetric PSD.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RepresentationPolicy {
    pub ordinal: OrdinalForm,
    pub max_samples: usize,
}

impl Default for RepresentationPolicy {
    fn default() -> Self {
        RepresentationPolicy {
            ordinal: OrdinalForm::default(),
            max_samples: DEFAULT_MAX_SAMPLES,
        }
    }
}

fn represent_variable(v: &Variable, policy: &RepresentationPolicy) -> Result<RepresentationMatrix> {
    let named = |e: Error| match e {
        Error::DegenerateVariable(_) => Error::DegenerateVariable(v.name.clone()),
        other => other,
    };
    match v.scale {
        ScaleKind::Ratio | ScaleKind::Interval => repr_outer(&v.numeric_view()).map_err(named),
        ScaleKind::Ordinal => match policy.ordinal {
            OrdinalForm::MidrankOuter => repr_outer(&v.midranks()).map_err(named),
            OrdinalForm::Nominal => repr_nominal(&v.indicator()?).map_err(named),
        },
        ScaleKind::Nominal => repr_nominal(&v.indicator()?).map_err(named),
        ScaleKind::Binary => {
            v.indicator()?;
            repr_binary(&v.numeric_view()).map_err(named)
        }
    }
}

/// One standardized slab per variable, block by block.
pub fn build_representation_stack(
    dataset: &MultiBlockDataset,
    policy: &RepresentationPolicy,
) -> Result<Vec<RepresentationMatrix>> {
    let n = dataset.n_samples();
    if n > policy.max_samples {
        return Err(Error::TooManySamples {
            samples: n,
            cap: policy.max_samples,
        });
    }
    let vars: Vec<(usize, usize, &Variable)> = dataset
        .blocks
        .iter()
        .enumerate()
        .flat_map(|(k, b)| b.variables.iter().enumerate().map(move |(j, v)| (k, j, v)))
        .collect();
    // indexed collect keeps the output order independent of scheduling
    vars.par_iter()
        .map(|&(block, column, v)| {
            represent_variable(v, policy).map(|r| {
                r.with_origin(VariableId {
                    block,
                    column,
                    name: v.name.clone(),
                })
            })
        })
        .collect()
}

/// `tr(Sj'Sk)` for every pair of slabs.
pub fn association_table(stack: &[RepresentationMatrix]) -> Result<DMatrix<f64>> {
    let n = stack.len();
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        for k in j..n {
            let q = assoc_standardized(&stack[j], &stack[k])?;
            out[(j, k)] = q;
            out[(k, j)] = q;
        }
    }
    Ok(out)
}
