//! Explained-variance accounting and cross-method diagnostics.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::indscal::IndscalModel;
use crate::representation::RepresentationMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Idiomix,
    OsSca,
    Gsca,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Idiomix => "idiomix",
            Method::OsSca => "os-sca",
            Method::Gsca => "gsca",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "idiomix" => Ok(Method::Idiomix),
            "os-sca" | "ossca" => Ok(Method::OsSca),
            "gsca" => Ok(Method::Gsca),
            other => Err(Error::Invalid(format!("unknown method `{other}`"))),
        }
    }
}

/// How a block's percentages were computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockMetric {
    SumOfSquares,
    /// Likelihood-based pseudo-R², used for binary blocks under GSCA.
    PseudoR2,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockColumn {
    pub name: String,
    pub metric: BlockMetric,
}

impl BlockColumn {
    pub fn ss(name: impl Into<String>) -> Self {
        BlockColumn {
            name: name.into(),
            metric: BlockMetric::SumOfSquares,
        }
    }

    /// Header label; pseudo-R² columns are marked as such.
    pub fn label(&self) -> String {
        match self.metric {
            BlockMetric::SumOfSquares => self.name.clone(),
            BlockMetric::PseudoR2 => format!("{} (pseudo)", self.name),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Convergence {
    pub final_loss: f64,
    pub iterations: usize,
    pub restarts: usize,
    pub converged: bool,
}

/// Explained-variance table: one row per component, one column per block plus a total.
#[derive(Clone, Debug, PartialEq)]
pub struct FitReport {
    pub method: Method,
    pub blocks: Vec<BlockColumn>,
    /// `R x K` percentages.
    pub per_component: DMatrix<f64>,
    pub per_component_total: Vec<f64>,
    pub convergence: Convergence,
}

impl FitReport {
    pub fn new(
        method: Method,
        blocks: Vec<BlockColumn>,
        per_component: DMatrix<f64>,
        per_component_total: Vec<f64>,
        convergence: Convergence,
    ) -> Self {
        FitReport {
            method,
            blocks,
            per_component,
            per_component_total,
            convergence,
        }
    }

    pub fn n_components(&self) -> usize {
        self.per_component.nrows()
    }

    /// Column sums of the per-component table ("Cum" row).
    pub fn cumulative(&self) -> Vec<f64> {
        self.per_component.column_iter().map(|c| c.sum()).collect()
    }

    pub fn cumulative_total(&self) -> f64 {
        self.per_component_total.iter().sum()
    }
}

/// `100 ||z_r a_r'||² / ||X||²` for a score/loading pair of one component.
pub fn explained_variance_ss(
    data: &DMatrix<f64>,
    scores: &DMatrix<f64>,
    loadings: &DMatrix<f64>,
    component: usize,
) -> Result<f64> {
    if scores.nrows() != data.nrows() || loadings.nrows() != data.ncols() {
        return Err(Error::Dimension(format!(
            "data {}x{}, scores {}x{}, loadings {}x{}",
            data.nrows(),
            data.ncols(),
            scores.nrows(),
            scores.ncols(),
            loadings.nrows(),
            loadings.ncols()
        )));
    }
    if component >= scores.ncols() || component >= loadings.ncols() {
        return Err(Error::Invalid(format!("component {component} is not fitted")));
    }
    let total = data.norm_squared();
    if total == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    let fit = scores.column(component).norm_squared() * loadings.column(component).norm_squared();
    Ok(100.0 * fit / total)
}

/// Percentage of `sum_{j in members} ||S_j||²` captured by component `r` of an INDORT fit.
pub fn explained_variance_slabs(
    slabs: &[&DMatrix<f64>],
    z: &DMatrix<f64>,
    a: &DMatrix<f64>,
    component: usize,
    members: &[usize],
) -> Result<f64> {
    if component >= z.ncols() {
        return Err(Error::Invalid(format!("component {component} is not fitted")));
    }
    let total: f64 = members.iter().map(|&j| slabs[j].norm_squared()).sum();
    if total == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    let zz = z.column(component).norm_squared();
    let fit: f64 = members.iter().map(|&j| (a[(j, component)] * zz).powi(2)).sum();
    Ok(100.0 * fit / total)
}

pub(crate) fn idiomix_report(
    stack: &[RepresentationMatrix],
    model: &IndscalModel,
    block_names: &[String],
) -> FitReport {
    let slabs: Vec<&DMatrix<f64>> = stack.iter().map(|s| &s.s).collect();
    let r = model.rank();
    let k = block_names.len();
    let members: Vec<Vec<usize>> = (0..k)
        .map(|b| (0..slabs.len()).filter(|&j| model.block_index[j] == b).collect())
        .collect();
    let all: Vec<usize> = (0..slabs.len()).collect();
    let per = DMatrix::from_fn(r, k, |c, b| {
        explained_variance_slabs(&slabs, &model.z, &model.a, c, &members[b]).unwrap_or(0.0)
    });
    let totals = (0..r)
        .map(|c| explained_variance_slabs(&slabs, &model.z, &model.a, c, &all).unwrap_or(0.0))
        .collect();
    FitReport::new(
        Method::Idiomix,
        block_names.iter().map(BlockColumn::ss).collect(),
        per,
        totals,
        Convergence {
            final_loss: model.final_loss(),
            iterations: model.iterations,
            restarts: model.starts_used,
            converged: model.converged,
        },
    )
}

/// Per-sample score against binary-row frequency, per component.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreFrequency {
    /// Row mean of the binary block.
    pub frequency: Vec<f64>,
    pub scores: DMatrix<f64>,
    /// Pearson correlation per component; `None` when a side has no variance.
    pub correlation: Vec<Option<f64>>,
}

pub fn score_frequency_diagnostic(scores: &DMatrix<f64>, binary: &DMatrix<f64>) -> Result<ScoreFrequency> {
    if scores.nrows() != binary.nrows() {
        return Err(Error::Dimension(format!(
            "{} score rows vs {} binary rows",
            scores.nrows(),
            binary.nrows()
        )));
    }
    if binary.ncols() == 0 {
        return Err(Error::Invalid("binary block has no columns".into()));
    }
    let j = binary.ncols() as f64;
    let frequency: Vec<f64> = binary.row_iter().map(|r| r.sum() / j).collect();
    let correlation = scores
        .column_iter()
        .map(|c| {
            let c: Vec<f64> = c.iter().copied().collect();
            crate::representation::pearson(&c, &frequency).ok()
        })
        .collect();
    Ok(ScoreFrequency {
        frequency,
        scores: scores.clone(),
        correlation,
    })
}

/// Tucker congruence `|<a,b>| / (|a||b|)`; the absolute value aligns signs.
pub fn congruence(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("{} vs {}", a.len(), b.len())));
    }
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).abs())
}

#[derive(Clone, Debug, PartialEq)]
pub struct CongruenceRow {
    pub model: String,
    pub component: usize,
    pub congruence: f64,
}

/// Congruence of each model's component `r` with component `r` of the reference scores.
pub fn cross_method_comparison(
    models: &[(String, DMatrix<f64>)],
    reference: &DMatrix<f64>,
) -> Result<Vec<CongruenceRow>> {
    let mut rows = Vec::new();
    for (name, z) in models {
        if z.nrows() != reference.nrows() || z.ncols() != reference.ncols() {
            return Err(Error::Dimension(format!(
                "model `{name}` has scores {}x{}, reference {}x{}",
                z.nrows(),
                z.ncols(),
                reference.nrows(),
                reference.ncols()
            )));
        }
        for r in 0..z.ncols() {
            rows.push(CongruenceRow {
                model: name.clone(),
                component: r,
                congruence: congruence(z.column(r).as_slice(), reference.column(r).as_slice())?,
            });
        }
    }
    Ok(rows)
}
