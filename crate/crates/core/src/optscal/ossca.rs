use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::pava::pava;
use super::Quantification;
use crate::data::{standardize, IndicatorMatrix, MultiBlockDataset, ScaleKind, Variable};
use crate::error::{Error, Result};
use crate::linalg::sorted_svd;
use crate::metrics::{BlockColumn, Convergence, FitReport, Method};

#[derive(Clone, Debug, PartialEq)]
pub struct OsScaOptions {
    pub max_iter: usize,
    pub tol: f64,
    /// Total starts; start 0 is deterministic, the rest perturb the initial quantifications.
    pub n_starts: usize,
    pub seed: u64,
}

impl Default for OsScaOptions {
    fn default() -> Self {
        OsScaOptions {
            max_iter: 1000,
            tol: 1e-8,
            n_starts: 3,
            seed: 0,
        }
    }
}

/// A variable prepared for optimal scaling.
#[derive(Clone, Debug)]
pub enum ScaledVariable {
    /// Ratio/interval: the autoscaled raw column, never updated.
    Fixed { name: String, column: Vec<f64> },
    /// Free quantification (nominal and binary).
    Nominal { name: String, ind: IndicatorMatrix },
    /// Non-decreasing quantification along the declared order.
    Ordinal { name: String, ind: IndicatorMatrix },
}

impl ScaledVariable {
    pub fn prepare(v: &Variable) -> Result<Self> {
        let name = v.name.clone();
        Ok(match v.scale {
            ScaleKind::Ratio | ScaleKind::Interval => {
                let s = standardize(&v.numeric_view()).map_err(|_| Error::DegenerateVariable(name.clone()))?;
                let root = (s.len() as f64).sqrt();
                ScaledVariable::Fixed {
                    name,
                    column: s.into_iter().map(|x| x * root).collect(),
                }
            }
            ScaleKind::Nominal | ScaleKind::Binary => ScaledVariable::Nominal { name, ind: v.indicator()? },
            ScaleKind::Ordinal => ScaledVariable::Ordinal { name, ind: v.indicator()? },
        })
    }

    pub fn name(&self) -> &str {
        match self {
            ScaledVariable::Fixed { name, .. }
            | ScaledVariable::Nominal { name, .. }
            | ScaledVariable::Ordinal { name, .. } => name,
        }
    }

    fn indicator(&self) -> Option<&IndicatorMatrix> {
        match self {
            ScaledVariable::Fixed { .. } => None,
            ScaledVariable::Nominal { ind, .. } | ScaledVariable::Ordinal { ind, .. } => Some(ind),
        }
    }

    fn quantify(&self, y: Vec<f64>) -> Option<Quantification> {
        let ind = self.indicator()?;
        let n = ind.n_samples() as f64;
        let mean = ind.counts().iter().zip(&y).map(|(&c, v)| c as f64 * v).sum::<f64>() / n;
        let y: Vec<f64> = y.into_iter().map(|v| v - mean).collect();
        let col = ind.expand(&y);
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= 1e-12 * (col.len() as f64).sqrt() {
            return None;
        }
        let scale = (col.len() as f64).sqrt() / norm;
        let y: Vec<f64> = y.into_iter().map(|v| v * scale).collect();
        Some(Quantification {
            variable: self.name().to_string(),
            labels: ind.labels().to_vec(),
            scaled_column: ind.expand(&y),
            y,
        })
    }

    /// Starting quantification: category index (centered) or a random draw.
    fn initial(&self, rng: Option<&mut ChaCha8Rng>) -> Option<Quantification> {
        let ind = self.indicator()?;
        let l = ind.n_categories();
        let mut y: Vec<f64> = match rng {
            None => (0..l).map(|c| c as f64).collect(),
            Some(rng) => (0..l).map(|_| StandardNormal.sample(rng)).collect(),
        };
        if matches!(self, ScaledVariable::Ordinal { .. }) {
            y.sort_by(|a, b| a.partial_cmp(b).unwrap());
        }
        self.quantify(y)
            .or_else(|| self.quantify((0..l).map(|c| c as f64 - (l as f64 - 1.0) / 2.0).collect()))
    }
}

/// Best rank-one quantification of `variable` given scores `z` and its loading row `a_j`.
///
/// Returns `previous` unchanged when the target has no admissible direction
/// (zero projection), which leaves the loss untouched.
pub fn optimal_scale_update(
    variable: &ScaledVariable,
    z: &DMatrix<f64>,
    a_j: &DVector<f64>,
    previous: Option<&Quantification>,
) -> Result<Option<Quantification>> {
    let target = z * a_j;
    let proposal = match variable {
        ScaledVariable::Fixed { .. } => return Ok(None),
        ScaledVariable::Nominal { ind, .. } => variable.quantify(ind.category_means(target.as_slice())),
        ScaledVariable::Ordinal { ind, .. } => {
            let means = ind.category_means(target.as_slice());
            let weights: Vec<f64> = ind.counts().iter().map(|&c| c as f64).collect();
            variable.quantify(pava(&means, &weights))
        }
    };
    match (proposal, previous) {
        (Some(q), _) => Ok(Some(q)),
        (None, Some(prev)) => Ok(Some(prev.clone())),
        (None, None) => variable
            .initial(None)
            .map(Some)
            .ok_or_else(|| Error::DegenerateVariable(variable.name().to_string())),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OsScaModel {
    /// `I x R`, centered, `(1/I) Z'Z = I`.
    pub z: DMatrix<f64>,
    /// Per-block `J_k x R` loadings.
    pub loadings: Vec<DMatrix<f64>>,
    /// Per-variable quantification, `None` for quantitative variables.
    pub quantifications: Vec<Option<Quantification>>,
    /// Optimally scaled concatenated data.
    pub x_star: DMatrix<f64>,
    pub block_names: Vec<String>,
    pub variable_names: Vec<String>,
    pub loss_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub start: usize,
    pub starts_used: usize,
}

impl OsScaModel {
    pub fn final_loss(&self) -> f64 {
        *self.loss_trace.last().expect("trace is never empty")
    }

    /// All loadings stacked block by block.
    pub fn loadings_all(&self) -> DMatrix<f64> {
        let rows: usize = self.loadings.iter().map(|a| a.nrows()).sum();
        let r = self.z.ncols();
        let mut out = DMatrix::zeros(rows, r);
        let mut off = 0;
        for a in &self.loadings {
            out.view_mut((off, 0), (a.nrows(), r)).copy_from(a);
            off += a.nrows();
        }
        out
    }

    /// Columns of `x_star` belonging to each block.
    pub fn block_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut off = 0;
        self.loadings
            .iter()
            .map(|a| {
                let r = off..off + a.nrows();
                off += a.nrows();
                r
            })
            .collect()
    }
}

/// `||X* - Z A'||²`.
fn sca_loss(x: &DMatrix<f64>, z: &DMatrix<f64>, a: &DMatrix<f64>) -> f64 {
    (x - z * a.transpose()).norm_squared()
}

/// Exact minimizer of `||X* - Z A'||²` under `(1/I) Z'Z = I`.
fn pca_step(x: &DMatrix<f64>, rank: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = x.nrows() as f64;
    let (u, s, _) = sorted_svd(x);
    if s.len() < rank || s[rank - 1] <= 1e-10 * s[0].max(1.0) {
        return Err(Error::RankTooLarge {
            rank,
            limit: s.iter().filter(|&&v| v > 1e-10 * s[0].max(1.0)).count() + 1,
        });
    }
    let z = u.columns(0, rank) * n.sqrt();
    let a = x.transpose() * &z / n;
    Ok((z, a))
}

struct Run {
    z: DMatrix<f64>,
    a: DMatrix<f64>,
    x: DMatrix<f64>,
    quants: Vec<Option<Quantification>>,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
}

fn run_start(vars: &[ScaledVariable], init: Vec<Option<Quantification>>, rank: usize, opts: &OsScaOptions) -> Result<Run> {
    let n = match &vars[0] {
        ScaledVariable::Fixed { column, .. } => column.len(),
        v => v.indicator().expect("categorical").n_samples(),
    };
    let mut quants = init;
    let mut x = DMatrix::zeros(n, vars.len());
    let fill = |x: &mut DMatrix<f64>, quants: &[Option<Quantification>]| {
        for (j, (v, q)) in vars.iter().zip(quants).enumerate() {
            match (v, q) {
                (ScaledVariable::Fixed { column, .. }, _) => x.set_column(j, &DVector::from_column_slice(column)),
                (_, Some(q)) => x.set_column(j, &DVector::from_column_slice(&q.scaled_column)),
                (_, None) => unreachable!("categorical variables always carry a quantification"),
            }
        }
    };
    fill(&mut x, &quants);

    let (mut z, mut a) = pca_step(&x, rank)?;
    let mut loss = sca_loss(&x, &z, &a);
    let mut trace = vec![loss];
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..opts.max_iter {
        iterations += 1;
        // scaling step given Z, A; per-variable updates are independent
        let new_quants: Vec<Option<Quantification>> = vars
            .par_iter()
            .enumerate()
            .map(|(j, v)| {
                let a_j = a.row(j).transpose();
                optimal_scale_update(v, &z, &a_j, quants[j].as_ref())
            })
            .collect::<Result<_>>()?;
        let mut x_new = x.clone();
        fill(&mut x_new, &new_quants);
        // model step given X*
        let (z_new, a_new) = pca_step(&x_new, rank)?;
        let new_loss = sca_loss(&x_new, &z_new, &a_new);
        if new_loss > loss {
            converged = true;
            break;
        }
        let rel = (loss - new_loss) / loss.max(f64::MIN_POSITIVE);
        quants = new_quants;
        x = x_new;
        z = z_new;
        a = a_new;
        loss = new_loss;
        trace.push(loss);
        if rel < opts.tol || loss == 0.0 {
            converged = true;
            break;
        }
    }
    Ok(Run {
        z,
        a,
        x,
        quants,
        trace,
        iterations,
        converged,
    })
}

/// Simultaneous component analysis of the optimally scaled concatenated blocks.
pub fn fit_os_sca(dataset: &MultiBlockDataset, rank: usize, opts: &OsScaOptions) -> Result<(OsScaModel, FitReport)> {
    let vars: Vec<ScaledVariable> = dataset
        .variables()
        .map(|(_, v)| ScaledVariable::prepare(v))
        .collect::<Result<_>>()?;
    let n = dataset.n_samples();
    let limit = (n - 1).min(vars.len());
    if rank == 0 || rank > limit {
        return Err(Error::RankTooLarge { rank, limit: limit + 1 });
    }

    let has_free = vars.iter().any(|v| !matches!(v, ScaledVariable::Fixed { .. }));
    let n_starts = if has_free { opts.n_starts.max(1) } else { 1 };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut inits: Vec<Vec<Option<Quantification>>> = Vec::with_capacity(n_starts);
    for s in 0..n_starts {
        let init = vars
            .iter()
            .map(|v| match v {
                ScaledVariable::Fixed { .. } => Ok(None),
                _ => {
                    let q = if s == 0 { v.initial(None) } else { v.initial(Some(&mut rng)) };
                    q.map(Some).ok_or_else(|| Error::DegenerateVariable(v.name().to_string()))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        inits.push(init);
    }

    let runs: Vec<Run> = inits
        .into_par_iter()
        .map(|init| run_start(&vars, init, rank, opts))
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (s, r) in runs.iter().enumerate() {
        if r.trace.last() < runs[best].trace.last() {
            best = s;
        }
    }
    let run = runs.into_iter().nth(best).expect("one start");

    let mut loadings = Vec::with_capacity(dataset.n_blocks());
    let mut off = 0;
    for b in &dataset.blocks {
        loadings.push(run.a.rows(off, b.n_variables()).into_owned());
        off += b.n_variables();
    }
    let model = OsScaModel {
        z: run.z,
        loadings,
        quantifications: run.quants,
        x_star: run.x,
        block_names: dataset.block_names(),
        variable_names: vars.iter().map(|v| v.name().to_string()).collect(),
        loss_trace: run.trace,
        iterations: run.iterations,
        converged: run.converged,
        start: best,
        starts_used: n_starts,
    };
    let report = os_sca_report(&model);
    Ok((model, report))
}

fn os_sca_report(model: &OsScaModel) -> FitReport {
    let r = model.z.ncols();
    let ranges = model.block_ranges();
    let zz: Vec<f64> = model.z.column_iter().map(|c| c.norm_squared()).collect();
    let a = model.loadings_all();
    let pct = |cols: std::ops::Range<usize>, c: usize| {
        let total: f64 = cols.clone().map(|j| model.x_star.column(j).norm_squared()).sum();
        let fit: f64 = cols.map(|j| a[(j, c)].powi(2)).sum::<f64>() * zz[c];
        100.0 * fit / total
    };
    let per = DMatrix::from_fn(r, ranges.len(), |c, b| pct(ranges[b].clone(), c));
    let totals = (0..r).map(|c| pct(0..a.nrows(), c)).collect();
    FitReport::new(
        Method::OsSca,
        model.block_names.iter().map(BlockColumn::ss).collect(),
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

/// Rank-one homogeneity objective `sum_j ||Z - G_j y_j a_j'||²`.
pub fn rank_one_homogeneity_loss(
    z: &DMatrix<f64>,
    inds: &[IndicatorMatrix],
    ys: &[Vec<f64>],
    a: &DMatrix<f64>,
) -> f64 {
    inds.iter()
        .enumerate()
        .map(|(j, g)| {
            let col = DVector::from_vec(g.expand(&ys[j]));
            (z - col * a.row(j)).norm_squared()
        })
        .sum()
}

/// Scaled-data objective `sum_j ||G_j y_j - Z a_j||²`.
pub fn scaled_data_loss(z: &DMatrix<f64>, inds: &[IndicatorMatrix], ys: &[Vec<f64>], a: &DMatrix<f64>) -> f64 {
    inds.iter()
        .enumerate()
        .map(|(j, g)| {
            let col = DVector::from_vec(g.expand(&ys[j]));
            (col - z * a.row(j).transpose()).norm_squared()
        })
        .sum()
}
