use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::data::{MultiBlockDataset, ScaleKind};
use crate::error::{Error, Result};
use crate::linalg::{center_columns, column_means, orthonormalize, sorted_svd};
use crate::metrics::{BlockColumn, BlockMetric, Convergence, FitReport, Method};

/// Loading norm beyond which the binary block is treated as separated.
pub const SEPARATION_THRESHOLD: f64 = 1e8;

/// `1 / (1 + exp(-theta))` without overflow.
pub fn logit_link(theta: f64) -> f64 {
    if theta >= 0.0 {
        1.0 / (1.0 + (-theta).exp())
    } else {
        let e = theta.exp();
        e / (1.0 + e)
    }
}

fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// Bernoulli negative log-likelihood under the logit link.
pub fn bernoulli_nll(x1: &DMatrix<f64>, theta1: &DMatrix<f64>) -> f64 {
    // -[x log p + (1-x) log(1-p)] = softplus(theta) - x theta
    x1.iter().zip(theta1.iter()).map(|(&x, &t)| softplus(t) - x * t).sum()
}

/// `||X2 - Theta2||² / (2 sigma2) + log(2 pi sigma2) / 2`, with a single log term.
pub fn gaussian_nll(x2: &DMatrix<f64>, theta2: &DMatrix<f64>, sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::Invalid(format!("sigma2 must be positive, got {sigma2}")));
    }
    let rss = (x2 - theta2).norm_squared();
    Ok(rss / (2.0 * sigma2) + 0.5 * (2.0 * std::f64::consts::PI * sigma2).ln())
}

/// Gaussian negative log-likelihood with one log term per entry.
pub fn gaussian_nll_full(x2: &DMatrix<f64>, theta2: &DMatrix<f64>, sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::Invalid(format!("sigma2 must be positive, got {sigma2}")));
    }
    let rss = (x2 - theta2).norm_squared();
    let n = x2.len() as f64;
    Ok(rss / (2.0 * sigma2) + 0.5 * n * (2.0 * std::f64::consts::PI * sigma2).ln())
}

#[derive(Clone, Debug, PartialEq)]
pub struct GscaOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub n_starts: usize,
    pub seed: u64,
}

impl Default for GscaOptions {
    fn default() -> Self {
        GscaOptions {
            max_iter: 5000,
            tol: 1e-9,
            n_starts: 3,
            seed: 0,
        }
    }
}

/// Factor parameters of the joint model.
#[derive(Clone, Debug, PartialEq)]
pub struct GscaParams {
    pub mu1: DVector<f64>,
    pub mu2: DVector<f64>,
    pub a1: DMatrix<f64>,
    pub a2: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub sigma2: f64,
}

impl GscaParams {
    pub fn theta1(&self) -> DMatrix<f64> {
        natural(&self.z, &self.mu1, &self.a1)
    }

    pub fn theta2(&self) -> DMatrix<f64> {
        natural(&self.z, &self.mu2, &self.a2)
    }
}

fn natural(z: &DMatrix<f64>, mu: &DVector<f64>, a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut t = z * a.transpose();
    for (j, mut c) in t.column_iter_mut().enumerate() {
        c.add_scalar_mut(mu[j]);
    }
    t
}

/// Objective minimized by [`fit_gsca`]: Bernoulli part plus the per-entry Gaussian part.
pub fn gsca_objective(x1: &DMatrix<f64>, x2: &DMatrix<f64>, p: &GscaParams) -> f64 {
    let f1 = bernoulli_nll(x1, &p.theta1());
    let f2 = if x2.ncols() == 0 {
        0.0
    } else {
        gaussian_nll_full(x2, &p.theta2(), p.sigma2).unwrap_or(f64::INFINITY)
    };
    f1 + f2
}

#[derive(Clone, Debug, PartialEq)]
pub struct GscaGradient {
    pub mu1: DVector<f64>,
    pub mu2: DVector<f64>,
    pub a1: DMatrix<f64>,
    pub a2: DMatrix<f64>,
    /// Unconstrained gradient with respect to `Z`.
    pub z: DMatrix<f64>,
    /// `z` projected onto the tangent space of `{Z'Z = I*I_R, 1'Z = 0}`.
    pub z_tangent: DMatrix<f64>,
    pub sigma2: f64,
}

/// Analytic gradient of [`gsca_objective`].
pub fn gsca_gradient(x1: &DMatrix<f64>, x2: &DMatrix<f64>, p: &GscaParams) -> GscaGradient {
    let g1 = p.theta1().zip_map(x1, |t, x| logit_link(t) - x);
    let resid = p.theta2() - x2;
    let g2 = &resid / p.sigma2;
    let ones1 = DVector::from_element(x1.nrows(), 1.0);
    let ones2 = DVector::from_element(x2.nrows(), 1.0);
    let z = &g1 * &p.a1 + &g2 * &p.a2;
    GscaGradient {
        mu1: g1.transpose() * ones1,
        mu2: g2.transpose() * ones2,
        a1: g1.transpose() * &p.z,
        a2: g2.transpose() * &p.z,
        z_tangent: tangent_projection(&p.z, &z),
        z,
        sigma2: -resid.norm_squared() / (2.0 * p.sigma2 * p.sigma2) + x2.len() as f64 / (2.0 * p.sigma2),
    }
}

/// Projection onto the tangent space of the centered scaled Stiefel manifold at `z`.
pub fn tangent_projection(z: &DMatrix<f64>, xi: &DMatrix<f64>) -> DMatrix<f64> {
    let n = z.nrows() as f64;
    let mut c = xi.clone();
    center_columns(&mut c);
    let m = z.transpose() * &c;
    let sym = (&m + m.transpose()) * 0.5;
    c - z * sym / n
}

#[derive(Clone, Debug, PartialEq)]
pub struct GscaModel {
    /// `I x R`, `Z'Z = I * I_R`, `1'Z = 0`.
    pub z: DMatrix<f64>,
    pub a1: DMatrix<f64>,
    pub a2: DMatrix<f64>,
    pub mu1: DVector<f64>,
    pub mu2: DVector<f64>,
    pub sigma2: f64,
    pub theta1: DMatrix<f64>,
    pub theta2: DMatrix<f64>,
    /// Objective after every accepted iteration (per-entry log term).
    pub nll_trace: Vec<f64>,
    /// Final objective with the single log term.
    pub objective_single_log: f64,
    pub iterations: usize,
    pub converged: bool,
    pub start: usize,
    pub starts_used: usize,
}

impl GscaModel {
    pub fn rank(&self) -> usize {
        self.z.ncols()
    }

    pub fn final_nll(&self) -> f64 {
        *self.nll_trace.last().expect("trace is never empty")
    }

    pub fn params(&self) -> GscaParams {
        GscaParams {
            mu1: self.mu1.clone(),
            mu2: self.mu2.clone(),
            a1: self.a1.clone(),
            a2: self.a2.clone(),
            z: self.z.clone(),
            sigma2: self.sigma2,
        }
    }
}

fn validate(x1: &DMatrix<f64>, x2: &DMatrix<f64>, rank: usize) -> Result<()> {
    if x1.ncols() > 0 && x2.ncols() > 0 && x1.nrows() != x2.nrows() {
        return Err(Error::Dimension(format!("{} binary rows vs {} quantitative rows", x1.nrows(), x2.nrows())));
    }
    if x1.ncols() + x2.ncols() == 0 {
        return Err(Error::Invalid("both blocks are empty".into()));
    }
    if let Some(v) = x1.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(Error::Invalid(format!("binary block contains {v}")));
    }
    for (j, c) in x1.column_iter().enumerate() {
        let s = c.sum();
        if s == 0.0 || s == c.len() as f64 {
            return Err(Error::DegenerateVariable(format!("binary column {j}")));
        }
    }
    if x2.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("quantitative block has non-finite values".into()));
    }
    let n = x1.nrows().max(x2.nrows());
    let limit = (n - 1).min(x1.ncols() + x2.ncols());
    if rank > limit {
        return Err(Error::RankTooLarge { rank, limit: limit + 1 });
    }
    Ok(())
}

/// Center, orthonormalize and rescale so that `Z'Z = I * I_R`.
fn constrain_scores(z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = z.nrows() as f64;
    if z.ncols() == 0 {
        return Ok(z.clone());
    }
    let mut c = z.clone();
    center_columns(&mut c);
    Ok(orthonormalize(&c)? * n.sqrt())
}

fn initial_params(x1: &DMatrix<f64>, x2: &DMatrix<f64>, rank: usize, rng: Option<&mut ChaCha8Rng>) -> Result<GscaParams> {
    let n = x1.nrows().max(x2.nrows());
    let p = column_means(x1);
    let mu1 = p.map(|m| (m / (1.0 - m)).ln());
    let mu2 = column_means(x2);
    let mut x1c = x1.clone();
    center_columns(&mut x1c);
    let mut x2c = x2.clone();
    center_columns(&mut x2c);
    let sigma2 = if x2.ncols() == 0 {
        1.0
    } else {
        (x2c.norm_squared() / x2.len() as f64).max(f64::MIN_POSITIVE)
    };
    let mut both = DMatrix::zeros(n, x1.ncols() + x2.ncols());
    both.columns_mut(0, x2.ncols()).copy_from(&x2c);
    both.columns_mut(x2.ncols(), x1.ncols()).copy_from(&x1c);
    let (u, _, _) = sorted_svd(&both);
    let mut z = u.columns(0, rank) * (n as f64).sqrt();
    if let Some(rng) = rng {
        z += DMatrix::from_fn(n, rank, |_, _| StandardNormal.sample(rng));
    }
    let z = constrain_scores(&z)?;
    // binary loadings from the linearization of the link around 1/2
    let a1 = x1c.transpose() * &z * (4.0 / n as f64);
    let a2 = x2c.transpose() * &z / n as f64;
    Ok(GscaParams {
        mu1,
        mu2,
        a1,
        a2,
        z,
        sigma2,
    })
}

/// One majorization step at `p`: minimize the quadratic surrogate over the
/// factors, then update `sigma2` in closed form.
fn mm_step(x1: &DMatrix<f64>, x2: &DMatrix<f64>, p: &GscaParams) -> Result<GscaParams> {
    let n = x1.nrows().max(x2.nrows());
    let (j1, j2) = (x1.ncols(), x2.ncols());
    let r = p.z.ncols();
    let sigma = p.sigma2.sqrt();
    let theta1 = p.theta1();
    // working response of the curvature-1/4 bound, halved so both parts share unit weight
    let cols: Vec<DVector<f64>> = (0..j1 + j2)
        .into_par_iter()
        .map(|j| {
            if j < j1 {
                theta1
                    .column(j)
                    .zip_map(&x1.column(j), |t, x| 0.5 * (t - 4.0 * (logit_link(t) - x)))
            } else {
                x2.column(j - j1) / sigma
            }
        })
        .collect();
    let mut w = DMatrix::from_columns(&cols);
    let mu = column_means(&w);
    center_columns(&mut w);
    let z = if r == 0 {
        DMatrix::zeros(n, 0)
    } else {
        let (u, _, _) = sorted_svd(&w);
        constrain_scores(&(u.columns(0, r) * (n as f64).sqrt()))?
    };
    let a = w.transpose() * &z / n as f64;
    let a1 = a.rows(0, j1) * 2.0;
    let a2 = a.rows(j1, j2) * sigma;
    let mu1 = mu.rows(0, j1) * 2.0;
    let mu2 = mu.rows(j1, j2) * sigma;
    let norm = a1.norm();
    if norm > SEPARATION_THRESHOLD {
        return Err(Error::Separation(norm));
    }
    let mut next = GscaParams {
        mu1,
        mu2,
        a1,
        a2,
        z,
        sigma2: p.sigma2,
    };
    if j2 > 0 {
        let rss = (next.theta2() - x2).norm_squared();
        next.sigma2 = (rss / x2.len() as f64).max(f64::MIN_POSITIVE);
    }
    Ok(next)
}

struct Run {
    params: GscaParams,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
}

fn run_start(x1: &DMatrix<f64>, x2: &DMatrix<f64>, init: GscaParams, opts: &GscaOptions) -> Result<Run> {
    let mut p = init;
    let mut f = gsca_objective(x1, x2, &p);
    let mut trace = vec![f];
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..opts.max_iter {
        iterations += 1;
        let next = mm_step(x1, x2, &p)?;
        let f_next = gsca_objective(x1, x2, &next);
        if !(f_next < f) {
            // no further descent available from this state
            converged = true;
            break;
        }
        let rel = (f - f_next) / f.abs().max(1.0);
        p = next;
        f = f_next;
        trace.push(f);
        if rel < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(Run {
        params: p,
        trace,
        iterations,
        converged,
    })
}

/// Names for the two parts in the report.
#[derive(Clone, Debug, PartialEq)]
pub struct GscaBlockNames {
    pub binary: String,
    pub quantitative: String,
}

impl Default for GscaBlockNames {
    fn default() -> Self {
        GscaBlockNames {
            binary: "binary".into(),
            quantitative: "quantitative".into(),
        }
    }
}

/// Joint Bernoulli/Gaussian component model with shared scores.
///
/// `x2` may have zero columns (binary-only) and so may `x1`; `rank = 0` fits offsets only.
pub fn fit_gsca(x1: &DMatrix<f64>, x2: &DMatrix<f64>, rank: usize, opts: &GscaOptions) -> Result<(GscaModel, FitReport)> {
    fit_gsca_named(x1, x2, rank, opts, &GscaBlockNames::default())
}

pub fn fit_gsca_named(
    x1: &DMatrix<f64>,
    x2: &DMatrix<f64>,
    rank: usize,
    opts: &GscaOptions,
    names: &GscaBlockNames,
) -> Result<(GscaModel, FitReport)> {
    let n = x1.nrows().max(x2.nrows());
    let x1 = &reshape_empty(x1, n);
    let x2 = &reshape_empty(x2, n);
    validate(x1, x2, rank)?;
    let n_starts = if rank == 0 { 1 } else { opts.n_starts.max(1) };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut inits = Vec::with_capacity(n_starts);
    for s in 0..n_starts {
        inits.push(initial_params(x1, x2, rank, if s == 0 { None } else { Some(&mut rng) })?);
    }
    let runs: Vec<Run> = inits
        .into_par_iter()
        .map(|init| run_start(x1, x2, init, opts))
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (s, r) in runs.iter().enumerate() {
        if r.trace.last() < runs[best].trace.last() {
            best = s;
        }
    }
    let run = runs.into_iter().nth(best).expect("one start");
    let p = run.params;
    let theta1 = p.theta1();
    let theta2 = p.theta2();
    let single = bernoulli_nll(x1, &theta1)
        + if x2.ncols() == 0 {
            0.0
        } else {
            gaussian_nll(x2, &theta2, p.sigma2)?
        };
    let model = GscaModel {
        z: p.z,
        a1: p.a1,
        a2: p.a2,
        mu1: p.mu1,
        mu2: p.mu2,
        sigma2: p.sigma2,
        theta1,
        theta2,
        nll_trace: run.trace,
        objective_single_log: single,
        iterations: run.iterations,
        converged: run.converged,
        start: best,
        starts_used: n_starts,
    };
    let report = gsca_report(x1, x2, &model, names)?;
    Ok((model, report))
}

fn reshape_empty(x: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    if x.ncols() == 0 {
        DMatrix::zeros(n, 0)
    } else {
        x.clone()
    }
}

/// Split a dataset into its binary columns and its ratio/interval columns and fit.
pub fn fit_gsca_dataset(dataset: &MultiBlockDataset, rank: usize, opts: &GscaOptions) -> Result<(GscaModel, FitReport)> {
    let n = dataset.n_samples();
    let mut bin = Vec::new();
    let mut quant = Vec::new();
    let mut bin_blocks = Vec::new();
    let mut quant_blocks = Vec::new();
    for block in &dataset.blocks {
        for v in &block.variables {
            match v.scale {
                ScaleKind::Binary => {
                    bin.push(DVector::from_vec(v.numeric_view()));
                    if !bin_blocks.contains(&block.name) {
                        bin_blocks.push(block.name.clone());
                    }
                }
                ScaleKind::Ratio | ScaleKind::Interval => {
                    quant.push(DVector::from_vec(v.numeric_view()));
                    if !quant_blocks.contains(&block.name) {
                        quant_blocks.push(block.name.clone());
                    }
                }
                other => {
                    return Err(Error::Invalid(format!(
                        "variable `{}` has {other} scale; this method models binary and ratio/interval variables only",
                        v.name
                    )))
                }
            }
        }
    }
    let stack = |cols: &[DVector<f64>]| {
        if cols.is_empty() {
            DMatrix::zeros(n, 0)
        } else {
            DMatrix::from_columns(cols)
        }
    };
    let names = GscaBlockNames {
        binary: if bin_blocks.is_empty() { "binary".into() } else { bin_blocks.join("+") },
        quantitative: if quant_blocks.is_empty() { "quantitative".into() } else { quant_blocks.join("+") },
    };
    fit_gsca_named(&stack(&bin), &stack(&quant), rank, opts, &names)
}

/// Binary pseudo-R² and quantitative sums-of-squares per component.
fn gsca_report(x1: &DMatrix<f64>, x2: &DMatrix<f64>, m: &GscaModel, names: &GscaBlockNames) -> Result<FitReport> {
    let r = m.rank();
    let (j1, j2) = (x1.ncols(), x2.ncols());
    let mut blocks = Vec::new();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    if j1 > 0 {
        let p = column_means(x1);
        let null_theta = DMatrix::from_fn(x1.nrows(), j1, |_, j| (p[j] / (1.0 - p[j])).ln());
        let f_null = bernoulli_nll(x1, &null_theta);
        let f_model = bernoulli_nll(x1, &m.theta1);
        let r2 = if f_null > 0.0 { (1.0 - f_model / f_null).max(0.0) } else { 0.0 };
        let deltas: Vec<f64> = (0..r)
            .map(|c| {
                let without = &m.theta1 - m.z.column(c) * m.a1.column(c).transpose();
                (bernoulli_nll(x1, &without) - f_model).max(0.0)
            })
            .collect();
        let sum: f64 = deltas.iter().sum();
        cols.push(
            deltas
                .iter()
                .map(|d| if sum > 0.0 { 100.0 * r2 * d / sum } else { 0.0 })
                .collect(),
        );
        blocks.push(BlockColumn {
            name: names.binary.clone(),
            metric: BlockMetric::PseudoR2,
        });
    }
    if j2 > 0 {
        let mut x2c = x2.clone();
        center_columns(&mut x2c);
        let total = x2c.norm_squared();
        if total == 0.0 {
            return Err(Error::ZeroDenominator);
        }
        cols.push(
            (0..r)
                .map(|c| 100.0 * m.z.column(c).norm_squared() * m.a2.column(c).norm_squared() / total)
                .collect(),
        );
        blocks.push(BlockColumn::ss(names.quantitative.clone()));
    }
    let k = cols.len();
    let per = DMatrix::from_fn(r, k, |c, b| cols[b][c]);
    let weights: Vec<f64> = blocks
        .iter()
        .map(|b| match b.metric {
            BlockMetric::PseudoR2 => j1 as f64,
            BlockMetric::SumOfSquares => j2 as f64,
        })
        .collect();
    let wsum: f64 = weights.iter().sum();
    let totals = (0..r)
        .map(|c| (0..k).map(|b| weights[b] * per[(c, b)]).sum::<f64>() / wsum)
        .collect();
    Ok(FitReport::new(
        Method::Gsca,
        blocks,
        per,
        totals,
        Convergence {
            final_loss: m.final_nll(),
            iterations: m.iterations,
            restarts: m.starts_used,
            converged: m.converged,
        },
    ))
}
