use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{DataBlock, IndicatorMatrix, ScaleKind};
use crate::error::{Error, Result};
use crate::linalg::{center_columns, orthonormalize};

#[derive(Clone, Debug, PartialEq)]
pub struct HomalsOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for HomalsOptions {
    fn default() -> Self {
        HomalsOptions {
            max_iter: 1000,
            tol: 1e-8,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HomalsModel {
    /// `I x R`, centered, `(1/I) Z'Z = I`.
    pub z: DMatrix<f64>,
    /// Per-variable `L_j x R` category quantifications.
    pub y: Vec<DMatrix<f64>>,
    pub loss_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl HomalsModel {
    pub fn final_loss(&self) -> f64 {
        *self.loss_trace.last().expect("trace is never empty")
    }
}

/// HOMALS on a block of nominal (or binary) variables.
pub fn fit_homals(block: &DataBlock, rank: usize, opts: &HomalsOptions) -> Result<HomalsModel> {
    let inds = block
        .variables
        .iter()
        .map(|v| {
            if !matches!(v.scale, ScaleKind::Nominal | ScaleKind::Binary) {
                return Err(Error::Invalid(format!(
                    "HOMALS needs nominal variables; `{}` is {}",
                    v.name, v.scale
                )));
            }
            v.indicator()
        })
        .collect::<Result<Vec<_>>>()?;
    fit_homals_indicators(&inds, rank, opts)
}

/// `Y_j = D_j^-1 G_j' Z`.
fn category_centroids(ind: &IndicatorMatrix, z: &DMatrix<f64>) -> DMatrix<f64> {
    let mut y = DMatrix::zeros(ind.n_categories(), z.ncols());
    for r in 0..z.ncols() {
        let means = ind.category_means(z.column(r).as_slice());
        for (l, m) in means.into_iter().enumerate() {
            y[(l, r)] = m;
        }
    }
    y
}

fn expand(ind: &IndicatorMatrix, y: &DMatrix<f64>) -> DMatrix<f64> {
    let codes = ind.codes();
    DMatrix::from_fn(codes.len(), y.ncols(), |i, r| y[(codes[i], r)])
}

fn homals_loss(inds: &[IndicatorMatrix], z: &DMatrix<f64>, ys: &[DMatrix<f64>]) -> f64 {
    inds.iter()
        .zip(ys)
        .map(|(g, y)| (z - expand(g, y)).norm_squared())
        .sum()
}

/// Scale a centered `I x R` matrix to `(1/I) Z'Z = I` via Gram–Schmidt.
fn normalize_scores(u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut c = u.clone();
    center_columns(&mut c);
    let q = orthonormalize(&c).map_err(|_| {
        Error::Invalid("object scores collapsed; the rank exceeds the available dimensions".into())
    })?;
    Ok(q * (u.nrows() as f64).sqrt())
}

/// Minimize `sum_j ||Z - G_j Y_j||²` subject to centered `Z` with `(1/I) Z'Z = I`.
pub fn fit_homals_indicators(inds: &[IndicatorMatrix], rank: usize, opts: &HomalsOptions) -> Result<HomalsModel> {
    let first = inds
        .first()
        .ok_or_else(|| Error::Invalid("HOMALS needs at least one variable".into()))?;
    let n = first.n_samples();
    if inds.iter().any(|g| g.n_samples() != n) {
        return Err(Error::Dimension("variables differ in sample count".into()));
    }
    if let Some(g) = inds.iter().find(|g| g.n_categories() < 2) {
        return Err(Error::DegenerateVariable(format!("{:?}", g.labels())));
    }
    let dims: usize = inds.iter().map(|g| g.n_categories() - 1).sum();
    let limit = n.min(dims + 1);
    if rank == 0 || rank >= limit {
        return Err(Error::RankTooLarge { rank, limit });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let init = DMatrix::from_fn(n, rank, |_, _| StandardNormal.sample(&mut rng));
    let mut z = normalize_scores(&init)?;
    let mut ys: Vec<DMatrix<f64>> = inds.iter().map(|g| category_centroids(g, &z)).collect();
    let mut loss = homals_loss(inds, &z, &ys);
    let mut trace = vec![loss];
    let mut converged = false;
    let mut iterations = 0;
    let j = inds.len() as f64;

    for _ in 0..opts.max_iter {
        iterations += 1;
        let mut u = DMatrix::zeros(n, rank);
        for (g, y) in inds.iter().zip(&ys) {
            u += expand(g, y);
        }
        u /= j;
        let z_new = normalize_scores(&u)?;
        let ys_new: Vec<DMatrix<f64>> = inds.iter().map(|g| category_centroids(g, &z_new)).collect();
        let new_loss = homals_loss(inds, &z_new, &ys_new);
        if new_loss > loss {
            converged = true;
            break;
        }
        let rel = (loss - new_loss) / loss.max(f64::MIN_POSITIVE);
        z = z_new;
        ys = ys_new;
        loss = new_loss;
        trace.push(loss);
        if rel < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(HomalsModel {
        z,
        y: ys,
        loss_trace: trace,
        iterations,
        converged,
    })
}
