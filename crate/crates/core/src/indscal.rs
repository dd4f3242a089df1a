//! INDORT (orthogonal INDSCAL) fitting of symmetric representation slabs and
//! its multi-block stacked form, IDIOMIX.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::data::MultiBlockDataset;
use crate::error::{Error, Result};
use crate::linalg::{orthonormalize, sorted_symmetric_eigen};
use crate::metrics::{self, FitReport};
use crate::representation::{build_representation_stack, RepresentationMatrix, RepresentationPolicy};

#[derive(Clone, Debug, PartialEq)]
pub struct IndscalOptions {
    pub max_iter: usize,
    /// Relative loss change below which iteration stops.
    pub tol: f64,
    pub n_starts: usize,
    pub seed: u64,
}

impl Default for IndscalOptions {
    fn default() -> Self {
        IndscalOptions {
            max_iter: 500,
            tol: 1e-8,
            n_starts: 5,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IndscalModel {
    /// `I x R` object scores with orthonormal columns.
    pub z: DMatrix<f64>,
    /// `J x R` nonnegative loadings; row `j` is the diagonal of `A_j`.
    pub a: DMatrix<f64>,
    /// Block of every slab row.
    pub block_index: Vec<usize>,
    pub loss_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Index of the start that produced this model.
    pub start: usize,
    pub starts_used: usize,
}

impl IndscalModel {
    pub fn rank(&self) -> usize {
        self.z.ncols()
    }

    pub fn final_loss(&self) -> f64 {
        *self.loss_trace.last().expect("trace is never empty")
    }

    /// `Z A_j Z'` for slab `j`.
    pub fn fitted_slab(&self, j: usize) -> DMatrix<f64> {
        let scaled = DMatrix::from_fn(self.z.nrows(), self.rank(), |i, r| self.z[(i, r)] * self.a[(j, r)]);
        scaled * self.z.transpose()
    }
}

/// `sum_j ||S_j - Z A_j Z'||²`, evaluated by explicit reconstruction.
pub fn indscal_loss(slabs: &[DMatrix<f64>], z: &DMatrix<f64>, a: &DMatrix<f64>) -> f64 {
    slabs
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let scaled = DMatrix::from_fn(z.nrows(), z.ncols(), |i, r| z[(i, r)] * a[(j, r)]);
            let fit = scaled * z.transpose();
            (s - fit).norm_squared()
        })
        .sum()
}

/// `S_j Z` for every slab.
fn slab_products(slabs: &[&DMatrix<f64>], z: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
    slabs.par_iter().map(|s| *s * z).collect()
}

/// Closed-form loadings for orthonormal `Z`: `a_jr = max(0, z_r' S_j z_r)`.
fn loadings_from_products(z: &DMatrix<f64>, sz: &[DMatrix<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(sz.len(), z.ncols(), |j, r| z.column(r).dot(&sz[j].column(r)).max(0.0))
}

fn optimal_loadings(slabs: &[&DMatrix<f64>], z: &DMatrix<f64>) -> DMatrix<f64> {
    loadings_from_products(z, &slab_products(slabs, z))
}

/// Loss under orthonormal `Z` and optimal `A`: `sum ||S_j||² - sum a²`.
fn orthonormal_loss(total_ss: f64, a: &DMatrix<f64>) -> f64 {
    total_ss - a.norm_squared()
}

struct StartResult {
    z: DMatrix<f64>,
    a: DMatrix<f64>,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
}

fn validate(slabs: &[&DMatrix<f64>], rank: usize) -> Result<usize> {
    let first = slabs
        .first()
        .ok_or_else(|| Error::Invalid("no slabs to fit".into()))?;
    let n = first.nrows();
    if rank == 0 || rank >= n {
        return Err(Error::RankTooLarge { rank, limit: n });
    }
    for (j, s) in slabs.iter().enumerate() {
        if s.nrows() != n || s.ncols() != n {
            return Err(Error::Dimension(format!("slab {j} is {}x{}, expected {n}x{n}", s.nrows(), s.ncols())));
        }
        let scale = s.amax().max(1e-300);
        if (*s - s.transpose()).amax() > 1e-10 * scale.max(1.0) {
            return Err(Error::NotSymmetric(j));
        }
    }
    Ok(n)
}

/// Fit `S_j ≈ Z A_j Z'` with `Z'Z = I` and `A_j >= 0` diagonal.
pub fn fit_indort(slabs: &[RepresentationMatrix], rank: usize, opts: &IndscalOptions) -> Result<IndscalModel> {
    let mats: Vec<&DMatrix<f64>> = slabs.iter().map(|s| &s.s).collect();
    let block_index = slabs
        .iter()
        .map(|s| s.origin.as_ref().map_or(0, |o| o.block))
        .collect();
    fit_matrices(&mats, rank, opts, block_index)
}

/// [`fit_indort`] on bare matrices.
pub fn fit_indort_matrices(slabs: &[DMatrix<f64>], rank: usize, opts: &IndscalOptions) -> Result<IndscalModel> {
    let mats: Vec<&DMatrix<f64>> = slabs.iter().collect();
    fit_matrices(&mats, rank, opts, vec![0; slabs.len()])
}

fn fit_matrices(
    slabs: &[&DMatrix<f64>],
    rank: usize,
    opts: &IndscalOptions,
    block_index: Vec<usize>,
) -> Result<IndscalModel> {
    let n = validate(slabs, rank)?;
    let total_ss: f64 = slabs.iter().map(|s| s.norm_squared()).sum();

    let mut mean = DMatrix::zeros(n, n);
    for s in slabs {
        mean += *s;
    }
    mean /= slabs.len() as f64;
    let (_, vecs) = sorted_symmetric_eigen(&mean);
    let z0 = vecs.columns(0, rank).into_owned();

    let n_starts = opts.n_starts.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut inits = vec![z0.clone()];
    for _ in 1..n_starts {
        let noise = DMatrix::from_fn(n, rank, |_, _| {
            let e: f64 = StandardNormal.sample(&mut rng);
            e / (n as f64).sqrt()
        });
        inits.push(orthonormalize(&(&z0 + noise))?);
    }

    let results: Vec<StartResult> = inits
        .into_par_iter()
        .map(|z| run_start(slabs, total_ss, z, opts))
        .collect();

    let mut best = 0;
    for (s, r) in results.iter().enumerate() {
        if r.trace.last() < results[best].trace.last() {
            best = s;
        }
    }
    let chosen = results.into_iter().nth(best).expect("at least one start");
    let (z, a) = order_components(chosen.z, chosen.a);
    Ok(IndscalModel {
        z,
        a,
        block_index,
        loss_trace: chosen.trace,
        iterations: chosen.iterations,
        converged: chosen.converged,
        start: best,
        starts_used: n_starts,
    })
}

fn run_start(slabs: &[&DMatrix<f64>], total_ss: f64, mut z: DMatrix<f64>, opts: &IndscalOptions) -> StartResult {
    let n = z.nrows();
    let rank = z.ncols();
    let mut sz = slab_products(slabs, &z);
    let mut a = loadings_from_products(&z, &sz);
    let mut loss = orthonormal_loss(total_ss, &a);
    let mut trace = vec![loss];
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..opts.max_iter {
        iterations += 1;
        // joint step: polar factor of the gradient of sum_jr (z_r' S_j z_r)²;
        // rotates columns together, which the column sweep below cannot
        let (mut z_new, a_mid) = match polar_step(&sz, &a) {
            Some(zp) => {
                let ap = optimal_loadings(slabs, &zp);
                if orthonormal_loss(total_ss, &ap) <= loss {
                    (zp, ap)
                } else {
                    (z.clone(), a.clone())
                }
            }
            None => (z.clone(), a.clone()),
        };
        for r in 0..rank {
            let mut m = DMatrix::zeros(n, n);
            for (j, s) in slabs.iter().enumerate() {
                let w = a_mid[(j, r)];
                if w > 0.0 {
                    m.zip_apply(*s, |mv, sv| *mv += w * sv);
                }
            }
            // P M P with P the projector onto the complement of the other columns
            let others: Vec<usize> = (0..rank).filter(|&k| k != r).collect();
            let q = z_new.select_columns(&others);
            let mq = &m * &q;
            let qmq = q.transpose() * &mq;
            let b = &m - &mq * q.transpose() - &q * mq.transpose() + &q * qmq * q.transpose();
            let (vals, vecs) = sorted_symmetric_eigen(&b);
            if vals[0] <= 0.0 {
                continue;
            }
            let top = vecs.column(0);
            let mut v: DVector<f64> = top - &q * (q.transpose() * top);
            let norm = v.norm();
            if norm == 0.0 {
                continue;
            }
            v /= norm;
            let old = z_new.column(r).into_owned();
            let gain_new = v.dot(&(&m * &v));
            let gain_old = old.dot(&(&m * &old));
            if gain_new < gain_old {
                continue;
            }
            if v.dot(&old) < 0.0 {
                v.neg_mut();
            }
            z_new.set_column(r, &v);
        }
        if let Ok(q) = orthonormalize(&z_new) {
            z_new = q;
        }
        let sz_new = slab_products(slabs, &z_new);
        let a_new = loadings_from_products(&z_new, &sz_new);
        let new_loss = orthonormal_loss(total_ss, &a_new);
        if new_loss > loss {
            // rejected step: rounding pushed the loss up, we are at a fixed point
            converged = true;
            break;
        }
        let rel = (loss - new_loss) / loss.abs().max(f64::MIN_POSITIVE);
        z = z_new;
        a = a_new;
        sz = sz_new;
        loss = new_loss;
        trace.push(loss);
        if rel < opts.tol {
            converged = true;
            break;
        }
    }
    StartResult {
        z,
        a,
        trace,
        iterations,
        converged,
    }
}

fn polar_step(sz: &[DMatrix<f64>], a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let (n, rank) = sz.first().map(|m| m.shape())?;
    let mut g = DMatrix::zeros(n, rank);
    for (j, p) in sz.iter().enumerate() {
        for r in 0..rank {
            let w = a[(j, r)];
            if w > 0.0 {
                g.column_mut(r).axpy(w, &p.column(r), 1.0);
            }
        }
    }
    let svd = g.svd(true, true);
    if svd.singular_values.iter().any(|&v| v <= 1e-12 * svd.singular_values.amax().max(1e-300)) {
        return None;
    }
    Some(svd.u? * svd.v_t?)
}

/// Sort components by decreasing fitted sum of squares `sum_j a_jr²`.
fn order_components(z: DMatrix<f64>, a: DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let ss: Vec<f64> = a.column_iter().map(|c| c.norm_squared()).collect();
    let mut order: Vec<usize> = (0..a.ncols()).collect();
    order.sort_by(|&x, &y| ss[y].partial_cmp(&ss[x]).unwrap().then(x.cmp(&y)));
    let z = DMatrix::from_columns(&order.iter().map(|&r| z.column(r).into_owned()).collect::<Vec<_>>());
    let a = DMatrix::from_columns(&order.iter().map(|&r| a.column(r).into_owned()).collect::<Vec<_>>());
    (z, a)
}

/// IDIOMIX: INDORT on the stacked representation slabs of all blocks.
pub fn fit_idiomix(
    dataset: &MultiBlockDataset,
    rank: usize,
    policy: &RepresentationPolicy,
    opts: &IndscalOptions,
) -> Result<(IndscalModel, FitReport)> {
    let stack = build_representation_stack(dataset, policy)?;
    let model = fit_indort(&stack, rank, opts)?;
    let report = metrics::idiomix_report(&stack, &model, &dataset.block_names());
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_orthonormal(n: usize, r: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let m = DMatrix::from_fn(n, r, |_, _| StandardNormal.sample(rng));
        orthonormalize(&m).unwrap()
    }

    fn random_psd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let b = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        let s = &b * b.transpose();
        let norm = s.norm();
        s / norm
    }

    fn brute_loss(slabs: &[DMatrix<f64>], z: &DMatrix<f64>, a: &DMatrix<f64>) -> f64 {
        let mut total = 0.0;
        for (j, s) in slabs.iter().enumerate() {
            for p in 0..s.nrows() {
                for q in 0..s.ncols() {
                    let mut fit = 0.0;
                    for r in 0..z.ncols() {
                        fit += z[(p, r)] * a[(j, r)] * z[(q, r)];
                    }
                    total += (s[(p, q)] - fit).powi(2);
                }
            }
        }
        total
    }

    #[test]
    fn loss_of_zero_model_counts_slabs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let slabs: Vec<_> = (0..3).map(|_| random_psd(5, &mut rng)).collect();
        let z = random_orthonormal(5, 2, &mut rng);
        let a = DMatrix::zeros(3, 2);
        assert!((indscal_loss(&slabs, &z, &a) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn loss_of_exact_rank_one_fit_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z = random_orthonormal(6, 1, &mut rng);
        let s = &z * z.transpose();
        assert!(indscal_loss(&[s], &z, &DMatrix::from_element(1, 1, 1.0)) < 1e-28);
    }

    #[test]
    fn loss_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let slabs: Vec<_> = (0..4).map(|_| random_psd(6, &mut rng)).collect();
            let z = DMatrix::from_fn(6, 2, |_, _| rng.random::<f64>());
            let a = DMatrix::from_fn(4, 2, |_, _| rng.random::<f64>());
            assert!((indscal_loss(&slabs, &z, &a) - brute_loss(&slabs, &z, &a)).abs() < 1e-10);
        }
    }

    #[test]
    fn recovers_noiseless_rank_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z1 = random_orthonormal(7, 1, &mut rng);
        let slabs = vec![&z1 * z1.transpose(); 3];
        let m = fit_indort_matrices(&slabs, 1, &IndscalOptions::default()).unwrap();
        assert!(z1.column(0).dot(&m.z.column(0)).abs() >= 1.0 - 1e-6);
        for j in 0..3 {
            assert!((m.a[(j, 0)] - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn two_orthogonal_slabs_fit_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = random_orthonormal(6, 2, &mut rng);
        let slabs: Vec<_> = (0..2).map(|r| q.column(r) * q.column(r).transpose()).collect();
        let m = fit_indort_matrices(&slabs, 2, &IndscalOptions::default()).unwrap();
        assert!(m.final_loss() < 1e-10, "loss {}", m.final_loss());
        // loadings form a permutation of the identity
        for j in 0..2 {
            let mut row: Vec<f64> = m.a.row(j).iter().copied().collect();
            row.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert!(row[0].abs() < 1e-6 && (row[1] - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn beats_random_orthonormal_candidates() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let slabs: Vec<_> = (0..4).map(|_| random_psd(6, &mut rng)).collect();
        let m = fit_indort_matrices(&slabs, 2, &IndscalOptions { seed: 9, ..Default::default() }).unwrap();
        let refs: Vec<&DMatrix<f64>> = slabs.iter().collect();
        let mut best = f64::INFINITY;
        for _ in 0..1000 {
            let z = random_orthonormal(6, 2, &mut rng);
            let a = optimal_loadings(&refs, &z);
            best = best.min(indscal_loss(&slabs, &z, &a));
        }
        assert!(m.final_loss() <= best + 1e-12, "{} vs {best}", m.final_loss());
    }

    #[test]
    fn invariants_hold_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for seed in 0..5 {
            let slabs: Vec<_> = (0..5).map(|_| random_psd(8, &mut rng)).collect();
            let m = fit_indort_matrices(&slabs, 3, &IndscalOptions { seed, ..Default::default() }).unwrap();
            for w in m.loss_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-10);
            }
            assert!((m.z.transpose() * &m.z - DMatrix::identity(3, 3)).amax() < 1e-8);
            assert!(m.a.min() >= 0.0);
            assert!((indscal_loss(&slabs, &m.z, &m.a) - m.final_loss()).abs() < 1e-10);
            for j in 0..slabs.len() {
                let ev = m.fitted_slab(j).symmetric_eigen().eigenvalues;
                assert!(ev.min() >= -1e-8);
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(
            fit_indort_matrices(&[s], 1, &IndscalOptions::default()),
            Err(Error::NotSymmetric(0))
        ));
        let s = DMatrix::identity(3, 3);
        assert!(matches!(
            fit_indort_matrices(&[s], 3, &IndscalOptions::default()),
            Err(Error::RankTooLarge { .. })
        ));
    }
}
