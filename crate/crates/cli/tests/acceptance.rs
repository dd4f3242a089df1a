//! Acceptance suite. Runs every criterion, prints one line each and exits
//! non-zero if any fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use anyhow::{bail, ensure, Context, Result};
use heterofuse_core::data::standardize;
use heterofuse_core::gsca::{
    bernoulli_nll, gaussian_nll, gaussian_nll_full, gsca_gradient, gsca_objective, tangent_projection, GscaParams,
};
use heterofuse_core::indscal::{fit_idiomix, fit_indort_matrices, indscal_loss};
use heterofuse_core::linalg::{center_columns, max_principal_angle_deg, orthonormalize, pca_scores};
use heterofuse_core::metrics::{congruence, explained_variance_ss, score_frequency_diagnostic};
use heterofuse_core::optscal::{fit_homals, pava};
use heterofuse_core::representation::{
    assoc_standardized, mean_square_contingency, phi, repr_binary, repr_outer, repr_skew, RepresentationPolicy,
};
use heterofuse_core::{
    fit_gsca, fit_gsca_dataset, fit_os_sca, generate, DataBlock, GscaModel, GscaOptions, HomalsModel, HomalsOptions,
    IndicatorMatrix, IndscalModel, IndscalOptions, MultiBlockDataset, OsScaModel, OsScaOptions, ScaleKind, SynthSpec,
    Variable,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DESCENT_SLACK: f64 = 1e-10;
const CONSTRAINT_TOL: f64 = 1e-8;

fn main() {
    let checks: Vec<(&str, Option<u64>, fn() -> Result<String>)> = vec![
        ("worked association examples", Some(1), worked_examples),
        ("binary optimal scaling equals PCA", Some(10), binary_scaling_equals_pca),
        ("monotone descent", Some(60), monotone_descent),
        ("score and quantification constraints", None, constraints),
        ("GSCA gradient", Some(5), gsca_gradient_check),
        ("oracle equivalences", None, oracles),
        ("latent subspace recovery", Some(120), recovery),
        ("dominant block and frequency component", None, dominance),
        ("reproducible artifacts", None, reproducibility),
    ];
    let mut failed = 0;
    for (n, (name, limit, check)) in checks.into_iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let result = match (result, limit) {
            (Ok(_), Some(s)) if elapsed > Duration::from_secs(s) => {
                Err(anyhow::anyhow!("took {:.2}s, limit {s}s", elapsed.as_secs_f64()))
            }
            (r, _) => r,
        };
        match result {
            Ok(detail) => println!("PASS [{}] {name} ({:.2}s): {detail}", n + 1, elapsed.as_secs_f64()),
            Err(e) => {
                failed += 1;
                println!("FAIL [{}] {name} ({:.2}s): {e:#}", n + 1, elapsed.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn close(a: f64, b: f64, tol: f64, what: &str) -> Result<()> {
    ensure!((a - b).abs() <= tol, "{what}: {a} vs {b} (tol {tol:e})");
    Ok(())
}

fn brute_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

fn labels(ls: &[&str]) -> Vec<String> {
    ls.iter().map(|s| s.to_string()).collect()
}

fn worked_examples() -> Result<String> {
    let x1 = [2.0, 4.0, 6.0, 8.0];
    let x2 = [9.0, 9.0, 10.0, 12.0];
    let s1 = standardize(&x1)?;
    let s2 = standardize(&x2)?;
    for (got, want) in s1.iter().zip([-0.671, -0.224, 0.224, 0.671]) {
        close((got * 1000.0).round() / 1000.0, want, 1e-12, "standardized x1")?;
    }
    for (got, want) in s2.iter().zip([-0.408, -0.408, 0.0, 0.816]) {
        close((got * 1000.0).round() / 1000.0, want, 1e-12, "standardized x2")?;
    }

    let r = assoc_standardized(&repr_skew(&x1)?, &repr_skew(&x2)?)?;
    close(r, 0.913, 1e-3, "skew association")?;
    close(r, brute_pearson(&x1, &x2), 1e-10, "skew association vs Pearson")?;

    let q = assoc_standardized(&repr_outer(&x1)?, &repr_outer(&x2)?)?;
    close(q, 0.833, 1e-3, "outer-product association")?;
    close(q, brute_pearson(&x1, &x2).powi(2), 1e-10, "outer-product association vs Pearson²")?;

    let g1 = IndicatorMatrix::new(&["A", "B", "A", "C", "D", "C", "B", "D"], &labels(&["A", "B", "C", "D"]))?;
    let g2 = IndicatorMatrix::new(&["I", "II", "II", "I", "III", "III", "I", "II"], &labels(&["I", "II", "III"]))?;
    let t2 = mean_square_contingency(&g1, &g2)?;
    close(t2, 0.5, 1e-12, "nominal association")?;

    let b1 = [0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0];
    let b2 = [1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0];
    let p = phi(&b1, &b2)?;
    close(p, -0.4667, 1e-4, "phi")?;
    let pb = assoc_standardized(&repr_binary(&b1)?, &repr_binary(&b2)?)?;
    close(pb, 0.2178, 1e-4, "binary association")?;
    close(pb, p * p, 1e-10, "binary association vs phi²")?;
    Ok(format!("r={r:.4} r²={q:.4} T²={t2} phi={p:.4} phi²={pb:.4}"))
}

fn random_binary(rng: &mut ChaCha8Rng, n: usize, j: usize) -> DMatrix<f64> {
    loop {
        let p: f64 = rng.random_range(0.2..0.8);
        let b = DMatrix::from_fn(n, j, |_, _| if rng.random::<f64>() < p { 1.0 } else { 0.0 });
        if b.column_iter().all(|c| c.sum() > 0.0 && c.sum() < n as f64) {
            return b;
        }
    }
}

fn binary_scaling_equals_pca() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let n = rng.random_range(5..=50);
        let j = rng.random_range(2..=10);
        let b = random_binary(&mut rng, n, j);
        let vars = b
            .column_iter()
            .enumerate()
            .map(|(k, c)| {
                let raw: Vec<&str> = c.iter().map(|&v| if v > 0.5 { "yes" } else { "no" }).collect();
                Variable::categorical(format!("b{k}"), ScaleKind::Nominal, &raw, labels(&["no", "yes"]))
            })
            .collect::<heterofuse_core::Result<Vec<_>>>()?;
        let ds = MultiBlockDataset::from_blocks(vec![DataBlock::new("b", vars)?])?;
        let rank = rng.random_range(1..=j.min(3).min(n - 1));
        let (model, _) = fit_os_sca(&ds, rank, &OsScaOptions { seed: case, ..Default::default() })?;
        let std = DMatrix::from_columns(
            &b.column_iter()
                .map(|c| standardize(c.as_slice()).map(DVector::from_vec))
                .collect::<heterofuse_core::Result<Vec<_>>>()?,
        );
        let reference = pca_scores(&std, rank)?;
        let angle = max_principal_angle_deg(&model.z, &reference)?;
        ensure!(angle <= 1e-6, "case {case} ({n}x{j}, rank {rank}): angle {angle:e} deg");
        worst = worst.max(angle);
    }
    Ok(format!("100 datasets, max angle {worst:.1e} deg"))
}

fn check_descent(trace: &[f64], what: &str) -> Result<()> {
    ensure!(!trace.is_empty(), "{what}: empty trace");
    for (k, w) in trace.windows(2).enumerate() {
        ensure!(w[1] <= w[0] + DESCENT_SLACK, "{what}: trace rises at {} ({} -> {})", k + 1, w[0], w[1]);
    }
    Ok(())
}

fn random_psd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let k = rng.random_range(1..=3);
    let b = DMatrix::from_fn(n, k, |_, _| rng.random_range(-1.0..1.0));
    let s = &b * b.transpose();
    let norm = s.norm();
    s / norm
}

fn random_categorical(rng: &mut ChaCha8Rng, name: &str, scale: ScaleKind, n: usize, c: usize) -> Result<Variable> {
    let labels: Vec<String> = (1..=c).map(|l| l.to_string()).collect();
    loop {
        let raw: Vec<String> = (0..n).map(|_| labels[rng.random_range(0..c)].clone()).collect();
        let used = labels.iter().filter(|l| raw.contains(l)).count();
        if used >= 2 {
            return Ok(Variable::categorical(name, scale, &raw, labels.clone())?);
        }
    }
}

fn random_mixed(rng: &mut ChaCha8Rng, n: usize) -> Result<MultiBlockDataset> {
    let q = DMatrix::from_fn(n, rng.random_range(2..=5), |_, _| rng.random_range(-2.0..2.0));
    let ord = (0..rng.random_range(1..=3))
        .map(|k| random_categorical(rng, &format!("o{k}"), ScaleKind::Ordinal, n, 4))
        .collect::<Result<Vec<_>>>()?;
    let nom = (0..rng.random_range(1..=3))
        .map(|k| random_categorical(rng, &format!("c{k}"), ScaleKind::Nominal, n, 3))
        .collect::<Result<Vec<_>>>()?;
    let jb = rng.random_range(1..=4);
    let b = random_binary(rng, n, jb);
    Ok(MultiBlockDataset::from_blocks(vec![
        DataBlock::quantitative("q", &q, ScaleKind::Interval)?,
        DataBlock::new("o", ord)?,
        DataBlock::new("c", nom)?,
        DataBlock::binary("b", &b)?,
    ])?)
}

fn gsca_instance(seed: u64) -> Result<MultiBlockDataset> {
    let spec = SynthSpec::from_toml_str(&format!(
        r#"
seed = {seed}
samples = 40
rank = 2

[[block]]
name = "q"
kind = "quantitative"
columns = 6
noise = 0.5

[[block]]
name = "b"
kind = "binary"
columns = 8
loading_sd = 0.7
"#
    ))?;
    Ok(generate(&spec)?.0)
}

struct Fitted {
    indort: Vec<IndscalModel>,
    homals: Vec<HomalsModel>,
    os_sca: Vec<OsScaModel>,
    gsca: Vec<GscaModel>,
}

fn fit_descent_instances() -> Result<Fitted> {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut out = Fitted {
        indort: Vec::new(),
        homals: Vec::new(),
        os_sca: Vec::new(),
        gsca: Vec::new(),
    };
    for seed in 0..50u64 {
        let n = rng.random_range(6..=15);
        let slabs: Vec<DMatrix<f64>> = (0..rng.random_range(2..=6)).map(|_| random_psd(&mut rng, n)).collect();
        let rank = rng.random_range(1..=3);
        let opts = IndscalOptions {
            seed,
            n_starts: 2,
            ..Default::default()
        };
        out.indort.push(fit_indort_matrices(&slabs, rank, &opts)?);

        let n = rng.random_range(10..=30);
        let vars = (0..rng.random_range(2..=5))
            .map(|k| random_categorical(&mut rng, &format!("v{k}"), ScaleKind::Nominal, n, 3))
            .collect::<Result<Vec<_>>>()?;
        let block = DataBlock::new("h", vars)?;
        let hopts = HomalsOptions { seed, ..Default::default() };
        out.homals.push(fit_homals(&block, rng.random_range(1..=2), &hopts)?);

        let n = rng.random_range(15..=30);
        let ds = random_mixed(&mut rng, n)?;
        let rank = rng.random_range(1..=3);
        let oopts = OsScaOptions {
            seed,
            n_starts: 2,
            ..Default::default()
        };
        out.os_sca.push(fit_os_sca(&ds, rank, &oopts)?.0);

        let ds = gsca_instance(seed)?;
        let gopts = GscaOptions {
            seed,
            n_starts: 1,
            ..Default::default()
        };
        out.gsca.push(fit_gsca_dataset(&ds, 2, &gopts)?.0);
    }
    Ok(out)
}

fn monotone_descent() -> Result<String> {
    let fitted = fit_descent_instances()?;
    for (k, m) in fitted.indort.iter().enumerate() {
        check_descent(&m.loss_trace, &format!("indort {k}"))?;
    }
    for (k, m) in fitted.homals.iter().enumerate() {
        check_descent(&m.loss_trace, &format!("homals {k}"))?;
    }
    for (k, m) in fitted.os_sca.iter().enumerate() {
        check_descent(&m.loss_trace, &format!("os-sca {k}"))?;
    }
    for (k, m) in fitted.gsca.iter().enumerate() {
        check_descent(&m.nll_trace, &format!("gsca {k}"))?;
    }
    let steps: usize = fitted.indort.iter().map(|m| m.loss_trace.len()).sum::<usize>()
        + fitted.homals.iter().map(|m| m.loss_trace.len()).sum::<usize>()
        + fitted.os_sca.iter().map(|m| m.loss_trace.len()).sum::<usize>()
        + fitted.gsca.iter().map(|m| m.nll_trace.len()).sum::<usize>();
    Ok(format!("4 x 50 fits, {steps} trace steps checked"))
}

fn gram_deviation(z: &DMatrix<f64>, scale: f64) -> (f64, f64) {
    let r = z.ncols();
    let gram = z.transpose() * z / scale - DMatrix::<f64>::identity(r, r);
    let sums = z.row_sum();
    (gram.amax(), sums.amax())
}

fn constraints() -> Result<String> {
    let fitted = fit_descent_instances()?;
    let mut worst = 0.0f64;
    for (k, m) in fitted.indort.iter().enumerate() {
        let (g, _) = gram_deviation(&m.z, 1.0);
        ensure!(g <= CONSTRAINT_TOL, "indort {k}: Z'Z deviates by {g:e}");
        ensure!(m.a.iter().all(|&v| v >= 0.0), "indort {k}: negative loading");
        worst = worst.max(g);
    }
    for (k, m) in fitted.homals.iter().enumerate() {
        let (g, s) = gram_deviation(&m.z, m.z.nrows() as f64);
        ensure!(g <= CONSTRAINT_TOL && s <= CONSTRAINT_TOL, "homals {k}: {g:e} {s:e}");
        worst = worst.max(g).max(s);
    }
    for (k, m) in fitted.os_sca.iter().enumerate() {
        let (g, s) = gram_deviation(&m.z, m.z.nrows() as f64);
        ensure!(g <= CONSTRAINT_TOL && s <= CONSTRAINT_TOL, "os-sca {k}: {g:e} {s:e}");
        worst = worst.max(g).max(s);
        for (v, q) in m.variable_names.iter().zip(&m.quantifications) {
            if v.starts_with('o') {
                let q = q.as_ref().context("ordinal variable without quantification")?;
                ensure!(q.is_monotone(), "os-sca {k}: {v} not monotone: {:?}", q.y);
            }
        }
    }
    for (k, m) in fitted.gsca.iter().enumerate() {
        let (g, s) = gram_deviation(&m.z, m.z.nrows() as f64);
        ensure!(g <= CONSTRAINT_TOL && s <= CONSTRAINT_TOL, "gsca {k}: {g:e} {s:e}");
        worst = worst.max(g).max(s);
    }

    let (ds, _) = generate(&mixed_spec(1))?;
    let (im, _) = fit_idiomix(&ds, 3, &RepresentationPolicy::default(), &IndscalOptions::default())?;
    let (g, _) = gram_deviation(&im.z, 1.0);
    ensure!(g <= CONSTRAINT_TOL, "idiomix: Z'Z deviates by {g:e}");
    ensure!(im.a.iter().all(|&v| v >= 0.0), "idiomix: negative loading");
    worst = worst.max(g);
    Ok(format!("max deviation {worst:.1e}"))
}

fn random_scores(rng: &mut ChaCha8Rng, n: usize, r: usize) -> Result<DMatrix<f64>> {
    let mut z = DMatrix::from_fn(n, r, |_, _| rng.random_range(-1.0..1.0));
    center_columns(&mut z);
    Ok(orthonormalize(&z)? * (n as f64).sqrt())
}

fn gsca_gradient_check() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for state in 0..20 {
        let (n, j1, j2, r) = (8, 3, 4, 2);
        let x1 = DMatrix::from_fn(n, j1, |_, _| if rng.random::<f64>() < 0.4 { 1.0 } else { 0.0 });
        let x2 = DMatrix::from_fn(n, j2, |_, _| rng.random_range(-2.0..2.0));
        let p = GscaParams {
            mu1: DVector::from_fn(j1, |_, _| rng.random_range(-1.0..1.0)),
            mu2: DVector::from_fn(j2, |_, _| rng.random_range(-1.0..1.0)),
            a1: DMatrix::from_fn(j1, r, |_, _| rng.random_range(-1.0..1.0)),
            a2: DMatrix::from_fn(j2, r, |_, _| rng.random_range(-1.0..1.0)),
            z: random_scores(&mut rng, n, r)?,
            sigma2: rng.random_range(0.3..2.0),
        };
        let g = gsca_gradient(&x1, &x2, &p);
        let f = |q: &GscaParams| gsca_objective(&x1, &x2, q);
        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        macro_rules! probe {
            ($field:ident, $grad:expr) => {
                for k in 0..p.$field.len() {
                    let mut plus = p.clone();
                    plus.$field[k] += h;
                    let mut minus = p.clone();
                    minus.$field[k] -= h;
                    numeric.push((f(&plus) - f(&minus)) / (2.0 * h));
                    analytic.push($grad[k]);
                }
            };
        }
        probe!(mu1, g.mu1);
        probe!(mu2, g.mu2);
        probe!(a1, g.a1);
        probe!(a2, g.a2);
        probe!(z, g.z);
        let mut plus = p.clone();
        plus.sigma2 += h;
        let mut minus = p.clone();
        minus.sigma2 -= h;
        numeric.push((f(&plus) - f(&minus)) / (2.0 * h));
        analytic.push(g.sigma2);
        let a = DVector::from_vec(analytic);
        let d = DVector::from_vec(numeric);
        let rel = (&a - &d).norm() / a.norm();
        ensure!(rel <= 1e-5, "state {state}: relative error {rel:e}");
        worst = worst.max(rel);

        let xi = tangent_projection(&p.z, &DMatrix::from_fn(n, r, |_, _| rng.random_range(-1.0..1.0)));
        let along = |t: f64| {
            let mut q = p.clone();
            let mut z = &p.z + &xi * t;
            center_columns(&mut z);
            let svd = z.svd(true, true);
            q.z = svd.u.unwrap() * svd.v_t.unwrap() * (n as f64).sqrt();
            f(&q)
        };
        let directional = (along(h) - along(-h)) / (2.0 * h);
        let predicted = g.z_tangent.dot(&xi);
        let rel = (directional - predicted).abs() / predicted.abs().max(1e-12);
        ensure!(rel <= 1e-5, "state {state}: tangent derivative {predicted} vs {directional}");
        worst = worst.max(rel);
    }
    Ok(format!("20 states, max relative error {worst:.1e}"))
}

/// Minimizes `sum w (v - u)²` over non-decreasing `u` restricted to a grid.
fn grid_isotonic(v: &[f64], w: &[f64], grid: &[f64]) -> Vec<f64> {
    let g = grid.len();
    let mut cost = vec![0.0; g];
    let mut choice: Vec<Vec<usize>> = Vec::with_capacity(v.len());
    for (i, (&vi, &wi)) in v.iter().zip(w).enumerate() {
        let mut best = f64::INFINITY;
        let mut arg = 0;
        let mut prefix = Vec::with_capacity(g);
        let mut next = vec![0.0; g];
        for k in 0..g {
            if i == 0 || cost[k] < best {
                best = if i == 0 { 0.0 } else { cost[k] };
                arg = k;
            }
            prefix.push(arg);
            next[k] = best + wi * (vi - grid[k]).powi(2);
        }
        choice.push(prefix);
        cost = next;
    }
    let mut k = (0..g).min_by(|&a, &b| cost[a].partial_cmp(&cost[b]).unwrap()).unwrap();
    let mut u = vec![0.0; v.len()];
    for i in (0..v.len()).rev() {
        u[i] = grid[k];
        k = choice[i][k];
    }
    u
}

fn oracles() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(2..=6);
        let r = rng.random_range(1..=n.min(3));
        let j = rng.random_range(1..=6);
        let slabs: Vec<DMatrix<f64>> = (0..j)
            .map(|_| {
                let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
                &m + m.transpose()
            })
            .collect();
        let z = DMatrix::from_fn(n, r, |_, _| rng.random_range(-1.0..1.0));
        let a = DMatrix::from_fn(j, r, |_, _| rng.random_range(0.0..1.0));
        let mut brute = 0.0;
        for (s, slab) in slabs.iter().enumerate() {
            for i in 0..n {
                for k in 0..n {
                    let fit: f64 = (0..r).map(|c| z[(i, c)] * a[(s, c)] * z[(k, c)]).sum();
                    brute += (slab[(i, k)] - fit).powi(2);
                }
            }
        }
        let d = (indscal_loss(&slabs, &z, &a) - brute).abs();
        ensure!(d <= 1e-10, "indscal_loss off by {d:e}");
        worst = worst.max(d);

        let rows = rng.random_range(1..=6);
        let cols = rng.random_range(1..=6);
        let x1 = DMatrix::from_fn(rows, cols, |_, _| if rng.random::<bool>() { 1.0 } else { 0.0 });
        let theta: DMatrix<f64> = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-6.0..6.0));
        let brute: f64 = x1
            .iter()
            .zip(theta.iter())
            .map(|(&x, &t)| {
                let p = 1.0 / (1.0 + (-t).exp());
                -(x * p.ln() + (1.0 - x) * (1.0 - p).ln())
            })
            .sum();
        let d = (bernoulli_nll(&x1, &theta) - brute).abs();
        ensure!(d <= 1e-10, "bernoulli_nll off by {d:e}");
        worst = worst.max(d);

        let x2 = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-3.0..3.0));
        let sigma2: f64 = rng.random_range(0.1..3.0);
        let mut rss = 0.0;
        for i in 0..rows {
            for k in 0..cols {
                rss += (x2[(i, k)] - theta[(i, k)]).powi(2);
            }
        }
        let log_term = 0.5 * (2.0 * std::f64::consts::PI * sigma2).ln();
        let single = rss / (2.0 * sigma2) + log_term;
        let full = rss / (2.0 * sigma2) + (rows * cols) as f64 * log_term;
        let d = (gaussian_nll(&x2, &theta, sigma2)? - single).abs();
        ensure!(d <= 1e-10, "gaussian_nll off by {d:e}");
        worst = worst.max(d);
        let d = (gaussian_nll_full(&x2, &theta, sigma2)? - full).abs();
        ensure!(d <= 1e-10, "per-entry gaussian nll off by {d:e}");
        worst = worst.max(d);

        let rc = rng.random_range(1..=cols.min(rows));
        let scores: DMatrix<f64> = DMatrix::from_fn(rows, rc, |_, _| rng.random_range(-1.0..1.0));
        let loadings = DMatrix::from_fn(cols, rc, |_, _| rng.random_range(-1.0..1.0));
        let comp = rng.random_range(0..rc);
        let mut fit = 0.0;
        let mut total = 0.0;
        for i in 0..rows {
            for k in 0..cols {
                fit += (scores[(i, comp)] * loadings[(k, comp)]).powi(2);
                total += x2[(i, k)].powi(2);
            }
        }
        let d = (explained_variance_ss(&x2, &scores, &loadings, comp)? - 100.0 * fit / total).abs();
        ensure!(d <= 1e-10, "explained_variance_ss off by {d:e}");
        worst = worst.max(d);
    }

    let grid: Vec<f64> = (0..=50_000).map(|k| k as f64 / 50_000.0).collect();
    let mut pava_worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(1..=6);
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..3.0)).collect();
        let fast = pava(&v, &w);
        let slow = grid_isotonic(&v, &w, &grid);
        for (a, b) in fast.iter().zip(&slow) {
            let d = (a - b).abs();
            ensure!(d <= 1e-4, "pava {fast:?} vs grid {slow:?} for {v:?} / {w:?}");
            pava_worst = pava_worst.max(d);
        }
    }
    Ok(format!("max deviation {worst:.1e}, PAVA vs grid {pava_worst:.1e}"))
}

fn mixed_spec(seed: u64) -> SynthSpec {
    SynthSpec::from_toml_str(&format!(
        r#"
seed = {seed}
samples = 100
rank = 3

[[block]]
name = "expr"
kind = "quantitative"
columns = 40
noise = 0.2

[[block]]
name = "mut"
kind = "binary"
columns = 20
loading_sd = 1.0
"#
    ))
    .unwrap()
}

fn recovery() -> Result<String> {
    let (ds, truth) = generate(&mixed_spec(1))?;
    let (im, _) = fit_idiomix(&ds, 3, &RepresentationPolicy::default(), &IndscalOptions::default())?;
    let (om, _) = fit_os_sca(&ds, 3, &OsScaOptions::default())?;
    let x1 = ds.blocks[1].numeric_matrix();
    let x2 = ds.blocks[0].numeric_matrix();
    let (gm, _) = fit_gsca(&x1, &x2, 3, &GscaOptions::default())?;
    let ai = max_principal_angle_deg(&im.z, &truth.z)?;
    let ao = max_principal_angle_deg(&om.z, &truth.z)?;
    let ag = max_principal_angle_deg(&gm.z, &truth.z)?;
    ensure!(ai < 10.0 && ao < 10.0 && ag < 10.0, "angles idiomix {ai:.2} os-sca {ao:.2} gsca {ag:.2}");
    let ratio = gm.sigma2 / truth.blocks[0].noise.powi(2);
    ensure!((ratio - 1.0).abs() <= 0.25, "sigma2 ratio {ratio:.3}");
    Ok(format!(
        "angles idiomix {ai:.2} os-sca {ao:.2} gsca {ag:.2} deg, sigma2 ratio {ratio:.3}"
    ))
}

fn dominance() -> Result<String> {
    let spec = SynthSpec::from_toml_str(
        r#"
seed = 11
samples = 100
rank = 3

[[block]]
name = "expr"
kind = "quantitative"
columns = 40
noise = 1.0
components = [0, 1]
component_scale = [4.0, 2.0]
simple_structure = true
loading_mean = 1.0
loading_sd = 0.2

[[block]]
name = "mut"
kind = "binary"
columns = 40
components = [2]
loading_mean = 1.0
loading_sd = 0.0
"#,
    )?;
    let (ds, _) = generate(&spec)?;
    let reference = pca_scores(&ds.blocks[0].numeric_matrix(), 2)?;
    let binary = ds.blocks[1].numeric_matrix();
    let (im, _) = fit_idiomix(&ds, 3, &RepresentationPolicy::default(), &IndscalOptions::default())?;
    let (om, _) = fit_os_sca(&ds, 3, &OsScaOptions::default())?;
    let (gm, _) = fit_gsca_dataset(&ds, 3, &GscaOptions::default())?;
    let mut detail = Vec::new();
    for (name, z) in [("idiomix", &im.z), ("os-sca", &om.z), ("gsca", &gm.z)] {
        let c: Vec<f64> = (0..2)
            .map(|r| congruence(z.column(r).as_slice(), reference.column(r).as_slice()))
            .collect::<heterofuse_core::Result<_>>()?;
        ensure!(c.iter().all(|&v| v >= 0.95), "{name} congruence {c:?}");
        detail.push(format!("{name} {:.3}/{:.3}", c[0], c[1]));
    }
    for (name, z) in [("idiomix", &im.z), ("os-sca", &om.z)] {
        let d = score_frequency_diagnostic(z, &binary)?;
        let c = d.correlation[2].context("third component has no variance")?.abs();
        ensure!(c > 0.9, "{name} SC3 frequency correlation {c:.3}");
        detail.push(format!("{name} SC3~freq {c:.3}"));
    }
    Ok(detail.join(", "))
}

fn run_cli(args: &[&str]) -> Result<()> {
    let out = Command::new(env!("CARGO_BIN_EXE_heterofuse")).args(args).output()?;
    if !out.status.success() {
        bail!("heterofuse {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr).trim());
    }
    Ok(())
}

const REPRO_SPEC: &str = r#"
seed = 5
samples = 60
rank = 2

[[block]]
name = "expr"
kind = "quantitative"
columns = 12
noise = 0.3

[[block]]
name = "mut"
kind = "binary"
columns = 8
loading_sd = 0.8
"#;

fn pipeline(root: &Path, threads: &str) -> Result<()> {
    let spec = root.join("spec.toml");
    std::fs::write(&spec, REPRO_SPEC)?;
    let data = root.join("data");
    run_cli(&["--threads", threads, "synth", "--spec", spec.to_str().unwrap(), "--out", data.to_str().unwrap()])?;
    let schema = data.join("schema.toml");
    let mut runs = Vec::new();
    for method in ["idiomix", "os-sca", "gsca"] {
        let out = root.join(method);
        run_cli(&[
            "--threads",
            threads,
            "fit",
            "--method",
            method,
            "--rank",
            "2",
            "--seed",
            "7",
            "--schema",
            schema.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])?;
        runs.push(out.to_str().unwrap().to_string());
    }
    let report = root.join("report");
    let mut args = vec!["--threads", threads, "report"];
    args.extend(runs.iter().map(String::as_str));
    args.extend(["--out", report.to_str().unwrap()]);
    run_cli(&args)
}

fn collect_files(dir: &Path, base: &Path, out: &mut Vec<std::path::PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(&path, base, out)?;
        } else {
            out.push(path.strip_prefix(base)?.to_path_buf());
        }
    }
    Ok(())
}

fn normalized(path: &Path) -> Result<Vec<u8>> {
    let bytes = std::fs::read(path)?;
    if path.file_name().is_some_and(|n| n == "run.json") {
        let mut v: serde_json::Value = serde_json::from_slice(&bytes)?;
        let obj = v.as_object_mut().context("run.json is not an object")?;
        ensure!(obj.remove("wall_time_seconds").is_some(), "run.json lacks wall_time_seconds");
        let schema = obj
            .get_mut("config")
            .and_then(|c| c.as_object_mut())
            .context("run.json lacks config")?;
        schema.remove("schema");
        return Ok(serde_json::to_vec(&v)?);
    }
    Ok(bytes)
}

fn reproducibility() -> Result<String> {
    let roots: Vec<tempfile::TempDir> = (0..3).map(|_| tempfile::tempdir()).collect::<std::io::Result<_>>()?;
    for (root, threads) in roots.iter().zip(["1", "1", "4"]) {
        pipeline(root.path(), threads)?;
    }
    let mut files = Vec::new();
    collect_files(roots[0].path(), roots[0].path(), &mut files)?;
    files.sort();
    ensure!(files.iter().any(|f| f.ends_with("scores.csv")), "no score files were written");
    for other in &roots[1..] {
        let mut theirs = Vec::new();
        collect_files(other.path(), other.path(), &mut theirs)?;
        theirs.sort();
        ensure!(files == theirs, "runs wrote different file sets");
        for f in &files {
            let a = normalized(&roots[0].path().join(f))?;
            let b = normalized(&other.path().join(f))?;
            ensure!(a == b, "{} differs", f.display());
        }
    }
    Ok(format!("{} files identical across 2 x 1 thread and 4 threads", files.len()))
}
