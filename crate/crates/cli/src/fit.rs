use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use heterofuse_core::indscal::fit_idiomix;
use heterofuse_core::representation::{OrdinalForm, RepresentationPolicy};
use heterofuse_core::{
    fit_gsca_dataset, fit_os_sca, load_from_schema, GscaOptions, IndscalOptions, Method,
    MultiBlockDataset, OsScaOptions, ScaleKind,
};
use serde::Serialize;

use crate::output::{fmt, write_csv, write_labeled, write_scores, write_trace, write_variance};
use crate::{FitArgs, Outcome};

#[derive(Serialize)]
struct RunConfig {
    method: &'static str,
    rank: usize,
    seed: u64,
    tol: f64,
    max_iter: usize,
    n_starts: usize,
    schema: String,
    ordinal: &'static str,
    max_samples: usize,
}

#[derive(Serialize)]
struct GscaExtras {
    sigma2: f64,
    /// Which Gaussian log term the fitted objective and the sigma2 update use.
    sigma2_convention: &'static str,
    /// Final objective with a single `log(2 pi sigma2) / 2` term.
    objective_single_log_term: f64,
}

#[derive(Serialize)]
struct RunRecord {
    tool: &'static str,
    version: &'static str,
    config: RunConfig,
    objective: f64,
    iterations: usize,
    converged: bool,
    restarts: usize,
    best_start: usize,
    samples: usize,
    wall_time_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    gsca: Option<GscaExtras>,
}

/// `(block, variable)` labels for every variable selected by `keep`, in dataset order.
pub fn variable_labels(ds: &MultiBlockDataset, keep: impl Fn(ScaleKind) -> bool) -> Vec<Vec<String>> {
    ds.blocks
        .iter()
        .flat_map(|b| {
            b.variables
                .iter()
                .filter(|v| keep(v.scale))
                .map(|v| vec![b.name.clone(), v.name.clone()])
                .collect::<Vec<_>>()
        })
        .collect()
}

pub fn run(args: &FitArgs) -> Result<Outcome> {
    let method: Method = args.method.into();
    let out = &args.out;
    if out.join("run.json").exists() && !args.force {
        anyhow::bail!("{} already holds a run; pass --force to overwrite", out.display());
    }
    let dataset = load_from_schema(&args.schema).with_context(|| format!("loading {}", args.schema.display()))?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let schema = fs::canonicalize(&args.schema).unwrap_or_else(|_| args.schema.clone());
    let policy = RepresentationPolicy {
        ordinal: args.policy.ordinal.into(),
        max_samples: args.policy.max_samples,
    };
    let started = Instant::now();

    let (report, trace, iterations, start, gsca, defaults) = match method {
        Method::Idiomix => {
            let d = IndscalOptions::default();
            let opts = IndscalOptions {
                max_iter: args.max_iter.unwrap_or(d.max_iter),
                tol: args.tol.unwrap_or(d.tol),
                n_starts: args.n_starts.unwrap_or(d.n_starts),
                seed: args.seed,
            };
            let (model, report) = fit_idiomix(&dataset, args.rank, &policy, &opts)?;
            write_scores(&out.join("scores.csv"), &dataset.sample_ids, &model.z)?;
            let labels = variable_labels(&dataset, |_| true);
            write_labeled(&out.join("loadings.csv"), &["block", "variable"], &labels, &model.a)?;
            (report, model.loss_trace, model.iterations, model.start, None, (opts.tol, opts.max_iter, opts.n_starts))
        }
        Method::OsSca => {
            let d = OsScaOptions::default();
            let opts = OsScaOptions {
                max_iter: args.max_iter.unwrap_or(d.max_iter),
                tol: args.tol.unwrap_or(d.tol),
                n_starts: args.n_starts.unwrap_or(d.n_starts),
                seed: args.seed,
            };
            let (model, report) = fit_os_sca(&dataset, args.rank, &opts)?;
            write_scores(&out.join("scores.csv"), &dataset.sample_ids, &model.z)?;
            let labels = variable_labels(&dataset, |_| true);
            write_labeled(&out.join("loadings.csv"), &["block", "variable"], &labels, &model.loadings_all())?;
            let rows = model.quantifications.iter().flatten().flat_map(|q| {
                q.labels
                    .iter()
                    .zip(&q.y)
                    .map(|(l, y)| vec![q.variable.clone(), l.clone(), fmt(*y)])
                    .collect::<Vec<_>>()
            });
            let header: Vec<String> = ["variable", "category", "value"].iter().map(|s| s.to_string()).collect();
            write_csv(&out.join("quantifications.csv"), &header, rows)?;
            (report, model.loss_trace, model.iterations, model.start, None, (opts.tol, opts.max_iter, opts.n_starts))
        }
        Method::Gsca => {
            let d = GscaOptions::default();
            let opts = GscaOptions {
                max_iter: args.max_iter.unwrap_or(d.max_iter),
                tol: args.tol.unwrap_or(d.tol),
                n_starts: args.n_starts.unwrap_or(d.n_starts),
                seed: args.seed,
            };
            let (model, report) = fit_gsca_dataset(&dataset, args.rank, &opts)?;
            write_scores(&out.join("scores.csv"), &dataset.sample_ids, &model.z)?;
            let bin = variable_labels(&dataset, |s| s == ScaleKind::Binary);
            let quant = variable_labels(&dataset, ScaleKind::is_quantitative);
            write_labeled(&out.join("loadings_binary.csv"), &["block", "variable"], &bin, &model.a1)?;
            write_labeled(&out.join("loadings_quant.csv"), &["block", "variable"], &quant, &model.a2)?;
            let header: Vec<String> = ["part", "block", "variable", "offset"].iter().map(|s| s.to_string()).collect();
            let rows = bin
                .iter()
                .zip(model.mu1.iter())
                .map(|(l, m)| ("binary", l, *m))
                .chain(quant.iter().zip(model.mu2.iter()).map(|(l, m)| ("quantitative", l, *m)))
                .map(|(part, l, m)| vec![part.to_string(), l[0].clone(), l[1].clone(), fmt(m)]);
            write_csv(&out.join("offsets.csv"), &header, rows)?;
            let extras = GscaExtras {
                sigma2: model.sigma2,
                sigma2_convention: "per-entry log term: I*J2/2 * log(2*pi*sigma2); sigma2 = mean squared residual",
                objective_single_log_term: model.objective_single_log,
            };
            (report, model.nll_trace, model.iterations, model.start, Some(extras), (opts.tol, opts.max_iter, opts.n_starts))
        }
    };
    write_variance(&out.join("variance.csv"), &report)?;
    write_trace(&out.join("trace.csv"), &trace)?;

    let converged = report.convergence.converged;
    let record = RunRecord {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: RunConfig {
            method: method.as_str(),
            rank: args.rank,
            seed: args.seed,
            tol: defaults.0,
            max_iter: defaults.1,
            n_starts: defaults.2,
            schema: schema.display().to_string(),
            ordinal: match policy.ordinal {
                OrdinalForm::MidrankOuter => "midrank",
                OrdinalForm::Nominal => "nominal",
            },
            max_samples: policy.max_samples,
        },
        objective: report.convergence.final_loss,
        iterations,
        converged,
        restarts: report.convergence.restarts,
        best_start: start,
        samples: dataset.n_samples(),
        wall_time_seconds: started.elapsed().as_secs_f64(),
        gsca,
    };
    write_run_json(out, &record)?;
    log::info!("{} fit written to {}", method.as_str(), out.display());
    if converged {
        Ok(Outcome::Done)
    } else {
        Ok(Outcome::NotConverged(format!(
            "{} did not converge within {} iterations; artifacts written to {}",
            method.as_str(),
            iterations,
            out.display()
        )))
    }
}

fn write_run_json(out: &Path, record: &RunRecord) -> Result<()> {
    let path = out.join("run.json");
    let text = serde_json::to_string_pretty(record)?;
    fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))
}
