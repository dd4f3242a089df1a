use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use heterofuse_core::linalg::pca_scores;
use heterofuse_core::metrics::{congruence, score_frequency_diagnostic};
use heterofuse_core::{load_from_schema, MultiBlockDataset, ScaleKind};
use nalgebra::{DMatrix, DVector};

use crate::output::{fmt, read_labeled, write_csv};
use crate::ReportArgs;

struct Run {
    dir: PathBuf,
    group: String,
    method: String,
    schema: PathBuf,
    ids: Vec<String>,
    scores: DMatrix<f64>,
    variance_header: Vec<String>,
    variance_rows: Vec<String>,
    variance: DMatrix<f64>,
}

fn load_run(dir: &Path) -> Result<Run> {
    let json_path = dir.join("run.json");
    let text = fs::read_to_string(&json_path).with_context(|| format!("reading {}", json_path.display()))?;
    let record: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", json_path.display()))?;
    let config = &record["config"];
    let method = config["method"]
        .as_str()
        .with_context(|| format!("{}: missing config.method", json_path.display()))?
        .to_string();
    let schema = PathBuf::from(
        config["schema"]
            .as_str()
            .with_context(|| format!("{}: missing config.schema", json_path.display()))?,
    );
    let (_, ids, scores) = read_labeled(&dir.join("scores.csv"), 1)?;
    let (variance_header, rows, variance) = read_labeled(&dir.join("variance.csv"), 1)?;
    Ok(Run {
        dir: dir.to_path_buf(),
        group: method.clone(),
        method,
        schema,
        ids: ids.into_iter().map(|mut l| l.remove(0)).collect(),
        scores,
        variance_header,
        variance_rows: rows.into_iter().map(|mut l| l.remove(0)).collect(),
        variance,
    })
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn reference_block(ds: &MultiBlockDataset, name: Option<&str>) -> Result<usize> {
    match name {
        Some(n) => ds
            .blocks
            .iter()
            .position(|b| b.name == n)
            .with_context(|| format!("no block named `{n}`")),
        None => ds
            .blocks
            .iter()
            .position(|b| b.all_scales(ScaleKind::is_quantitative))
            .context("no block is entirely ratio/interval; choose one with --reference-block"),
    }
}

pub fn run(args: &ReportArgs) -> Result<()> {
    let mut runs = args.runs.iter().map(|d| load_run(d)).collect::<Result<Vec<_>>>()?;
    for i in 0..runs.len() {
        if runs.iter().filter(|r| r.method == runs[i].method).count() > 1 {
            let name = runs[i]
                .dir
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| runs[i].dir.display().to_string());
            runs[i].group = format!("{}:{}", runs[i].method, name);
        }
    }
    let dataset = load_from_schema(&runs[0].schema)
        .with_context(|| format!("loading {}", runs[0].schema.display()))?;
    for r in &runs {
        if r.ids != dataset.sample_ids {
            bail!("{} was fitted on different samples than {}", r.dir.display(), runs[0].dir.display());
        }
    }
    fs::create_dir_all(args.out.join("diagnostics")).with_context(|| format!("creating {}", args.out.display()))?;

    write_variance_table(&args.out.join("variance_table.csv"), &runs)?;

    // congruence with the reference block's principal components
    let k = reference_block(&dataset, args.reference_block.as_deref())?;
    let block = &dataset.blocks[k];
    let x = block.numeric_matrix();
    let max_r = runs.iter().map(|r| r.scores.ncols()).max().unwrap_or(0);
    let limit = x.nrows().min(x.ncols() + 1);
    let ref_r = max_r.min(limit.saturating_sub(1));
    let mut rows = Vec::new();
    if ref_r > 0 {
        let reference = pca_scores(&x, ref_r)?;
        for r in &runs {
            for c in 0..r.scores.ncols().min(ref_r) {
                let v = congruence(r.scores.column(c).as_slice(), reference.column(c).as_slice())?;
                rows.push(vec![r.group.clone(), r.method.clone(), block.name.clone(), format!("SC{}", c + 1), fmt(v)]);
            }
        }
    }
    write_csv(
        &args.out.join("congruence.csv"),
        &strings(&["run", "method", "reference_block", "component", "congruence"]),
        rows,
    )?;

    write_diagnostics(&args.out.join("diagnostics"), &runs, &dataset)?;
    log::info!("report written to {}", args.out.display());
    Ok(())
}

/// Table with one column group per run, components as rows and a final `Cum` row.
fn write_variance_table(path: &Path, runs: &[Run]) -> Result<()> {
    let mut row_names: Vec<String> = Vec::new();
    for r in runs {
        for name in &r.variance_rows {
            if name != "Cum" && !row_names.contains(name) {
                row_names.push(name.clone());
            }
        }
    }
    row_names.sort_by_key(|n| n.trim_start_matches("SC").parse::<usize>().unwrap_or(usize::MAX));
    row_names.push("Cum".into());
    let mut header = vec!["component".to_string()];
    for r in runs {
        header.extend(r.variance_header.iter().map(|h| format!("{}/{}", r.group, h)));
    }
    let rows = row_names.iter().map(|name| {
        let mut row = vec![name.clone()];
        for r in runs {
            match r.variance_rows.iter().position(|n| n == name) {
                Some(i) => row.extend(r.variance.row(i).iter().map(|&v| fmt(v))),
                None => row.extend(std::iter::repeat_n(String::new(), r.variance_header.len())),
            }
        }
        row
    });
    write_csv(path, &header, rows)
}

fn write_diagnostics(dir: &Path, runs: &[Run], ds: &MultiBlockDataset) -> Result<()> {
    let mut scores = Vec::new();
    for r in runs {
        for (i, id) in r.ids.iter().enumerate() {
            for c in 0..r.scores.ncols() {
                scores.push(vec![r.group.clone(), r.method.clone(), id.clone(), format!("SC{}", c + 1), fmt(r.scores[(i, c)])]);
            }
        }
    }
    write_csv(&dir.join("scores.csv"), &strings(&["run", "method", "sample", "component", "score"]), scores)?;

    let mut loadings = Vec::new();
    for r in runs {
        for table in ["loadings", "loadings_binary", "loadings_quant"] {
            let path = r.dir.join(format!("{table}.csv"));
            if !path.exists() {
                continue;
            }
            let (comps, labels, m) = read_labeled(&path, 2)?;
            for (i, l) in labels.iter().enumerate() {
                for (c, comp) in comps.iter().enumerate() {
                    loadings.push(vec![
                        r.group.clone(),
                        r.method.clone(),
                        table.to_string(),
                        l[0].clone(),
                        l[1].clone(),
                        comp.clone(),
                        fmt(m[(i, c)]),
                    ]);
                }
            }
        }
    }
    write_csv(
        &dir.join("loadings.csv"),
        &strings(&["run", "method", "table", "block", "variable", "component", "loading"]),
        loadings,
    )?;

    let mut variance = Vec::new();
    for r in runs {
        for (i, name) in r.variance_rows.iter().enumerate() {
            for (j, col) in r.variance_header.iter().enumerate() {
                variance.push(vec![r.group.clone(), r.method.clone(), name.clone(), col.clone(), fmt(r.variance[(i, j)])]);
            }
        }
    }
    write_csv(&dir.join("variance.csv"), &strings(&["run", "method", "component", "block", "percent"]), variance)?;

    let binary: Vec<DVector<f64>> = ds
        .blocks
        .iter()
        .flat_map(|b| b.variables.iter())
        .filter(|v| v.scale == ScaleKind::Binary)
        .map(|v| DVector::from_vec(v.numeric_view()))
        .collect();
    if binary.is_empty() {
        return Ok(());
    }
    let binary = DMatrix::from_columns(&binary);
    let mut points = Vec::new();
    let mut summary = Vec::new();
    for r in runs {
        let d = score_frequency_diagnostic(&r.scores, &binary)?;
        for (i, id) in r.ids.iter().enumerate() {
            for c in 0..r.scores.ncols() {
                points.push(vec![
                    r.group.clone(),
                    r.method.clone(),
                    id.clone(),
                    fmt(d.frequency[i]),
                    format!("SC{}", c + 1),
                    fmt(r.scores[(i, c)]),
                ]);
            }
        }
        for (c, corr) in d.correlation.iter().enumerate() {
            summary.push(vec![
                r.group.clone(),
                r.method.clone(),
                format!("SC{}", c + 1),
                corr.map(fmt).unwrap_or_default(),
            ]);
        }
    }
    write_csv(
        &dir.join("score_frequency.csv"),
        &strings(&["run", "method", "sample", "frequency", "component", "score"]),
        points,
    )?;
    write_csv(
        &dir.join("frequency_correlation.csv"),
        &strings(&["run", "method", "component", "correlation"]),
        summary,
    )?;
    Ok(())
}
