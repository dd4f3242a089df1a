use std::path::Path;

use anyhow::{Context, Result};
use heterofuse_core::FitReport;
use nalgebra::DMatrix;

/// Full-precision float text; round-trips exactly.
pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn component_names(r: usize) -> Vec<String> {
    (1..=r).map(|c| format!("SC{c}")).collect()
}

pub fn write_csv<I>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let header = r.headers()?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<Result<Vec<Vec<String>>, _>>()
        .with_context(|| format!("parsing {}", path.display()))?;
    Ok((header, rows))
}

/// Rows of `m` prefixed by the given label columns.
pub fn write_labeled(path: &Path, label_header: &[&str], labels: &[Vec<String>], m: &DMatrix<f64>) -> Result<()> {
    let mut header: Vec<String> = label_header.iter().map(|s| s.to_string()).collect();
    header.extend(component_names(m.ncols()));
    let rows = labels.iter().enumerate().map(|(i, l)| {
        let mut row = l.clone();
        row.extend(m.row(i).iter().map(|&v| fmt(v)));
        row
    });
    write_csv(path, &header, rows)
}

pub fn write_scores(path: &Path, ids: &[String], z: &DMatrix<f64>) -> Result<()> {
    let labels: Vec<Vec<String>> = ids.iter().map(|id| vec![id.clone()]).collect();
    write_labeled(path, &["id"], &labels, z)
}

pub fn write_trace(path: &Path, trace: &[f64]) -> Result<()> {
    let header = vec!["iteration".to_string(), "objective".to_string()];
    write_csv(path, &header, trace.iter().enumerate().map(|(i, v)| vec![i.to_string(), fmt(*v)]))
}

/// Explained-variance table: one row per component plus a `Cum` row.
pub fn write_variance(path: &Path, report: &FitReport) -> Result<()> {
    let mut header = vec!["component".to_string()];
    header.extend(report.blocks.iter().map(|b| b.label()));
    header.push("Total".into());
    let r = report.n_components();
    let mut rows: Vec<Vec<String>> = (0..r)
        .map(|c| {
            let mut row = vec![format!("SC{}", c + 1)];
            row.extend(report.per_component.row(c).iter().map(|&v| fmt(v)));
            row.push(fmt(report.per_component_total[c]));
            row
        })
        .collect();
    let mut cum = vec!["Cum".to_string()];
    cum.extend(report.cumulative().into_iter().map(fmt));
    cum.push(fmt(report.cumulative_total()));
    rows.push(cum);
    write_csv(path, &header, rows)
}

/// Parse a labelled numeric table written by [`write_labeled`].
pub fn read_labeled(path: &Path, n_labels: usize) -> Result<(Vec<String>, Vec<Vec<String>>, DMatrix<f64>)> {
    let (header, rows) = read_csv(path)?;
    anyhow::ensure!(header.len() >= n_labels, "{}: too few columns", path.display());
    let cols = header.len() - n_labels;
    let mut values = Vec::with_capacity(rows.len() * cols);
    let mut labels = Vec::with_capacity(rows.len());
    for row in &rows {
        labels.push(row[..n_labels].to_vec());
        for v in &row[n_labels..] {
            values.push(
                v.parse::<f64>()
                    .with_context(|| format!("{}: `{v}` is not a number", path.display()))?,
            );
        }
    }
    let m = DMatrix::from_row_slice(rows.len(), cols, &values);
    Ok((header[n_labels..].to_vec(), labels, m))
}
