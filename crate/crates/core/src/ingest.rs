//! Schema parsing and CSV ingestion.
//!
//! A schema is a TOML document with one `[[block]]` table per data file:
//!
//! ```toml
//! [[block]]
//! name = "cna"
//! path = "cna.csv"
//! [block.columns]
//! gene_a = "binary"
//! grade = "ordinal:low,mid,high"
//! ```

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{ColumnData, DataBlock, MultiBlockDataset, ScaleKind, Variable};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    #[serde(rename = "block")]
    pub blocks: Vec<BlockSchema>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockSchema {
    pub name: String,
    pub path: PathBuf,
    /// Column name to `scale[:label1,label2,...]`.
    pub columns: BTreeMap<String, String>,
}

/// Parsed form of a column entry.
#[derive(Clone, Debug, PartialEq)]
pub struct ColumnSpec {
    pub scale: ScaleKind,
    pub labels: Option<Vec<String>>,
}

impl ColumnSpec {
    pub fn parse(entry: &str) -> Result<Self> {
        let (scale, labels) = match entry.split_once(':') {
            Some((s, l)) => (s, Some(l)),
            None => (entry, None),
        };
        let scale: ScaleKind = scale.parse()?;
        let labels = labels.map(|l| {
            l.split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect::<Vec<_>>()
        });
        if scale.is_quantitative() && labels.is_some() {
            return Err(Error::Schema(format!("{scale} columns take no labels: `{entry}`")));
        }
        if matches!(scale, ScaleKind::Nominal | ScaleKind::Ordinal) && labels.is_none() {
            return Err(Error::Schema(format!("{scale} columns must list their labels: `{entry}`")));
        }
        Ok(ColumnSpec { scale, labels })
    }

    pub fn render(scale: ScaleKind, labels: Option<&[String]>) -> String {
        match labels {
            Some(l) => format!("{scale}:{}", l.join(",")),
            None => scale.to_string(),
        }
    }
}

impl Schema {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let schema: Schema = toml::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        if schema.blocks.is_empty() {
            return Err(Error::Schema("no [[block]] entries".into()));
        }
        let mut names = HashSet::new();
        for b in &schema.blocks {
            if !names.insert(b.name.as_str()) {
                return Err(Error::Schema(format!("duplicate block name `{}`", b.name)));
            }
            for entry in b.columns.values() {
                ColumnSpec::parse(entry)?;
            }
        }
        Ok(schema)
    }

    /// Read a schema file; relative block paths are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut schema = Schema::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for b in &mut schema.blocks {
            if b.path.is_relative() {
                b.path = base.join(&b.path);
            }
        }
        Ok(schema)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("schema serializes")
    }
}

struct RawTable {
    ids: Vec<String>,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_table(path: &Path) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => Error::Io {
                path: path.to_path_buf(),
                source,
            },
            other => Error::Schema(format!("{}: {other:?}", path.display())),
        })?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.len() < 2 {
        return Err(Error::Schema(format!(
            "{}: need a sample-id column and at least one data column",
            path.display()
        )));
    }
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::RaggedRow {
                path: path.to_path_buf(),
                row: i + 2,
                found: rec.len(),
                expected: header.len(),
            });
        }
        let id = rec[0].to_string();
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateSample(id));
        }
        ids.push(id);
        rows.push(rec.iter().skip(1).map(str::to_string).collect());
    }
    Ok(RawTable {
        ids,
        header: header[1..].to_vec(),
        rows,
    })
}

/// Load every block named in `schema`, reading block `k` from `data_paths[k]`.
///
/// Blocks are aligned on the intersection of their sample ids, in the order
/// the ids appear in the first block.
pub fn load_dataset(data_paths: &[PathBuf], schema: &Schema) -> Result<MultiBlockDataset> {
    if data_paths.len() != schema.blocks.len() {
        return Err(Error::Schema(format!(
            "{} data files for {} schema blocks",
            data_paths.len(),
            schema.blocks.len()
        )));
    }
    let tables = data_paths
        .iter()
        .map(|p| read_table(p))
        .collect::<Result<Vec<_>>>()?;

    let mut common: Vec<String> = tables[0].ids.clone();
    for t in &tables[1..] {
        let ids: HashSet<&str> = t.ids.iter().map(String::as_str).collect();
        common.retain(|id| ids.contains(id.as_str()));
    }
    if common.is_empty() {
        return Err(Error::EmptyIntersection);
    }

    let mut blocks = Vec::with_capacity(tables.len());
    for (table, bs) in tables.iter().zip(&schema.blocks) {
        let row_of: HashMap<&str, usize> = table
            .ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let rows: Vec<usize> = common.iter().map(|id| row_of[id.as_str()]).collect();

        for declared in bs.columns.keys() {
            if !table.header.contains(declared) {
                return Err(Error::Schema(format!(
                    "block `{}`: column `{declared}` is declared but missing from the file",
                    bs.name
                )));
            }
        }
        let mut vars = Vec::with_capacity(table.header.len());
        for (j, col) in table.header.iter().enumerate() {
            let entry = bs.columns.get(col).ok_or_else(|| {
                Error::Schema(format!("block `{}`: column `{col}` has no declared scale", bs.name))
            })?;
            let spec = ColumnSpec::parse(entry)?;
            let raw: Vec<&str> = rows.iter().map(|&r| table.rows[r][j].as_str()).collect();
            vars.push(build_variable(col, &spec, &raw)?);
        }
        blocks.push(DataBlock::new(bs.name.clone(), vars)?);
    }
    MultiBlockDataset::new(common, blocks)
}

/// Load a dataset using the paths recorded in the schema itself.
pub fn load_from_schema(schema_path: &Path) -> Result<MultiBlockDataset> {
    let schema = Schema::load(schema_path)?;
    let paths: Vec<PathBuf> = schema.blocks.iter().map(|b| b.path.clone()).collect();
    load_dataset(&paths, &schema)
}

/// Write each block to `<dir>/<block>.csv` and return a schema pointing at them.
///
/// Paths in the returned schema are relative to `dir`.
pub fn write_dataset(dataset: &MultiBlockDataset, dir: &Path) -> Result<Schema> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut schema = Schema { blocks: Vec::new() };
    for block in &dataset.blocks {
        let file = format!("{}.csv", block.name);
        let path = dir.join(&file);
        let mut w = csv::Writer::from_path(&path)?;
        let mut header = vec!["id".to_string()];
        header.extend(block.variables.iter().map(|v| v.name.clone()));
        w.write_record(&header)?;
        for (i, id) in dataset.sample_ids.iter().enumerate() {
            let mut rec = vec![id.clone()];
            for v in &block.variables {
                rec.push(match &v.data {
                    ColumnData::Numeric(x) => format!("{:.16e}", x[i]),
                    ColumnData::Categorical { codes, labels } => labels[codes[i]].clone(),
                });
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|source| Error::Io { path: path.clone(), source })?;
        let columns = block
            .variables
            .iter()
            .map(|v| {
                let labels = match v.scale {
                    ScaleKind::Binary if v.labels() == Some(&["0".to_string(), "1".to_string()][..]) => None,
                    _ => v.labels(),
                };
                (v.name.clone(), ColumnSpec::render(v.scale, labels))
            })
            .collect();
        schema.blocks.push(BlockSchema {
            name: block.name.clone(),
            path: PathBuf::from(file),
            columns,
        });
    }
    Ok(schema)
}

fn build_variable(name: &str, spec: &ColumnSpec, raw: &[&str]) -> Result<Variable> {
    if spec.scale.is_quantitative() {
        let values = raw
            .iter()
            .map(|s| {
                if s.is_empty() {
                    return Err(Error::Invalid(format!("column `{name}` has a missing value")));
                }
                s.parse::<f64>().map_err(|_| Error::NotNumeric {
                    column: name.to_string(),
                    value: s.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        return Variable::numeric(name, spec.scale, values);
    }
    let labels = match (&spec.labels, spec.scale) {
        (Some(l), _) => l.clone(),
        (None, ScaleKind::Binary) => vec!["0".to_string(), "1".to_string()],
        (None, _) => unreachable!("validated by ColumnSpec::parse"),
    };
    Variable::categorical(name, spec.scale, raw, labels)
}
