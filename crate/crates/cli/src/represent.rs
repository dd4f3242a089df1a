use std::fs;

use anyhow::{Context, Result};
use heterofuse_core::representation::{association_table, build_representation_stack, RepresentationPolicy};
use heterofuse_core::{load_from_schema, MultiBlockDataset, RepresentationMatrix};

use crate::output::{fmt, write_csv};
use crate::{AssocArgs, PolicyArgs, RepresentArgs};

fn stack(schema: &std::path::Path, policy: &PolicyArgs) -> Result<(MultiBlockDataset, Vec<RepresentationMatrix>)> {
    let dataset = load_from_schema(schema).with_context(|| format!("loading {}", schema.display()))?;
    let policy = RepresentationPolicy {
        ordinal: policy.ordinal.into(),
        max_samples: policy.max_samples,
    };
    let stack = build_representation_stack(&dataset, &policy)?;
    Ok((dataset, stack))
}

/// Qualified `block/variable` name of slab `k`.
fn slab_name(ds: &MultiBlockDataset, s: &RepresentationMatrix, k: usize) -> String {
    match &s.origin {
        Some(o) => format!("{}/{}", ds.blocks[o.block].name, o.name),
        None => format!("slab{k}"),
    }
}

pub fn run_represent(args: &RepresentArgs) -> Result<()> {
    let (ds, stack) = stack(&args.schema, &args.policy)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let width = stack.len().to_string().len();
    let mut manifest = Vec::with_capacity(stack.len());
    for (k, s) in stack.iter().enumerate() {
        let file = format!("slab_{k:0width$}.csv");
        let header: Vec<String> = (1..=s.dim()).map(|c| format!("c{c}")).collect();
        let rows = s.s.row_iter().map(|r| r.iter().map(|&v| fmt(v)).collect::<Vec<_>>());
        write_csv(&args.out.join(&file), &header, rows)?;
        let (block, variable) = match &s.origin {
            Some(o) => (ds.blocks[o.block].name.clone(), o.name.clone()),
            None => (String::new(), slab_name(&ds, s, k)),
        };
        manifest.push(vec![k.to_string(), block, variable, s.form.as_str().to_string(), file]);
    }
    let header: Vec<String> = ["index", "block", "variable", "form", "file"].iter().map(|s| s.to_string()).collect();
    write_csv(&args.out.join("manifest.csv"), &header, manifest)
}

pub fn run_assoc(args: &AssocArgs) -> Result<()> {
    let (ds, stack) = stack(&args.schema, &args.policy)?;
    let table = association_table(&stack)?;
    let names: Vec<String> = stack.iter().enumerate().map(|(k, s)| slab_name(&ds, s, k)).collect();
    if let Some(dir) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut header = vec!["variable".to_string()];
    header.extend(names.iter().cloned());
    let rows = names.iter().enumerate().map(|(j, n)| {
        let mut row = vec![n.clone()];
        row.extend(table.row(j).iter().map(|&v| fmt(v)));
        row
    });
    write_csv(&args.out, &header, rows)
}
