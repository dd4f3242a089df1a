use std::fs;

use anyhow::{Context, Result};
use heterofuse_core::{generate, write_dataset, SynthSpec};

use crate::output::{fmt, write_csv, write_labeled, write_scores};
use crate::SynthArgs;

pub fn run(args: &SynthArgs) -> Result<()> {
    let mut spec = SynthSpec::load(&args.spec).with_context(|| format!("reading {}", args.spec.display()))?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let (dataset, truth) = generate(&spec)?;
    let schema = write_dataset(&dataset, &args.out)?;
    let schema_path = args.out.join("schema.toml");
    fs::write(&schema_path, schema.to_toml_string()).with_context(|| format!("writing {}", schema_path.display()))?;

    let gt = args.out.join("ground_truth");
    fs::create_dir_all(&gt).with_context(|| format!("creating {}", gt.display()))?;
    fs::write(gt.join("spec.toml"), spec.to_toml_string()).context("writing the resolved spec")?;
    write_scores(&gt.join("scores.csv"), &dataset.sample_ids, &truth.z)?;
    for (block, bt) in dataset.blocks.iter().zip(&truth.blocks) {
        let per_var = bt.loadings.nrows() / block.n_variables();
        let labels: Vec<Vec<String>> = block
            .variables
            .iter()
            .flat_map(|v| {
                (0..per_var).map(move |c| {
                    let cat = if per_var == 1 { String::new() } else { format!("c{}", c + 1) };
                    vec![v.name.clone(), cat]
                })
            })
            .collect();
        write_labeled(
            &gt.join(format!("loadings_{}.csv", bt.name)),
            &["variable", "category"],
            &labels,
            &bt.loadings,
        )?;
        let header: Vec<String> = ["variable", "category", "offset"].iter().map(|s| s.to_string()).collect();
        let rows = labels
            .iter()
            .zip(bt.offsets.iter())
            .map(|(l, o)| vec![l[0].clone(), l[1].clone(), fmt(*o)]);
        write_csv(&gt.join(format!("offsets_{}.csv", bt.name)), &header, rows)?;
    }
    let header: Vec<String> = ["block", "kind", "noise"].iter().map(|s| s.to_string()).collect();
    let rows = truth
        .blocks
        .iter()
        .map(|b| vec![b.name.clone(), format!("{:?}", b.kind).to_lowercase(), fmt(b.noise)]);
    write_csv(&gt.join("blocks.csv"), &header, rows)?;
    log::info!("synthetic dataset written to {}", args.out.display());
    Ok(())
}
