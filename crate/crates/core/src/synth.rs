//! Mixed-scale data generated from a known latent structure.
//!
//! ```toml
//! seed = 7
//! samples = 100
//! rank = 3
//!
//! [[block]]
//! name = "expr"
//! kind = "quantitative"
//! columns = 30
//! noise = 0.3
//!
//! [[block]]
//! name = "mut"
//! kind = "binary"
//! columns = 20
//! offset_mean = -0.5
//! ```

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{DataBlock, MultiBlockDataset, ScaleKind, Variable};
use crate::error::{Error, Result};
use crate::gsca::logit_link;
use crate::linalg::{center_columns, orthonormalize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    /// Identity link plus Gaussian noise.
    Quantitative,
    /// Logit link plus Bernoulli draws.
    Binary,
    /// Thresholded latent quantitative column.
    Ordinal,
    /// Softmax over category scores.
    Nominal,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthBlock {
    pub name: String,
    pub kind: SynthKind,
    pub columns: usize,
    /// Noise standard deviation (quantitative and ordinal latent columns).
    #[serde(default)]
    pub noise: f64,
    /// Signal-strength multiplier applied to the loadings.
    #[serde(default = "one")]
    pub strength: f64,
    #[serde(default)]
    pub loading_mean: f64,
    #[serde(default = "one")]
    pub loading_sd: f64,
    #[serde(default)]
    pub offset_mean: f64,
    #[serde(default)]
    pub offset_sd: f64,
    /// Latent components this block loads on; all by default.
    #[serde(default)]
    pub components: Option<Vec<usize>>,
    /// Per-component multipliers, aligned with `components`.
    #[serde(default)]
    pub component_scale: Option<Vec<f64>>,
    /// Each column loads on exactly one of `components`, assigned round-robin.
    #[serde(default)]
    pub simple_structure: bool,
    /// Category count for ordinal and nominal blocks.
    #[serde(default)]
    pub categories: Option<usize>,
    /// Ordinal thresholds on the latent scale; equiprobable quantiles when absent.
    #[serde(default)]
    pub cutpoints: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub seed: u64,
    pub samples: usize,
    pub rank: usize,
    #[serde(rename = "block")]
    pub blocks: Vec<SynthBlock>,
}

impl SynthSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: SynthSpec = toml::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank >= self.samples {
            return Err(Error::RankTooLarge {
                rank: self.rank,
                limit: self.samples,
            });
        }
        if self.blocks.is_empty() {
            return Err(Error::Schema("synth spec has no blocks".into()));
        }
        for b in &self.blocks {
            let bad = |msg: String| Err(Error::Schema(format!("block `{}`: {msg}", b.name)));
            if b.columns == 0 {
                return bad("needs at least one column".into());
            }
            if !(b.noise >= 0.0) {
                return bad(format!("noise must be >= 0, got {}", b.noise));
            }
            if !(b.strength > 0.0) {
                return bad(format!("strength must be > 0, got {}", b.strength));
            }
            if !(b.loading_sd >= 0.0 && b.offset_sd >= 0.0) {
                return bad("standard deviations must be >= 0".into());
            }
            let comps = b.active_components(self.rank);
            if comps.iter().any(|&c| c >= self.rank) {
                return bad(format!("component index out of range for rank {}", self.rank));
            }
            if let Some(s) = &b.component_scale {
                if s.len() != comps.len() {
                    return bad("component_scale must match components".into());
                }
                if s.iter().any(|v| !(*v > 0.0)) {
                    return bad("component_scale entries must be > 0".into());
                }
            }
            if b.simple_structure && comps.is_empty() {
                return bad("simple_structure needs at least one component".into());
            }
            match b.kind {
                SynthKind::Ordinal | SynthKind::Nominal => {
                    let c = b.categories.unwrap_or(0);
                    if let Some(cuts) = &b.cutpoints {
                        if b.kind == SynthKind::Nominal {
                            return bad("cutpoints apply to ordinal blocks only".into());
                        }
                        if cuts.windows(2).any(|w| !(w[0] < w[1])) {
                            return bad("cutpoints must be strictly increasing".into());
                        }
                        if b.categories.is_some() && c != cuts.len() + 1 {
                            return bad("categories must equal cutpoints + 1".into());
                        }
                    } else if c < 2 {
                        return bad("needs categories >= 2".into());
                    }
                }
                _ => {
                    if b.categories.is_some() || b.cutpoints.is_some() {
                        return bad("categories/cutpoints apply to ordinal or nominal blocks".into());
                    }
                }
            }
        }
        Ok(())
    }
}

impl SynthBlock {
    fn active_components(&self, rank: usize) -> Vec<usize> {
        self.components.clone().unwrap_or_else(|| (0..rank).collect())
    }

    fn n_categories(&self) -> usize {
        match &self.cutpoints {
            Some(c) => c.len() + 1,
            None => self.categories.unwrap_or(2),
        }
    }
}

/// Generating parameters of one block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockTruth {
    pub name: String,
    pub kind: SynthKind,
    /// `J x R`; for nominal blocks `(J*C) x R`, category-major within each variable.
    pub loadings: DMatrix<f64>,
    /// `J` offsets; `J*C` for nominal blocks.
    pub offsets: DVector<f64>,
    pub noise: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    /// `I x R`, centered, `Z'Z = I * I_R`.
    pub z: DMatrix<f64>,
    pub blocks: Vec<BlockTruth>,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn bernoulli_draw(rng: &mut ChaCha8Rng, theta: f64) -> f64 {
    if rng.random::<f64>() < logit_link(theta) {
        1.0
    } else {
        0.0
    }
}

fn draw_loadings(rng: &mut ChaCha8Rng, b: &SynthBlock, rows: usize, rank: usize, per_var: usize) -> DMatrix<f64> {
    let comps = b.active_components(rank);
    let mut a = DMatrix::zeros(rows, rank);
    for row in 0..rows {
        let var = row / per_var;
        for (k, &c) in comps.iter().enumerate() {
            let v = b.loading_mean + b.loading_sd * normal(rng);
            let active = !b.simple_structure || var % comps.len() == k;
            if active {
                let scale = b.component_scale.as_ref().map_or(1.0, |s| s[k]);
                a[(row, c)] = v * scale * b.strength;
            }
        }
    }
    a
}

/// Draw a dataset and the parameters that generated it.
pub fn generate(spec: &SynthSpec) -> Result<(MultiBlockDataset, GroundTruth)> {
    spec.validate()?;
    let (n, r) = (spec.samples, spec.rank);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let z = if r == 0 {
        DMatrix::zeros(n, 0)
    } else {
        let mut raw = DMatrix::from_fn(n, r, |_, _| normal(&mut rng));
        center_columns(&mut raw);
        orthonormalize(&raw)? * (n as f64).sqrt()
    };

    let mut blocks = Vec::with_capacity(spec.blocks.len());
    let mut truths = Vec::with_capacity(spec.blocks.len());
    for b in &spec.blocks {
        let j = b.columns;
        let per_var = if b.kind == SynthKind::Nominal { b.n_categories() } else { 1 };
        let loadings = draw_loadings(&mut rng, b, j * per_var, r, per_var);
        let offsets = DVector::from_fn(j * per_var, |_, _| b.offset_mean + b.offset_sd * normal(&mut rng));
        let mut theta = &z * loadings.transpose();
        for (c, mut col) in theta.column_iter_mut().enumerate() {
            col.add_scalar_mut(offsets[c]);
        }
        let name = |k: usize| format!("{}_{}", b.name, k + 1);
        let vars: Vec<Variable> = match b.kind {
            SynthKind::Quantitative => (0..j)
                .map(|k| {
                    let col: Vec<f64> = theta.column(k).iter().map(|t| t + b.noise * normal(&mut rng)).collect();
                    Variable::numeric(name(k), ScaleKind::Ratio, col)
                })
                .collect::<Result<_>>()?,
            SynthKind::Binary => (0..j)
                .map(|k| {
                    let col: Vec<f64> = theta
                        .column(k)
                        .iter()
                        .map(|&t| bernoulli_draw(&mut rng, t))
                        .collect();
                    Variable::binary(name(k), &col)
                })
                .collect::<Result<_>>()?,
            SynthKind::Ordinal => {
                let c = b.n_categories();
                let labels: Vec<String> = (1..=c).map(|v| v.to_string()).collect();
                (0..j)
                    .map(|k| {
                        let latent: Vec<f64> =
                            theta.column(k).iter().map(|t| t + b.noise * normal(&mut rng)).collect();
                        let cuts = match &b.cutpoints {
                            Some(cuts) => cuts.clone(),
                            None => equiprobable_cuts(&latent, c),
                        };
                        let values: Vec<&str> = latent
                            .iter()
                            .map(|&v| labels[cuts.iter().filter(|&&t| v > t).count()].as_str())
                            .collect();
                        Variable::categorical(name(k), ScaleKind::Ordinal, &values, labels.clone())
                    })
                    .collect::<Result<_>>()?
            }
            SynthKind::Nominal => {
                let c = per_var;
                let labels: Vec<String> = (0..c).map(|v| format!("c{}", v + 1)).collect();
                (0..j)
                    .map(|k| {
                        let values: Vec<&str> = (0..n)
                            .map(|i| {
                                let scores: Vec<f64> = (0..c).map(|l| theta[(i, k * c + l)]).collect();
                                let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                                let w: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
                                let total: f64 = w.iter().sum();
                                let mut u = rng.random::<f64>() * total;
                                let mut pick = c - 1;
                                for (l, wl) in w.iter().enumerate() {
                                    if u < *wl {
                                        pick = l;
                                        break;
                                    }
                                    u -= wl;
                                }
                                labels[pick].as_str()
                            })
                            .collect();
                        Variable::categorical(name(k), ScaleKind::Nominal, &values, labels.clone())
                    })
                    .collect::<Result<_>>()?
            }
        };
        blocks.push(DataBlock::new(b.name.clone(), vars)?);
        truths.push(BlockTruth {
            name: b.name.clone(),
            kind: b.kind,
            loadings,
            offsets,
            noise: b.noise,
        });
    }
    let width = n.to_string().len();
    let ids = (1..=n).map(|i| format!("s{i:0width$}")).collect();
    let dataset = MultiBlockDataset::new(ids, blocks)?;
    Ok((dataset, GroundTruth { z, blocks: truths }))
}

/// Thresholds splitting `values` into `c` groups of (nearly) equal size.
fn equiprobable_cuts(values: &[f64], c: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = sorted.len();
    (1..c)
        .map(|k| {
            let pos = k * n / c;
            0.5 * (sorted[pos.saturating_sub(1)] + sorted[pos.min(n - 1)])
        })
        .collect()
}
