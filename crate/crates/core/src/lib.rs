//! Fusion of data blocks that share their samples but differ in measurement scale.
//!
//! Three model families are provided:
//!
//! * representation matrices fitted by an orthonormal INDSCAL ([`indscal`]),
//! * simultaneous component analysis of optimally scaled blocks ([`optscal`]),
//! * a joint Bernoulli/Gaussian component model ([`gsca`]).
//!
//! All three report explained variance through [`metrics::FitReport`].

pub mod data;
pub mod error;
pub mod gsca;
pub mod indscal;
pub mod ingest;
pub mod linalg;
pub mod metrics;
pub mod optscal;
pub mod representation;
pub mod synth;

pub use data::{ColumnData, DataBlock, IndicatorMatrix, MultiBlockDataset, ScaleKind, Variable};
pub use error::{Error, Result};
pub use gsca::{fit_gsca, fit_gsca_dataset, GscaModel, GscaOptions};
pub use indscal::{fit_idiomix, fit_indort, IndscalModel, IndscalOptions};
pub use ingest::{load_dataset, load_from_schema, write_dataset, Schema};
pub use metrics::{FitReport, Method};
pub use optscal::{fit_homals, fit_os_sca, HomalsModel, HomalsOptions, OsScaModel, OsScaOptions, Quantification};
pub use representation::{RepresentationForm, RepresentationMatrix, RepresentationPolicy};
pub use synth::{generate, GroundTruth, SynthSpec};
