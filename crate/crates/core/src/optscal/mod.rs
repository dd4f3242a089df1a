//! Optimal scaling: HOMALS, rank-one quantification updates and OS-SCA.

mod homals;
mod ossca;
mod pava;

pub use homals::{fit_homals, fit_homals_indicators, HomalsModel, HomalsOptions};
pub use ossca::{
    fit_os_sca, optimal_scale_update, rank_one_homogeneity_loss, scaled_data_loss, OsScaModel,
    OsScaOptions, ScaledVariable,
};
pub use pava::pava;

/// Category quantification of one variable under a rank-one restriction.
#[derive(Clone, Debug, PartialEq)]
pub struct Quantification {
    pub variable: String,
    /// Observed category labels, in declared order.
    pub labels: Vec<String>,
    /// One value per category; `y' D y = I` and `1' G y = 0`.
    pub y: Vec<f64>,
    /// `G y`.
    pub scaled_column: Vec<f64>,
}

impl Quantification {
    pub fn is_monotone(&self) -> bool {
        self.y.windows(2).all(|p| p[0] <= p[1])
    }
}
