//! Smoothing, curve fitting, model selection and derivative estimation up to
//! third order.

mod bootstrap;
mod derivatives;
mod fit;
mod loess;
mod savgol;

use serde::{Deserialize, Serialize};

pub use bootstrap::{bootstrap_derivative_ci, BootstrapConfig, Pipeline, ResidualMode, MIN_BOOTSTRAP};
pub use derivatives::{DerivativeEstimate, Z95};
pub use fit::{
    derivatives_from_model, fit_candidate, fit_model, CoefficientTest, Criterion, FitDiagnostics,
    FitModel, ModelCandidate, ModelKind, ModelSelection, MAX_CONDITION,
};
pub use loess::loess_smooth;
pub use savgol::{FilterPlan, SavitzkyGolay};

use crate::error::Result;
use crate::series::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum SmootherConfig {
    SavitzkyGolay { window: usize, poly_order: usize },
    Loess { span: f64 },
}

impl SmootherConfig {
    pub fn smooth(&self, series: &TimeSeries) -> Result<TimeSeries> {
        match *self {
            SmootherConfig::SavitzkyGolay { window, poly_order } => {
                SavitzkyGolay::new(window, poly_order)?.smooth(series)
            }
            SmootherConfig::Loess { span } => loess_smooth(series, span),
        }
    }
}
