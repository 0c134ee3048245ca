//! Task models built from the layer primitives.

pub mod depression;
pub mod metric;
pub mod phrases;
pub mod risk;
pub(crate) mod stack;

pub use depression::{DepressionConfig, DepressionForward, DepressionModel};
pub use metric::{
    class_metric_loss, class_metric_ordinal_loss, metric_classify, metric_hinge, mse_classify, ordinal_margin,
    MetricLoss,
};
pub use phrases::{best_window, top_phrases, Phrase};
pub use risk::{RiskConfig, RiskForward, RiskInput, RiskModel, RiskVariant};
