//! Empirical hazards from game logs and least-squares agent fits.

pub mod analysis;
pub mod empirical;
pub mod fit;
pub mod nelder_mead;
pub mod pipeline;

pub use analysis::{median_split, pearson, predict_and_correlate, predicted_rate, CorrelationReport, Split};
pub use empirical::{empirical_hazard, EmpiricalHazard, EpisodeFilter, HazardCell, Subject};
pub use fit::{fit_agent, sse, targets_from_empirical, CurveTarget, FitOptions, FitResult, FreeMask};
pub use nelder_mead::{Minimum, Simplex};
pub use pipeline::{analyze, default_free, AnalysisReport, AnalyzeOptions};
