//! Segmentation evaluation: voxel overlap metrics, 18-connected lesion
//! metrics, the weighted challenge score, cohort statistics and the paired
//! Wilcoxon signed-rank test.

mod cohort;
mod labeling;
mod overlap;
mod score;
mod wilcoxon;

pub use cohort::{median, pearson, theil_sen};
pub use labeling::{connected_components, connected_components_18, ComponentLabeling, Connectivity};
pub use overlap::{dice, lfpr, ltpr, ppv, volume_difference, MetricsReport};
pub use score::{challenge_score, ScoreWeights};
pub use wilcoxon::{wilcoxon_signed_rank, WilcoxonResult, EXACT_MAX_N};
