//! Gram assembly, MNI and averaging scores, and leave-out machinery.

mod gram;
mod leave_out;
mod projection;
mod score;

pub use gram::{GramSolver, CANONICAL_CHUNK};
pub use leave_out::{hat_spectrum_report, leave_out, HatSpectrumReport, LeaveOutSolver};
pub use projection::{marginal_scores, project_streamed, project_with_gram, Projections};
pub use score::{
    averaging_batch_scores, averaging_classifier_score, empty_classes, kernel_vector,
    mni_batch_scores, predictions, score_test_point, AveragingScore, MniFit, ScoreVector,
    TestScoring,
};

use crate::ensemble::TrainingSet;
use crate::error::Result;

pub fn build_gram(training: &TrainingSet) -> Result<GramSolver> {
    GramSolver::build(training)
}
