//! Self-reported-diagnosis dataset construction: claim detection, control
//! filtering, post scrubbing and Hellinger-distance cohort matching.

mod diagnosis;
mod distribution;
mod filter;
mod matching;
mod pipeline;

pub use diagnosis::{find_diagnosis_post, DiagnosisMatch, DiagnosisPattern, PatternSpec};
pub use distribution::{hellinger, subreddit_distribution, SubredditDistribution};
pub use filter::{eligible_control, eligible_diagnosed, scrub_diagnosed_posts, MentalHealthFilter};
pub use matching::{
    greedy_match, within_activity_window, MatchCandidate, MatchResult, MatchedControl,
    UserMatches,
};
pub use pipeline::{
    apply_annotations, build_dataset, AnnotationOutcome, AnnotationRow, Annotations, BuildReport, BuiltDataset,
    DatasetConfig, DiagnosisCandidate, SPLITS,
};
