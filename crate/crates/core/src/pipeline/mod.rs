//! Stage orchestration over a run workspace, plus the synthetic corpus
//! generator and dataset statistics.

pub mod config;
pub mod stages;
pub mod stats;
pub mod synth;
pub mod workspace;

pub use config::{InputConfig, PipelineConfig, Preset};
pub use stages::{run_all, run_stage, GeneratedComments, ScoredComment, StageOutput};
pub use stats::{report_stats, StatsReport};
pub use synth::{generate, SyntheticCorpus, SyntheticSpec};
pub use workspace::{Manifest, Stage, Workspace};
