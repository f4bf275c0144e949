//! Transferability estimation for semantic-segmentation model ensembles.
//!
//! Source models are applied to sampled target pixels; their class
//! distributions are mapped into the target label space through an empirical
//! conditional (the EEP), and every size-S ensemble of a source pool is
//! scored by MS-LEEP, E-LEEP, IoU-EEP, SoftIoU-EEP and the BASE baseline.

pub mod bundle;
pub mod correlation;
pub mod csvio;
pub mod eep;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod sampler;
pub mod selection;
pub mod synth;
pub mod types;

pub use bundle::{load_bundle, write_bundle, Bundle};
pub use correlation::{
    correlation_report, kendall_tau, pearson, weighted_kendall_tau, CorrelationReport,
    PerformanceTable,
};
pub use eep::{eep_matrix, empirical_joint, leep, EepMatrix, JointModel};
pub use engine::EngineConfig;
pub use error::{Error, Result};
pub use metrics::{
    base_score, e_leep, ensemble_distribution, iou_eep, ms_leep, soft_iou_eep, Ensemble, Metric,
};
pub use sampler::{sample_pixels, LabelRaster, SampleIndexList};
pub use selection::{
    enumerate_ensembles, preselect_sources, score_all, top_k, ScoreConfig, ScoreTable, SourcePool,
};
pub use types::{LabelSpace, SampleSet, SourceMeta, SourcePredictions};
