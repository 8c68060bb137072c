//! Fundus-image feature kernels, segmentation losses and a hybrid
//! genetic/Bayesian optimizer for hyperparameter search.

pub mod agbo;
pub mod evolution;
pub mod features;
pub mod imaging;
pub mod losses;
pub mod objectives;
pub mod runio;
pub mod space;
pub mod surrogate;

pub use agbo::{
    agbo_run, agbo_run_with, best_of_history, compare_methods, run_method, AgboConfig, AgboError,
    ComparisonRow, Concurrency, FnObjective, HistoryRecord, HistorySink, Method, NullSink,
    Objective, ObjectiveError, RunOptions, RunOutcome,
};
pub use evolution::{evolve_candidates, GaParams};
pub use features::{
    extract_features, extract_features_with, FeatureError, FeatureOptions, FeatureRecord,
    FrangiParams, GlcmMatrix, IsntAreas, Laterality, SegmentationMasks, TextureFeatures,
    VesselSummary,
};
pub use imaging::{
    standardize, BinaryMask, DiskGeometry, GrayImage, Histogram256, ImagingError, RgbImage,
    STANDARD_SIZE,
};
pub use losses::{FocalParams, LossError, ProbVector, SegLossWeights};
pub use objectives::Benchmark;
pub use runio::{
    export_features_csv, load_config, parse_config, read_history, JsonlSink, RunIoError, RunSummary,
};
pub use space::{Candidate, Choice, Dimension, Gene, Scale, SearchSpace, SpaceError};
pub use surrogate::{
    AcquisitionKind, AcquisitionSpec, GpError, GpModel, KernelKind, KernelSpec, Lengthscale,
};
