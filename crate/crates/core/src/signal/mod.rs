//! Sensor-session ingest and preprocessing: CSV interchange, resampling,
//! low-pass filtering, min-max normalization, sliding-window segmentation,
//! the windowed-dataset container, and cross-validation split plans.

pub mod container;
pub mod csvio;
pub mod filter;
pub mod normalize;
pub mod openpack;
pub mod pipeline;
pub mod resample;
pub mod session;
pub mod splits;
pub mod window;

pub use container::{load_container, read_container, save_container, write_container};
pub use normalize::NormalizationStats;
pub use pipeline::{build_dataset, preprocess_session, PreprocessConfig, PreprocessReport};
pub use session::{ChannelKind, ChannelSpec, SessionRecording};
pub use splits::{build_splits, SplitPlan, SplitScheme};
pub use window::{segment_windows, WindowedDataset};
