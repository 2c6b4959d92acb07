//! Ballistocardiogram (BCG) J-peak enhancement and evaluation.
//!
//! The crate turns a time-aligned ECG/BCG record into the `bcg`/`bcj`
//! band-passed traces, the `bcc`, `bcd` and `bcr` transforms, locates J
//! with simple extremum rules and scores the result against ECG-derived
//! beats.

pub mod ecg;
pub mod error;
pub mod fiducials;
pub mod io;
pub mod metrics;
pub mod sigcore;
pub mod synth;
pub mod transforms;

pub use ecg::{detect_r_peaks, BeatTruth, RPeakConfig};
pub use error::{BcgError, Result};
pub use fiducials::{CyclePoints, Extremum, FiducialConfig, Polarity};
pub use io::pipeline::{run_pipeline, PipelineConfig, PipelineOutput};
pub use metrics::{EvalReport, Rule};
pub use sigcore::{BandSpec, Record, Trace, TraceKind};
pub use synth::{generate, SynthSpec};
pub use transforms::{AlphaPolicy, BcrParams};
