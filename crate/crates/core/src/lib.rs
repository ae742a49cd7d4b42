//! Detection of privacy-sensitive situations from eye movements and scene
//! images, with a simulated camera shutter and an offline evaluation harness.

pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod events;
pub mod features;
pub mod scene;
pub mod shutter;
pub mod stats;
pub mod svm;

pub use config::Config;
pub use dataset::{AnnotationSegment, Dataset, GazeSample, PrivacyClass, Recording, RecordingKey, SceneFrame};
pub use error::{Error, Result};
pub use events::{Blink, EventStream, Fixation, Saccade};
pub use features::{FeatureRow, FeatureVector52};
pub use scene::{Embedding68, SceneDescriptor, SceneModel};
pub use shutter::{Metrics, ShutterState, ShutterStatus, ShutterTrace};
pub use svm::{Standardizer, SvmModel};
