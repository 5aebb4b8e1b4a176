//! Trajectory-guided image-to-video generation by latent feature replication,
//! at desk scale.
//!
//! The crate covers the whole pipeline: pixel trajectories and their latent
//! mapping ([`trajectory`]), a block-mean codec and the condition-tensor edits
//! ([`codec`], [`condition`]), trajectory generators for camera, sphere and
//! object-rotation control ([`synth`]), a small flow-matching generator with
//! classifier-free guidance ([`model`]), synthetic blob videos ([`data`]),
//! motion and fidelity metrics ([`metrics`]) and the benchmark runner ([`bench`]).

pub mod bench;
pub mod codec;
pub mod condition;
pub mod data;
pub mod error;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod retrack;
pub mod synth;
pub mod tensor;
pub mod trajectory;

pub use codec::MockCodec;
pub use condition::{ConditionMode, EmbeddingTable};
pub use error::{Error, Result};
pub use geometry::LatentGeometry;
pub use tensor::{LatentTensor, RawTensor, VideoTensor};
pub use trajectory::{LatentTrajectory, PixelTrajectory, Point, QuantizedTrack, TrajectorySet};
