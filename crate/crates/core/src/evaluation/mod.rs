//! Synthetic ground truth and scoring.

mod metrics;
mod room;


use thiserror::Error;

pub use metrics::{
    geometric_error, texture_error, ElementResidual, GeometricError, MetricsReport, Psnr,
    TextureError,
};
pub use room::{
    generate_room, BoxObject, Fixture, GroundTruth, RoomSpec, TextureGen, TruthElement, TruthFile,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("invalid room spec: {0}")]
    InvalidSpec(String),
    #[error("object {0} is not inside the room")]
    ObjectOutsideRoom(usize),
    #[error("label ({class}, {instance}) has no ground-truth element")]
    UnknownElement { class: i64, instance: i64 },
    #[error("result mesh has no texture")]
    Untextured,
}
