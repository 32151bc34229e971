//! Stroke-based painting planner guided by sound, speech, text and images.
//!
//! A [`strokes::PaintingPlan`] is rendered by a soft differentiable
//! rasterizer, scored by a weighted sum of modality losses and improved by
//! Adam. Every stage exposes an exact vector-Jacobian product so the losses
//! can be pulled back onto stroke parameters.

pub mod audio;
pub mod canvas;
pub mod emotion;
pub mod encoders;
pub mod error;
pub mod gradcheck;
pub mod objective;
pub mod pipeline;
pub mod strokes;

pub use error::{Error, Result};
