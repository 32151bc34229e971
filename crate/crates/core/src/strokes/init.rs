use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    PaintingPlan, StrokeParams, BEND_RANGE, DEFAULT_SOFTNESS, LENGTH_RANGE, THICKNESS_RANGE,
};
use crate::canvas::{sample_bilinear, CanvasImage, Rgb};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitStrategy {
    UniformRandom,
    ImageSeeded,
}

/// Canvas settings shared by every stroke of a plan.
#[derive(Clone, Debug, PartialEq)]
pub struct CanvasSpec {
    pub width_px: usize,
    pub height_px: usize,
    pub background: Rgb,
    pub softness: f64,
}

impl CanvasSpec {
    pub fn new(width_px: usize, height_px: usize) -> Self {
        Self {
            width_px,
            height_px,
            background: [1.0; 3],
            softness: DEFAULT_SOFTNESS,
        }
    }
}

fn random_stroke(rng: &mut ChaCha8Rng) -> StrokeParams {
    let mut range = |(lo, hi): (f64, f64)| lo + (hi - lo) * rng.random::<f64>();
    StrokeParams {
        x: range((0.0, 1.0)),
        y: range((0.0, 1.0)),
        orientation: range((-PI, PI)),
        length: range(LENGTH_RANGE),
        bend: range(BEND_RANGE),
        thickness: range(THICKNESS_RANGE),
        color: [range((0.0, 1.0)), range((0.0, 1.0)), range((0.0, 1.0))],
        opacity: range((0.0, 1.0)),
    }
}

/// Creates a starting plan of `n_strokes` strokes.
///
/// `ImageSeeded` draws geometry like `UniformRandom` but colors each stroke
/// with the target sampled at the stroke's start point.
pub fn init_plan(
    strategy: InitStrategy,
    n_strokes: usize,
    canvas: &CanvasSpec,
    target: Option<&CanvasImage>,
    seed: u64,
) -> Result<PaintingPlan> {
    if n_strokes < 1 {
        return Err(Error::param("n_strokes must be at least 1"));
    }
    if strategy == InitStrategy::ImageSeeded && target.is_none() {
        return Err(Error::param("image-seeded initialization needs a target image"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut strokes: Vec<StrokeParams> = (0..n_strokes).map(|_| random_stroke(&mut rng)).collect();
    if let (InitStrategy::ImageSeeded, Some(img)) = (strategy, target) {
        for s in &mut strokes {
            let u = s.x * img.width() as f64 - 0.5;
            let v = s.y * img.height() as f64 - 0.5;
            s.color = sample_bilinear(img, u, v).map(|c| c.clamp(0.0, 1.0));
        }
    }
    let plan = PaintingPlan {
        canvas_width_px: canvas.width_px,
        canvas_height_px: canvas.height_px,
        background: canvas.background,
        strokes,
        softness: canvas.softness,
    };
    plan.validate()?;
    Ok(plan)
}
