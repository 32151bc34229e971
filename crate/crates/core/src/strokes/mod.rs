//! Brush-stroke parameters, painting plans and the soft differentiable
//! rasterizer.

mod bezier;
mod init;
mod render;

pub use bezier::{stroke_geometry, Nearest, QuadBezier};
pub use init::{init_plan, CanvasSpec, InitStrategy};
pub use render::{
    crosses_distance_kink, render_plan, render_plan_vjp, PlanGrad, COVERAGE_CUTOFF_SIGMAS,
};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::canvas::Rgb;
use crate::error::{Error, Result};

pub const LENGTH_RANGE: (f64, f64) = (0.01, 0.5);
pub const BEND_RANGE: (f64, f64) = (-0.25, 0.25);
pub const THICKNESS_RANGE: (f64, f64) = (0.002, 0.1);
pub const DEFAULT_SOFTNESS: f64 = 0.004;

/// Number of optimizable scalars per stroke.
pub const PARAMS_PER_STROKE: usize = 10;

/// One brush stroke. Positions are normalized to the canvas, lengths are
/// fractions of the canvas diagonal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrokeParams {
    pub x: f64,
    pub y: f64,
    pub orientation: f64,
    pub length: f64,
    pub bend: f64,
    pub thickness: f64,
    pub color: Rgb,
    pub opacity: f64,
}

/// Index of a scalar inside a stroke's flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamKind {
    X,
    Y,
    Orientation,
    Length,
    Bend,
    Thickness,
    Red,
    Green,
    Blue,
    Opacity,
}

impl ParamKind {
    pub const ALL: [ParamKind; PARAMS_PER_STROKE] = [
        ParamKind::X,
        ParamKind::Y,
        ParamKind::Orientation,
        ParamKind::Length,
        ParamKind::Bend,
        ParamKind::Thickness,
        ParamKind::Red,
        ParamKind::Green,
        ParamKind::Blue,
        ParamKind::Opacity,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_geometry(self) -> bool {
        self.index() < 6
    }

    pub fn name(self) -> &'static str {
        match self {
            ParamKind::X => "x",
            ParamKind::Y => "y",
            ParamKind::Orientation => "orientation",
            ParamKind::Length => "length",
            ParamKind::Bend => "bend",
            ParamKind::Thickness => "thickness",
            ParamKind::Red => "color.r",
            ParamKind::Green => "color.g",
            ParamKind::Blue => "color.b",
            ParamKind::Opacity => "opacity",
        }
    }
}

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let w = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if w >= PI {
        w - 2.0 * PI
    } else {
        w
    }
}

impl StrokeParams {
    pub fn to_array(&self) -> [f64; PARAMS_PER_STROKE] {
        [
            self.x,
            self.y,
            self.orientation,
            self.length,
            self.bend,
            self.thickness,
            self.color[0],
            self.color[1],
            self.color[2],
            self.opacity,
        ]
    }

    pub fn from_array(a: [f64; PARAMS_PER_STROKE]) -> Self {
        Self {
            x: a[0],
            y: a[1],
            orientation: a[2],
            length: a[3],
            bend: a[4],
            thickness: a[5],
            color: [a[6], a[7], a[8]],
            opacity: a[9],
        }
    }

    pub fn get(&self, kind: ParamKind) -> f64 {
        self.to_array()[kind.index()]
    }

    pub fn set(&mut self, kind: ParamKind, value: f64) {
        let mut a = self.to_array();
        a[kind.index()] = value;
        *self = Self::from_array(a);
    }

    /// Clamps every field into its valid range and wraps the orientation.
    pub fn project(&mut self) {
        self.x = self.x.clamp(0.0, 1.0);
        self.y = self.y.clamp(0.0, 1.0);
        self.orientation = wrap_angle(self.orientation);
        self.length = self.length.clamp(LENGTH_RANGE.0, LENGTH_RANGE.1);
        self.bend = self.bend.clamp(BEND_RANGE.0, BEND_RANGE.1);
        self.thickness = self.thickness.clamp(THICKNESS_RANGE.0, THICKNESS_RANGE.1);
        for c in &mut self.color {
            *c = c.clamp(0.0, 1.0);
        }
        self.opacity = self.opacity.clamp(0.0, 1.0);
    }

    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, v: f64, lo: f64, hi: f64| {
            if v.is_finite() && v >= lo && v <= hi {
                Ok(())
            } else {
                Err(Error::param(format!("stroke {name} = {v} outside [{lo}, {hi}]")))
            }
        };
        check("x", self.x, 0.0, 1.0)?;
        check("y", self.y, 0.0, 1.0)?;
        if !(self.orientation.is_finite() && (-PI..PI).contains(&self.orientation)) {
            return Err(Error::param(format!(
                "stroke orientation = {} outside [-pi, pi)",
                self.orientation
            )));
        }
        check("length", self.length, LENGTH_RANGE.0, LENGTH_RANGE.1)?;
        check("bend", self.bend, BEND_RANGE.0, BEND_RANGE.1)?;
        check("thickness", self.thickness, THICKNESS_RANGE.0, THICKNESS_RANGE.1)?;
        for c in self.color {
            check("color", c, 0.0, 1.0)?;
        }
        check("opacity", self.opacity, 0.0, 1.0)
    }
}

/// An ordered stroke list and the canvas it is painted on. Later strokes
/// composite over earlier ones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PaintingPlan {
    pub canvas_width_px: usize,
    pub canvas_height_px: usize,
    pub background: Rgb,
    pub strokes: Vec<StrokeParams>,
    pub softness: f64,
}

impl PaintingPlan {
    pub fn diagonal_px(&self) -> f64 {
        (self.canvas_width_px as f64).hypot(self.canvas_height_px as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.canvas_width_px == 0 || self.canvas_height_px == 0 {
            return Err(Error::param("canvas dimensions must be positive"));
        }
        if !(self.softness.is_finite() && self.softness > 0.0) {
            return Err(Error::param(format!(
                "softness must be positive, got {}",
                self.softness
            )));
        }
        if self.background.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::param("background color outside [0, 1]"));
        }
        for (k, s) in self.strokes.iter().enumerate() {
            s.validate()
                .map_err(|e| Error::param(format!("stroke {k}: {e}")))?;
        }
        Ok(())
    }

    pub fn project(&mut self) {
        for s in &mut self.strokes {
            s.project();
        }
        for c in &mut self.background {
            *c = c.clamp(0.0, 1.0);
        }
    }

    /// Number of optimizable scalars: ten per stroke plus the background color.
    pub fn param_count(&self) -> usize {
        self.strokes.len() * PARAMS_PER_STROKE + 3
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for s in &self.strokes {
            out.extend_from_slice(&s.to_array());
        }
        out.extend_from_slice(&self.background);
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count(), "flat parameter length mismatch");
        for (s, chunk) in self
            .strokes
            .iter_mut()
            .zip(flat.chunks_exact(PARAMS_PER_STROKE))
        {
            *s = StrokeParams::from_array(chunk.try_into().expect("chunk of 10"));
        }
        let n = self.strokes.len() * PARAMS_PER_STROKE;
        self.background = [flat[n], flat[n + 1], flat[n + 2]];
    }

    /// `true` for flat indices that belong to the geometry learning-rate group.
    pub fn flat_is_geometry(&self) -> Vec<bool> {
        let mut out = Vec::with_capacity(self.param_count());
        for _ in &self.strokes {
            out.extend(ParamKind::ALL.iter().map(|k| k.is_geometry()));
        }
        out.extend([false; 3]);
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let plan: Self =
            serde_json::from_str(text).map_err(|e| Error::format(format!("plan json: {e}")))?;
        plan.validate()?;
        Ok(plan)
    }
}
