use rayon::prelude::*;

use super::bezier::{stroke_geometry, Nearest, QuadBezier};
use super::{PaintingPlan, PARAMS_PER_STROKE};
use crate::canvas::{CanvasImage, ImageGrad, Rgb};
use crate::error::{Error, Result};

/// Pixels farther than `thickness + COVERAGE_CUTOFF_SIGMAS * softness` from a
/// stroke get exactly zero coverage; the sigmoid there is below 3e-16.
pub const COVERAGE_CUTOFF_SIGMAS: f64 = 36.0;

/// Gradient of a scalar objective with respect to every plan parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanGrad {
    /// Per stroke, indexed by [`super::ParamKind`].
    pub strokes: Vec<[f64; PARAMS_PER_STROKE]>,
    pub background: Rgb,
}

impl PlanGrad {
    pub fn zeros(n_strokes: usize) -> Self {
        Self {
            strokes: vec![[0.0; PARAMS_PER_STROKE]; n_strokes],
            background: [0.0; 3],
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.strokes.iter().flatten().copied().collect();
        out.extend_from_slice(&self.background);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.strokes.iter().flatten().all(|g| g.is_finite())
            && self.background.iter().all(|g| g.is_finite())
    }

    fn add(&mut self, other: &PlanGrad) {
        for (a, b) in self.strokes.iter_mut().zip(&other.strokes) {
            for k in 0..PARAMS_PER_STROKE {
                a[k] += b[k];
            }
        }
        for c in 0..3 {
            self.background[c] += other.background[c];
        }
    }
}

struct Prepared {
    curve: QuadBezier,
    bounds: [f64; 4],
    half_width: f64,
    sigma: f64,
    color: Rgb,
    opacity: f64,
    sin: f64,
    cos: f64,
    length_px: f64,
    bend_px: f64,
}

struct Coverage {
    alpha: f64,
    sig: f64,
    nearest: Nearest,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

struct Scene {
    width: usize,
    height: usize,
    diag: f64,
    strokes: Vec<Prepared>,
}

impl Scene {
    fn new(plan: &PaintingPlan) -> Self {
        let (width, height) = (plan.canvas_width_px, plan.canvas_height_px);
        let diag = plan.diagonal_px();
        let sigma = plan.softness * diag;
        let strokes = plan
            .strokes
            .iter()
            .map(|s| {
                let curve = stroke_geometry(s, width, height);
                let half_width = s.thickness * diag;
                let reach = half_width + COVERAGE_CUTOFF_SIGMAS * sigma;
                let b = curve.bounds();
                let (sin, cos) = s.orientation.sin_cos();
                Prepared {
                    curve,
                    bounds: [b[0] - reach, b[1] - reach, b[2] + reach, b[3] + reach],
                    half_width,
                    sigma,
                    color: s.color,
                    opacity: s.opacity,
                    sin,
                    cos,
                    length_px: s.length * diag,
                    bend_px: s.bend * diag,
                }
            })
            .collect();
        Self {
            width,
            height,
            diag,
            strokes,
        }
    }

    fn coverage(&self, k: usize, p: [f64; 2]) -> Option<Coverage> {
        let s = &self.strokes[k];
        let b = s.bounds;
        if p[0] < b[0] || p[0] > b[2] || p[1] < b[1] || p[1] > b[3] {
            return None;
        }
        let nearest = s.curve.nearest(p);
        let sig = sigmoid((s.half_width - nearest.distance) / s.sigma);
        Some(Coverage {
            alpha: s.opacity * sig,
            sig,
            nearest,
        })
    }

    fn shade(&self, background: Rgb, p: [f64; 2]) -> Rgb {
        let mut c = background;
        for k in 0..self.strokes.len() {
            if let Some(cov) = self.coverage(k, p) {
                let col = self.strokes[k].color;
                for ch in 0..3 {
                    c[ch] = (1.0 - cov.alpha) * c[ch] + cov.alpha * col[ch];
                }
            }
        }
        c
    }

    /// Backward pass for one pixel: accumulates into `grad` and returns the
    /// gradient that reaches the background.
    fn shade_vjp(
        &self,
        background: Rgb,
        p: [f64; 2],
        upstream: Rgb,
        grad: &mut [[f64; PARAMS_PER_STROKE]],
        scratch: &mut Vec<(usize, Coverage, Rgb)>,
    ) -> Rgb {
        scratch.clear();
        let mut c = background;
        for k in 0..self.strokes.len() {
            if let Some(cov) = self.coverage(k, p) {
                let before = c;
                let col = self.strokes[k].color;
                for ch in 0..3 {
                    c[ch] = (1.0 - cov.alpha) * c[ch] + cov.alpha * col[ch];
                }
                scratch.push((k, cov, before));
            }
        }

        let mut g = upstream;
        for (k, cov, before) in scratch.iter().rev() {
            let s = &self.strokes[*k];
            let out = &mut grad[*k];
            let mut d_alpha = 0.0;
            for ch in 0..3 {
                d_alpha += g[ch] * (s.color[ch] - before[ch]);
                out[6 + ch] += cov.alpha * g[ch];
            }
            for ch in 0..3 {
                g[ch] *= 1.0 - cov.alpha;
            }
            out[9] += d_alpha * cov.sig;
            let d_z = d_alpha * s.opacity * cov.sig * (1.0 - cov.sig);
            out[5] += d_z * self.diag / s.sigma;

            let d_dist = -d_z / s.sigma;
            let n = cov.nearest;
            if n.distance > 0.0 && d_dist != 0.0 {
                let dir = [n.offset[0] / n.distance, n.offset[1] / n.distance];
                let t = n.t;
                let w1 = 2.0 * t * (1.0 - t);
                let w2 = t * t;
                // Local control offsets: p1 = (L/2, B), p2 = (L, 0).
                let (l1x, l1y) = (0.5 * s.length_px, s.bend_px);
                let l2x = s.length_px;
                // d(R l)/d(theta) = (-sin lx - cos ly, cos lx - sin ly)
                let rot1 = [-s.sin * l1x - s.cos * l1y, s.cos * l1x - s.sin * l1y];
                let rot2 = [-s.sin * l2x, s.cos * l2x];
                let axis = [s.cos, s.sin];
                let normal = [-s.sin, s.cos];
                let dot = |a: [f64; 2]| dir[0] * a[0] + dir[1] * a[1];

                out[0] += d_dist * self.width as f64 * dir[0];
                out[1] += d_dist * self.height as f64 * dir[1];
                out[2] += d_dist * (w1 * dot(rot1) + w2 * dot(rot2));
                out[3] += d_dist * self.diag * dot(axis) * (0.5 * w1 + w2);
                out[4] += d_dist * self.diag * w1 * dot(normal);
            }
        }
        g
    }
}

fn pixel_center(i: usize, j: usize) -> [f64; 2] {
    [i as f64 + 0.5, j as f64 + 0.5]
}

/// Composites every stroke, in order, over the background color.
///
/// Coverage of a pixel is `opacity * sigmoid((T - d) / sigma)` where `d` is
/// the distance from the pixel center to the stroke curve, `T` the stroke
/// half-width and `sigma` the plan softness, both in pixels.
pub fn render_plan(plan: &PaintingPlan) -> CanvasImage {
    let scene = Scene::new(plan);
    let (w, h) = (scene.width, scene.height);
    let pixels: Vec<Rgb> = (0..h)
        .into_par_iter()
        .flat_map_iter(|j| {
            let scene = &scene;
            (0..w).map(move |i| scene.shade(plan.background, pixel_center(i, j)))
        })
        .collect();
    CanvasImage::from_clamped(w, h, pixels)
}

/// Gradient of `<upstream, render_plan(plan)>` with respect to every stroke
/// parameter and the background color.
pub fn render_plan_vjp(plan: &PaintingPlan, upstream: &ImageGrad) -> Result<PlanGrad> {
    if upstream.width != plan.canvas_width_px
        || upstream.height != plan.canvas_height_px
        || upstream.data.len() != upstream.width * upstream.height
    {
        return Err(Error::param(format!(
            "upstream gradient is {}x{}, canvas is {}x{}",
            upstream.width, upstream.height, plan.canvas_width_px, plan.canvas_height_px
        )));
    }
    let scene = Scene::new(plan);
    let n = plan.strokes.len();
    let w = scene.width;

    // One partial gradient per row, summed in row order afterwards so the
    // result does not depend on scheduling.
    let rows: Vec<PlanGrad> = (0..scene.height)
        .into_par_iter()
        .map(|j| {
            let mut row = PlanGrad::zeros(n);
            let mut scratch = Vec::new();
            for i in 0..w {
                let g = upstream.data[j * w + i];
                if g == [0.0; 3] {
                    continue;
                }
                let bg = scene.shade_vjp(
                    plan.background,
                    pixel_center(i, j),
                    g,
                    &mut row.strokes,
                    &mut scratch,
                );
                for c in 0..3 {
                    row.background[c] += bg[c];
                }
            }
            row
        })
        .collect();

    let mut total = PlanGrad::zeros(n);
    for row in &rows {
        total.add(row);
    }
    Ok(total)
}

/// Whether going from plan `a` to plan `b` moves some pixel across a point
/// where its distance to a stroke is not differentiable.
///
/// The unsigned distance has a cone on the curve itself (the offset
/// direction flips) and a ridge on the medial axis (the nearest curve
/// parameter jumps). Where the nearest point moves onto or off an endpoint
/// the distance stays C1 but its curvature jumps, which a coarse difference
/// also notices, so that counts too. Pixels whose coverage slope is below
/// `1e-12` are ignored. Both plans must have the same canvas and stroke count.
pub fn crosses_distance_kink(a: &PaintingPlan, b: &PaintingPlan) -> bool {
    const T_JUMP: f64 = 0.02;
    let (sa, sb) = (Scene::new(a), Scene::new(b));
    assert_eq!(
        (sa.width, sa.height, sa.strokes.len()),
        (sb.width, sb.height, sb.strokes.len()),
        "plans must share canvas and stroke count"
    );
    (0..sa.height).into_par_iter().any(|j| {
        (0..sa.width).any(|i| {
            let p = pixel_center(i, j);
            (0..sa.strokes.len()).any(|k| {
                let (Some(ca), Some(cb)) = (sa.coverage(k, p), sb.coverage(k, p)) else {
                    return false;
                };
                let slope = |c: &Coverage| c.sig * (1.0 - c.sig);
                if slope(&ca) < 1e-12 && slope(&cb) < 1e-12 {
                    return false;
                }
                let (na, nb) = (ca.nearest, cb.nearest);
                if na.distance == 0.0 || nb.distance == 0.0 {
                    return true;
                }
                let flip = na.offset[0] * nb.offset[0] + na.offset[1] * nb.offset[1] < 0.0;
                let at_end = |t: f64| t == 0.0 || t == 1.0;
                flip || (na.t - nb.t).abs() > T_JUMP || at_end(na.t) != at_end(nb.t)
            })
        })
    })
}
