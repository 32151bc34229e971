//! Central finite-difference checks of every hand-written VJP.

use std::f64::consts::PI;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::audio::{extract_features, AudioClip, FeatureStack};
use crate::canvas::{augment_views, AugmentationSpec, CanvasImage, ImageGrad};
use crate::emotion::{EmotionHead, N_EMOTIONS};
use crate::encoders::ImageEncoder;
use crate::error::{Error, Result};
use crate::objective::{loss_natural_sound, loss_pixel_l2, Models};
use crate::strokes::{
    crosses_distance_kink, render_plan, render_plan_vjp, PaintingPlan, StrokeParams, BEND_RANGE,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Component {
    RenderPlan,
    AugmentViews,
    EncodeImage,
    ImageEmotion,
    LossPixelL2,
    LossNaturalSound,
}

impl Component {
    pub const ALL: [Component; 6] = [
        Component::RenderPlan,
        Component::AugmentViews,
        Component::EncodeImage,
        Component::ImageEmotion,
        Component::LossPixelL2,
        Component::LossNaturalSound,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Component::RenderPlan => "render_plan",
            Component::AugmentViews => "augment_views",
            Component::EncodeImage => "encode_image",
            Component::ImageEmotion => "image_emotion",
            Component::LossPixelL2 => "loss_pixel_l2",
            Component::LossNaturalSound => "loss_natural_sound",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }

    /// Relative-error tolerance; the sound loss chains two nonlinear stages.
    pub fn tolerance(self) -> f64 {
        match self {
            Component::LossNaturalSound => 1e-2,
            _ => 1e-3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradcheckOptions {
    pub seed: u64,
    pub configs: usize,
    pub epsilon: f64,
    /// Differences at or below this magnitude count as exact.
    pub abs_floor: f64,
    pub checks_per_config: usize,
    /// Scales the analytic gradient of one component by 1.5 so the harness
    /// can be shown to notice a broken VJP.
    pub corrupt: Option<Component>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            configs: 100,
            epsilon: 1e-4,
            abs_floor: 1e-6,
            checks_per_config: 4,
            corrupt: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComponentReport {
    pub component: Component,
    pub checks: usize,
    /// Stencils redrawn because they crossed a distance kink.
    pub redrawn: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl ComponentReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub components: Vec<ComponentReport>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.components.iter().all(ComponentReport::passed)
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<20} {:>7} {:>8} {:>12} {:>9}  status",
            "component", "checks", "redrawn", "max_rel_err", "tol"
        )?;
        for c in &self.components {
            writeln!(
                f,
                "{:<20} {:>7} {:>8} {:>12.3e} {:>9.0e}  {}",
                c.component.name(),
                c.checks,
                c.redrawn,
                c.max_rel_error,
                c.tolerance,
                if c.passed() { "ok" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

/// Error of analytic `a` against finite difference `f`; zero under the floor.
pub fn relative_error(a: f64, f: f64, abs_floor: f64) -> f64 {
    let diff = (a - f).abs();
    if diff <= abs_floor {
        0.0
    } else {
        diff / a.abs().max(f.abs())
    }
}

/// A random plan for finite-difference checks.
///
/// A central difference with step `1e-4` resolves an edge only when the edge
/// is wide against the step, so softness is drawn from `[0.04, 0.06]`.
/// Colors and opacities stay away from the clamps.
pub fn random_plan(rng: &mut ChaCha8Rng, width: usize, height: usize, n_strokes: usize) -> PaintingPlan {
    let strokes = (0..n_strokes)
        .map(|_| StrokeParams {
            x: rng.random_range(0.2..0.8),
            y: rng.random_range(0.2..0.8),
            orientation: rng.random_range(-PI..PI),
            length: rng.random_range(0.15..0.45),
            bend: rng.random_range(BEND_RANGE.0 * 0.6..BEND_RANGE.1 * 0.6),
            thickness: rng.random_range(0.02..0.1),
            color: [
                rng.random_range(0.1..0.9),
                rng.random_range(0.1..0.9),
                rng.random_range(0.1..0.9),
            ],
            opacity: rng.random_range(0.3..0.9),
        })
        .collect();
    PaintingPlan {
        canvas_width_px: width,
        canvas_height_px: height,
        background: [
            rng.random_range(0.1..0.9),
            rng.random_range(0.1..0.9),
            rng.random_range(0.1..0.9),
        ],
        strokes,
        softness: rng.random_range(0.04..0.06),
    }
}

fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> CanvasImage {
    let px = (0..w * h)
        .map(|_| {
            [
                rng.random_range(0.05..0.95),
                rng.random_range(0.05..0.95),
                rng.random_range(0.05..0.95),
            ]
        })
        .collect();
    CanvasImage::new(w, h, px).expect("valid size")
}

fn random_grad(rng: &mut ChaCha8Rng, w: usize, h: usize) -> ImageGrad {
    ImageGrad {
        width: w,
        height: h,
        data: (0..w * h)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect(),
    }
}

fn random_audio(rng: &mut ChaCha8Rng) -> FeatureStack {
    let f0 = rng.random_range(150.0..1500.0);
    let f1 = rng.random_range(150.0..3000.0);
    let clip = AudioClip::from_fn(4096, |t| {
        0.3 * (2.0 * PI * f0 * t).sin() + 0.2 * (2.0 * PI * f1 * t).sin()
    })
    .expect("valid clip");
    extract_features(&clip).expect("features of a valid clip")
}

struct Ctx<'a> {
    opts: &'a GradcheckOptions,
    rng: ChaCha8Rng,
    redrawn: usize,
}

impl Ctx<'_> {
    fn analytic(&self, c: Component, g: f64) -> f64 {
        if self.opts.corrupt == Some(c) {
            g * 1.5
        } else {
            g
        }
    }

    /// Max relative error over random coordinates of a plan function.
    ///
    /// Coverage depends on the unsigned distance to each curve, which is not
    /// differentiable on the curve itself or on its medial axis. A stencil
    /// that carries a pixel across one of those sets is redrawn.
    fn plan_fd(
        &mut self,
        c: Component,
        plan: &PaintingPlan,
        grad: &[f64],
        f: impl Fn(&PaintingPlan) -> Result<f64>,
    ) -> Result<f64> {
        let eps = self.opts.epsilon;
        let flat = plan.to_flat();
        let mut worst: f64 = 0.0;
        let mut done = 0;
        let mut attempts = 0;
        while done < self.opts.checks_per_config {
            attempts += 1;
            if attempts > 50 * self.opts.checks_per_config {
                return Err(Error::Numeric(format!(
                    "{}: every stencil crosses a distance kink",
                    c.name()
                )));
            }
            let i = self.rng.random_range(0..flat.len());
            let shifted = |d: f64| {
                let mut q = plan.clone();
                let mut x = flat.clone();
                x[i] += d;
                q.set_flat(&x);
                q
            };
            let (plus, minus) = (shifted(eps), shifted(-eps));
            if crosses_distance_kink(&minus, &plus) {
                self.redrawn += 1;
                continue;
            }
            let fd = (f(&plus)? - f(&minus)?) / (2.0 * eps);
            worst = worst.max(relative_error(self.analytic(c, grad[i]), fd, self.opts.abs_floor));
            done += 1;
        }
        Ok(worst)
    }

    /// Max relative error over random pixel channels of an image function.
    fn image_fd(
        &mut self,
        c: Component,
        img: &CanvasImage,
        grad: &ImageGrad,
        f: impl Fn(&CanvasImage) -> Result<f64>,
    ) -> Result<f64> {
        let eps = self.opts.epsilon;
        let mut worst: f64 = 0.0;
        for _ in 0..self.opts.checks_per_config {
            let idx = self.rng.random_range(0..img.pixels().len());
            let ch = self.rng.random_range(0..3);
            let shifted = |d: f64| {
                let mut px = img.pixels().to_vec();
                px[idx][ch] += d;
                f(&CanvasImage::new(img.width(), img.height(), px)?)
            };
            let fd = (shifted(eps)? - shifted(-eps)?) / (2.0 * eps);
            worst = worst.max(relative_error(self.analytic(c, grad.data[idx][ch]), fd, self.opts.abs_floor));
        }
        Ok(worst)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_config(opts: &GradcheckOptions, index: usize) -> Result<[(f64, usize); 6]> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let w = rng.random_range(12..=24);
    let h = rng.random_range(12..=24);
    let n = rng.random_range(1..=3);
    let plan = random_plan(&mut rng, w, h, n);
    let img = random_image(&mut rng, w, h);
    let model_seed: u64 = rng.random();
    let dim = 32;
    let encoder = ImageEncoder::new(dim, model_seed);
    let head = EmotionHead::seeded(dim, model_seed);
    let aug = AugmentationSpec {
        count: 3,
        output_size_px: 12,
        seed: rng.random(),
        ..AugmentationSpec::default()
    };
    let upstream = random_grad(&mut rng, w, h);
    let emb_dir: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut emo_dir = [0.0; N_EMOTIONS];
    emo_dir[rng.random_range(0..N_EMOTIONS)] = 1.0;
    let target = random_image(&mut rng, w, h);
    let feats = random_audio(&mut rng);
    let mut ctx = Ctx { opts, rng, redrawn: 0 };
    let mut out = [(0.0, 0); 6];
    let mut record = |k: usize, ctx: &mut Ctx, err: f64| {
        out[k] = (err, ctx.redrawn);
        ctx.redrawn = 0;
    };

    // render_plan
    let g = render_plan_vjp(&plan, &upstream)?.to_flat();
    let err = ctx.plan_fd(Component::RenderPlan, &plan, &g, |p| Ok(upstream.dot(&render_plan(p))))?;
    record(0, &mut ctx, err);

    // augment_views
    let views = augment_views(&img, &aug)?;
    let view_grads: Vec<ImageGrad> = views
        .views
        .iter()
        .map(|v| random_grad(&mut ctx.rng, v.width(), v.height()))
        .collect();
    let g = views.vjp(&view_grads)?;
    let err = ctx.image_fd(Component::AugmentViews, &img, &g, |im| {
        let v = augment_views(im, &aug)?;
        Ok(v.views.iter().zip(&view_grads).map(|(v, g)| g.dot(v)).sum())
    })?;
    record(1, &mut ctx, err);

    // encode_image
    let fwd = encoder.forward(&img)?;
    let g = encoder.backward(&fwd, &emb_dir);
    let err = ctx.image_fd(Component::EncodeImage, &img, &g, |im| {
        Ok(dot(encoder.encode(im)?.values(), &emb_dir))
    })?;
    record(2, &mut ctx, err);

    // image_emotion
    let state = head.forward(&encoder, &img)?;
    let g = head.backward(&encoder, &state, &emo_dir);
    let err = ctx.image_fd(Component::ImageEmotion, &img, &g, |im| {
        Ok(dot(&head.forward(&encoder, im)?.distribution.probs, &emo_dir))
    })?;
    record(3, &mut ctx, err);

    // loss_pixel_l2
    let g = loss_pixel_l2(&plan, &target)?.1.to_flat();
    let err = ctx.plan_fd(Component::LossPixelL2, &plan, &g, |p| Ok(loss_pixel_l2(p, &target)?.0))?;
    record(4, &mut ctx, err);

    // loss_natural_sound
    let models = Models {
        encoders: crate::encoders::EncoderSet::new(dim, model_seed, None)?,
        head,
    };
    let g = loss_natural_sound(&plan, &feats, &models, &aug)?.1.to_flat();
    let err = ctx.plan_fd(Component::LossNaturalSound, &plan, &g, |p| {
        Ok(loss_natural_sound(p, &feats, &models, &aug)?.0)
    })?;
    record(5, &mut ctx, err);

    Ok(out)
}

/// Runs every component over `opts.configs` seeded configurations.
pub fn run_gradcheck(opts: &GradcheckOptions) -> Result<GradcheckReport> {
    if opts.configs == 0 || opts.checks_per_config == 0 {
        return Err(Error::param("gradcheck needs at least one configuration and check"));
    }
    if !(opts.epsilon > 0.0) {
        return Err(Error::param("finite-difference step must be positive"));
    }
    let per_config = (0..opts.configs)
        .into_par_iter()
        .map(|i| check_config(opts, i))
        .collect::<Result<Vec<_>>>()?;
    let components = Component::ALL
        .iter()
        .enumerate()
        .map(|(k, &c)| ComponentReport {
            component: c,
            checks: opts.configs * opts.checks_per_config,
            redrawn: per_config.iter().map(|r| r[k].1).sum(),
            max_rel_error: per_config.iter().map(|r| r[k].0).fold(0.0, f64::max),
            tolerance: c.tolerance(),
        })
        .collect();
    Ok(GradcheckReport { components })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_passes_and_lists_each_component_once() {
        let opts = GradcheckOptions {
            configs: 4,
            ..GradcheckOptions::default()
        };
        let r = run_gradcheck(&opts).unwrap();
        assert!(r.passed(), "{r}");
        let names: Vec<_> = r.components.iter().map(|c| c.component).collect();
        assert_eq!(names, Component::ALL);
    }

    #[test]
    fn corruption_is_detected() {
        let opts = GradcheckOptions {
            configs: 2,
            corrupt: Some(Component::EncodeImage),
            ..GradcheckOptions::default()
        };
        let r = run_gradcheck(&opts).unwrap();
        assert!(!r.passed());
        let failed: Vec<_> = r.components.iter().filter(|c| !c.passed()).map(|c| c.component).collect();
        assert_eq!(failed, vec![Component::EncodeImage]);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1e-9, 0.0, 1e-6), 0.0);
        assert!((relative_error(1.0, 1.1, 1e-6) - 0.1 / 1.1).abs() < 1e-12);
    }
}
