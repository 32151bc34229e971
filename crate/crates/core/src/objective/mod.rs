//! Modality losses, their weighted composite and the Adam loop that
//! minimizes it over a [`PaintingPlan`].
//!
//! Every term produces a gradient on the rendered image. The composite sums
//! those image gradients in term order and pulls the result back through the
//! renderer once.

mod adam;

pub use adam::Adam;

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::FeatureStack;
use crate::canvas::{augment_views, AugmentationSpec, CanvasImage, ImageGrad};
use crate::emotion::{EmotionDistribution, EmotionHead, N_EMOTIONS};
use crate::encoders::{EncoderSet, ImageEncoding, WeightFile};
use crate::error::{Error, Result};
use crate::strokes::{render_plan, render_plan_vjp, PaintingPlan, PlanGrad};

/// `1 - u.v / (|u| |v|)`.
pub fn cosine_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    Ok(cosine_distance_grad(u, v)?.0)
}

/// Cosine distance and its gradient with respect to `v`.
fn cosine_distance_grad(u: &[f64], v: &[f64]) -> Result<(f64, Vec<f64>)> {
    if u.len() != v.len() {
        return Err(Error::param(format!(
            "cosine distance between vectors of length {} and {}",
            u.len(),
            v.len()
        )));
    }
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::Numeric("cosine distance of a zero vector".into()));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let sim = dot / (nu * nv);
    let grad = u
        .iter()
        .zip(v)
        .map(|(a, b)| -(a / (nu * nv) - dot * b / (nu * nv * nv * nv)))
        .collect();
    Ok((1.0 - sim, grad))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermKind {
    NaturalSound,
    SpeechText,
    SpeechEmotion,
    PixelL2,
    DirectEmotion,
}

impl TermKind {
    pub fn name(self) -> &'static str {
        match self {
            TermKind::NaturalSound => "natural_sound",
            TermKind::SpeechText => "speech_text",
            TermKind::SpeechEmotion => "speech_emotion",
            TermKind::PixelL2 => "pixel_l2",
            TermKind::DirectEmotion => "direct_emotion",
        }
    }

    fn uses_views(self) -> bool {
        matches!(self, TermKind::NaturalSound | TermKind::SpeechText)
    }

    fn uses_emotion(self) -> bool {
        matches!(self, TermKind::SpeechEmotion | TermKind::DirectEmotion)
    }
}

#[derive(Clone, Debug)]
pub enum TermPayload {
    Audio(FeatureStack),
    Text(String),
    Emotion(EmotionDistribution),
    Image(CanvasImage),
}

#[derive(Clone, Debug)]
pub struct Term {
    pub kind: TermKind,
    pub weight: f64,
    pub payload: TermPayload,
}

impl Term {
    pub fn natural_sound(weight: f64, feats: FeatureStack) -> Self {
        Self { kind: TermKind::NaturalSound, weight, payload: TermPayload::Audio(feats) }
    }

    pub fn speech_text(weight: f64, transcript: impl Into<String>) -> Self {
        Self { kind: TermKind::SpeechText, weight, payload: TermPayload::Text(transcript.into()) }
    }

    /// `target` is the speech classifier's output for the utterance.
    pub fn speech_emotion(weight: f64, target: EmotionDistribution) -> Self {
        Self { kind: TermKind::SpeechEmotion, weight, payload: TermPayload::Emotion(target) }
    }

    pub fn pixel_l2(weight: f64, target: CanvasImage) -> Self {
        Self { kind: TermKind::PixelL2, weight, payload: TermPayload::Image(target) }
    }

    pub fn direct_emotion(weight: f64, target: EmotionDistribution) -> Self {
        Self { kind: TermKind::DirectEmotion, weight, payload: TermPayload::Emotion(target) }
    }
}

#[derive(Clone, Debug)]
pub struct ObjectiveSpec {
    pub terms: Vec<Term>,
    pub augmentation: AugmentationSpec,
    /// Seed of the reference encoders built by the free-standing loss
    /// functions.
    pub seed: u64,
}

impl ObjectiveSpec {
    pub fn new(terms: Vec<Term>) -> Self {
        Self {
            terms,
            augmentation: AugmentationSpec::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for t in &self.terms {
            if !(t.weight.is_finite() && t.weight >= 0.0) {
                return Err(Error::param(format!(
                    "{} weight must be finite and nonnegative, got {}",
                    t.kind.name(),
                    t.weight
                )));
            }
            let ok = matches!(
                (t.kind, &t.payload),
                (TermKind::NaturalSound, TermPayload::Audio(_))
                    | (TermKind::SpeechText, TermPayload::Text(_))
                    | (TermKind::SpeechEmotion | TermKind::DirectEmotion, TermPayload::Emotion(_))
                    | (TermKind::PixelL2, TermPayload::Image(_))
            );
            if !ok {
                return Err(Error::param(format!("{} term has the wrong payload", t.kind.name())));
            }
            if let TermPayload::Emotion(d) = &t.payload {
                d.validate()?;
            }
        }
        if !self.terms.iter().any(|t| t.weight > 0.0) {
            return Err(Error::param("objective needs at least one term with positive weight"));
        }
        self.augmentation.validate()
    }
}

/// Encoders and emotion head shared by every term.
#[derive(Clone, Debug)]
pub struct Models {
    pub encoders: EncoderSet,
    pub head: EmotionHead,
}

impl Models {
    pub fn reference(dim: usize, seed: u64) -> Result<Self> {
        Self::load(dim, seed, None)
    }

    /// Seeded reference models with any tensors found in `weights` swapped in.
    pub fn load(dim: usize, seed: u64, weights: Option<&WeightFile>) -> Result<Self> {
        Ok(Self {
            encoders: EncoderSet::new(dim, seed, weights)?,
            head: EmotionHead::from_weights_or_seeded(weights, dim, seed)?,
        })
    }
}

enum Target {
    Embedding(Vec<f64>),
    Emotion([f64; N_EMOTIONS]),
    Image(CanvasImage),
}

struct PreparedTerm {
    kind: TermKind,
    weight: f64,
    target: Target,
}

/// An objective with every target embedding computed up front.
pub struct Objective {
    terms: Vec<PreparedTerm>,
    augmentation: AugmentationSpec,
    models: Models,
}

/// Value and plan gradient of the composite at one plan.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub total: f64,
    /// Weighted contribution of each term in spec order; zero-weight terms
    /// are skipped and report 0.
    pub terms: Vec<f64>,
    pub grad: PlanGrad,
}

impl Objective {
    pub fn new(spec: ObjectiveSpec, models: Models) -> Result<Self> {
        spec.validate()?;
        let terms = spec
            .terms
            .into_iter()
            .map(|t| {
                let target = match t.payload {
                    TermPayload::Audio(f) => {
                        Target::Embedding(models.encoders.audio.encode(&f)?.values().to_vec())
                    }
                    TermPayload::Text(s) => {
                        Target::Embedding(models.encoders.text.encode(&s)?.values().to_vec())
                    }
                    TermPayload::Emotion(d) => Target::Emotion(d.probs),
                    TermPayload::Image(img) => Target::Image(img),
                };
                Ok(PreparedTerm { kind: t.kind, weight: t.weight, target })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            terms,
            augmentation: spec.augmentation,
            models,
        })
    }

    pub fn term_kinds(&self) -> Vec<TermKind> {
        self.terms.iter().map(|t| t.kind).collect()
    }

    pub fn models(&self) -> &Models {
        &self.models
    }

    /// Composite value and gradient. `iteration` offsets the augmentation
    /// seed so each optimizer step sees fresh views.
    pub fn evaluate(&self, plan: &PaintingPlan, iteration: usize) -> Result<Evaluation> {
        let (total, terms, image_grad) = self.evaluate_image(plan, iteration)?;
        let grad = render_plan_vjp(plan, &image_grad)?;
        if !total.is_finite() || !grad.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss or gradient at iteration {iteration}"
            )));
        }
        Ok(Evaluation { total, terms, grad })
    }

    /// Composite value and its gradient with respect to the rendered image.
    pub fn evaluate_image(
        &self,
        plan: &PaintingPlan,
        iteration: usize,
    ) -> Result<(f64, Vec<f64>, ImageGrad)> {
        let img = render_plan(plan);
        let active = |pred: fn(TermKind) -> bool| {
            self.terms.iter().any(|t| t.weight > 0.0 && pred(t.kind))
        };
        let image_enc = &self.models.encoders.image;

        let views = if active(TermKind::uses_views) {
            let spec = self
                .augmentation
                .with_seed(self.augmentation.seed.wrapping_add(iteration as u64));
            let views = augment_views(&img, &spec)?;
            let encodings = views
                .views
                .par_iter()
                .map(|v| image_enc.forward(v))
                .collect::<Result<Vec<ImageEncoding>>>()?;
            Some((views, encodings))
        } else {
            None
        };
        let emotion = if active(TermKind::uses_emotion) {
            Some(self.models.head.forward(image_enc, &img)?)
        } else {
            None
        };

        let mut total = 0.0;
        let mut contributions = vec![0.0; self.terms.len()];
        let mut grad = ImageGrad::zeros_like(&img);
        for (k, term) in self.terms.iter().enumerate() {
            if term.weight == 0.0 {
                continue;
            }
            let (value, g) = match (&term.target, &views, &emotion) {
                (Target::Embedding(t), Some((views, encodings)), _) => {
                    let n = encodings.len() as f64;
                    let per_view = encodings
                        .par_iter()
                        .map(|enc| {
                            let (d, mut g_e) = cosine_distance_grad(t, enc.embedding.values())?;
                            g_e.iter_mut().for_each(|g| *g /= n);
                            Ok((d, image_enc.backward(enc, &g_e)))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let value = per_view.iter().map(|(d, _)| d).sum::<f64>() / n;
                    let grads: Vec<ImageGrad> = per_view.into_iter().map(|(_, g)| g).collect();
                    (value, views.vjp(&grads)?)
                }
                (Target::Emotion(t), _, Some(state)) => {
                    let (d, g_p) = cosine_distance_grad(t, &state.distribution.probs)?;
                    let g_p: [f64; N_EMOTIONS] = g_p.try_into().expect("nine classes");
                    (d, self.models.head.backward(image_enc, state, &g_p))
                }
                (Target::Image(target), _, _) => pixel_l2_image(&img, target)?,
                _ => unreachable!("shared state is built for every active term"),
            };
            contributions[k] = term.weight * value;
            total += term.weight * value;
            grad.add_scaled(&g, term.weight);
        }
        Ok((total, contributions, grad))
    }
}

/// Mean squared error over every channel and its image gradient.
fn pixel_l2_image(img: &CanvasImage, target: &CanvasImage) -> Result<(f64, ImageGrad)> {
    if !img.same_shape(target) {
        return Err(Error::param(format!(
            "target image is {}x{}, canvas is {}x{}",
            target.width(),
            target.height(),
            img.width(),
            img.height()
        )));
    }
    let n = (img.pixels().len() * 3) as f64;
    let mut sum = 0.0;
    let mut grad = ImageGrad::zeros_like(img);
    for ((a, b), g) in img.pixels().iter().zip(target.pixels()).zip(&mut grad.data) {
        for c in 0..3 {
            let d = a[c] - b[c];
            sum += d * d;
            g[c] = 2.0 * d / n;
        }
    }
    Ok((sum / n, grad))
}

/// Mean squared pixel error against `target` and its plan gradient.
pub fn loss_pixel_l2(plan: &PaintingPlan, target: &CanvasImage) -> Result<(f64, PlanGrad)> {
    let img = render_plan(plan);
    let (value, g) = pixel_l2_image(&img, target)?;
    Ok((value, render_plan_vjp(plan, &g)?))
}

/// Mean cosine distance between augmented views of the render and the audio.
pub fn loss_natural_sound(
    plan: &PaintingPlan,
    feats: &FeatureStack,
    models: &Models,
    aug: &AugmentationSpec,
) -> Result<(f64, PlanGrad)> {
    let spec = ObjectiveSpec {
        terms: vec![Term::natural_sound(1.0, feats.clone())],
        augmentation: aug.clone(),
        seed: 0,
    };
    let ev = Objective::new(spec, models.clone())?.evaluate(plan, 0)?;
    Ok((ev.total, ev.grad))
}

/// Text term over augmented views plus emotion term on the full render.
pub fn loss_speech(
    plan: &PaintingPlan,
    transcript: &str,
    speech_emotion: &EmotionDistribution,
    models: &Models,
    aug: &AugmentationSpec,
) -> Result<(f64, PlanGrad)> {
    let spec = ObjectiveSpec {
        terms: vec![
            Term::speech_text(1.0, transcript),
            Term::speech_emotion(1.0, speech_emotion.clone()),
        ],
        augmentation: aug.clone(),
        seed: 0,
    };
    let ev = Objective::new(spec, models.clone())?.evaluate(plan, 0)?;
    Ok((ev.total, ev.grad))
}

/// Composite under the seeded reference models of `spec.seed`.
pub fn composite_loss(plan: &PaintingPlan, spec: ObjectiveSpec) -> Result<Evaluation> {
    let models = Models::reference(crate::encoders::DEFAULT_DIM, spec.seed)?;
    Objective::new(spec, models)?.evaluate(plan, 0)
}

fn default_iterations() -> usize {
    300
}
fn default_lr_geometry() -> f64 {
    1e-2
}
fn default_lr_color() -> f64 {
    5e-2
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_epsilon() -> f64 {
    1e-8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    /// Position, orientation, length, bend and thickness.
    #[serde(default = "default_lr_geometry")]
    pub lr_geometry: f64,
    /// Stroke color, opacity and background.
    #[serde(default = "default_lr_color")]
    pub lr_color: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            iterations: default_iterations(),
            lr_geometry: default_lr_geometry(),
            lr_color: default_lr_color(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_epsilon(),
            seed: 0,
        }
    }
}

/// Upper bound on optimizer iterations accepted from configuration.
pub const MAX_ITERATIONS: usize = 1_000_000;

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 || self.iterations > MAX_ITERATIONS {
            return Err(Error::param(format!(
                "iterations must be in [1, {MAX_ITERATIONS}], got {}",
                self.iterations
            )));
        }
        for (name, lr) in [("lr_geometry", self.lr_geometry), ("lr_color", self.lr_color)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::param(format!("{name} must be positive, got {lr}")));
            }
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::param("Adam betas must lie in [0, 1)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::param("Adam epsilon must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct OptimizationResult {
    /// The lowest-loss plan seen.
    pub plan: PaintingPlan,
    pub best_iteration: usize,
    /// Entry `k` is the loss after `k` updates, so there are
    /// `iterations + 1` entries.
    pub loss_history: Vec<f64>,
    pub term_history: Vec<Vec<f64>>,
    pub term_kinds: Vec<TermKind>,
}

impl OptimizationResult {
    pub fn best_loss(&self) -> f64 {
        self.loss_history[self.best_iteration]
    }

    /// `iteration,total,<term names...>` followed by one row per entry of
    /// the loss history.
    pub fn loss_csv(&self) -> String {
        let mut out = String::from("iteration,total");
        for k in &self.term_kinds {
            out.push(',');
            out.push_str(k.name());
        }
        out.push('\n');
        for (i, (total, terms)) in self.loss_history.iter().zip(&self.term_history).enumerate() {
            write!(out, "{i},{total}").expect("string write");
            for t in terms {
                write!(out, ",{t}").expect("string write");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_loss_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.loss_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Adam over all plan parameters with separate geometry and color learning
/// rates, projecting back into the valid ranges after every step.
pub fn optimize(
    plan0: &PaintingPlan,
    objective: &Objective,
    cfg: &OptimizerConfig,
) -> Result<OptimizationResult> {
    plan0.validate()?;
    cfg.validate()?;
    let geometry = plan0.flat_is_geometry();
    let mut plan = plan0.clone();
    let mut adam = Adam::new(plan.param_count(), cfg.beta1, cfg.beta2, cfg.epsilon);
    let mut loss_history = Vec::with_capacity(cfg.iterations + 1);
    let mut term_history = Vec::with_capacity(cfg.iterations + 1);
    let mut best = (plan.clone(), 0usize, f64::INFINITY);
    for it in 0..=cfg.iterations {
        let ev = objective.evaluate(&plan, it)?;
        if ev.total < best.2 {
            best = (plan.clone(), it, ev.total);
        }
        loss_history.push(ev.total);
        term_history.push(ev.terms);
        if it == cfg.iterations {
            break;
        }
        let mut flat = plan.to_flat();
        adam.update(&mut flat, &ev.grad.to_flat(), |i| {
            if geometry[i] {
                cfg.lr_geometry
            } else {
                cfg.lr_color
            }
        });
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite parameter after update at iteration {it}"
            )));
        }
        plan.set_flat(&flat);
        plan.project();
    }
    Ok(OptimizationResult {
        plan: best.0,
        best_iteration: best.1,
        loss_history,
        term_history,
        term_kinds: objective.term_kinds(),
    })
}

#[cfg(test)]
mod tests;
