//! Config-driven painting runs: load inputs, build the objective, optimize,
//! and write the artifacts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::audio::{decode_wav, extract_features};
use crate::canvas::{load_png, save_png, AugmentationSpec, CanvasImage, Rgb};
use crate::emotion::{speech_emotion, Emotion, EmotionDistribution, SpeechClassifier};
use crate::encoders::{load_weight_file, DEFAULT_DIM};
use crate::error::{Error, Result};
use crate::objective::{
    optimize, Models, Objective, ObjectiveSpec, OptimizationResult, OptimizerConfig, Term,
};
use crate::strokes::{init_plan, render_plan, CanvasSpec, InitStrategy, PaintingPlan, DEFAULT_SOFTNESS};

pub const PLAN_FILE: &str = "plan.json";
pub const PAINTING_FILE: &str = "painting.png";
pub const LOSS_FILE: &str = "loss.csv";
pub const META_FILE: &str = "meta.json";

fn white() -> Rgb {
    [1.0; 3]
}

fn default_softness() -> f64 {
    DEFAULT_SOFTNESS
}

fn default_init() -> InitStrategy {
    InitStrategy::UniformRandom
}

fn default_dim() -> usize {
    DEFAULT_DIM
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CanvasConfig {
    pub width_px: usize,
    pub height_px: usize,
    #[serde(default = "white")]
    pub background_rgb: Rgb,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrokesConfig {
    pub count: usize,
    #[serde(default = "default_init")]
    pub init: InitStrategy,
    #[serde(default = "default_softness")]
    pub softness: f64,
}

/// Per-term weights. A weight left out defaults to 1.0 when its term is
/// active; giving a weight for a term whose input is missing is an error.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermWeights {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub natural_sound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speech_text: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speech_emotion: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pixel_l2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direct_emotion: Option<f64>,
}

/// Objective inputs.
///
/// A WAV together with a transcript selects the speech terms (text and
/// speech emotion, the latter needing classifier tensors in the weight
/// file). A WAV alone selects the natural-sound term. The transcript comes
/// from an external transcriber, either inline or as a UTF-8 file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wav_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_image_path: Option<PathBuf>,
    /// Canonical emotion name painted directly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emotion: Option<String>,
    #[serde(default)]
    pub weights: TermWeights,
    #[serde(default)]
    pub augmentation: AugmentationSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_file: Option<PathBuf>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            dim: DEFAULT_DIM,
            seed: 0,
            weight_file: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
}

impl Default for OutputsConfig {
    fn default() -> Self {
        Self {
            dir: default_out_dir(),
        }
    }
}

/// The `paint` command's JSON config. Relative paths are resolved against
/// the directory holding the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PaintConfig {
    pub canvas: CanvasConfig,
    pub strokes: StrokesConfig,
    pub objective: ObjectiveConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub outputs: OutputsConfig,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn require_file(field: &str, path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(config_err(format!("{field}: file not found: {}", path.display())))
    }
}

impl PaintConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| config_err(e.to_string()))
    }

    /// Reads, resolves and validates a config file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new("")));
        cfg.validate()?;
        Ok(cfg)
    }

    /// Joins every relative path onto `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let o = &mut self.objective;
        for p in [&mut o.wav_path, &mut o.transcript_path, &mut o.target_image_path]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        if let Some(p) = &mut self.encoder.weight_file {
            fix(p);
        }
        fix(&mut self.outputs.dir);
    }

    /// Checks values and that every referenced input file exists.
    pub fn validate(&self) -> Result<()> {
        let c = &self.canvas;
        if c.width_px == 0 || c.height_px == 0 {
            return Err(config_err("canvas dimensions must be positive"));
        }
        if c.background_rgb.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(config_err("canvas.background_rgb must lie in [0, 1]"));
        }
        if self.strokes.count == 0 {
            return Err(config_err("strokes.count must be at least 1"));
        }
        if !(self.strokes.softness.is_finite() && self.strokes.softness > 0.0) {
            return Err(config_err("strokes.softness must be positive"));
        }
        if self.encoder.dim == 0 {
            return Err(config_err("encoder.dim must be positive"));
        }
        self.optimizer.validate().map_err(|e| config_err(format!("optimizer: {e}")))?;
        let o = &self.objective;
        o.augmentation
            .validate()
            .map_err(|e| config_err(format!("objective.augmentation: {e}")))?;
        if o.transcript.is_some() && o.transcript_path.is_some() {
            return Err(config_err("give either objective.transcript or objective.transcript_path"));
        }
        for (field, p) in [
            ("objective.wav_path", &o.wav_path),
            ("objective.transcript_path", &o.transcript_path),
            ("objective.target_image_path", &o.target_image_path),
            ("encoder.weight_file", &self.encoder.weight_file),
        ] {
            if let Some(p) = p {
                require_file(field, p)?;
            }
        }
        if let Some(name) = &o.emotion {
            name.parse::<Emotion>()
                .map_err(|e| config_err(format!("objective.emotion: {e}")))?;
        }
        if self.strokes.init == InitStrategy::ImageSeeded && o.target_image_path.is_none() {
            return Err(config_err("image-seeded init needs objective.target_image_path"));
        }
        let active = self.active_terms();
        if active.is_empty() {
            return Err(config_err(
                "objective has no inputs: give a wav, transcript, target image or emotion",
            ));
        }
        let w = &o.weights;
        for (name, given) in [
            ("natural_sound", w.natural_sound),
            ("speech_text", w.speech_text),
            ("speech_emotion", w.speech_emotion),
            ("pixel_l2", w.pixel_l2),
            ("direct_emotion", w.direct_emotion),
        ] {
            let Some(v) = given else { continue };
            if !active.iter().any(|(n, _)| *n == name) {
                return Err(config_err(format!(
                    "objective.weights.{name} given but its input is missing"
                )));
            }
            if !(v.is_finite() && v >= 0.0) {
                return Err(config_err(format!(
                    "objective.weights.{name} must be finite and nonnegative"
                )));
            }
        }
        if active.iter().all(|(_, w)| *w == 0.0) {
            return Err(config_err("every active objective weight is zero"));
        }
        Ok(())
    }

    fn has_transcript(&self) -> bool {
        self.objective.transcript.is_some() || self.objective.transcript_path.is_some()
    }

    /// Active terms with their resolved weights, in evaluation order.
    pub fn active_terms(&self) -> Vec<(&'static str, f64)> {
        let o = &self.objective;
        let w = &o.weights;
        let mut out = Vec::new();
        match (o.wav_path.is_some(), self.has_transcript()) {
            (true, true) => {
                out.push(("speech_text", w.speech_text.unwrap_or(1.0)));
                out.push(("speech_emotion", w.speech_emotion.unwrap_or(1.0)));
            }
            (true, false) => out.push(("natural_sound", w.natural_sound.unwrap_or(1.0))),
            (false, true) => out.push(("speech_text", w.speech_text.unwrap_or(1.0))),
            (false, false) => {}
        }
        if o.target_image_path.is_some() {
            out.push(("pixel_l2", w.pixel_l2.unwrap_or(1.0)));
        }
        if o.emotion.is_some() {
            out.push(("direct_emotion", w.direct_emotion.unwrap_or(1.0)));
        }
        out
    }

    /// Copy with every defaulted weight written out.
    pub fn resolved(&self) -> Self {
        let mut out = self.clone();
        let w = &mut out.objective.weights;
        for (name, v) in self.active_terms() {
            let slot = match name {
                "natural_sound" => &mut w.natural_sound,
                "speech_text" => &mut w.speech_text,
                "speech_emotion" => &mut w.speech_emotion,
                "pixel_l2" => &mut w.pixel_l2,
                _ => &mut w.direct_emotion,
            };
            *slot = Some(v);
        }
        out
    }
}

/// Everything a finished run produces.
#[derive(Clone, Debug)]
pub struct PaintRun {
    pub config: PaintConfig,
    pub initial_plan: PaintingPlan,
    pub result: OptimizationResult,
    pub painting: CanvasImage,
    /// Speech-emotion target when the speech terms are active.
    pub speech_target: Option<EmotionDistribution>,
}

fn read_transcript(o: &ObjectiveConfig) -> Result<Option<String>> {
    match (&o.transcript, &o.transcript_path) {
        (Some(t), _) => Ok(Some(t.clone())),
        (None, Some(p)) => std::fs::read_to_string(p).map(Some).map_err(|e| Error::io(p, e)),
        (None, None) => Ok(None),
    }
}

/// Runs the optimization described by a validated config.
pub fn run_paint(cfg: &PaintConfig) -> Result<PaintRun> {
    cfg.validate()?;
    let cfg = cfg.resolved();
    let o = &cfg.objective;
    let w = &o.weights;
    let weights = cfg.encoder.weight_file.as_ref().map(load_weight_file).transpose()?;
    let models = Models::load(cfg.encoder.dim, cfg.encoder.seed, weights.as_ref())?;

    let target = o.target_image_path.as_ref().map(load_png).transpose()?;
    if let Some(t) = &target {
        if (t.width(), t.height()) != (cfg.canvas.width_px, cfg.canvas.height_px) {
            return Err(config_err(format!(
                "target image is {}x{}, canvas is {}x{}",
                t.width(),
                t.height(),
                cfg.canvas.width_px,
                cfg.canvas.height_px
            )));
        }
    }
    let feats = match &o.wav_path {
        Some(p) => Some(extract_features(&decode_wav(p)?)?),
        None => None,
    };
    let transcript = read_transcript(o)?;

    let mut terms = Vec::new();
    let mut speech_target = None;
    match (feats, transcript) {
        (Some(f), Some(text)) => {
            let wf = weights
                .as_ref()
                .filter(|w| SpeechClassifier::present_in(w))
                .ok_or_else(|| {
                    config_err("speech objective needs classifier tensors w1, b1, w2, b2 in encoder.weight_file")
                })?;
            let dist = speech_emotion(&f, wf)?;
            terms.push(Term::speech_text(w.speech_text.unwrap_or(1.0), text));
            terms.push(Term::speech_emotion(w.speech_emotion.unwrap_or(1.0), dist.clone()));
            speech_target = Some(dist);
        }
        (Some(f), None) => terms.push(Term::natural_sound(w.natural_sound.unwrap_or(1.0), f)),
        (None, Some(text)) => terms.push(Term::speech_text(w.speech_text.unwrap_or(1.0), text)),
        (None, None) => {}
    }
    if let Some(t) = &target {
        terms.push(Term::pixel_l2(w.pixel_l2.unwrap_or(1.0), t.clone()));
    }
    if let Some(name) = &o.emotion {
        let e: Emotion = name.parse()?;
        terms.push(Term::direct_emotion(
            w.direct_emotion.unwrap_or(1.0),
            EmotionDistribution::one_hot(e),
        ));
    }

    let spec = ObjectiveSpec {
        terms,
        augmentation: o.augmentation.clone(),
        seed: cfg.encoder.seed,
    };
    let objective = Objective::new(spec, models)?;

    let canvas = CanvasSpec {
        width_px: cfg.canvas.width_px,
        height_px: cfg.canvas.height_px,
        background: cfg.canvas.background_rgb,
        softness: cfg.strokes.softness,
    };
    let initial_plan = init_plan(
        cfg.strokes.init,
        cfg.strokes.count,
        &canvas,
        target.as_ref(),
        cfg.optimizer.seed,
    )?;
    let result = optimize(&initial_plan, &objective, &cfg.optimizer)?;
    let painting = render_plan(&result.plan);
    Ok(PaintRun {
        config: cfg,
        initial_plan,
        result,
        painting,
        speech_target,
    })
}

impl PaintRun {
    /// Run record: the resolved config, seeds, thread count and outcome.
    pub fn meta(&self) -> serde_json::Value {
        let r = &self.result;
        json!({
            "version": env!("CARGO_PKG_VERSION"),
            "config": self.config,
            "seeds": {
                "stroke_init": self.config.optimizer.seed,
                "encoder": self.config.encoder.seed,
                "augmentation": self.config.objective.augmentation.seed,
            },
            "threads": rayon::current_num_threads(),
            "terms": self.config.active_terms().iter()
                .map(|(k, w)| json!({"kind": k, "weight": w}))
                .collect::<Vec<_>>(),
            "speech_emotion_target": self.speech_target.as_ref().map(|d| d.probs),
            "initial_loss": r.loss_history[0],
            "best_loss": r.best_loss(),
            "best_iteration": r.best_iteration,
        })
    }

    /// Writes plan.json, painting.png, loss.csv and meta.json into `dir`.
    pub fn write_artifacts(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, text: String| {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| Error::io(p, e))
        };
        write(PLAN_FILE, self.result.plan.to_json()?)?;
        save_png(&self.painting, dir.join(PAINTING_FILE))?;
        self.result.write_loss_csv(dir.join(LOSS_FILE))?;
        let meta = serde_json::to_string_pretty(&self.meta()).map_err(|e| Error::format(e.to_string()))?;
        write(META_FILE, meta)
    }
}

/// Loads `config_path`, runs it and writes the artifacts into `out_dir` (or
/// the config's `outputs.dir`). Returns the directory written.
pub fn paint(config_path: impl AsRef<Path>, out_dir: Option<&Path>) -> Result<PathBuf> {
    let mut cfg = PaintConfig::load(config_path)?;
    if let Some(d) = out_dir {
        cfg.outputs.dir = d.to_path_buf();
    }
    let run = run_paint(&cfg)?;
    run.write_artifacts(&cfg.outputs.dir)?;
    Ok(cfg.outputs.dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> PaintConfig {
        PaintConfig::from_json(
            r#"{
                "canvas": {"width_px": 16, "height_px": 12},
                "strokes": {"count": 3},
                "objective": {"emotion": "awe"},
                "optimizer": {"iterations": 4},
                "encoder": {"dim": 16}
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn defaults_fill_in() {
        let c = base();
        assert_eq!(c.canvas.background_rgb, [1.0; 3]);
        assert_eq!(c.strokes.init, InitStrategy::UniformRandom);
        assert_eq!(c.optimizer.lr_color, OptimizerConfig::default().lr_color);
        assert_eq!(c.active_terms(), vec![("direct_emotion", 1.0)]);
        assert_eq!(c.resolved().objective.weights.direct_emotion, Some(1.0));
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = PaintConfig::from_json(
            r#"{"canvas": {"width_px": 4, "height_px": 4, "colour": 1},
                "strokes": {"count": 1}, "objective": {}}"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn validation_failures() {
        let mut c = base();
        c.objective.emotion = Some("joy".into());
        assert!(c.validate().is_err());

        let mut c = base();
        c.objective.emotion = None;
        assert!(c.validate().unwrap_err().to_string().contains("no inputs"));

        let mut c = base();
        c.objective.weights.pixel_l2 = Some(1.0);
        assert!(c.validate().unwrap_err().to_string().contains("pixel_l2"));

        let mut c = base();
        c.objective.weights.direct_emotion = Some(0.0);
        assert!(c.validate().is_err());

        let mut c = base();
        c.objective.wav_path = Some("/definitely/missing.wav".into());
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("/definitely/missing.wav"), "{msg}");
    }

    #[test]
    fn mode_selection() {
        let mut c = base();
        c.objective.emotion = None;
        c.objective.wav_path = Some("a.wav".into());
        assert_eq!(c.active_terms(), vec![("natural_sound", 1.0)]);
        c.objective.transcript = Some("hello".into());
        c.objective.weights.speech_emotion = Some(0.5);
        assert_eq!(
            c.active_terms(),
            vec![("speech_text", 1.0), ("speech_emotion", 0.5)]
        );
    }

    #[test]
    fn relative_paths_follow_the_config() {
        let mut c = base();
        c.objective.wav_path = Some("clip.wav".into());
        c.encoder.weight_file = Some("/abs/w.synw".into());
        c.resolve_paths(Path::new("/cfg"));
        assert_eq!(c.objective.wav_path.unwrap(), PathBuf::from("/cfg/clip.wav"));
        assert_eq!(c.encoder.weight_file.unwrap(), PathBuf::from("/abs/w.synw"));
        assert_eq!(c.outputs.dir, PathBuf::from("/cfg/out"));
    }

    #[test]
    fn direct_emotion_run() {
        let run = run_paint(&base()).unwrap();
        assert_eq!(run.result.loss_history.len(), 5);
        assert!(run.result.best_loss() <= run.result.loss_history[0]);
        let meta = run.meta();
        assert_eq!(meta["terms"][0]["kind"], "direct_emotion");
        assert_eq!(meta["config"]["encoder"]["dim"], 16);
    }
}
