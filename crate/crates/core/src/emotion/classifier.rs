use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{map_label, DatasetLabel, Emotion, EmotionDistribution, N_EMOTIONS};
use crate::audio::{FeatureStack, MEL_FLOOR, N_CHROMA, N_MELS, N_MFCC};
use crate::encoders::{mean_std, WeightFile};
use crate::error::{Error, Result};
use crate::objective::Adam;

pub const HIDDEN_UNITS: usize = 64;
const N_MEL_SUB: usize = 20;
pub const SPEECH_INPUT_DIM: usize = 2 * (N_MFCC + N_CHROMA + N_MEL_SUB);

/// Mel bands kept for the pooled input: `round(i * 63 / 19)` for `i in 0..20`.
pub const MEL_SUBSAMPLE_BANDS: [usize; N_MEL_SUB] = {
    let mut out = [0; N_MEL_SUB];
    let mut i = 0;
    while i < N_MEL_SUB {
        let num = i * (N_MELS - 1);
        let den = N_MEL_SUB - 1;
        out[i] = (2 * num + den) / (2 * den);
        i += 1;
    }
    out
};

const INIT_DOMAIN: u64 = 0x5e12_c1a5_0000_0004;

/// Classifier input, ordered `[mfcc mean (20), mfcc std (20), chroma mean
/// (12), chroma std (12), sub-mel mean (20), sub-mel std (20)]`.
///
/// MFCC and log-mel statistics are divided by `-ln(1e-10)` to keep the
/// hidden layer out of `tanh` saturation.
pub fn pool_speech_features(feats: &FeatureStack) -> Result<Vec<f64>> {
    if feats.n_frames == 0 {
        return Err(Error::param("cannot classify an empty feature stack"));
    }
    feats.validate()?;
    let log_scale = -MEL_FLOOR.ln();
    let mut out = Vec::with_capacity(SPEECH_INPUT_DIM);
    let mut push = |rows: &[Vec<f64>], cols: &mut dyn Iterator<Item = usize>, scale: f64| {
        let stats: Vec<(f64, f64)> = cols.map(|c| mean_std(rows, c)).collect();
        out.extend(stats.iter().map(|(m, _)| m / scale));
        out.extend(stats.iter().map(|(_, s)| s / scale));
    };
    push(&feats.mfcc, &mut (0..N_MFCC), log_scale);
    push(&feats.chroma, &mut (0..N_CHROMA), 1.0);
    push(&feats.mel, &mut MEL_SUBSAMPLE_BANDS.into_iter(), log_scale);
    Ok(out)
}

/// Two-layer reference network: 104 -> 64 (tanh) -> 9 logits -> softmax.
#[derive(Clone, Debug, PartialEq)]
pub struct SpeechClassifier {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

struct Forward {
    hidden: Vec<f64>,
    probs: [f64; N_EMOTIONS],
}

impl SpeechClassifier {
    pub fn zeros() -> Self {
        Self {
            w1: vec![0.0; HIDDEN_UNITS * SPEECH_INPUT_DIM],
            b1: vec![0.0; HIDDEN_UNITS],
            w2: vec![0.0; N_EMOTIONS * HIDDEN_UNITS],
            b2: vec![0.0; N_EMOTIONS],
        }
    }

    /// Scaled-normal weights and zero biases.
    pub fn seeded(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ INIT_DOMAIN);
        let mut normal = |n: usize, scale: f64| -> Vec<f64> {
            (0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z * scale
                })
                .collect()
        };
        let w1 = normal(HIDDEN_UNITS * SPEECH_INPUT_DIM, 1.0 / (SPEECH_INPUT_DIM as f64).sqrt());
        let w2 = normal(N_EMOTIONS * HIDDEN_UNITS, 1.0 / (HIDDEN_UNITS as f64).sqrt());
        Self {
            w1,
            b1: vec![0.0; HIDDEN_UNITS],
            w2,
            b2: vec![0.0; N_EMOTIONS],
        }
    }

    pub fn from_weights(w: &WeightFile) -> Result<Self> {
        Ok(Self {
            w1: w.expect("w1", &[HIDDEN_UNITS, SPEECH_INPUT_DIM])?.to_f64(),
            b1: w.expect("b1", &[HIDDEN_UNITS])?.to_f64(),
            w2: w.expect("w2", &[N_EMOTIONS, HIDDEN_UNITS])?.to_f64(),
            b2: w.expect("b2", &[N_EMOTIONS])?.to_f64(),
        })
    }

    /// True when all four classifier tensors are present.
    pub fn present_in(w: &WeightFile) -> bool {
        ["w1", "b1", "w2", "b2"].iter().all(|n| w.contains(n))
    }

    pub fn write_into(&self, w: &mut WeightFile) -> Result<()> {
        w.insert_f64("w1", &[HIDDEN_UNITS, SPEECH_INPUT_DIM], &self.w1)?;
        w.insert_f64("b1", &[HIDDEN_UNITS], &self.b1)?;
        w.insert_f64("w2", &[N_EMOTIONS, HIDDEN_UNITS], &self.w2)?;
        w.insert_f64("b2", &[N_EMOTIONS], &self.b2)?;
        Ok(())
    }

    pub fn to_weight_file(&self) -> Result<WeightFile> {
        let mut w = WeightFile::new();
        self.write_into(&mut w)?;
        Ok(w)
    }

    fn forward(&self, x: &[f64]) -> Forward {
        let hidden: Vec<f64> = self
            .w1
            .chunks_exact(SPEECH_INPUT_DIM)
            .zip(&self.b1)
            .map(|(row, b)| (b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()).tanh())
            .collect();
        let mut logits = [0.0; N_EMOTIONS];
        for (k, row) in self.w2.chunks_exact(HIDDEN_UNITS).enumerate() {
            logits[k] = self.b2[k] + row.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>();
        }
        Forward {
            hidden,
            probs: EmotionDistribution::softmax(&logits).probs,
        }
    }

    pub fn predict_pooled(&self, x: &[f64]) -> Result<EmotionDistribution> {
        if x.len() != SPEECH_INPUT_DIM {
            return Err(Error::param(format!(
                "pooled input has {} values, expected {SPEECH_INPUT_DIM}",
                x.len()
            )));
        }
        let probs = self.forward(x).probs;
        if probs.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numeric("classifier produced non-finite probabilities".into()));
        }
        Ok(EmotionDistribution { probs })
    }

    pub fn predict(&self, feats: &FeatureStack) -> Result<EmotionDistribution> {
        self.predict_pooled(&pool_speech_features(feats)?)
    }

    fn params_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    fn flat(&self) -> Vec<f64> {
        [&self.w1, &self.b1, &self.w2, &self.b2]
            .into_iter()
            .flatten()
            .copied()
            .collect()
    }

    fn set_flat(&mut self, flat: &[f64]) {
        let mut off = 0;
        for p in self.params_mut() {
            let n = p.len();
            p.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
    }

    /// Mean cross-entropy, its flat gradient and the training accuracy.
    fn loss_grad(&self, xs: &[Vec<f64>], ys: &[usize]) -> (f64, Vec<f64>, f64) {
        let n = xs.len() as f64;
        let mut g = Self::zeros();
        let mut loss = 0.0;
        let mut correct = 0usize;
        for (x, &y) in xs.iter().zip(ys) {
            let fw = self.forward(x);
            loss -= fw.probs[y].max(f64::MIN_POSITIVE).ln();
            if (EmotionDistribution { probs: fw.probs }).argmax().index() == y {
                correct += 1;
            }
            let mut d_logit = fw.probs;
            d_logit[y] -= 1.0;
            let mut d_hidden = vec![0.0; HIDDEN_UNITS];
            for k in 0..N_EMOTIONS {
                let dl = d_logit[k] / n;
                g.b2[k] += dl;
                let row = &self.w2[k * HIDDEN_UNITS..(k + 1) * HIDDEN_UNITS];
                let grow = &mut g.w2[k * HIDDEN_UNITS..(k + 1) * HIDDEN_UNITS];
                for j in 0..HIDDEN_UNITS {
                    grow[j] += dl * fw.hidden[j];
                    d_hidden[j] += dl * row[j];
                }
            }
            for j in 0..HIDDEN_UNITS {
                let da = d_hidden[j] * (1.0 - fw.hidden[j] * fw.hidden[j]);
                g.b1[j] += da;
                let grow = &mut g.w1[j * SPEECH_INPUT_DIM..(j + 1) * SPEECH_INPUT_DIM];
                for (gw, xv) in grow.iter_mut().zip(x) {
                    *gw += da * xv;
                }
            }
        }
        (loss / n, g.flat(), correct as f64 / n)
    }
}

/// Full-batch Adam settings.
#[derive(Clone, Copy, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 1e-2,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainedClassifier {
    pub classifier: SpeechClassifier,
    /// Accuracy of the returned weights on the training set.
    pub accuracy: f64,
    /// `loss_history[k]` is the mean cross-entropy after `k` epochs.
    pub loss_history: Vec<f64>,
}

/// Trains on pre-pooled 104-dim inputs.
pub fn train_on_pooled(data: &[(Vec<f64>, Emotion)], cfg: TrainConfig) -> Result<TrainedClassifier> {
    if let Some((x, _)) = data.iter().find(|(x, _)| x.len() != SPEECH_INPUT_DIM) {
        return Err(Error::param(format!(
            "pooled input has {} values, expected {SPEECH_INPUT_DIM}",
            x.len()
        )));
    }
    let first = data
        .first()
        .ok_or_else(|| Error::param("training set is empty"))?
        .1;
    if data.iter().all(|(_, e)| *e == first) {
        return Err(Error::param(format!(
            "training set contains only the class {first}; need at least two"
        )));
    }
    if !(cfg.lr > 0.0 && cfg.lr.is_finite()) {
        return Err(Error::param("learning rate must be positive"));
    }
    let xs: Vec<Vec<f64>> = data.iter().map(|(x, _)| x.clone()).collect();
    let ys: Vec<usize> = data.iter().map(|(_, e)| e.index()).collect();

    let mut model = SpeechClassifier::seeded(cfg.seed);
    let mut flat = model.flat();
    let mut adam = Adam::with_defaults(flat.len());
    let mut history = Vec::with_capacity(cfg.epochs + 1);
    let (mut loss, mut grad, mut accuracy) = model.loss_grad(&xs, &ys);
    history.push(loss);
    for epoch in 0..cfg.epochs {
        adam.update(&mut flat, &grad, |_| cfg.lr);
        model.set_flat(&flat);
        (loss, grad, accuracy) = model.loss_grad(&xs, &ys);
        if !loss.is_finite() {
            return Err(Error::Numeric(format!(
                "classifier loss became non-finite at epoch {}",
                epoch + 1
            )));
        }
        history.push(loss);
    }
    Ok(TrainedClassifier {
        classifier: model,
        accuracy,
        loss_history: history,
    })
}

/// Pools each clip, harmonizes its label and trains.
pub fn train_speech_classifier(
    dataset: &[(FeatureStack, DatasetLabel)],
    cfg: TrainConfig,
) -> Result<TrainedClassifier> {
    let pooled = dataset
        .iter()
        .map(|(f, l)| Ok((pool_speech_features(f)?, map_label(l)?)))
        .collect::<Result<Vec<_>>>()?;
    train_on_pooled(&pooled, cfg)
}

/// Runs the classifier stored in a weight file on one clip.
pub fn speech_emotion(feats: &FeatureStack, weights: &WeightFile) -> Result<EmotionDistribution> {
    SpeechClassifier::from_weights(weights)?.predict(feats)
}
