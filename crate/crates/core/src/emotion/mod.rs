//! Nine-class emotion taxonomy, cross-dataset label harmonization, the
//! speech-emotion classifier and the differentiable image-emotion head.

mod classifier;
mod image_head;

pub use classifier::{
    pool_speech_features, speech_emotion, train_on_pooled, train_speech_classifier,
    SpeechClassifier, TrainConfig, TrainedClassifier, HIDDEN_UNITS, MEL_SUBSAMPLE_BANDS,
    SPEECH_INPUT_DIM,
};
pub use image_head::{image_emotion, EmotionHead, ImageEmotion};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_EMOTIONS: usize = 9;

/// Canonical emotion classes, in index order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Emotion {
    Amusement,
    Anger,
    Awe,
    Contentment,
    Disgust,
    Excitement,
    Fear,
    Sadness,
    SomethingElse,
}

impl Emotion {
    pub const ALL: [Emotion; N_EMOTIONS] = [
        Emotion::Amusement,
        Emotion::Anger,
        Emotion::Awe,
        Emotion::Contentment,
        Emotion::Disgust,
        Emotion::Excitement,
        Emotion::Fear,
        Emotion::Sadness,
        Emotion::SomethingElse,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Emotion::Amusement => "amusement",
            Emotion::Anger => "anger",
            Emotion::Awe => "awe",
            Emotion::Contentment => "contentment",
            Emotion::Disgust => "disgust",
            Emotion::Excitement => "excitement",
            Emotion::Fear => "fear",
            Emotion::Sadness => "sadness",
            Emotion::SomethingElse => "something-else",
        }
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Emotion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let folded = s.trim().to_lowercase();
        Self::ALL
            .into_iter()
            .find(|e| e.name() == folded)
            .ok_or_else(|| Error::param(format!("unknown emotion {s:?}")))
    }
}

/// Probability vector over [`Emotion::ALL`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmotionDistribution {
    pub probs: [f64; N_EMOTIONS],
}

impl EmotionDistribution {
    pub fn new(probs: [f64; N_EMOTIONS]) -> Result<Self> {
        let d = Self { probs };
        d.validate()?;
        Ok(d)
    }

    pub fn uniform() -> Self {
        Self {
            probs: [1.0 / N_EMOTIONS as f64; N_EMOTIONS],
        }
    }

    pub fn one_hot(e: Emotion) -> Self {
        let mut probs = [0.0; N_EMOTIONS];
        probs[e.index()] = 1.0;
        Self { probs }
    }

    /// Numerically stable softmax.
    pub fn softmax(logits: &[f64; N_EMOTIONS]) -> Self {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut probs = logits.map(|l| (l - max).exp());
        let sum: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= sum;
        }
        Self { probs }
    }

    pub fn validate(&self) -> Result<()> {
        if self.probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::param("emotion probabilities must be finite and nonnegative"));
        }
        let sum: f64 = self.probs.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::param(format!("emotion probabilities sum to {sum}")));
        }
        Ok(())
    }

    /// First class with the highest probability.
    pub fn argmax(&self) -> Emotion {
        let mut best = 0;
        for i in 1..N_EMOTIONS {
            if self.probs[i] > self.probs[best] {
                best = i;
            }
        }
        Emotion::ALL[best]
    }
}

/// Speech and art datasets whose labels can be harmonized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dataset {
    Artemis,
    Ravdess,
    Crema,
    Tess,
    Sav,
    Iemocap,
}

impl Dataset {
    pub const ALL: [Dataset; 6] = [
        Dataset::Artemis,
        Dataset::Ravdess,
        Dataset::Crema,
        Dataset::Tess,
        Dataset::Sav,
        Dataset::Iemocap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Dataset::Artemis => "artemis",
            Dataset::Ravdess => "ravdess",
            Dataset::Crema => "crema",
            Dataset::Tess => "tess",
            Dataset::Sav => "sav",
            Dataset::Iemocap => "iemocap",
        }
    }
}

impl FromStr for Dataset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let folded = s.trim().to_lowercase();
        Self::ALL
            .into_iter()
            .find(|d| d.name() == folded)
            .ok_or_else(|| Error::Mapping {
                dataset: s.to_string(),
                label: String::new(),
            })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetLabel {
    pub dataset: Dataset,
    pub label: String,
}

impl DatasetLabel {
    pub fn new(dataset: Dataset, label: impl Into<String>) -> Self {
        Self {
            dataset,
            label: label.into(),
        }
    }
}

use Dataset::*;
use Emotion::*;

/// Every filled cell of the label correspondence table. Blank cells have no
/// entry.
pub const LABEL_TABLE: &[(Dataset, &str, Emotion)] = &[
    (Artemis, "amusement", Amusement),
    (Artemis, "anger", Anger),
    (Artemis, "awe", Awe),
    (Artemis, "contentment", Contentment),
    (Artemis, "disgust", Disgust),
    (Artemis, "excitement", Excitement),
    (Artemis, "fear", Fear),
    (Artemis, "sadness", Sadness),
    (Artemis, "something-else", SomethingElse),
    (Ravdess, "happy", Amusement),
    (Ravdess, "angry", Anger),
    (Ravdess, "calm", Contentment),
    (Ravdess, "disgust", Disgust),
    (Ravdess, "surprise", Excitement),
    (Ravdess, "fear", Fear),
    (Ravdess, "sad", Sadness),
    (Ravdess, "neutral", SomethingElse),
    (Crema, "HAP", Amusement),
    (Crema, "ANG", Anger),
    (Crema, "DIS", Disgust),
    (Crema, "FEA", Fear),
    (Crema, "SAD", Sadness),
    (Crema, "NEU", SomethingElse),
    (Tess, "happy", Amusement),
    (Tess, "angry", Anger),
    (Tess, "disgust", Disgust),
    (Tess, "surprise", Excitement),
    (Tess, "fear", Fear),
    (Tess, "sad", Sadness),
    (Tess, "neutral", SomethingElse),
    (Sav, "a", Anger),
    (Sav, "d", Disgust),
    (Sav, "su", Excitement),
    (Sav, "f", Fear),
    (Sav, "sa", Sadness),
    (Sav, "n", SomethingElse),
    (Iemocap, "hap", Amusement),
    (Iemocap, "exc", Amusement),
    (Iemocap, "fru", Anger),
    (Iemocap, "ang", Anger),
    (Iemocap, "dis", Disgust),
    (Iemocap, "sur", Excitement),
    (Iemocap, "fea", Fear),
    (Iemocap, "sad", Sadness),
    (Iemocap, "neu", SomethingElse),
    (Iemocap, "xxx", SomethingElse),
    (Iemocap, "oth", SomethingElse),
];

/// Maps a dataset-specific label onto the canonical taxonomy. Labels match
/// case-insensitively.
pub fn map_label(dl: &DatasetLabel) -> Result<Emotion> {
    let folded = dl.label.trim().to_lowercase();
    LABEL_TABLE
        .iter()
        .find(|(d, l, _)| *d == dl.dataset && l.to_lowercase() == folded)
        .map(|(_, _, e)| *e)
        .ok_or_else(|| Error::Mapping {
            dataset: dl.dataset.name().to_string(),
            label: dl.label.clone(),
        })
}

/// Convenience wrapper taking the dataset by name.
pub fn map_label_str(dataset: &str, label: &str) -> Result<Emotion> {
    let ds: Dataset = dataset.parse().map_err(|_| Error::Mapping {
        dataset: dataset.to_string(),
        label: label.to_string(),
    })?;
    map_label(&DatasetLabel::new(ds, label))
}
