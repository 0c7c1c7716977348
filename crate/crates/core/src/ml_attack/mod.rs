//! Modeling attacks: learners trained on captured CRPs to predict responses
//! to unseen challenges.

mod lr;
mod mlp;

pub use lr::{train_lr, LinearModel, LrConfig};
pub use mlp::{train_mlp, Mlp, MlpConfig, MlpInput};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::protocol::CrpRecord;
use crate::puf::parity_features;

/// Parity feature rows (`N + 1` columns, last column constant 1) and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackDataset {
    width: usize,
    features: Vec<f64>,
    labels: Vec<bool>,
}

impl AttackDataset {
    /// Builds a dataset from records, labelling each with response bit `bit`.
    pub fn from_records<'a, I>(records: I, bit: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a CrpRecord>,
    {
        let mut width = None;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for r in records {
            let n = *width.get_or_insert(r.challenge.len());
            r.challenge.ensure_len(n)?;
            if bit >= r.expected_response.len() {
                return Err(Error::LengthMismatch { expected: bit + 1, actual: r.expected_response.len() });
            }
            features.extend(parity_features(r.challenge.as_slice()));
            labels.push(r.expected_response[bit]);
        }
        Ok(AttackDataset { width: width.map_or(0, |n| n + 1), features, labels })
    }

    pub fn from_parts(width: usize, features: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        if features.len() != width * labels.len() {
            return Err(Error::LengthMismatch { expected: width * labels.len(), actual: features.len() });
        }
        Ok(AttackDataset { width, features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Feature columns, `N + 1`.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.width..(i + 1) * self.width]
    }

    pub fn label(&self, i: usize) -> bool {
        self.labels[i]
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn prevalence(&self) -> f64 {
        self.labels.iter().filter(|&&l| l).count() as f64 / self.len().max(1) as f64
    }

    pub fn subset(&self, indices: &[usize]) -> AttackDataset {
        let mut features = Vec::with_capacity(indices.len() * self.width);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        AttackDataset { width: self.width, features, labels: indices.iter().map(|&i| self.labels[i]).collect() }
    }

    /// Random disjoint split into `n_train` training rows and the rest.
    pub fn split(&self, n_train: usize, seed: u64) -> Result<(AttackDataset, AttackDataset)> {
        if n_train > self.len() {
            return Err(Error::InsufficientTraffic { required: n_train, available: self.len() });
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let (train, test) = idx.split_at(n_train);
        Ok((self.subset(train), self.subset(test)))
    }

    pub fn with_flipped_labels(&self) -> AttackDataset {
        AttackDataset { labels: self.labels.iter().map(|l| !l).collect(), ..self.clone() }
    }
}

pub trait ResponseModel {
    /// Predicted response for one parity-feature row.
    fn predict(&self, phi: &[f64]) -> bool;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Accuracy {
    pub correct: usize,
    pub total: usize,
}

impl Accuracy {
    pub fn fraction(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }
}

pub fn evaluate<M: ResponseModel + ?Sized>(model: &M, holdout: &AttackDataset) -> Result<Accuracy> {
    if holdout.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let correct = (0..holdout.len()).filter(|&i| model.predict(holdout.row(i)) == holdout.label(i)).count();
    Ok(Accuracy { correct, total: holdout.len() })
}

/// Which learner an experiment trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Learner {
    Mlp,
    Lr,
}

impl std::fmt::Display for Learner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Learner::Mlp => "mlp",
            Learner::Lr => "lr",
        })
    }
}

/// A trained model of either kind.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TrainedModel {
    Lr(LinearModel),
    Mlp(Mlp),
}

impl ResponseModel for TrainedModel {
    fn predict(&self, phi: &[f64]) -> bool {
        match self {
            TrainedModel::Lr(m) => m.predict(phi),
            TrainedModel::Mlp(m) => m.predict(phi),
        }
    }
}

impl TrainedModel {
    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }
}

pub fn train(learner: Learner, ds: &AttackDataset, lr_cfg: &LrConfig, mlp_cfg: &MlpConfig) -> Result<TrainedModel> {
    Ok(match learner {
        Learner::Lr => TrainedModel::Lr(train_lr(ds, lr_cfg)?),
        Learner::Mlp => TrainedModel::Mlp(train_mlp(ds, mlp_cfg)?),
    })
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of a logit, computed without forming the sigmoid.
fn bce_with_logit(z: f64, label: bool) -> f64 {
    let y = label as u8 as f64;
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

/// Both labels present with at least two rows, otherwise the constant label.
fn degenerate_label(ds: &AttackDataset) -> Result<Option<bool>> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let ones = ds.labels.iter().filter(|&&l| l).count();
    if ds.len() < 2 || ones == 0 || ones == ds.len() {
        let label = ones * 2 >= ds.len();
        log::warn!("training set has a single label class; returning a constant predictor ({})", label as u8);
        return Ok(Some(label));
    }
    Ok(None)
}
