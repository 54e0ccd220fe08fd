//! AdaBoost over an arbitrary base learner.

use causalnet_core::image::Label;
use ndarray::ArrayView2;

use crate::config::ConvNetConfig;
use crate::error::{NetError, Result};
use crate::model::ConvNet;
use crate::train::{split_groups, train, Dataset, TrainOutcome};

/// A learner that can be fitted to weighted samples (by index) and predict
/// hard labels.
pub trait BaseLearner {
    type Model;

    /// `weights` is aligned with `samples` and sums to one.
    fn fit(&self, samples: &[usize], weights: &[f64], round: usize) -> Result<Self::Model>;

    fn predict(&self, model: &Self::Model, samples: &[usize]) -> Result<Vec<Label>>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoostConfig {
    /// Maximum rounds `chi`.
    pub rounds: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for BoostConfig {
    fn default() -> Self {
        BoostConfig {
            rounds: 20,
            validation_fraction: 0.2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Member<M> {
    pub model: M,
    /// Vote weight `0.5 ln((1 - err) / err)`.
    pub weight: f64,
    /// Weighted training error.
    pub error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopReason {
    Rounds,
    /// The last member made no weighted errors; its weight uses a clamped error.
    PerfectMember,
    /// Round `round` (1-based) reached error `error >= 0.5` and was discarded.
    WeakMember { round: usize, error: f64 },
}

#[derive(Debug, Clone)]
pub struct BoostEnsemble<M> {
    pub members: Vec<Member<M>>,
    /// Number of leading members forming the selected joint classifier.
    pub best_prefix: usize,
    pub best_accuracy: f64,
    /// Validation accuracy of every prefix `1..=members.len()`.
    pub prefix_accuracy: Vec<f64>,
    /// Sample weights on the training fold before each round, plus the final update.
    pub weight_history: Vec<Vec<f64>>,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub stop: StopReason,
}

impl<M> BoostEnsemble<M> {
    /// Vote weights of the selected prefix.
    pub fn selected(&self) -> &[Member<M>] {
        &self.members[..self.best_prefix]
    }

    /// `sum_i w_i * sign_i` from per-member predictions of the selected prefix.
    pub fn score(&self, member_predictions: &[Label]) -> f64 {
        self.selected()
            .iter()
            .zip(member_predictions)
            .map(|(m, l)| m.weight * l.sign())
            .sum()
    }
}

fn combined(members: &[f64], votes: &[Vec<Label>], sample: usize) -> Label {
    let s: f64 = members.iter().zip(votes).map(|(w, v)| w * v[sample].sign()).sum();
    Label::from_sign(s)
}

/// Boosting with a stratified group split of `samples` into training and
/// validation folds.
pub fn adaboost_train<L: BaseLearner>(
    learner: &L,
    labels: &[Label],
    groups: &[usize],
    samples: &[usize],
    config: &BoostConfig,
) -> Result<BoostEnsemble<L::Model>> {
    let (train, validation) = split_groups(labels, groups, samples, config.validation_fraction, config.seed)?;
    adaboost_with_split(learner, labels, train, validation, config.rounds)
}

/// Boosting on a given training / validation split.
pub fn adaboost_with_split<L: BaseLearner>(
    learner: &L,
    labels: &[Label],
    train: Vec<usize>,
    validation: Vec<usize>,
    rounds: usize,
) -> Result<BoostEnsemble<L::Model>> {
    if rounds == 0 {
        return Err(NetError::InvalidConfig("boosting needs at least one round".into()));
    }
    if train.is_empty() {
        return Err(NetError::InsufficientData("empty boosting training fold".into()));
    }
    let n = train.len();
    let mut w = vec![1.0 / n as f64; n];
    let mut weight_history = vec![w.clone()];
    let mut members: Vec<Member<L::Model>> = Vec::new();
    let mut val_votes: Vec<Vec<Label>> = Vec::new();
    let mut prefix_accuracy = Vec::new();
    let mut best_prefix = 0;
    let mut best_accuracy = 0.0;
    let mut stop = StopReason::Rounds;

    for round in 1..=rounds {
        let model = learner.fit(&train, &w, round)?;
        let pred = learner.predict(&model, &train)?;
        let error: f64 = train
            .iter()
            .zip(&pred)
            .zip(&w)
            .filter(|((&i, p), _)| **p != labels[i])
            .map(|(_, wi)| wi)
            .sum();
        if error >= 0.5 {
            if members.is_empty() {
                return Err(NetError::NoUsableMember(error));
            }
            stop = StopReason::WeakMember { round, error };
            break;
        }
        let perfect = error <= 0.0;
        let effective = if perfect { 1.0 / (2.0 * n as f64) } else { error };
        let alpha = 0.5 * ((1.0 - effective) / effective).ln();
        let factors: Vec<f64> = train
            .iter()
            .zip(&pred)
            .map(|(&i, p)| (-alpha * labels[i].sign() * p.sign()).exp())
            .collect();
        let norm: f64 = w.iter().zip(&factors).map(|(a, f)| a * f).sum();
        for (wi, f) in w.iter_mut().zip(&factors) {
            *wi = *wi * f / norm;
        }
        weight_history.push(w.clone());

        val_votes.push(learner.predict(&model, &validation)?);
        members.push(Member {
            model,
            weight: alpha,
            error,
        });
        let alphas: Vec<f64> = members.iter().map(|m| m.weight).collect();
        let acc = if validation.is_empty() {
            0.0
        } else {
            let hits = validation
                .iter()
                .enumerate()
                .filter(|(k, &i)| combined(&alphas, &val_votes, *k) == labels[i])
                .count();
            hits as f64 / validation.len() as f64
        };
        prefix_accuracy.push(acc);
        if acc > best_accuracy || best_prefix == 0 {
            best_accuracy = acc;
            best_prefix = members.len();
        }
        if perfect {
            stop = StopReason::PerfectMember;
            break;
        }
    }
    Ok(BoostEnsemble {
        members,
        best_prefix,
        best_accuracy,
        prefix_accuracy,
        weight_history,
        train,
        validation,
        stop,
    })
}

/// Trains one ConvNet per round on the weighted training fold; round `j`
/// uses seed `base.seed + j`.
pub struct ConvNetLearner<'a> {
    pub data: &'a Dataset,
    pub base: ConvNetConfig,
}

impl ConvNetLearner<'_> {
    pub fn fit_outcome(&self, samples: &[usize], weights: &[f64], round: usize) -> Result<TrainOutcome> {
        let (h, w) = self
            .data
            .image_shape()
            .ok_or_else(|| NetError::InsufficientData("empty dataset".into()))?;
        let config = ConvNetConfig {
            seed: self.base.seed.wrapping_add(round as u64),
            ..self.base.clone()
        };
        let model = ConvNet::build(&config, h, w)?;
        train(model, self.data, samples, weights)
    }
}

impl BaseLearner for ConvNetLearner<'_> {
    type Model = ConvNet;

    fn fit(&self, samples: &[usize], weights: &[f64], round: usize) -> Result<ConvNet> {
        Ok(self.fit_outcome(samples, weights, round)?.model)
    }

    fn predict(&self, model: &ConvNet, samples: &[usize]) -> Result<Vec<Label>> {
        let probs = model.predict_batch(&self.data.views(samples))?;
        Ok(probs
            .iter()
            .map(|p| if p[0] >= p[1] { Label::Left } else { Label::Right })
            .collect())
    }
}

/// Joint-classifier scores `sum_i w_i * sign_i` for images.
pub fn ensemble_scores(ensemble: &BoostEnsemble<ConvNet>, images: &[ArrayView2<f64>]) -> Result<Vec<f64>> {
    let mut scores = vec![0.0; images.len()];
    for m in ensemble.selected() {
        let probs = m.model.predict_batch(images)?;
        for (s, p) in scores.iter_mut().zip(&probs) {
            *s += m.weight * if p[0] >= p[1] { 1.0 } else { -1.0 };
        }
    }
    Ok(scores)
}

pub fn ensemble_predict(ensemble: &BoostEnsemble<ConvNet>, images: &[ArrayView2<f64>]) -> Result<Vec<Label>> {
    Ok(ensemble_scores(ensemble, images)?
        .into_iter()
        .map(Label::from_sign)
        .collect())
}
