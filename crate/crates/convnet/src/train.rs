use std::collections::BTreeMap;
use std::fmt::Write as _;

use causalnet_core::image::Label;
use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::SampleWeighting;
use crate::error::{NetError, Result};
use crate::model::ConvNet;
use crate::optim::Adam;

/// Labeled images. Samples sharing a `group` (the crops of one trial) always
/// land on the same side of a split.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub images: Vec<Array2<f64>>,
    pub labels: Vec<Label>,
    pub groups: Vec<usize>,
}

impl Dataset {
    pub fn new(images: Vec<Array2<f64>>, labels: Vec<Label>, groups: Vec<usize>) -> Result<Self> {
        if images.len() != labels.len() || images.len() != groups.len() {
            return Err(NetError::Shape(format!(
                "{} images, {} labels, {} groups",
                images.len(),
                labels.len(),
                groups.len()
            )));
        }
        if let Some(first) = images.first() {
            if images.iter().any(|im| im.dim() != first.dim()) {
                return Err(NetError::Shape("images differ in shape".into()));
            }
        }
        Ok(Dataset { images, labels, groups })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn image_shape(&self) -> Option<(usize, usize)> {
        self.images.first().map(|im| im.dim())
    }

    pub fn views(&self, indices: &[usize]) -> Vec<ArrayView2<'_, f64>> {
        indices.iter().map(|&i| self.images[i].view()).collect()
    }
}

/// Groups of `indices` by class, each class sorted by group id.
fn class_groups(labels: &[Label], groups: &[usize], indices: &[usize]) -> Result<[Vec<usize>; 2]> {
    let mut label_of: BTreeMap<usize, Label> = BTreeMap::new();
    for &i in indices {
        match label_of.insert(groups[i], labels[i]) {
            Some(prev) if prev != labels[i] => {
                return Err(NetError::InvalidInput(format!("group {} mixes labels", groups[i])));
            }
            _ => {}
        }
    }
    let mut out = [Vec::new(), Vec::new()];
    for (g, l) in label_of {
        out[l.index()].push(g);
    }
    if out.iter().any(Vec::is_empty) {
        return Err(NetError::DegenerateLabels);
    }
    Ok(out)
}

/// Stratified split by group: `fraction` of each class's groups (at least one)
/// go to the second part. Both parts keep the order of `indices`.
pub fn split_groups(
    labels: &[Label],
    groups: &[usize],
    indices: &[usize],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let per_class = class_groups(labels, groups, indices)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut held = Vec::new();
    for (c, mut gs) in per_class.into_iter().enumerate() {
        if gs.len() < 2 {
            return Err(NetError::InsufficientData(format!(
                "class {} has {} group(s); a split needs two",
                Label::from_index(c),
                gs.len()
            )));
        }
        gs.shuffle(&mut rng);
        let n = ((fraction * gs.len() as f64).round() as usize).clamp(1, gs.len() - 1);
        held.extend_from_slice(&gs[..n]);
    }
    let (second, first): (Vec<usize>, Vec<usize>) = indices.iter().partition(|&&i| held.contains(&groups[i]));
    Ok((first, second))
}

/// `k` stratified folds of whole groups.
pub fn group_folds(labels: &[Label], groups: &[usize], indices: &[usize], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(NetError::InvalidConfig(format!("{k} folds")));
    }
    let per_class = class_groups(labels, groups, indices)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of: BTreeMap<usize, usize> = BTreeMap::new();
    let mut next = 0;
    for mut gs in per_class {
        gs.shuffle(&mut rng);
        for g in gs {
            fold_of.insert(g, next % k);
            next += 1;
        }
    }
    if fold_of.len() < k {
        return Err(NetError::InsufficientData(format!(
            "{} groups for {k} folds",
            fold_of.len()
        )));
    }
    let mut folds = vec![Vec::new(); k];
    for &i in indices {
        folds[fold_of[&groups[i]]].push(i);
    }
    Ok(folds)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Snapshot with the best validation score.
    pub model: ConvNet,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
}

impl TrainOutcome {
    pub fn best(&self) -> &EpochRecord {
        self.history
            .iter()
            .find(|r| r.epoch == self.best_epoch)
            .expect("best epoch is recorded")
    }

    /// History as CSV, preceded by `# key=value` metadata lines.
    pub fn history_csv(&self) -> String {
        let c = self.model.config();
        let mut s = format!(
            "# patience={}\n# max_epochs={}\n# best_epoch={}\n# stopped_early={}\nepoch,train_loss,val_loss,val_accuracy\n",
            c.patience, c.max_epochs, self.best_epoch, self.stopped_early
        );
        for r in &self.history {
            let _ = writeln!(s, "{},{:e},{:e},{}", r.epoch, r.train_loss, r.val_loss, r.val_accuracy);
        }
        s
    }
}

/// Unweighted accuracy and mean cross-entropy in evaluation mode.
pub fn evaluate_split(model: &ConvNet, data: &Dataset, indices: &[usize]) -> Result<(f64, f64)> {
    if indices.is_empty() {
        return Ok((0.0, 0.0));
    }
    let probs = model.predict_batch(&data.views(indices))?;
    let mut correct = 0;
    let mut loss = 0.0;
    for (p, &i) in probs.iter().zip(indices) {
        let y = data.labels[i].index();
        if (p[0] >= p[1]) == (y == 0) {
            correct += 1;
        }
        loss -= p[y].max(f64::MIN_POSITIVE).ln();
    }
    let n = indices.len() as f64;
    Ok((correct as f64 / n, loss / n))
}

/// Trains `model` on `indices` with per-sample `weights` (aligned with
/// `indices`), holding out a validation fold of whole groups for early
/// stopping. A validation score improves when accuracy rises, or stays level
/// while the validation loss falls.
pub fn train(mut model: ConvNet, data: &Dataset, indices: &[usize], weights: &[f64]) -> Result<TrainOutcome> {
    if weights.len() != indices.len() {
        return Err(NetError::Shape(format!(
            "{} weights for {} samples",
            weights.len(),
            indices.len()
        )));
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(NetError::InvalidInput("sample weights must be finite and nonnegative".into()));
    }
    let config = model.config().clone();
    let (train_idx, val_idx) = split_groups(
        &data.labels,
        &data.groups,
        indices,
        config.validation_fraction,
        config.seed ^ 0x5eed,
    )?;
    let weight_of: BTreeMap<usize, f64> = indices.iter().copied().zip(weights.iter().copied()).collect();
    let total: f64 = train_idx.iter().map(|i| weight_of[i]).sum();
    if !(total > 0.0) {
        return Err(NetError::InvalidInput("training fold has zero total weight".into()));
    }
    // Rescale so the training fold has mean weight one.
    let scale = train_idx.len() as f64 / total;

    let (acc, loss) = evaluate_split(&model, data, &val_idx)?;
    let mut history = vec![EpochRecord {
        epoch: 0,
        train_loss: f64::NAN,
        val_loss: loss,
        val_accuracy: acc,
    }];
    let mut best = (acc, loss, 0usize, model.clone());
    let mut adam = Adam::new(&model);
    let mut stale = 0;
    let mut stopped_early = false;
    let mut order = train_idx.clone();
    for epoch in 1..=config.max_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let labels: Vec<Label> = batch.iter().map(|&i| data.labels[i]).collect();
            let w: Vec<f64> = batch.iter().map(|i| weight_of[i] * scale).collect();
            let pass = match config.weighting {
                SampleWeighting::Loss => model.loss_and_gradient(&data.views(batch), &labels, &w, &mut rng)?,
                SampleWeighting::InputScale => {
                    let scaled: Vec<Array2<f64>> = batch
                        .iter()
                        .zip(&w)
                        .map(|(&i, &wi)| data.images[i].mapv(|v| v * wi))
                        .collect();
                    let views: Vec<ArrayView2<f64>> = scaled.iter().map(|a| a.view()).collect();
                    model.loss_and_gradient(&views, &labels, &vec![1.0; batch.len()], &mut rng)?
                }
            };
            adam.apply(&mut model, &pass.gradients);
            model.update_running(&pass.batch_mean, &pass.batch_var);
            epoch_loss += pass.loss * batch.len() as f64;
        }
        let (acc, loss) = evaluate_split(&model, data, &val_idx)?;
        history.push(EpochRecord {
            epoch,
            train_loss: epoch_loss / order.len() as f64,
            val_loss: loss,
            val_accuracy: acc,
        });
        if acc > best.0 || (acc == best.0 && loss < best.1) {
            best = (acc, loss, epoch, model.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                stopped_early = true;
                break;
            }
        }
    }
    Ok(TrainOutcome {
        model: best.3,
        history,
        best_epoch: best.2,
        stopped_early,
        train_indices: train_idx,
        val_indices: val_idx,
    })
}
