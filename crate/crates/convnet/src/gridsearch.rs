use std::fmt::Write as _;

use crate::config::ConvNetConfig;
use crate::error::{NetError, Result};
use crate::model::{block_shapes, ConvNet};
use crate::train::{evaluate_split, group_folds, train, Dataset};

/// Candidate values; defaults cover kernel 10..=20, first-block filters
/// 5..=30 by 5 and 1..=5 blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub kernels: Vec<usize>,
    pub filters: Vec<usize>,
    pub blocks: Vec<usize>,
    pub folds: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            kernels: (10..=20).collect(),
            filters: (5..=30).step_by(5).collect(),
            blocks: (1..=5).collect(),
            folds: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub temporal_kernel: usize,
    pub first_filters: usize,
    pub blocks: usize,
    /// Empty when the architecture does not fit the input.
    pub fold_accuracy: Vec<f64>,
    pub mean_accuracy: Option<f64>,
}

/// Cross-validated crop accuracy for every feasible combination. Folds hold
/// whole groups and are shared by all combinations.
pub fn grid_search(data: &Dataset, base: &ConvNetConfig, spec: &GridSpec, seed: u64) -> Result<Vec<GridResult>> {
    let (h, w) = data
        .image_shape()
        .ok_or_else(|| NetError::InsufficientData("empty dataset".into()))?;
    let all: Vec<usize> = (0..data.len()).collect();
    let folds = group_folds(&data.labels, &data.groups, &all, spec.folds, seed)?;
    let mut results = Vec::new();
    for &k in &spec.kernels {
        for &f in &spec.filters {
            for &b in &spec.blocks {
                let config = ConvNetConfig {
                    temporal_kernel: k,
                    first_filters: f,
                    blocks: b,
                    ..base.clone()
                };
                let mut result = GridResult {
                    temporal_kernel: k,
                    first_filters: f,
                    blocks: b,
                    fold_accuracy: Vec::new(),
                    mean_accuracy: None,
                };
                if block_shapes(h, w, &config).is_err() {
                    results.push(result);
                    continue;
                }
                for (i, held) in folds.iter().enumerate() {
                    let rest: Vec<usize> = folds
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| *j != i)
                        .flat_map(|(_, f)| f.iter().copied())
                        .collect();
                    let weights = vec![1.0 / rest.len() as f64; rest.len()];
                    let model = ConvNet::build(&config, h, w)?;
                    let outcome = train(model, data, &rest, &weights)?;
                    result.fold_accuracy.push(evaluate_split(&outcome.model, data, held)?.0);
                }
                result.mean_accuracy =
                    Some(result.fold_accuracy.iter().sum::<f64>() / result.fold_accuracy.len() as f64);
                results.push(result);
            }
        }
    }
    Ok(results)
}

/// First combination with the highest mean accuracy.
pub fn best_result(results: &[GridResult]) -> Option<&GridResult> {
    let mut best: Option<&GridResult> = None;
    for r in results {
        if let Some(m) = r.mean_accuracy {
            if best.is_none_or(|b| m > b.mean_accuracy.expect("feasible")) {
                best = Some(r);
            }
        }
    }
    best
}

pub fn results_csv(results: &[GridResult]) -> String {
    let mut s = String::from("temporal_kernel,first_filters,blocks,mean_accuracy,fold_accuracy\n");
    for r in results {
        let folds: Vec<String> = r.fold_accuracy.iter().map(|a| format!("{a}")).collect();
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.temporal_kernel,
            r.first_filters,
            r.blocks,
            r.mean_accuracy.map_or("infeasible".to_string(), |m| format!("{m}")),
            folds.join(";")
        );
    }
    s
}
