use std::fmt::Write as _;

use causalnet_core::image::Label;

use crate::error::{NetError, Result};

/// Confusion counts with "left" as the positive class, and derived scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    /// Percentages; NaN when the class is absent from the truths.
    pub sensitivity: f64,
    pub specificity: f64,
    pub accuracy: f64,
    pub kappa: f64,
}

pub fn evaluate(predictions: &[Label], truths: &[Label]) -> Result<EvalReport> {
    if predictions.is_empty() || predictions.len() != truths.len() {
        return Err(NetError::InvalidInput(format!(
            "{} predictions for {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (p, t) in predictions.iter().zip(truths) {
        match (p, t) {
            (Label::Left, Label::Left) => tp += 1,
            (Label::Left, Label::Right) => fp += 1,
            (Label::Right, Label::Right) => tn += 1,
            (Label::Right, Label::Left) => fn_ += 1,
        }
    }
    Ok(report_from_counts(tp, fp, tn, fn_))
}

pub fn report_from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> EvalReport {
    let pct = |a: usize, b: usize| if b == 0 { f64::NAN } else { 100.0 * a as f64 / b as f64 };
    let n = (tp + fp + tn + fn_) as f64;
    let po = (tp + tn) as f64 / n;
    let pe = ((tp + fp) as f64 * (tp + fn_) as f64 + (fn_ + tn) as f64 * (fp + tn) as f64) / (n * n);
    // Chance agreement of one means both sides used a single class, which
    // forces full agreement.
    let kappa = if pe >= 1.0 { 1.0 } else { (po - pe) / (1.0 - pe) };
    EvalReport {
        tp,
        fp,
        tn,
        fn_,
        sensitivity: pct(tp, tp + fn_),
        specificity: pct(tn, tn + fp),
        accuracy: 100.0 * po,
        kappa,
    }
}

impl EvalReport {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "trials: {}", self.total());
        let _ = writeln!(s, "confusion (left positive): TP={} FP={} TN={} FN={}", self.tp, self.fp, self.tn, self.fn_);
        let _ = writeln!(s, "SEN: {:.2}%", self.sensitivity);
        let _ = writeln!(s, "SPE: {:.2}%", self.specificity);
        let _ = writeln!(s, "ACC: {:.2}%", self.accuracy);
        let _ = writeln!(s, "kappa: {:.4}", self.kappa);
        s
    }

    pub fn csv_header() -> &'static str {
        "tp,fp,tn,fn,sen,spe,acc,kappa"
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.4},{:.4},{:.4},{:.6}",
            self.tp, self.fp, self.tn, self.fn_, self.sensitivity, self.specificity, self.accuracy, self.kappa
        )
    }
}

/// How crop-level outputs become one trial label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VoteMode {
    /// Majority of hard labels; a tie falls back to the summed scores.
    #[default]
    Majority,
    /// Sign of the summed scores.
    MeanScore,
}

impl VoteMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "majority" => Ok(VoteMode::Majority),
            "mean_score" => Ok(VoteMode::MeanScore),
            other => Err(NetError::InvalidConfig(format!("unknown vote mode '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            VoteMode::Majority => "majority",
            VoteMode::MeanScore => "mean_score",
        }
    }
}

/// Trial label from crop scores (positive means left). Exact ties go to left.
pub fn vote(scores: &[f64], mode: VoteMode) -> Result<Label> {
    if scores.is_empty() {
        return Err(NetError::InvalidInput("no crops to vote over".into()));
    }
    let sum: f64 = scores.iter().sum();
    Ok(match mode {
        VoteMode::MeanScore => Label::from_sign(sum),
        VoteMode::Majority => {
            let left = scores.iter().filter(|&&s| Label::from_sign(s) == Label::Left).count();
            let right = scores.len() - left;
            match left.cmp(&right) {
                std::cmp::Ordering::Greater => Label::Left,
                std::cmp::Ordering::Less => Label::Right,
                std::cmp::Ordering::Equal => Label::from_sign(sum),
            }
        }
    })
}

/// Majority of hard labels; an exact tie goes to left.
pub fn majority_vote(labels: &[Label]) -> Result<Label> {
    let scores: Vec<f64> = labels.iter().map(|l| l.sign()).collect();
    vote(&scores, VoteMode::Majority)
}
