//! Next-step prediction scoring, pooled AUC and student-level k-fold
//! cross-validation.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::encoding::InteractionSequence;
use crate::error::{Error, Result};
use crate::models::KnowledgeTracer;
use crate::numerics::Rng;

/// Anything that scores each next interaction of a sequence from its prefix.
pub trait Predictor {
    /// Returns `T - 1` probabilities: entry `t` scores interaction `t + 1`
    /// given interactions `0..=t`.
    fn predict_sequence(&self, seq: &InteractionSequence) -> Result<Vec<f64>>;

    fn name(&self) -> &str;
}

impl Predictor for KnowledgeTracer {
    fn predict_sequence(&self, seq: &InteractionSequence) -> Result<Vec<f64>> {
        if seq.len() < 2 {
            return Ok(Vec::new());
        }
        let series = self.predict_series(&seq.steps[..seq.len() - 1])?;
        Ok(series
            .outputs
            .iter()
            .zip(&seq.steps[1..])
            .map(|(y, next)| y[next.exercise])
            .collect())
    }

    fn name(&self) -> &str {
        "dkt"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub label: bool,
    pub score: f64,
    pub student: String,
    /// Index of the scored interaction within its sequence (>= 1).
    pub step: usize,
    pub exercise: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AucResult {
    pub auc: f64,
    pub positives: usize,
    pub negatives: usize,
}

pub fn collect_predictions(predictor: &dyn Predictor, sequences: &[InteractionSequence]) -> Result<Vec<PredictionRecord>> {
    let mut records = Vec::with_capacity(sequences.iter().map(|s| s.target_count()).sum());
    for seq in sequences.iter().filter(|s| s.len() >= 2) {
        let scores = predictor.predict_sequence(seq)?;
        if scores.len() != seq.len() - 1 {
            return Err(Error::DimensionMismatch {
                context: format!("{} predictions for student {}", predictor.name(), seq.student_id),
                expected: seq.len() - 1,
                actual: scores.len(),
            });
        }
        for (t, (score, it)) in scores.into_iter().zip(&seq.steps[1..]).enumerate() {
            records.push(PredictionRecord {
                label: it.correct,
                score,
                student: seq.student_id.clone(),
                step: t + 1,
                exercise: it.exercise,
            });
        }
    }
    Ok(records)
}

/// Mann–Whitney AUC with mid-ranks for ties.
pub fn auc_scores(labels: &[bool], scores: &[f64]) -> Result<AucResult> {
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClass { positives, negatives });
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of 2*rank over positives keeps everything in integers.
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j share the midrank (i + 1 + j) / 2.
        let twice_mid = (i + 1 + j) as u128;
        let pos_in_group = idx[i..j].iter().filter(|&&k| labels[k]).count() as u128;
        twice_rank_sum += twice_mid * pos_in_group;
        i = j;
    }
    let p = positives as u128;
    let twice_u = twice_rank_sum - p * (p + 1);
    let auc = twice_u as f64 / (2.0 * positives as f64 * negatives as f64);
    Ok(AucResult {
        auc,
        positives,
        negatives,
    })
}

pub fn auc(records: &[PredictionRecord]) -> Result<AucResult> {
    let labels: Vec<bool> = records.iter().map(|r| r.label).collect();
    let scores: Vec<f64> = records.iter().map(|r| r.score).collect();
    auc_scores(&labels, &scores)
}

/// Students shuffled with `rng`, then dealt round-robin into `folds` groups.
pub fn fold_assignment(student_count: usize, folds: usize, rng: &mut Rng) -> Result<Vec<Vec<usize>>> {
    if folds < 2 || student_count < folds {
        return Err(Error::TooFewStudents {
            students: student_count,
            folds,
        });
    }
    let order = rng.permutation(student_count);
    let mut out = vec![Vec::new(); folds];
    for (i, s) in order.into_iter().enumerate() {
        out[i % folds].push(s);
    }
    for f in &mut out {
        f.sort_unstable();
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub fold_aucs: Vec<AucResult>,
    pub mean_auc: f64,
    pub std_error: f64,
}

/// Mean and standard error of the mean.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Each fold is scored by a predictor built from the remaining folds only.
pub fn cross_validate<F>(
    sequences: &[InteractionSequence],
    folds: usize,
    rng: &mut Rng,
    mut trainer: F,
) -> Result<CrossValidation>
where
    F: FnMut(&[InteractionSequence]) -> Result<Box<dyn Predictor>>,
{
    let assignment = fold_assignment(sequences.len(), folds, rng)?;
    let mut fold_aucs = Vec::with_capacity(folds);
    for (k, test_idx) in assignment.iter().enumerate() {
        let train: Vec<InteractionSequence> = assignment
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != k)
            .flat_map(|(_, f)| f.iter().map(|&s| sequences[s].clone()))
            .collect();
        let test: Vec<InteractionSequence> = test_idx.iter().map(|&s| sequences[s].clone()).collect();
        let predictor = trainer(&train)?;
        let records = collect_predictions(predictor.as_ref(), &test)?;
        fold_aucs.push(auc(&records)?);
    }
    let values: Vec<f64> = fold_aucs.iter().map(|a| a.auc).collect();
    let (mean_auc, std_error) = mean_and_stderr(&values);
    Ok(CrossValidation {
        fold_aucs,
        mean_auc,
        std_error,
    })
}

/// One row of an evaluation report. `fold` is `"mean"` for the summary row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub model: String,
    pub fold: String,
    pub auc: f64,
    pub positives: usize,
    pub negatives: usize,
}

pub fn report_rows(dataset: &str, model: &str, cv: &CrossValidation) -> Vec<ReportRow> {
    let mut rows: Vec<ReportRow> = cv
        .fold_aucs
        .iter()
        .enumerate()
        .map(|(k, a)| ReportRow {
            dataset: dataset.to_string(),
            model: model.to_string(),
            fold: k.to_string(),
            auc: a.auc,
            positives: a.positives,
            negatives: a.negatives,
        })
        .collect();
    rows.push(ReportRow {
        dataset: dataset.to_string(),
        model: model.to_string(),
        fold: "mean".into(),
        auc: cv.mean_auc,
        positives: cv.fold_aucs.iter().map(|a| a.positives).sum(),
        negatives: cv.fold_aucs.iter().map(|a| a.negatives).sum(),
    });
    rows
}

pub fn write_report_csv<W: Write>(rows: &[ReportRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
