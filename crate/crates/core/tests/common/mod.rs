//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use dktlab::encoding::{EncodedInput, Interaction, InteractionSequence};
use dktlab::models::{sequence_loss, DktModel, DropoutMask, ModelKind, PredictionSeries};
use dktlab::numerics::Rng;

/// Loss through the public forward pass only.
pub fn forward_loss(model: &DktModel, inputs: &[EncodedInput<'_>], steps: &[Interaction], mask: Option<&DropoutMask>) -> f64 {
    let (_, series): (_, PredictionSeries) = model.forward(inputs, mask).unwrap();
    sequence_loss(&series, &InteractionSequence::new("fd", steps.to_vec())).unwrap()
}

/// Central finite differences of the forward loss, one tensor at a time.
pub fn numeric_gradient(
    model: &DktModel,
    inputs: &[EncodedInput<'_>],
    steps: &[Interaction],
    mask: Option<&DropoutMask>,
    eps: f64,
) -> Vec<(String, Vec<f64>)> {
    let mut probe = model.clone();
    let names: Vec<String> = model.tensors().iter().map(|(n, _)| n.to_string()).collect();
    let mut out = Vec::new();
    for (ti, name) in names.iter().enumerate() {
        let len = model.tensors()[ti].1.data().len();
        let mut g = vec![0.0; len];
        for k in 0..len {
            let orig = probe.tensors()[ti].1.data()[k];
            probe.tensors_mut()[ti].1.data_mut()[k] = orig + eps;
            let up = forward_loss(&probe, inputs, steps, mask);
            probe.tensors_mut()[ti].1.data_mut()[k] = orig - eps;
            let down = forward_loss(&probe, inputs, steps, mask);
            probe.tensors_mut()[ti].1.data_mut()[k] = orig;
            g[k] = (up - down) / (2.0 * eps);
        }
        out.push((name.clone(), g));
    }
    out
}

/// Elementwise comparison of analytic and numeric gradients. An entry passes
/// when its relative error is below `rel_tol` or its absolute difference is
/// below `abs_floor`; finite differences at fixed step cannot resolve tiny
/// gradients more finely than that.
pub struct GradientCheck {
    /// Largest relative error among entries not rescued by the absolute floor.
    pub worst_relative: f64,
    pub worst_tensor: String,
    /// Largest relative error among entries with magnitude >= 1e-4.
    pub worst_relative_large: f64,
    pub failures: usize,
    pub checked: usize,
}

pub fn compare_gradients(analytic: &DktModel, numeric: &[(String, Vec<f64>)], rel_tol: f64, abs_floor: f64) -> GradientCheck {
    let mut check = GradientCheck {
        worst_relative: 0.0,
        worst_tensor: String::new(),
        worst_relative_large: 0.0,
        failures: 0,
        checked: 0,
    };
    for ((name, a), (_, n)) in analytic.tensors().iter().zip(numeric) {
        for (&x, &y) in a.data().iter().zip(n) {
            check.checked += 1;
            let diff = (x - y).abs();
            let scale = x.abs().max(y.abs());
            let rel = if scale > 0.0 { diff / scale } else { 0.0 };
            if scale >= 1e-4 {
                check.worst_relative_large = check.worst_relative_large.max(rel);
            }
            if diff < abs_floor {
                continue;
            }
            if rel > check.worst_relative {
                check.worst_relative = rel;
                check.worst_tensor = name.to_string();
            }
            if rel >= rel_tol {
                check.failures += 1;
            }
        }
    }
    check
}

/// Random model with weights of the given scale (biases and initial states included).
pub fn random_model(kind: ModelKind, d: usize, h: usize, m: usize, scale: f64, rng: &mut Rng) -> DktModel {
    let mut model = DktModel::zeros(kind, d, h, m);
    for (_, t) in model.tensors_mut() {
        for v in t.data_mut() {
            *v = rng.normal() * scale;
        }
    }
    model
}

pub fn random_steps(t: usize, m: usize, rng: &mut Rng) -> Vec<Interaction> {
    (0..t).map(|_| Interaction::new(rng.below(m), rng.bernoulli(0.5))).collect()
}

/// O(P*N) pair count: positives outranking negatives, ties count half.
pub fn brute_force_auc(labels: &[bool], scores: &[f64]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Two-state HMM forward pass written from the joint distribution: sums over
/// every hidden mastery path explicitly (2^T paths).
pub fn bkt_enumerate(p_init: f64, p_learn: f64, p_guess: f64, p_slip: f64, obs: &[bool]) -> Vec<f64> {
    let emit = |mastered: bool, correct: bool| match (mastered, correct) {
        (true, true) => 1.0 - p_slip,
        (true, false) => p_slip,
        (false, true) => p_guess,
        (false, false) => 1.0 - p_guess,
    };
    let trans = |from: bool, to: bool| match (from, to) {
        (true, true) => 1.0,
        (true, false) => 0.0,
        (false, true) => p_learn,
        (false, false) => 1.0 - p_learn,
    };
    // Prediction for step t: P(obs_t correct | obs_0..t-1).
    let mut preds = Vec::with_capacity(obs.len() + 1);
    for t in 0..=obs.len() {
        let mut joint_prefix = 0.0;
        let mut joint_correct = 0.0;
        for path in 0..(1u32 << (t + 1)) {
            let state = |k: usize| path & (1 << k) != 0;
            let mut p = if state(0) { p_init } else { 1.0 - p_init };
            for k in 1..=t {
                p *= trans(state(k - 1), state(k));
            }
            for (k, &o) in obs.iter().enumerate().take(t) {
                p *= emit(state(k), o);
            }
            joint_prefix += p;
            joint_correct += p * emit(state(t), true);
        }
        preds.push(joint_correct / joint_prefix);
    }
    preds
}
