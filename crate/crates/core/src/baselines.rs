//! Classical predictors: per-exercise marginal correct rate and standard
//! Bayesian Knowledge Tracing (two-state HMM per skill, no forgetting).

use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::encoding::InteractionSequence;
use crate::error::{Error, Result};
use crate::evaluation::Predictor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalModel {
    pub rates: Vec<Option<f64>>,
    pub fallback: f64,
}

impl MarginalModel {
    pub fn rate(&self, exercise: usize) -> f64 {
        self.rates.get(exercise).copied().flatten().unwrap_or(self.fallback)
    }
}

pub fn fit_marginal(sequences: &[InteractionSequence], exercise_count: usize) -> Result<MarginalModel> {
    let mut correct = vec![0usize; exercise_count];
    let mut attempts = vec![0usize; exercise_count];
    for it in sequences.iter().flat_map(|s| &s.steps) {
        if it.exercise >= exercise_count {
            return Err(Error::ExerciseOutOfRange {
                index: it.exercise,
                count: exercise_count,
            });
        }
        attempts[it.exercise] += 1;
        correct[it.exercise] += usize::from(it.correct);
    }
    let total: usize = attempts.iter().sum();
    if total == 0 {
        return Err(Error::NoTrainingData);
    }
    let fallback = correct.iter().sum::<usize>() as f64 / total as f64;
    let rates = correct
        .iter()
        .zip(&attempts)
        .map(|(&c, &n)| (n > 0).then(|| c as f64 / n as f64))
        .collect();
    Ok(MarginalModel { rates, fallback })
}

impl Predictor for MarginalModel {
    fn predict_sequence(&self, seq: &InteractionSequence) -> Result<Vec<f64>> {
        Ok(seq.steps.iter().skip(1).map(|it| self.rate(it.exercise)).collect())
    }

    fn name(&self) -> &str {
        "marginal"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BktParams {
    pub p_init: f64,
    pub p_learn: f64,
    pub p_guess: f64,
    pub p_slip: f64,
}

impl Default for BktParams {
    /// Used for skills with no observations.
    fn default() -> Self {
        BktParams {
            p_init: 0.5,
            p_learn: 0.1,
            p_guess: 0.2,
            p_slip: 0.1,
        }
    }
}

/// Upper bound on guess and slip during fitting.
pub const MAX_GUESS_SLIP: f64 = 0.3;
const GRID_STEP: f64 = 0.05;

impl BktParams {
    pub fn new(p_init: f64, p_learn: f64, p_guess: f64, p_slip: f64) -> Self {
        BktParams {
            p_init,
            p_learn,
            p_guess,
            p_slip,
        }
    }

    #[inline]
    pub fn p_correct(&self, mastery: f64) -> f64 {
        mastery * (1.0 - self.p_slip) + (1.0 - mastery) * self.p_guess
    }

    /// Posterior mastery after observing one answer, then the learning transition.
    #[inline]
    pub fn update(&self, mastery: f64, correct: bool) -> f64 {
        let (known, unknown) = if correct {
            (mastery * (1.0 - self.p_slip), (1.0 - mastery) * self.p_guess)
        } else {
            (mastery * self.p_slip, (1.0 - mastery) * (1.0 - self.p_guess))
        };
        let denom = known + unknown;
        let posterior = if denom > 0.0 { known / denom } else { mastery };
        posterior + (1.0 - posterior) * self.p_learn
    }

    fn in_bounds(&self) -> bool {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        unit(self.p_init)
            && unit(self.p_learn)
            && (0.0..=MAX_GUESS_SLIP).contains(&self.p_guess)
            && (0.0..=MAX_GUESS_SLIP).contains(&self.p_slip)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BktTrace {
    /// `predictions[t]` = P(answer t correct | answers 0..t); length T + 1.
    pub predictions: Vec<f64>,
    /// Mastery before each answer, plus the final value; length T + 1.
    pub mastery: Vec<f64>,
}

/// Forward filtering over one skill's answer history.
///
/// Carries the unnormalised masses of the mastered and unmastered states
/// rather than `p(L)`, so no step computes `1 - posterior`; that subtraction
/// loses digits once the posterior is close to 1.
pub fn bkt_predict(params: &BktParams, answers: &[bool]) -> BktTrace {
    let mut mastery = Vec::with_capacity(answers.len() + 1);
    let mut predictions = Vec::with_capacity(answers.len() + 1);
    let (mut known, mut unknown) = (params.p_init, 1.0 - params.p_init);
    let mut push = |known: f64, unknown: f64| {
        let total = known + unknown;
        mastery.push(known / total);
        predictions.push((known * (1.0 - params.p_slip) + unknown * params.p_guess) / total);
    };
    for &a in answers {
        push(known, unknown);
        let (ek, eu) = if a {
            (1.0 - params.p_slip, params.p_guess)
        } else {
            (params.p_slip, 1.0 - params.p_guess)
        };
        let (k, u) = (known * ek, unknown * eu);
        let total = k + u;
        if total > 0.0 {
            // Renormalise each step to keep the masses away from underflow.
            known = (k + u * params.p_learn) / total;
            unknown = u * (1.0 - params.p_learn) / total;
        } else {
            let l = known / (known + unknown);
            known = l + (1.0 - l) * params.p_learn;
            unknown = (1.0 - l) * (1.0 - params.p_learn);
        }
    }
    push(known, unknown);
    BktTrace { predictions, mastery }
}

fn history_log_likelihood(params: &BktParams, history: &[bool]) -> f64 {
    let mut ll = 0.0;
    let mut l = params.p_init;
    for &a in history {
        let p = params.p_correct(l).clamp(1e-12, 1.0 - 1e-12);
        ll += if a { p.ln() } else { (1.0 - p).ln() };
        l = params.update(l, a);
    }
    ll
}

fn log_likelihood(params: &BktParams, histories: &[Vec<bool>]) -> f64 {
    histories.iter().map(|h| history_log_likelihood(params, h)).sum()
}

fn weighted_log_likelihood(params: &BktParams, distinct: &[(&[bool], f64)]) -> f64 {
    distinct.iter().map(|&(h, w)| w * history_log_likelihood(params, h)).sum()
}

fn grid(hi: f64) -> Vec<f64> {
    let per_unit = (1.0 / GRID_STEP).round();
    let n = (hi * per_unit).round() as usize;
    (0..=n).map(|k| k as f64 / per_unit).collect()
}

/// Grid search at step 0.05 over the bounded box, then coordinate refinement
/// with a shrinking step. Deterministic.
pub fn fit_skill(histories: &[Vec<bool>]) -> BktParams {
    // Identical histories contribute identically; score each one once.
    let mut counts: BTreeMap<&[bool], usize> = BTreeMap::new();
    for h in histories {
        *counts.entry(h.as_slice()).or_default() += 1;
    }
    let distinct: Vec<(&[bool], f64)> = counts.into_iter().map(|(h, n)| (h, n as f64)).collect();
    let log_likelihood = |p: &BktParams, _: &[Vec<bool>]| weighted_log_likelihood(p, &distinct);
    let mut best = BktParams::default();
    let mut best_ll = log_likelihood(&best, histories);
    let unit = grid(1.0);
    let bounded = grid(MAX_GUESS_SLIP);
    for &p_init in &unit {
        for &p_learn in &unit {
            for &p_guess in &bounded {
                for &p_slip in &bounded {
                    let cand = BktParams::new(p_init, p_learn, p_guess, p_slip);
                    let ll = log_likelihood(&cand, histories);
                    if ll > best_ll {
                        best_ll = ll;
                        best = cand;
                    }
                }
            }
        }
    }
    let mut step = GRID_STEP / 2.0;
    while step > 1e-4 {
        let mut improved = true;
        while improved {
            improved = false;
            for coord in 0..4 {
                for dir in [-1.0, 1.0] {
                    let mut cand = best;
                    let v = match coord {
                        0 => &mut cand.p_init,
                        1 => &mut cand.p_learn,
                        2 => &mut cand.p_guess,
                        _ => &mut cand.p_slip,
                    };
                    *v += dir * step;
                    if !cand.in_bounds() {
                        continue;
                    }
                    let ll = log_likelihood(&cand, histories);
                    if ll > best_ll {
                        best_ll = ll;
                        best = cand;
                        improved = true;
                    }
                }
            }
        }
        step /= 2.0;
    }
    best
}

/// Fitted per-skill parameters plus the exercise-to-skill map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BktModel {
    pub skill_of_exercise: Vec<usize>,
    pub skills: Vec<BktParams>,
}

/// Each exercise its own skill.
pub fn identity_skill_map(exercise_count: usize) -> Vec<usize> {
    (0..exercise_count).collect()
}

/// Splits every sequence into per-skill answer histories.
fn skill_histories(sequences: &[InteractionSequence], skill_of_exercise: &[usize], skill_count: usize) -> Result<Vec<Vec<Vec<bool>>>> {
    let mut out: Vec<Vec<Vec<bool>>> = vec![Vec::new(); skill_count];
    for seq in sequences {
        let mut per: BTreeMap<usize, Vec<bool>> = BTreeMap::new();
        for it in &seq.steps {
            let skill = *skill_of_exercise.get(it.exercise).ok_or(Error::ExerciseOutOfRange {
                index: it.exercise,
                count: skill_of_exercise.len(),
            })?;
            per.entry(skill).or_default().push(it.correct);
        }
        for (skill, h) in per {
            out[skill].push(h);
        }
    }
    Ok(out)
}

pub fn fit_bkt(sequences: &[InteractionSequence], skill_of_exercise: &[usize]) -> Result<BktModel> {
    let skill_count = skill_of_exercise.iter().max().map_or(0, |&m| m + 1);
    let histories = skill_histories(sequences, skill_of_exercise, skill_count)?;
    let skills = histories
        .iter()
        .enumerate()
        .map(|(k, h)| {
            if h.iter().all(Vec::is_empty) {
                warn!("skill {k} has no observations; using default BKT parameters");
                BktParams::default()
            } else {
                fit_skill(h)
            }
        })
        .collect();
    Ok(BktModel {
        skill_of_exercise: skill_of_exercise.to_vec(),
        skills,
    })
}

impl BktModel {
    pub fn log_likelihood(&self, sequences: &[InteractionSequence]) -> Result<f64> {
        let histories = skill_histories(sequences, &self.skill_of_exercise, self.skills.len())?;
        Ok(histories
            .iter()
            .zip(&self.skills)
            .map(|(h, p)| log_likelihood(p, h))
            .sum())
    }
}

impl Predictor for BktModel {
    fn predict_sequence(&self, seq: &InteractionSequence) -> Result<Vec<f64>> {
        let mut mastery: BTreeMap<usize, f64> = BTreeMap::new();
        let mut out = Vec::with_capacity(seq.len().saturating_sub(1));
        for (t, it) in seq.steps.iter().enumerate() {
            let skill = *self.skill_of_exercise.get(it.exercise).ok_or(Error::ExerciseOutOfRange {
                index: it.exercise,
                count: self.skill_of_exercise.len(),
            })?;
            let params = &self.skills[skill];
            let l = *mastery.entry(skill).or_insert(params.p_init);
            if t > 0 {
                out.push(params.p_correct(l));
            }
            mastery.insert(skill, params.update(l, it.correct));
        }
        Ok(out)
    }

    fn name(&self) -> &str {
        "bkt"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::Interaction;
    use crate::numerics::Rng;

    fn seq(id: &str, pairs: &[(usize, bool)]) -> InteractionSequence {
        InteractionSequence::new(id, pairs.iter().map(|&(q, a)| Interaction::new(q, a)).collect())
    }

    #[test]
    fn marginal_counts() {
        let data = vec![
            seq("a", &[(0, true), (0, true), (1, false)]),
            seq("b", &[(0, true), (0, false), (1, true)]),
        ];
        let m = fit_marginal(&data, 3).unwrap();
        assert_eq!(m.rate(0), 0.75);
        assert_eq!(m.rate(1), 0.5);
        assert_eq!(m.rate(2), 4.0 / 6.0);
        assert_eq!(m.rates[2], None);
    }

    #[test]
    fn marginal_matches_independent_tally() {
        let mut rng = Rng::new(10);
        let rows: Vec<(usize, usize, bool)> = (0..10).map(|_| (rng.below(3), rng.below(4), rng.bernoulli(0.6))).collect();
        let mut by_student: BTreeMap<usize, Vec<(usize, bool)>> = BTreeMap::new();
        for &(s, q, a) in &rows {
            by_student.entry(s).or_default().push((q, a));
        }
        let data: Vec<_> = by_student.iter().map(|(s, v)| seq(&s.to_string(), v)).collect();
        let m = fit_marginal(&data, 4).unwrap();
        for q in 0..4 {
            let n = rows.iter().filter(|r| r.1 == q).count();
            let c = rows.iter().filter(|r| r.1 == q && r.2).count();
            if n > 0 {
                assert_eq!(m.rate(q), c as f64 / n as f64);
            }
        }
    }

    #[test]
    fn marginal_ignores_row_order() {
        let a = vec![seq("a", &[(0, true), (1, false)]), seq("b", &[(1, true), (0, false), (0, true)])];
        let b = vec![seq("b", &[(0, true), (0, false), (1, true)]), seq("a", &[(1, false), (0, true)])];
        assert_eq!(fit_marginal(&a, 2).unwrap(), fit_marginal(&b, 2).unwrap());
    }

    #[test]
    fn mastered_without_slip_always_correct() {
        let p = BktParams::new(1.0, 0.3, 0.2, 0.0);
        let tr = bkt_predict(&p, &[true, false, true, false]);
        assert!(tr.predictions.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn never_learning_predicts_guess() {
        let p = BktParams::new(0.0, 0.0, 0.17, 0.1);
        let tr = bkt_predict(&p, &[true, true, false, true]);
        assert!(tr.predictions.iter().all(|&v| (v - 0.17).abs() < 1e-15));
    }

    #[test]
    fn mastery_rises_on_correct_answers() {
        let mut rng = Rng::new(2);
        for _ in 0..100 {
            let p = BktParams::new(rng.uniform(), rng.uniform(), rng.uniform() * 0.49, rng.uniform() * 0.49);
            let tr = bkt_predict(&p, &[true; 10]);
            for w in tr.mastery.windows(2) {
                assert!(w[1] >= w[0] - 1e-15);
            }
        }
    }

    #[test]
    fn fit_on_all_correct_predicts_high() {
        let data: Vec<_> = (0..40).map(|i| seq(&i.to_string(), &[(0, true); 6])).collect();
        let model = fit_bkt(&data, &[0]).unwrap();
        let p = model.predict_sequence(&seq("x", &[(0, true), (0, true)])).unwrap();
        assert!(p[0] >= 0.9, "{p:?}");
    }

    #[test]
    fn fit_beats_default_parameters() {
        let mut rng = Rng::new(3);
        let data: Vec<_> = (0..50)
            .map(|i| {
                let steps: Vec<_> = (0..8).map(|t| (rng.below(2), rng.bernoulli(0.3 + 0.07 * t as f64))).collect();
                seq(&i.to_string(), &steps)
            })
            .collect();
        let model = fit_bkt(&data, &identity_skill_map(2)).unwrap();
        let default = BktModel {
            skill_of_exercise: identity_skill_map(2),
            skills: vec![BktParams::default(); 2],
        };
        assert!(model.log_likelihood(&data).unwrap() >= default.log_likelihood(&data).unwrap());
        for p in &model.skills {
            assert!(p.in_bounds());
        }
    }

    #[test]
    fn unobserved_skill_gets_defaults() {
        let data = vec![seq("a", &[(0, true), (0, false)])];
        let model = fit_bkt(&data, &[0, 1]).unwrap();
        assert_eq!(model.skills[1], BktParams::default());
    }

    #[test]
    fn predictor_tracks_skills_separately() {
        let model = BktModel {
            skill_of_exercise: vec![0, 1],
            skills: vec![BktParams::new(0.2, 0.3, 0.2, 0.1), BktParams::new(0.6, 0.1, 0.25, 0.05)],
        };
        let s = seq("a", &[(0, true), (1, false), (0, false), (1, true)]);
        let got = model.predict_sequence(&s).unwrap();
        let t0 = bkt_predict(&model.skills[0], &[true, false]);
        let t1 = bkt_predict(&model.skills[1], &[false, true]);
        assert_eq!(got, vec![t1.predictions[0], t0.predictions[1], t1.predictions[1]]);
    }
}
