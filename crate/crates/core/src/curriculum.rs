//! Exercise sequencing against a trained model: fixed blocking and mixing
//! orders, and a lookahead planner that maximises expected predicted
//! knowledge. Policies are compared by Monte Carlo rollouts in which the
//! model itself samples each simulated answer.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::encoding::Interaction;
use crate::error::{Error, Result};
use crate::evaluation::mean_and_stderr;
use crate::models::{KnowledgeTracer, RecurrentState};
use crate::numerics::Rng;

pub const DEFAULT_HORIZON: usize = 30;
pub const DEFAULT_PARTICLES: usize = 500;
/// Rollouts per candidate when the planner looks more than one step ahead.
pub const DEFAULT_PLANNING_PARTICLES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurriculumPolicy {
    Blocking,
    Mixing,
    /// `particles` is the number of rollouts per first move used by the
    /// planner itself when `depth > 1`.
    Expectimax { depth: usize, particles: usize },
}

impl fmt::Display for CurriculumPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CurriculumPolicy::Blocking => write!(f, "blocking"),
            CurriculumPolicy::Mixing => write!(f, "mixing"),
            CurriculumPolicy::Expectimax { depth, .. } => write!(f, "mdp-{depth}"),
        }
    }
}

impl CurriculumPolicy {
    pub fn validate(&self) -> Result<()> {
        if let CurriculumPolicy::Expectimax { depth, particles } = *self {
            if depth == 0 || particles == 0 {
                return Err(Error::InvalidConfig("expectimax needs depth >= 1 and particles >= 1".into()));
            }
        }
        Ok(())
    }
}

/// Exercises the policies may choose from, grouped by concept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExercisePool {
    /// Sorted, distinct exercise indices.
    exercises: Vec<usize>,
    /// Non-empty groups, each sorted; concepts in index order.
    groups: Vec<Vec<usize>>,
}

impl ExercisePool {
    /// Builds a pool from concept groups; empty groups are dropped.
    pub fn from_groups(groups: Vec<Vec<usize>>) -> Result<Self> {
        let mut groups: Vec<Vec<usize>> = groups.into_iter().filter(|g| !g.is_empty()).collect();
        for g in &mut groups {
            g.sort_unstable();
            g.dedup();
        }
        let mut exercises: Vec<usize> = groups.iter().flatten().copied().collect();
        exercises.sort_unstable();
        let n = exercises.len();
        exercises.dedup();
        if exercises.is_empty() {
            return Err(Error::EmptyPool);
        }
        if exercises.len() != n {
            return Err(Error::InvalidConfig("an exercise appears in more than one concept group".into()));
        }
        Ok(ExercisePool { exercises, groups })
    }

    /// Every exercise its own concept.
    pub fn flat(exercises: &[usize]) -> Result<Self> {
        Self::from_groups(exercises.iter().map(|&q| vec![q]).collect())
    }

    /// Keeps the first `per_group` exercises of every concept.
    pub fn truncated(&self, per_group: usize) -> Result<Self> {
        Self::from_groups(self.groups.iter().map(|g| g.iter().take(per_group).copied().collect()).collect())
    }

    pub fn exercises(&self) -> &[usize] {
        &self.exercises
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.exercises.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exercises.is_empty()
    }

    fn check(&self, tracer: &KnowledgeTracer) -> Result<()> {
        let m = tracer.exercise_count();
        match self.exercises.last() {
            Some(&q) if q >= m => Err(Error::ExerciseOutOfRange { index: q, count: m }),
            _ => Ok(()),
        }
    }

    /// Each concept's exercises consecutively, concepts in order.
    pub fn blocking_order(&self) -> Vec<usize> {
        self.groups.iter().flatten().copied().collect()
    }

    /// Round-robin across concepts.
    pub fn mixing_order(&self) -> Vec<usize> {
        let longest = self.groups.iter().map(Vec::len).max().unwrap_or(0);
        (0..longest)
            .flat_map(|r| self.groups.iter().filter_map(move |g| g.get(r).copied()))
            .collect()
    }
}

/// Mean predicted correctness over the pool.
pub fn knowledge_score(tracer: &KnowledgeTracer, state: &RecurrentState, pool: &ExercisePool) -> Result<f64> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let p = tracer.model.readout_subset(state, pool.exercises());
    Ok(p.iter().sum::<f64>() / p.len() as f64)
}

fn predicted(tracer: &KnowledgeTracer, state: &RecurrentState, exercise: usize) -> f64 {
    tracer.model.readout_subset(state, &[exercise])[0]
}

/// Exact one-step expectation of the knowledge score after offering `q`.
pub fn expected_score_one_step(
    tracer: &KnowledgeTracer,
    state: &RecurrentState,
    pool: &ExercisePool,
    q: usize,
) -> Result<f64> {
    let p = predicted(tracer, state, q);
    let right = knowledge_score(tracer, &tracer.advance(state, Interaction::new(q, true))?, pool)?;
    let wrong = knowledge_score(tracer, &tracer.advance(state, Interaction::new(q, false))?, pool)?;
    Ok(p * right + (1.0 - p) * wrong)
}

/// [`expected_score_one_step`] for every pool exercise, sharing the
/// recurrent product between candidates.
pub fn one_step_values(tracer: &KnowledgeTracer, state: &RecurrentState, pool: &ExercisePool) -> Result<Vec<f64>> {
    let model = &tracer.model;
    let prepared = model.prepare_step(state);
    let probs = model.readout_subset(state, pool.exercises());
    let mut out = Vec::with_capacity(pool.len());
    for (&q, &p) in pool.exercises().iter().zip(&probs) {
        let score = |correct: bool| -> Result<f64> {
            let x = tracer.encoding.encode_input(Interaction::new(q, correct))?;
            knowledge_score(tracer, &model.step_prepared(state, &prepared, x)?, pool)
        };
        let right = score(true)?;
        let wrong = score(false)?;
        out.push(p * right + (1.0 - p) * wrong);
    }
    Ok(out)
}

/// Argmax of the exact one-step expectation; ties go to the lowest index.
fn greedy_choice(tracer: &KnowledgeTracer, state: &RecurrentState, pool: &ExercisePool) -> Result<usize> {
    let values = one_step_values(tracer, state, pool)?;
    let mut best = (f64::NEG_INFINITY, pool.exercises()[0]);
    for (&q, &v) in pool.exercises().iter().zip(&values) {
        if v > best.0 {
            best = (v, q);
        }
    }
    Ok(best.1)
}

/// Estimate (mean, standard error) of the knowledge score after offering
/// `first` and then `depth - 1` greedy choices, with answers drawn from the
/// model.
///
/// The answer to `first` is not sampled: both outcomes are followed and
/// weighted by the predicted probability, with `particles / 2` rollouts each
/// (at least one). The last step is also taken in expectation, so only the
/// answers in between are sampled and depth 2 is exact. Rollout `r` uses
/// stream `2r` of `base_seed` after a correct first answer and `2r + 1` after
/// a wrong one.
pub fn rollout_value(
    tracer: &KnowledgeTracer,
    state: &RecurrentState,
    pool: &ExercisePool,
    first: usize,
    depth: usize,
    particles: usize,
    base_seed: u64,
) -> Result<(f64, f64)> {
    if depth == 0 || particles == 0 {
        return Err(Error::InvalidConfig("depth and particle count must be >= 1".into()));
    }
    if depth == 1 {
        return Ok((expected_score_one_step(tracer, state, pool, first)?, 0.0));
    }
    let p = predicted(tracer, state, first);
    // Exact continuations need no repetition.
    let per_outcome = if depth == 2 { 1 } else { (particles / 2).max(1) };
    let branch = |correct: bool| -> Result<(f64, f64)> {
        let after = tracer.advance(state, Interaction::new(first, correct))?;
        let mut values = Vec::with_capacity(per_outcome);
        for r in 0..per_outcome {
            let mut rng = Rng::with_stream(base_seed, 2 * r as u64 + u64::from(!correct));
            let mut s = after.clone();
            for _ in 1..depth - 1 {
                let q = greedy_choice(tracer, &s, pool)?;
                let correct = rng.bernoulli(predicted(tracer, &s, q));
                s = tracer.advance(&s, Interaction::new(q, correct))?;
            }
            let last = one_step_values(tracer, &s, pool)?;
            values.push(last.into_iter().fold(f64::NEG_INFINITY, f64::max));
        }
        Ok(mean_and_stderr(&values))
    };
    let (right, se_right) = branch(true)?;
    let (wrong, se_wrong) = branch(false)?;
    let mean = p * right + (1.0 - p) * wrong;
    let se = ((p * se_right).powi(2) + ((1.0 - p) * se_wrong).powi(2)).sqrt();
    Ok((mean, se))
}

/// Picks the pool exercise with the highest expected knowledge after
/// `depth` steps. Depths 1 and 2 are evaluated exactly. Deeper searches
/// enumerate the first move and continue greedily inside sampled rollouts
/// (see [`rollout_value`]); all candidates share the same rollout seeds.
pub fn choose_next_expectimax(
    tracer: &KnowledgeTracer,
    state: &RecurrentState,
    pool: &ExercisePool,
    depth: usize,
    particles: usize,
    rng: &mut Rng,
) -> Result<usize> {
    CurriculumPolicy::Expectimax { depth, particles }.validate()?;
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    pool.check(tracer)?;
    if depth == 1 {
        return greedy_choice(tracer, state, pool);
    }
    let base = rng.next_u64();
    let mut best = (f64::NEG_INFINITY, pool.exercises()[0]);
    for &q in pool.exercises() {
        let (v, _) = rollout_value(tracer, state, pool, q, depth, particles, base)?;
        if v > best.0 {
            best = (v, q);
        }
    }
    Ok(best.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Number of exercises answered so far.
    pub step: usize,
    pub mean_knowledge: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumCurve {
    pub policy: String,
    /// Steps `1..=horizon`.
    pub points: Vec<CurvePoint>,
    /// Exercises offered to the first particle.
    pub first_particle_log: Vec<Interaction>,
}

impl CurriculumCurve {
    pub fn final_mean(&self) -> f64 {
        self.points.last().map_or(f64::NAN, |p| p.mean_knowledge)
    }
}

/// Simulates `particles` students for `horizon` steps under `policy`.
/// Particle `i` draws from stream `i` of `seed`, so curves are reproducible
/// and independent of evaluation order.
pub fn run_curriculum(
    tracer: &KnowledgeTracer,
    policy: CurriculumPolicy,
    pool: &ExercisePool,
    horizon: usize,
    particles: usize,
    seed: u64,
) -> Result<CurriculumCurve> {
    policy.validate()?;
    if horizon == 0 || particles == 0 {
        return Err(Error::InvalidConfig("horizon and particle count must be >= 1".into()));
    }
    pool.check(tracer)?;
    let fixed_order = match policy {
        CurriculumPolicy::Blocking => pool.blocking_order(),
        CurriculumPolicy::Mixing => pool.mixing_order(),
        CurriculumPolicy::Expectimax { .. } => Vec::new(),
    };
    let mut scores = vec![Vec::with_capacity(particles); horizon];
    let mut first_particle_log = Vec::new();
    for i in 0..particles {
        let mut rng = Rng::with_stream(seed, i as u64);
        let mut state = tracer.initial_state();
        for t in 0..horizon {
            let q = match policy {
                CurriculumPolicy::Expectimax { depth, particles } => {
                    choose_next_expectimax(tracer, &state, pool, depth, particles, &mut rng)?
                }
                _ => fixed_order[t % fixed_order.len()],
            };
            let correct = rng.bernoulli(predicted(tracer, &state, q));
            state = tracer.advance(&state, Interaction::new(q, correct))?;
            if i == 0 {
                first_particle_log.push(Interaction::new(q, correct));
            }
            scores[t].push(knowledge_score(tracer, &state, pool)?);
        }
    }
    let points = scores
        .iter()
        .enumerate()
        .map(|(step, v)| {
            let (mean_knowledge, stderr) = mean_and_stderr(v);
            CurvePoint {
                step: step + 1,
                mean_knowledge,
                stderr,
            }
        })
        .collect();
    Ok(CurriculumCurve {
        policy: policy.to_string(),
        points,
        first_particle_log,
    })
}

/// CSV with columns `policy,step,mean_knowledge,stderr`.
pub fn write_curves_csv<W: Write>(curves: &[CurriculumCurve], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["policy", "step", "mean_knowledge", "stderr"])?;
    for c in curves {
        for p in &c.points {
            w.write_record([
                c.policy.clone(),
                p.step.to_string(),
                format!("{:.10}", p.mean_knowledge),
                format!("{:.10}", p.stderr),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::EncodingScheme;
    use crate::models::{DktModel, ModelKind};

    fn random_tracer(m: usize, seed: u64, scale: f64) -> KnowledgeTracer {
        let enc = EncodingScheme::one_hot(m);
        let mut model = DktModel::init(ModelKind::Lstm, enc.input_dim(), 8, m, &mut Rng::new(seed));
        for (_, t) in model.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v *= scale);
        }
        KnowledgeTracer::new(model, enc).unwrap()
    }

    #[test]
    fn zero_model_scores_one_half() {
        let enc = EncodingScheme::one_hot(4);
        let t = KnowledgeTracer::new(DktModel::zeros(ModelKind::Lstm, 8, 3, 4), enc).unwrap();
        let pool = ExercisePool::flat(&[0, 1, 2, 3]).unwrap();
        assert_eq!(knowledge_score(&t, &t.initial_state(), &pool).unwrap(), 0.5);
    }

    #[test]
    fn single_exercise_pool_is_that_prediction() {
        let t = random_tracer(5, 2, 10.0);
        let s = t.initial_state();
        let pool = ExercisePool::flat(&[3]).unwrap();
        assert_eq!(knowledge_score(&t, &s, &pool).unwrap(), t.readout(&s)[3]);
    }

    #[test]
    fn empty_pool_rejected() {
        assert!(matches!(ExercisePool::from_groups(vec![vec![], vec![]]), Err(Error::EmptyPool)));
    }

    #[test]
    fn orders() {
        let pool = ExercisePool::from_groups(vec![vec![0, 3], vec![1, 4, 6], vec![2]]).unwrap();
        assert_eq!(pool.blocking_order(), vec![0, 3, 1, 4, 6, 2]);
        assert_eq!(pool.mixing_order(), vec![0, 1, 2, 3, 4, 6]);
    }

    #[test]
    fn blocking_log_groups_concepts() {
        let t = random_tracer(6, 1, 5.0);
        let pool = ExercisePool::from_groups(vec![vec![0, 1], vec![2, 3], vec![4, 5]]).unwrap();
        let c = run_curriculum(&t, CurriculumPolicy::Blocking, &pool, 6, 3, 9).unwrap();
        let offered: Vec<usize> = c.first_particle_log.iter().map(|i| i.exercise).collect();
        assert_eq!(offered, vec![0, 1, 2, 3, 4, 5]);
        assert!(c.points.iter().all(|p| p.mean_knowledge > 0.0 && p.mean_knowledge < 1.0));
        assert_eq!(c.points.len(), 6);
        assert_eq!(c.points[0].step, 1);
    }

    #[test]
    fn curves_reproduce() {
        let t = random_tracer(4, 3, 5.0);
        let pool = ExercisePool::flat(&[0, 1, 2, 3]).unwrap();
        let policy = CurriculumPolicy::Expectimax { depth: 2, particles: 3 };
        let a = run_curriculum(&t, policy, &pool, 4, 5, 11).unwrap();
        let b = run_curriculum(&t, policy, &pool, 4, 5, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn depth_one_ignores_particle_count() {
        let t = random_tracer(5, 4, 8.0);
        let pool = ExercisePool::flat(&[0, 1, 2, 3, 4]).unwrap();
        let s = t.initial_state();
        let a = choose_next_expectimax(&t, &s, &pool, 1, 1, &mut Rng::new(1)).unwrap();
        let b = choose_next_expectimax(&t, &s, &pool, 1, 1000, &mut Rng::new(2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shared_step_matches_direct_expectation() {
        let t = random_tracer(6, 8, 6.0);
        let pool = ExercisePool::flat(&[0, 2, 3, 5]).unwrap();
        let s = t.advance(&t.initial_state(), Interaction::new(1, true)).unwrap();
        let fast = one_step_values(&t, &s, &pool).unwrap();
        for (&q, v) in pool.exercises().iter().zip(fast) {
            assert_eq!(v, expected_score_one_step(&t, &s, &pool, q).unwrap());
        }
    }

    #[test]
    fn invalid_policy() {
        let t = random_tracer(3, 1, 1.0);
        let pool = ExercisePool::flat(&[0]).unwrap();
        assert!(choose_next_expectimax(&t, &t.initial_state(), &pool, 0, 5, &mut Rng::new(1)).is_err());
        assert!(run_curriculum(&t, CurriculumPolicy::Mixing, &pool, 0, 5, 1).is_err());
        let big = ExercisePool::flat(&[7]).unwrap();
        assert!(run_curriculum(&t, CurriculumPolicy::Mixing, &big, 2, 2, 1).is_err());
    }
}
