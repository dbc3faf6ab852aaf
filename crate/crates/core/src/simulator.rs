//! Synthetic students answering a fixed sequence of exercises.
//!
//! Each exercise belongs to one latent concept and has a difficulty `beta`;
//! each student holds a skill `alpha` per concept. Responses follow
//! `p = c + (1 - c) / (1 + exp(-alpha * beta))` and after every answer the
//! skill of the answered concept moves up by a fixed increment.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::encoding::{Interaction, InteractionSequence};
use crate::error::{Error, Result};
use crate::evaluation::Predictor;
use crate::numerics::{sigmoid, Rng};

pub const DEFAULT_GUESS: f64 = 0.25;
pub const DEFAULT_EXERCISES: usize = 50;
pub const DEFAULT_LEARNING_INCREMENT: f64 = 0.2;
pub const DEFAULT_SKILL_STD: f64 = 4.0;
pub const DEFAULT_DIFFICULTY_STD: f64 = 4.0;

pub fn irt_prob(alpha: f64, beta: f64, guess: f64) -> f64 {
    guess + (1.0 - guess) * sigmoid(alpha * beta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub concept_count: usize,
    pub exercise_count: usize,
    pub guess: f64,
    pub learning_increment: f64,
    /// Standard deviation of the initial per-concept skills.
    pub skill_std: f64,
    /// Standard deviation of the exercise difficulties.
    pub difficulty_std: f64,
}

impl WorldConfig {
    pub fn new(concept_count: usize) -> Self {
        WorldConfig {
            concept_count,
            exercise_count: DEFAULT_EXERCISES,
            guess: DEFAULT_GUESS,
            learning_increment: DEFAULT_LEARNING_INCREMENT,
            skill_std: DEFAULT_SKILL_STD,
            difficulty_std: DEFAULT_DIFFICULTY_STD,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.concept_count == 0 {
            return bad("concept count must be >= 1".into());
        }
        if self.exercise_count < self.concept_count {
            return bad(format!(
                "need at least one exercise per concept ({} exercises, {} concepts)",
                self.exercise_count, self.concept_count
            ));
        }
        if !(0.0..1.0).contains(&self.guess) {
            return bad(format!("guess floor {} outside [0, 1)", self.guess));
        }
        if !self.learning_increment.is_finite() {
            return bad("learning increment must be finite".into());
        }
        if !(self.skill_std >= 0.0 && self.difficulty_std >= 0.0) {
            return bad("standard deviations must be >= 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWorld {
    pub concept_count: usize,
    pub exercise_count: usize,
    pub concept_of_exercise: Vec<usize>,
    pub difficulty: Vec<f64>,
    pub guess: f64,
    pub learning_increment: f64,
    pub skill_std: f64,
    /// Shared by every student.
    pub presentation_order: Vec<usize>,
}

impl SyntheticWorld {
    /// Concepts are assigned round-robin (`exercise % k`); difficulties are
    /// drawn, then the presentation order is a random permutation.
    pub fn generate(config: &WorldConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let m = config.exercise_count;
        let concept_of_exercise = (0..m).map(|j| j % config.concept_count).collect();
        let difficulty = (0..m).map(|_| rng.normal() * config.difficulty_std).collect();
        let presentation_order = rng.permutation(m);
        Ok(SyntheticWorld {
            concept_count: config.concept_count,
            exercise_count: m,
            concept_of_exercise,
            difficulty,
            guess: config.guess,
            learning_increment: config.learning_increment,
            skill_std: config.skill_std,
            presentation_order,
        })
    }

    pub fn tag_names(&self) -> Vec<String> {
        (0..self.exercise_count).map(|j| format!("ex{j:03}")).collect()
    }

    /// Exercises grouped by concept, each group in index order.
    pub fn concept_groups(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.concept_count];
        for (j, &c) in self.concept_of_exercise.iter().enumerate() {
            groups[c].push(j);
        }
        groups
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthStep {
    /// All concept skills just before this answer.
    pub skills: Vec<f64>,
    pub exercise: usize,
    pub concept: usize,
    pub difficulty: f64,
    pub probability: f64,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TruthRecord {
    pub students: Vec<Vec<TruthStep>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedData {
    pub sequences: Vec<InteractionSequence>,
    pub truth: TruthRecord,
}

impl SimulatedData {
    pub fn answer_count(&self) -> usize {
        self.sequences.iter().map(|s| s.len()).sum()
    }
}

/// Simulates `student_count` students. A base seed is drawn from `rng`; each
/// student then gets its own stream, so student `i` does not depend on how
/// many students are generated.
pub fn generate_dataset(world: &SyntheticWorld, student_count: usize, rng: &mut Rng) -> Result<SimulatedData> {
    if student_count == 0 {
        return Err(Error::InvalidConfig("student count must be >= 1".into()));
    }
    let base = rng.next_u64();
    let mut sequences = Vec::with_capacity(student_count);
    let mut truth = TruthRecord::default();
    for s in 0..student_count {
        let mut srng = Rng::with_stream(base, s as u64);
        let mut skills: Vec<f64> = (0..world.concept_count).map(|_| srng.normal() * world.skill_std).collect();
        let mut steps = Vec::with_capacity(world.exercise_count);
        let mut record = Vec::with_capacity(world.exercise_count);
        for &q in &world.presentation_order {
            let concept = world.concept_of_exercise[q];
            let beta = world.difficulty[q];
            let p = irt_prob(skills[concept], beta, world.guess);
            let correct = srng.bernoulli(p);
            record.push(TruthStep {
                skills: skills.clone(),
                exercise: q,
                concept,
                difficulty: beta,
                probability: p,
                correct,
            });
            steps.push(Interaction::new(q, correct));
            skills[concept] += world.learning_increment;
        }
        sequences.push(InteractionSequence::new(format!("s{s:05}"), steps));
        truth.students.push(record);
    }
    Ok(SimulatedData { sequences, truth })
}

/// Response probability under the true latent state at `step`.
pub fn oracle_predict(world: &SyntheticWorld, truth: &TruthRecord, student: usize, step: usize) -> Result<f64> {
    let rec = truth
        .students
        .get(student)
        .and_then(|s| s.get(step))
        .ok_or_else(|| Error::InvalidConfig(format!("no truth record for student {student} step {step}")))?;
    Ok(irt_prob(rec.skills[rec.concept], world.difficulty[rec.exercise], world.guess))
}

/// Scores each step with the recorded true response probability.
#[derive(Debug, Clone, Default)]
pub struct OraclePredictor {
    pub probabilities: HashMap<String, Vec<f64>>,
}

impl OraclePredictor {
    pub fn from_simulation(data: &SimulatedData) -> Self {
        let probabilities = data
            .sequences
            .iter()
            .zip(&data.truth.students)
            .map(|(s, t)| (s.student_id.clone(), t.iter().map(|x| x.probability).collect()))
            .collect();
        OraclePredictor { probabilities }
    }
}

impl Predictor for OraclePredictor {
    fn predict_sequence(&self, seq: &InteractionSequence) -> Result<Vec<f64>> {
        let p = self
            .probabilities
            .get(&seq.student_id)
            .ok_or_else(|| Error::InvalidConfig(format!("no truth record for student {}", seq.student_id)))?;
        if p.len() != seq.len() {
            return Err(Error::DimensionMismatch {
                context: format!("truth record of student {}", seq.student_id),
                expected: seq.len(),
                actual: p.len(),
            });
        }
        Ok(p[1..].to_vec())
    }

    fn name(&self) -> &str {
        "oracle"
    }
}
