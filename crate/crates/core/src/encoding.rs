//! Student interactions and their conversion into model input vectors.
//!
//! Index convention for an interaction `(q, a)`: `q + a * M`. Incorrect
//! answers occupy the first `M` slots, correct answers the second `M`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{gaussian_matrix, Matrix, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interaction {
    pub exercise: usize,
    pub correct: bool,
}

impl Interaction {
    pub fn new(exercise: usize, correct: bool) -> Self {
        Interaction { exercise, correct }
    }

    /// Row of the 2M input table this interaction selects.
    #[inline]
    pub fn slot(&self, exercise_count: usize) -> usize {
        self.exercise + usize::from(self.correct) * exercise_count
    }

    pub fn label(&self) -> f64 {
        if self.correct {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionSequence {
    pub student_id: String,
    pub steps: Vec<Interaction>,
}

impl InteractionSequence {
    pub fn new(student_id: impl Into<String>, steps: Vec<Interaction>) -> Self {
        InteractionSequence {
            student_id: student_id.into(),
            steps,
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Number of scored predictions this sequence yields.
    pub fn target_count(&self) -> usize {
        self.steps.len().saturating_sub(1)
    }

    pub fn max_exercise(&self) -> Option<usize> {
        self.steps.iter().map(|s| s.exercise).max()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingVariant {
    OneHot,
    CompressedGaussian,
}

impl EncodingVariant {
    pub fn name(&self) -> &'static str {
        match self {
            EncodingVariant::OneHot => "one_hot",
            EncodingVariant::CompressedGaussian => "compressed_gaussian",
        }
    }
}

/// Model input produced for one interaction.
///
/// One-hot inputs are kept as the index of their single nonzero entry so the
/// models can select a weight column instead of multiplying by a sparse
/// vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EncodedInput<'a> {
    OneHot(usize),
    Dense(&'a [f64]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodingScheme {
    variant: EncodingVariant,
    exercise_count: usize,
    compressed_dim: usize,
    seed: u64,
    code_table: Option<Matrix>,
}

/// `max(16, ceil(4 * log2(2M)))`
pub fn default_compressed_dim(exercise_count: usize) -> usize {
    let m = exercise_count.max(1) as f64;
    let n = (4.0 * (2.0 * m).log2()).ceil() as usize;
    n.max(16)
}

impl EncodingScheme {
    pub fn one_hot(exercise_count: usize) -> Self {
        EncodingScheme {
            variant: EncodingVariant::OneHot,
            exercise_count,
            compressed_dim: 0,
            seed: 0,
            code_table: None,
        }
    }

    /// Fixed random Gaussian code per `(q, a)` pair; the table is regenerated
    /// from `seed`, so only `(M, N, seed)` need to be persisted.
    pub fn compressed(exercise_count: usize, dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("compressed dimension must be >= 1".into()));
        }
        if exercise_count == 0 {
            return Err(Error::InvalidConfig("exercise count must be >= 1".into()));
        }
        let mut rng = Rng::new(seed);
        let table = gaussian_matrix(&mut rng, 2 * exercise_count, dim);
        Ok(EncodingScheme {
            variant: EncodingVariant::CompressedGaussian,
            exercise_count,
            compressed_dim: dim,
            seed,
            code_table: Some(table),
        })
    }

    pub fn compressed_default(exercise_count: usize, seed: u64) -> Result<Self> {
        Self::compressed(exercise_count, default_compressed_dim(exercise_count), seed)
    }

    pub fn variant(&self) -> EncodingVariant {
        self.variant
    }

    pub fn exercise_count(&self) -> usize {
        self.exercise_count
    }

    pub fn compressed_dim(&self) -> usize {
        self.compressed_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn code_table(&self) -> Option<&Matrix> {
        self.code_table.as_ref()
    }

    pub fn input_dim(&self) -> usize {
        match self.variant {
            EncodingVariant::OneHot => 2 * self.exercise_count,
            EncodingVariant::CompressedGaussian => self.compressed_dim,
        }
    }

    fn check(&self, it: Interaction) -> Result<()> {
        if it.exercise >= self.exercise_count {
            return Err(Error::ExerciseOutOfRange {
                index: it.exercise,
                count: self.exercise_count,
            });
        }
        Ok(())
    }

    /// Compact form used by the models.
    pub fn encode_input(&self, it: Interaction) -> Result<EncodedInput<'_>> {
        self.check(it)?;
        let slot = it.slot(self.exercise_count);
        Ok(match &self.code_table {
            None => EncodedInput::OneHot(slot),
            Some(table) => EncodedInput::Dense(table.row(slot)),
        })
    }

    /// Full input vector for one interaction.
    pub fn encode(&self, it: Interaction) -> Result<Vec<f64>> {
        Ok(match self.encode_input(it)? {
            EncodedInput::OneHot(slot) => {
                let mut v = vec![0.0; self.input_dim()];
                v[slot] = 1.0;
                v
            }
            EncodedInput::Dense(row) => row.to_vec(),
        })
    }

    pub fn encode_sequence<'a>(&'a self, steps: &[Interaction]) -> Result<Vec<EncodedInput<'a>>> {
        steps.iter().map(|&it| self.encode_input(it)).collect()
    }

    /// Index of the code-table row closest (Euclidean) to `v`. For one-hot
    /// schemes this is the argmax.
    pub fn decode_nearest(&self, v: &[f64]) -> usize {
        match &self.code_table {
            None => v
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
                .0,
            Some(table) => {
                let mut best = (0, f64::INFINITY);
                for r in 0..table.rows() {
                    let d: f64 = table.row(r).iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
                    if d < best.1 {
                        best = (r, d);
                    }
                }
                best.0
            }
        }
    }
}

/// One-hot indicator of the exercise answered next.
pub fn target_mask(exercise_count: usize, next_exercise: usize) -> Result<Vec<f64>> {
    if next_exercise >= exercise_count {
        return Err(Error::ExerciseOutOfRange {
            index: next_exercise,
            count: exercise_count,
        });
    }
    let mut v = vec![0.0; exercise_count];
    v[next_exercise] = 1.0;
    Ok(v)
}
