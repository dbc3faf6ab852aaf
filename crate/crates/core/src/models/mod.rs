//! Recurrent student models: a vanilla tanh RNN and the gated LSTM variant
//! whose readout is taken from the memory cell. Both emit, at every step, a
//! vector of per-exercise correctness probabilities; the entry for the next
//! exercise is the prediction that enters the loss.

mod lstm;
mod rnn;
mod train;

pub use lstm::LstmParams;
pub use rnn::RnnParams;
pub use train::{dataset_loss, train, train_from, EpochStats, TrainConfig, TrainResult};

use serde::{Deserialize, Serialize};

use crate::encoding::{EncodedInput, EncodingScheme, Interaction, InteractionSequence};
use crate::error::{Error, Result};
use crate::numerics::{dot, l2_norm, sigmoid, Matrix, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Rnn,
    Lstm,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Rnn => "rnn",
            ModelKind::Lstm => "lstm",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rnn" => Ok(ModelKind::Rnn),
            "lstm" => Ok(ModelKind::Lstm),
            other => Err(Error::InvalidConfig(format!("unknown model kind '{other}'"))),
        }
    }
}

/// Per-step output vectors `y_1 .. y_T`, each of length M.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSeries {
    pub outputs: Vec<Vec<f64>>,
}

impl PredictionSeries {
    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn last(&self) -> Option<&[f64]> {
        self.outputs.last().map(Vec::as_slice)
    }
}

/// Inverted-dropout scales for the readout path: one H-vector per time step,
/// each entry either 0 or `1 / keep`.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    pub keep_probability: f64,
    pub scales: Vec<Vec<f64>>,
}

impl DropoutMask {
    pub fn sample(rng: &mut Rng, steps: usize, hidden: usize, keep_probability: f64) -> Self {
        let on = 1.0 / keep_probability;
        let scales = (0..steps)
            .map(|_| {
                (0..hidden)
                    .map(|_| if rng.bernoulli(keep_probability) { on } else { 0.0 })
                    .collect()
            })
            .collect();
        DropoutMask {
            keep_probability,
            scales,
        }
    }

    #[inline]
    pub(crate) fn step(&self, t: usize) -> &[f64] {
        &self.scales[t]
    }
}

/// Recurrent contribution to the next step, see [`DktModel::prepare_step`].
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedStep {
    pre: Vec<f64>,
}

/// Recurrent state carried between steps. `memory` is only used by the LSTM.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentState {
    pub hidden: Vec<f64>,
    pub memory: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DktModel {
    Rnn(RnnParams),
    Lstm(LstmParams),
}

/// One gradient tensor per parameter tensor, laid out like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub DktModel);

impl DktModel {
    pub fn init(kind: ModelKind, input_dim: usize, hidden_dim: usize, output_dim: usize, rng: &mut Rng) -> Self {
        match kind {
            ModelKind::Rnn => DktModel::Rnn(RnnParams::init(input_dim, hidden_dim, output_dim, rng)),
            ModelKind::Lstm => DktModel::Lstm(LstmParams::init(input_dim, hidden_dim, output_dim, rng)),
        }
    }

    pub fn zeros(kind: ModelKind, input_dim: usize, hidden_dim: usize, output_dim: usize) -> Self {
        match kind {
            ModelKind::Rnn => DktModel::Rnn(RnnParams::zeros(input_dim, hidden_dim, output_dim)),
            ModelKind::Lstm => DktModel::Lstm(LstmParams::zeros(input_dim, hidden_dim, output_dim)),
        }
    }

    pub fn zeros_like(&self) -> Self {
        DktModel::zeros(self.kind(), self.input_dim(), self.hidden_dim(), self.output_dim())
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            DktModel::Rnn(_) => ModelKind::Rnn,
            DktModel::Lstm(_) => ModelKind::Lstm,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            DktModel::Rnn(p) => p.w_hx.cols(),
            DktModel::Lstm(p) => p.w_ix.cols(),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        match self {
            DktModel::Rnn(p) => p.w_hh.rows(),
            DktModel::Lstm(p) => p.w_ih.rows(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            DktModel::Rnn(p) => p.w_yh.rows(),
            DktModel::Lstm(p) => p.w_zm.rows(),
        }
    }

    /// Named parameter tensors in canonical order (vectors are n x 1).
    pub fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        match self {
            DktModel::Rnn(p) => p.tensors(),
            DktModel::Lstm(p) => p.tensors(),
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        match self {
            DktModel::Rnn(p) => p.tensors_mut(),
            DktModel::Lstm(p) => p.tensors_mut(),
        }
    }

    /// Readout bias (`b_y` or `b_z`).
    pub fn output_bias(&self) -> &Matrix {
        match self {
            DktModel::Rnn(p) => &p.b_y,
            DktModel::Lstm(p) => &p.b_z,
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.data().len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, m)| m.is_finite())
    }

    /// Shape consistency check for all tensors.
    pub fn validate(&self) -> Result<()> {
        match self {
            DktModel::Rnn(p) => p.validate(),
            DktModel::Lstm(p) => p.validate(),
        }
    }

    fn check_inputs(&self, inputs: &[EncodedInput<'_>], mask: Option<&DropoutMask>) -> Result<()> {
        let d = self.input_dim();
        for x in inputs {
            match *x {
                EncodedInput::OneHot(slot) if slot >= d => {
                    return Err(Error::DimensionMismatch {
                        context: "one-hot input slot".into(),
                        expected: d,
                        actual: slot + 1,
                    })
                }
                EncodedInput::Dense(v) if v.len() != d => {
                    return Err(Error::DimensionMismatch {
                        context: "dense input length".into(),
                        expected: d,
                        actual: v.len(),
                    })
                }
                _ => {}
            }
        }
        if let Some(mask) = mask {
            let h = self.hidden_dim();
            if mask.scales.len() < inputs.len() || mask.scales.iter().any(|s| s.len() != h) {
                return Err(Error::DimensionMismatch {
                    context: "dropout mask".into(),
                    expected: h,
                    actual: mask.scales.first().map_or(0, Vec::len),
                });
            }
        }
        Ok(())
    }

    /// Runs the network over `inputs`. Returns the hidden states `h_1..h_T`
    /// and the predictions. Dropout, when given, touches only the readout.
    pub fn forward(
        &self,
        inputs: &[EncodedInput<'_>],
        mask: Option<&DropoutMask>,
    ) -> Result<(Vec<Vec<f64>>, PredictionSeries)> {
        self.check_inputs(inputs, mask)?;
        Ok(match self {
            DktModel::Rnn(p) => p.forward(inputs, mask),
            DktModel::Lstm(p) => p.forward(inputs, mask),
        })
    }

    /// Sequence loss and its exact gradient with respect to every parameter.
    pub fn backward(
        &self,
        inputs: &[EncodedInput<'_>],
        steps: &[Interaction],
        mask: Option<&DropoutMask>,
    ) -> Result<(f64, Gradients)> {
        let mut grads = self.zeros_like();
        let loss = self.accumulate_gradient(inputs, steps, mask, &mut grads)?;
        Ok((loss, Gradients(grads)))
    }

    /// Adds this sequence's gradient into `grads`; returns its loss.
    pub(crate) fn accumulate_gradient(
        &self,
        inputs: &[EncodedInput<'_>],
        steps: &[Interaction],
        mask: Option<&DropoutMask>,
        grads: &mut DktModel,
    ) -> Result<f64> {
        self.check_inputs(inputs, mask)?;
        if inputs.len() != steps.len() {
            return Err(Error::DimensionMismatch {
                context: "inputs vs interactions".into(),
                expected: steps.len(),
                actual: inputs.len(),
            });
        }
        let m = self.output_dim();
        if let Some(bad) = steps.iter().find(|s| s.exercise >= m) {
            return Err(Error::ExerciseOutOfRange {
                index: bad.exercise,
                count: m,
            });
        }
        Ok(match (self, grads) {
            (DktModel::Rnn(p), DktModel::Rnn(g)) => p.accumulate_gradient(inputs, steps, mask, g),
            (DktModel::Lstm(p), DktModel::Lstm(g)) => p.accumulate_gradient(inputs, steps, mask, g),
            _ => {
                return Err(Error::InvalidConfig(
                    "gradient buffer kind does not match model kind".into(),
                ))
            }
        })
    }

    pub fn initial_state(&self) -> RecurrentState {
        match self {
            DktModel::Rnn(p) => RecurrentState {
                hidden: p.h0.data().to_vec(),
                memory: Vec::new(),
            },
            DktModel::Lstm(p) => RecurrentState {
                hidden: p.h0.data().to_vec(),
                memory: p.m0.data().to_vec(),
            },
        }
    }

    /// Advances the state by one interaction (no dropout).
    pub fn step(&self, state: &RecurrentState, input: EncodedInput<'_>) -> Result<RecurrentState> {
        self.check_inputs(&[input], None)?;
        Ok(match self {
            DktModel::Rnn(p) => p.step(state, input),
            DktModel::Lstm(p) => p.step(state, input),
        })
    }

    /// The input-independent part of the next step from `state`. Stepping
    /// through it gives the same result as [`DktModel::step`] while sharing
    /// the recurrent product across many candidate inputs.
    pub fn prepare_step(&self, state: &RecurrentState) -> PreparedStep {
        let mut pre = vec![0.0; self.gate_width()];
        match self {
            DktModel::Rnn(p) => p.recurrent_part(&state.hidden, &mut pre),
            DktModel::Lstm(p) => p.recurrent_part(&state.hidden, &mut pre),
        }
        PreparedStep { pre }
    }

    pub fn step_prepared(&self, state: &RecurrentState, prepared: &PreparedStep, input: EncodedInput<'_>) -> Result<RecurrentState> {
        self.check_inputs(&[input], None)?;
        let hd = self.hidden_dim();
        let mut gates = prepared.pre.clone();
        Ok(match self {
            DktModel::Rnn(p) => {
                p.finish_cell(input, &mut gates);
                RecurrentState {
                    hidden: gates,
                    memory: Vec::new(),
                }
            }
            DktModel::Lstm(p) => {
                let mut m = vec![0.0; hd];
                let mut h = vec![0.0; hd];
                p.finish_cell(input, &state.memory, &mut gates, &mut m, &mut h);
                RecurrentState { hidden: h, memory: m }
            }
        })
    }

    fn gate_width(&self) -> usize {
        match self {
            DktModel::Rnn(_) => self.hidden_dim(),
            DktModel::Lstm(_) => 4 * self.hidden_dim(),
        }
    }

    /// Per-exercise probabilities read out of `state` (no dropout).
    pub fn readout(&self, state: &RecurrentState) -> Vec<f64> {
        let mut out = vec![0.0; self.output_dim()];
        match self {
            DktModel::Rnn(p) => p.readout(&state.hidden, None, &mut out),
            DktModel::Lstm(p) => p.readout(&state.memory, None, &mut out),
        }
        out
    }

    /// Probabilities for the listed exercises only. Indices must be `< output_dim`.
    pub fn readout_subset(&self, state: &RecurrentState, exercises: &[usize]) -> Vec<f64> {
        let (w, b, v) = match self {
            DktModel::Rnn(p) => (&p.w_yh, &p.b_y, &state.hidden),
            DktModel::Lstm(p) => (&p.w_zm, &p.b_z, &state.memory),
        };
        exercises
            .iter()
            .map(|&q| sigmoid(dot(w.row(q), v) + b.data()[q]))
            .collect()
    }

    /// `self -= rate * grads`
    pub fn apply_update(&mut self, grads: &Gradients, rate: f64) {
        for ((_, p), (_, g)) in self.tensors_mut().into_iter().zip(grads.0.tensors()) {
            p.axpy(-rate, g);
        }
    }
}

impl Gradients {
    pub fn global_norm(&self) -> f64 {
        let flat: Vec<f64> = self
            .0
            .tensors()
            .iter()
            .flat_map(|(_, m)| m.data().iter().copied())
            .collect();
        l2_norm(&flat)
    }

    pub fn scale(&mut self, s: f64) {
        for (_, m) in self.0.tensors_mut() {
            m.scale_in_place(s);
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for ((_, a), (_, b)) in self.0.tensors_mut().into_iter().zip(other.0.tensors()) {
            a.axpy(1.0, b);
        }
    }

    pub fn zero(&mut self) {
        for (_, m) in self.0.tensors_mut() {
            m.fill(0.0);
        }
    }
}

/// Rescales all gradients so their global L2 norm is at most `threshold`.
/// Returns the norm before clipping.
pub fn clip_gradients(grads: &mut Gradients, threshold: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > threshold {
        grads.scale(threshold / norm);
    }
    norm
}

#[inline]
pub(crate) fn binary_cross_entropy(p: f64, correct: bool) -> f64 {
    if correct {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Sum over steps of the cross entropy between `y_t[q_{t+1}]` and `a_{t+1}`.
pub fn sequence_loss(series: &PredictionSeries, seq: &InteractionSequence) -> Result<f64> {
    let steps = &seq.steps;
    if steps.len() < 2 {
        return Err(Error::SequenceTooShort {
            len: steps.len(),
            min: 2,
        });
    }
    if series.len() + 1 < steps.len() {
        return Err(Error::DimensionMismatch {
            context: "prediction series length".into(),
            expected: steps.len(),
            actual: series.len(),
        });
    }
    let mut loss = 0.0;
    for (y, next) in series.outputs.iter().zip(&steps[1..]) {
        let p = *y.get(next.exercise).ok_or(Error::ExerciseOutOfRange {
            index: next.exercise,
            count: y.len(),
        })?;
        loss += binary_cross_entropy(p, next.correct);
    }
    Ok(loss)
}

/// A trained network bundled with the encoding its inputs were built with.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeTracer {
    pub model: DktModel,
    pub encoding: EncodingScheme,
}

impl KnowledgeTracer {
    pub fn new(model: DktModel, encoding: EncodingScheme) -> Result<Self> {
        if model.input_dim() != encoding.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "model input vs encoding".into(),
                expected: encoding.input_dim(),
                actual: model.input_dim(),
            });
        }
        Ok(KnowledgeTracer { model, encoding })
    }

    pub fn exercise_count(&self) -> usize {
        self.model.output_dim()
    }

    pub fn predict_series(&self, steps: &[Interaction]) -> Result<PredictionSeries> {
        let inputs = self.encoding.encode_sequence(steps)?;
        Ok(self.model.forward(&inputs, None)?.1)
    }

    /// Probability that the student answers `next_exercise` correctly after `history`.
    pub fn predict_next(&self, history: &[Interaction], next_exercise: usize) -> Result<f64> {
        if history.is_empty() {
            return Err(Error::SequenceTooShort { len: 0, min: 1 });
        }
        if next_exercise >= self.exercise_count() {
            return Err(Error::ExerciseOutOfRange {
                index: next_exercise,
                count: self.exercise_count(),
            });
        }
        let series = self.predict_series(history)?;
        Ok(series.last().expect("non-empty history")[next_exercise])
    }

    pub fn initial_state(&self) -> RecurrentState {
        self.model.initial_state()
    }

    pub fn advance(&self, state: &RecurrentState, it: Interaction) -> Result<RecurrentState> {
        let x = self.encoding.encode_input(it)?;
        self.model.step(state, x)
    }

    pub fn readout(&self, state: &RecurrentState) -> Vec<f64> {
        self.model.readout(state)
    }
}
