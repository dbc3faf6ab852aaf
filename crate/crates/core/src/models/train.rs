use log::debug;
use serde::{Deserialize, Serialize};

use crate::encoding::{EncodedInput, EncodingScheme, InteractionSequence};
use crate::error::{Error, Result};
use crate::numerics::Rng;

use super::{clip_gradients, sequence_loss, DktModel, DropoutMask, Gradients, KnowledgeTracer, ModelKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model_kind: ModelKind,
    pub hidden_dim: usize,
    pub minibatch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub dropout_keep_probability: f64,
    pub clip_norm_threshold: f64,
    pub seed: u64,
    /// Worker threads for per-student gradients inside a minibatch. Results
    /// do not depend on this value.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model_kind: ModelKind::Lstm,
            hidden_dim: 200,
            minibatch_size: 100,
            learning_rate: 0.03,
            epochs: 25,
            dropout_keep_probability: 0.5,
            clip_norm_threshold: 100.0,
            seed: 0,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.dropout_keep_probability > 0.0 && self.dropout_keep_probability <= 1.0) {
            return bad("dropout keep probability must be in (0, 1]");
        }
        if !(self.clip_norm_threshold > 0.0) {
            return bad("clip threshold must be > 0");
        }
        if self.minibatch_size == 0 {
            return bad("minibatch size must be >= 1");
        }
        if self.hidden_dim == 0 {
            return bad("hidden dimension must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be a positive finite number");
        }
        if self.threads == 0 {
            return bad("threads must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Summed training loss over the epoch (dropout active).
    pub loss: f64,
    pub targets: usize,
    /// Largest pre-clip gradient norm seen in the epoch.
    pub max_grad_norm: f64,
}

impl EpochStats {
    pub fn mean_loss(&self) -> f64 {
        self.loss / self.targets.max(1) as f64
    }
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub tracer: KnowledgeTracer,
    pub history: Vec<EpochStats>,
}

/// Minibatch SGD from a fresh initialisation.
pub fn train(
    sequences: &[InteractionSequence],
    encoding: &EncodingScheme,
    config: &TrainConfig,
) -> Result<TrainResult> {
    config.validate()?;
    let mut rng = Rng::new(config.seed);
    let model = DktModel::init(
        config.model_kind,
        encoding.input_dim(),
        config.hidden_dim,
        encoding.exercise_count(),
        &mut rng,
    );
    run(model, sequences, encoding, config, rng)
}

/// Continues training an existing model. The random stream is derived from
/// `config.seed` on a separate stream from initialisation.
pub fn train_from(
    initial: KnowledgeTracer,
    sequences: &[InteractionSequence],
    config: &TrainConfig,
) -> Result<TrainResult> {
    config.validate()?;
    let rng = Rng::with_stream(config.seed, 1);
    run(initial.model, sequences, &initial.encoding, config, rng)
}

fn run(
    mut model: DktModel,
    sequences: &[InteractionSequence],
    encoding: &EncodingScheme,
    config: &TrainConfig,
    mut rng: Rng,
) -> Result<TrainResult> {
    let usable: Vec<&InteractionSequence> = sequences.iter().filter(|s| s.len() >= 2).collect();
    if usable.is_empty() {
        return Err(Error::NoTrainingData);
    }
    let inputs: Vec<Vec<EncodedInput<'_>>> = usable
        .iter()
        .map(|s| encoding.encode_sequence(&s.steps))
        .collect::<Result<_>>()?;
    let targets: usize = usable.iter().map(|s| s.target_count()).sum();
    let hidden = model.hidden_dim();
    let keep = config.dropout_keep_probability;

    let mut history = Vec::with_capacity(config.epochs);
    let mut batch_grads = Gradients(model.zeros_like());
    let mut student_grads: Vec<DktModel> = (0..config.threads).map(|_| model.zeros_like()).collect();

    for epoch in 0..config.epochs {
        let order = rng.permutation(usable.len());
        let mut epoch_loss = 0.0;
        let mut max_norm: f64 = 0.0;
        for batch in order.chunks(config.minibatch_size) {
            let masks: Vec<Option<DropoutMask>> = batch
                .iter()
                .map(|&s| (keep < 1.0).then(|| DropoutMask::sample(&mut rng, usable[s].len(), hidden, keep)))
                .collect();
            batch_grads.zero();
            for (wave, wave_masks) in batch.chunks(config.threads).zip(masks.chunks(config.threads)) {
                let losses = student_gradients(
                    &model,
                    wave,
                    wave_masks,
                    &usable,
                    &inputs,
                    &mut student_grads[..wave.len()],
                )?;
                // Reduce in student order so the sum is independent of threading.
                for (loss, g) in losses.into_iter().zip(&student_grads) {
                    epoch_loss += loss;
                    for ((_, a), (_, b)) in batch_grads.0.tensors_mut().into_iter().zip(g.tensors()) {
                        a.axpy(1.0, b);
                    }
                }
            }
            let norm = clip_gradients(&mut batch_grads, config.clip_norm_threshold);
            max_norm = max_norm.max(norm);
            if !norm.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            model.apply_update(&batch_grads, config.learning_rate);
        }
        if !epoch_loss.is_finite() || !model.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        debug!(
            "epoch {epoch}: loss {epoch_loss:.4} ({:.5} per target), max grad norm {max_norm:.3}",
            epoch_loss / targets as f64
        );
        history.push(EpochStats {
            epoch,
            loss: epoch_loss,
            targets,
            max_grad_norm: max_norm,
        });
    }

    Ok(TrainResult {
        tracer: KnowledgeTracer::new(model, encoding.clone())?,
        history,
    })
}

/// Computes each student's gradient into its own buffer, in parallel when
/// more than one buffer is supplied.
fn student_gradients(
    model: &DktModel,
    students: &[usize],
    masks: &[Option<DropoutMask>],
    sequences: &[&InteractionSequence],
    inputs: &[Vec<EncodedInput<'_>>],
    buffers: &mut [DktModel],
) -> Result<Vec<f64>> {
    let one = |s: usize, mask: &Option<DropoutMask>, buf: &mut DktModel| -> Result<f64> {
        for (_, t) in buf.tensors_mut() {
            t.fill(0.0);
        }
        model.accumulate_gradient(&inputs[s], &sequences[s].steps, mask.as_ref(), buf)
    };
    if buffers.len() == 1 {
        return Ok(vec![one(students[0], &masks[0], &mut buffers[0])?]);
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = students
            .iter()
            .zip(masks)
            .zip(buffers.iter_mut())
            .map(|((&s, mask), buf)| scope.spawn(move || one(s, mask, buf)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("gradient worker panicked"))
            .collect()
    })
}

/// Total sequence loss of `tracer` over `sequences`, without dropout.
pub fn dataset_loss(tracer: &KnowledgeTracer, sequences: &[InteractionSequence]) -> Result<f64> {
    let mut total = 0.0;
    for s in sequences.iter().filter(|s| s.len() >= 2) {
        let series = tracer.predict_series(&s.steps)?;
        total += sequence_loss(&series, s)?;
    }
    Ok(total)
}
