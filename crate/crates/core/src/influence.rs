//! Exercise-to-exercise influence graphs: the model-derived one and two
//! count-based baselines, plus DOT/CSV export.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::baselines::fit_marginal;
use crate::encoding::{Interaction, InteractionSequence};
use crate::error::{Error, Result};
use crate::models::KnowledgeTracer;
use crate::numerics::sigmoid;

pub const DEFAULT_THRESHOLD: f64 = 0.1;
pub const DEFAULT_MIN_FOLLOW_RATE: f64 = 0.01;
/// DOT pen width for an edge of weight 1.
const PEN_SCALE: f64 = 10.0;

/// `weights[i][j]` is the influence of exercise `i` on exercise `j`; `None`
/// marks pairs without support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceGraph {
    pub weights: Vec<Vec<Option<f64>>>,
    pub labels: Vec<String>,
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub weight: f64,
}

fn default_labels(m: usize) -> Vec<String> {
    (0..m).map(|i| i.to_string()).collect()
}

/// Divides each column by its sum over the supported sources.
fn normalize_columns(raw: &mut [Vec<Option<f64>>]) {
    let m = raw.len();
    for j in 0..m {
        let total: f64 = raw.iter().filter_map(|row| row[j]).sum();
        if total > 0.0 {
            for row in raw.iter_mut() {
                if let Some(v) = row[j].as_mut() {
                    *v /= total;
                }
            }
        }
    }
}

impl InfluenceGraph {
    pub fn exercise_count(&self) -> usize {
        self.weights.len()
    }

    pub fn with_labels(mut self, labels: &[String]) -> Result<Self> {
        if labels.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                context: "influence graph labels".into(),
                expected: self.weights.len(),
                actual: labels.len(),
            });
        }
        self.labels = labels.to_vec();
        Ok(self)
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn get(&self, from: usize, to: usize) -> Option<f64> {
        self.weights[from][to]
    }

    pub fn column_sum(&self, j: usize) -> f64 {
        self.weights.iter().filter_map(|row| row[j]).sum()
    }

    pub fn max_weight(&self) -> f64 {
        self.weights.iter().flatten().flatten().copied().fold(0.0, f64::max)
    }

    /// Off-diagonal edges with weight at or above `tau`, row-major.
    pub fn edges(&self, tau: f64) -> Vec<Edge> {
        let mut out = Vec::new();
        for (i, row) in self.weights.iter().enumerate() {
            for (j, w) in row.iter().enumerate() {
                if let Some(w) = *w {
                    if i != j && w >= tau {
                        out.push(Edge { from: i, to: j, weight: w });
                    }
                }
            }
        }
        out
    }

    pub fn thresholded(&self) -> Vec<Edge> {
        self.edges(self.threshold)
    }

    /// Keeps only edges whose (from, to) pair is in `allowed`.
    pub fn filter_edges(edges: Vec<Edge>, allowed: &BTreeSet<(usize, usize)>) -> Vec<Edge> {
        edges.into_iter().filter(|e| allowed.contains(&(e.from, e.to))).collect()
    }

    pub fn to_dot(&self, edges: &[Edge]) -> String {
        let quote = |s: &str| s.replace('\\', "\\\\").replace('"', "\\\"");
        let mut s = String::from("digraph influence {\n");
        for (i, label) in self.labels.iter().enumerate() {
            let _ = writeln!(s, "  n{i} [label=\"{}\"];", quote(label));
        }
        for e in edges {
            let _ = writeln!(
                s,
                "  n{} -> n{} [weight={:.6}, penwidth={:.4}];",
                e.from,
                e.to,
                e.weight,
                e.weight * PEN_SCALE
            );
        }
        s.push_str("}\n");
        s
    }

    /// Full matrix as CSV: header `from,<label...>`, one row per source.
    /// Missing entries are empty cells.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["from".to_string()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header)?;
        for (label, row) in self.labels.iter().zip(&self.weights) {
            let mut rec = vec![label.clone()];
            rec.extend(row.iter().map(|v| v.map(|x| format!("{x:.17e}")).unwrap_or_default()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `y(j|i)`: prediction for every `j` after a single correct answer to `i`
/// from the learned initial state, column-normalised over `i`.
pub fn influence_matrix(tracer: &KnowledgeTracer) -> Result<InfluenceGraph> {
    let m = tracer.exercise_count();
    let init = tracer.initial_state();
    let mut raw = Vec::with_capacity(m);
    for i in 0..m {
        let state = tracer.advance(&init, Interaction::new(i, true))?;
        raw.push(tracer.readout(&state).into_iter().map(Some).collect::<Vec<_>>());
    }
    normalize_columns(&mut raw);
    Ok(InfluenceGraph {
        weights: raw,
        labels: default_labels(m),
        threshold: DEFAULT_THRESHOLD,
    })
}

/// Ordered pairs `(a, b)` such that, among students who answered `a`, more
/// than `min_follow_rate` of them answered `b` later on (after their first
/// answer to `a`).
pub fn cooccurrence_filter(
    sequences: &[InteractionSequence],
    exercise_count: usize,
    min_follow_rate: f64,
) -> Result<BTreeSet<(usize, usize)>> {
    if sequences.is_empty() {
        return Err(Error::NoTrainingData);
    }
    let m = exercise_count;
    let mut with_a = vec![0usize; m];
    let mut follows = vec![0usize; m * m];
    for seq in sequences {
        let mut first = vec![usize::MAX; m];
        for (t, it) in seq.steps.iter().enumerate() {
            if it.exercise >= m {
                return Err(Error::ExerciseOutOfRange {
                    index: it.exercise,
                    count: m,
                });
            }
            first[it.exercise] = first[it.exercise].min(t);
        }
        // Last occurrence of each b decides whether it appears after a's first answer.
        let mut last = vec![None; m];
        for (t, it) in seq.steps.iter().enumerate() {
            last[it.exercise] = Some(t);
        }
        for a in 0..m {
            if first[a] == usize::MAX {
                continue;
            }
            with_a[a] += 1;
            for (b, lb) in last.iter().enumerate() {
                if matches!(lb, Some(t) if *t > first[a]) {
                    follows[a * m + b] += 1;
                }
            }
        }
    }
    let mut allowed = BTreeSet::new();
    for a in 0..m {
        for b in 0..m {
            if with_a[a] > 0 && follows[a * m + b] as f64 / with_a[a] as f64 > min_follow_rate {
                allowed.insert((a, b));
            }
        }
    }
    Ok(allowed)
}

/// `P[a][b]` = share of non-final answers to `a` that are immediately
/// followed by `b`. Rows of exercises never seen in non-final position are
/// missing.
pub fn transition_graph(sequences: &[InteractionSequence], exercise_count: usize) -> Result<InfluenceGraph> {
    let m = exercise_count;
    let mut pair = vec![0usize; m * m];
    let mut from = vec![0usize; m];
    for seq in sequences {
        for w in seq.steps.windows(2) {
            let (a, b) = (w[0].exercise, w[1].exercise);
            if a >= m || b >= m {
                return Err(Error::ExerciseOutOfRange { index: a.max(b), count: m });
            }
            pair[a * m + b] += 1;
            from[a] += 1;
        }
    }
    let weights = (0..m)
        .map(|a| {
            (0..m)
                .map(|b| (from[a] > 0).then(|| pair[a * m + b] as f64 / from[a] as f64))
                .collect()
        })
        .collect();
    Ok(InfluenceGraph {
        weights,
        labels: default_labels(m),
        threshold: DEFAULT_THRESHOLD,
    })
}

/// Empirical accuracy on `j` over attempts made after a correct answer to
/// `i` earlier in the same sequence, column-normalised like the model graph.
/// Pairs with no such attempts are missing.
pub fn conditional_accuracy_graph(sequences: &[InteractionSequence], exercise_count: usize) -> Result<InfluenceGraph> {
    let m = exercise_count;
    let mut attempts = vec![0usize; m * m];
    let mut correct = vec![0usize; m * m];
    let mut solved = vec![false; m];
    for seq in sequences {
        solved.iter_mut().for_each(|s| *s = false);
        for it in &seq.steps {
            let j = it.exercise;
            if j >= m {
                return Err(Error::ExerciseOutOfRange { index: j, count: m });
            }
            for i in (0..m).filter(|&i| solved[i]) {
                attempts[i * m + j] += 1;
                correct[i * m + j] += usize::from(it.correct);
            }
            if it.correct {
                solved[j] = true;
            }
        }
    }
    let mut weights: Vec<Vec<Option<f64>>> = (0..m)
        .map(|i| {
            (0..m)
                .map(|j| {
                    let n = attempts[i * m + j];
                    (n > 0).then(|| correct[i * m + j] as f64 / n as f64)
                })
                .collect()
        })
        .collect();
    normalize_columns(&mut weights);
    Ok(InfluenceGraph {
        weights,
        labels: default_labels(m),
        threshold: DEFAULT_THRESHOLD,
    })
}

/// Pearson correlation; `None` when either side has zero variance or fewer
/// than two points.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasCheck {
    /// `None` when degenerate (constant bias or constant marginals).
    pub correlation: Option<f64>,
    pub exercises_used: usize,
}

/// Correlates `sigmoid(output bias)` with each exercise's empirical correct
/// rate, over exercises that were attempted at least once.
pub fn bias_marginal_check(tracer: &KnowledgeTracer, sequences: &[InteractionSequence]) -> Result<BiasCheck> {
    let m = tracer.exercise_count();
    let marginal = fit_marginal(sequences, m)?;
    let bias = tracer.model.output_bias();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (q, rate) in marginal.rates.iter().enumerate() {
        if let Some(r) = rate {
            xs.push(sigmoid(bias.data()[q]));
            ys.push(*r);
        }
    }
    Ok(BiasCheck {
        correlation: pearson(&xs, &ys),
        exercises_used: xs.len(),
    })
}

/// Fraction of edges whose endpoints share a group; `None` without edges.
pub fn same_group_fraction(edges: &[Edge], group_of: &[usize]) -> Option<f64> {
    if edges.is_empty() {
        return None;
    }
    let same = edges.iter().filter(|e| group_of[e.from] == group_of[e.to]).count();
    Some(same as f64 / edges.len() as f64)
}

/// Mean weight of same-group and cross-group off-diagonal pairs.
pub fn intra_inter_means(graph: &InfluenceGraph, group_of: &[usize]) -> (f64, f64) {
    let (mut intra, mut ni, mut inter, mut no) = (0.0, 0usize, 0.0, 0usize);
    for e in graph.edges(f64::NEG_INFINITY) {
        if group_of[e.from] == group_of[e.to] {
            intra += e.weight;
            ni += 1;
        } else {
            inter += e.weight;
            no += 1;
        }
    }
    (intra / ni.max(1) as f64, inter / no.max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::EncodingScheme;
    use crate::models::{DktModel, ModelKind};
    use crate::numerics::Rng;

    fn seq(id: &str, pairs: &[(usize, bool)]) -> InteractionSequence {
        InteractionSequence::new(id, pairs.iter().map(|&(q, a)| Interaction::new(q, a)).collect())
    }

    fn tracer(kind: ModelKind, m: usize, seed: u64) -> KnowledgeTracer {
        let enc = EncodingScheme::one_hot(m);
        let mut rng = Rng::new(seed);
        let mut model = DktModel::init(kind, enc.input_dim(), 6, m, &mut rng);
        for (_, t) in model.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v *= 10.0);
        }
        KnowledgeTracer::new(model, enc).unwrap()
    }

    #[test]
    fn columns_sum_to_one() {
        for kind in [ModelKind::Rnn, ModelKind::Lstm] {
            let g = influence_matrix(&tracer(kind, 7, 4)).unwrap();
            for j in 0..7 {
                assert!((g.column_sum(j) - 1.0).abs() < 1e-9);
            }
            assert!(g.weights.iter().flatten().all(|v| v.unwrap() >= 0.0));
            assert!(g.max_weight() <= 1.0);
            assert!(g.edges(1.1).is_empty());
        }
    }

    #[test]
    fn single_exercise_is_identity() {
        let g = influence_matrix(&tracer(ModelKind::Lstm, 1, 2)).unwrap();
        assert_eq!(g.weights, vec![vec![Some(1.0)]]);
    }

    #[test]
    fn matrix_is_pure() {
        let t = tracer(ModelKind::Rnn, 5, 9);
        assert_eq!(influence_matrix(&t).unwrap(), influence_matrix(&t).unwrap());
    }

    #[test]
    fn threshold_edges() {
        let g = influence_matrix(&tracer(ModelKind::Lstm, 6, 1)).unwrap();
        assert_eq!(g.edges(0.0).len(), 30);
        let hi: BTreeSet<_> = g.edges(0.2).iter().map(|e| (e.from, e.to)).collect();
        let lo: BTreeSet<_> = g.edges(0.15).iter().map(|e| (e.from, e.to)).collect();
        assert!(hi.is_subset(&lo));
    }

    #[test]
    fn transition_hand_count() {
        let g = transition_graph(&[seq("a", &[(0, true), (1, false), (0, true), (1, true)])], 2).unwrap();
        assert_eq!(g.get(0, 1), Some(1.0));
        assert_eq!(g.get(1, 0), Some(1.0));
        assert_eq!(g.get(0, 0), Some(0.0));
    }

    #[test]
    fn transition_rows_are_distributions() {
        let data = vec![
            seq("a", &[(0, true), (1, false), (2, true), (0, true)]),
            seq("b", &[(0, true), (2, false), (3, true)]),
        ];
        let g = transition_graph(&data, 4).unwrap();
        for a in 0..3 {
            let s: f64 = g.weights[a].iter().flatten().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert!(g.weights[3].iter().all(Option::is_none));
    }

    #[test]
    fn cooccurrence_hand_count() {
        // Students who answered 0: a, b, c, d, e. Exercise 1 appears after 0 in a and c only.
        let data = vec![
            seq("a", &[(0, true), (1, true)]),
            seq("b", &[(1, true), (0, false)]),
            seq("c", &[(0, false), (2, true), (1, false)]),
            seq("d", &[(0, true), (2, true)]),
            seq("e", &[(0, true)]),
        ];
        let loose = cooccurrence_filter(&data, 3, 0.01).unwrap();
        assert!(loose.contains(&(0, 1)));
        assert!(loose.contains(&(0, 2)));
        assert!(!loose.contains(&(2, 0)));
        // 0 -> 1 has rate 2/5; 0 -> 2 has rate 2/5; 1 -> 0 has rate 1/3.
        let strict = cooccurrence_filter(&data, 3, 0.39).unwrap();
        assert!(strict.contains(&(0, 1)) && strict.contains(&(0, 2)));
        assert!(!strict.contains(&(1, 0)));
        assert!(cooccurrence_filter(&[], 3, 0.01).is_err());
    }

    #[test]
    fn conditional_accuracy_hand_tally() {
        let data = vec![
            seq("a", &[(0, true), (1, true)]),
            seq("b", &[(0, true), (1, false)]),
            seq("c", &[(0, false), (1, true)]),
            seq("d", &[(1, true), (0, true)]),
        ];
        let g = conditional_accuracy_graph(&data, 2).unwrap();
        // Column 1 sources: 0 (y = 1/2), 1 (no attempts on 1 after solving 1). Normalised: 1.0.
        assert_eq!(g.get(0, 1), Some(1.0));
        assert_eq!(g.get(1, 1), None);
        // Column 0: only 1 -> 0 supported (student d), accuracy 1.
        assert_eq!(g.get(1, 0), Some(1.0));
        assert_eq!(g.get(0, 0), None);
    }

    #[test]
    fn conditional_accuracy_always_correct() {
        let data = vec![seq("a", &[(0, true), (1, true), (2, true)]), seq("b", &[(0, true), (2, true)])];
        let g = conditional_accuracy_graph(&data, 3).unwrap();
        assert_eq!(g.get(0, 2), Some(0.5));
        assert_eq!(g.get(1, 2), Some(0.5));
    }

    #[test]
    fn untrained_bias_is_degenerate() {
        let enc = EncodingScheme::one_hot(3);
        let t = KnowledgeTracer::new(DktModel::zeros(ModelKind::Lstm, 6, 4, 3), enc).unwrap();
        let data = vec![seq("a", &[(0, true), (1, false), (2, true)]), seq("b", &[(0, false), (1, false)])];
        assert_eq!(bias_marginal_check(&t, &data).unwrap().correlation, None);
    }

    #[test]
    fn pearson_bounds() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(pearson(&[1.0, 1.0], &[0.0, 1.0]), None);
    }

    #[test]
    fn dot_output() {
        let g = influence_matrix(&tracer(ModelKind::Rnn, 3, 3))
            .unwrap()
            .with_labels(&["a".into(), "b\"x".into(), "c".into()])
            .unwrap();
        let dot = g.to_dot(&g.edges(0.0));
        assert!(dot.starts_with("digraph influence {"));
        assert!(dot.contains("n1 [label=\"b\\\"x\"];"));
        assert_eq!(dot.matches("->").count(), 6);
        assert!(dot.trim_end().ends_with('}'));
    }
}
