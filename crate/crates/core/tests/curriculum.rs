use dktlab::curriculum::{
    choose_next_expectimax, expected_score_one_step, knowledge_score, one_step_values, rollout_value, run_curriculum,
    CurriculumPolicy, ExercisePool,
};
use dktlab::encoding::{EncodingScheme, Interaction};
use dktlab::evaluation::mean_and_stderr;
use dktlab::models::{train, KnowledgeTracer, TrainConfig};
use dktlab::numerics::Rng;
use dktlab::simulator::{generate_dataset, SyntheticWorld, WorldConfig};

fn trained() -> (KnowledgeTracer, ExercisePool) {
    let mut rng = Rng::new(21);
    let world = SyntheticWorld::generate(&WorldConfig::new(3), &mut rng).unwrap();
    let data = generate_dataset(&world, 150, &mut rng).unwrap();
    let cfg = TrainConfig {
        hidden_dim: 16,
        epochs: 4,
        dropout_keep_probability: 1.0,
        seed: 2,
        ..TrainConfig::default()
    };
    let tracer = train(&data.sequences, &EncodingScheme::one_hot(50), &cfg).unwrap().tracer;
    let pool = ExercisePool::from_groups(world.concept_groups()).unwrap().truncated(2).unwrap();
    (tracer, pool)
}

#[test]
fn one_step_expectation_by_brute_force() {
    let (tracer, pool) = trained();
    let history = [Interaction::new(pool.exercises()[0], false), Interaction::new(pool.exercises()[3], true)];
    let mut state = tracer.initial_state();
    for &it in &history {
        state = tracer.advance(&state, it).unwrap();
    }
    let fast = one_step_values(&tracer, &state, &pool).unwrap();
    for (&q, &v) in pool.exercises().iter().zip(&fast) {
        // Rebuild both continuations from the raw history through the series API.
        let mean_over_pool = |answer: bool| {
            let mut h = history.to_vec();
            h.push(Interaction::new(q, answer));
            let y = tracer.predict_series(&h).unwrap();
            let last = y.last().unwrap();
            pool.exercises().iter().map(|&e| last[e]).sum::<f64>() / pool.len() as f64
        };
        let p = tracer.predict_next(&history, q).unwrap();
        let brute = p * mean_over_pool(true) + (1.0 - p) * mean_over_pool(false);
        assert!((brute - v).abs() < 1e-12, "exercise {q}: {brute} vs {v}");
        assert_eq!(v, expected_score_one_step(&tracer, &state, &pool, q).unwrap());
    }
}

/// Mean pool prediction after `history`, via the series API.
fn score_after(tracer: &KnowledgeTracer, pool: &ExercisePool, history: &[Interaction]) -> f64 {
    let last = tracer.predict_series(history).unwrap();
    let y = last.last().unwrap();
    pool.exercises().iter().map(|&e| y[e]).sum::<f64>() / pool.len() as f64
}

fn p_next(tracer: &KnowledgeTracer, history: &[Interaction], q: usize) -> f64 {
    if history.is_empty() {
        tracer.readout(&tracer.initial_state())[q]
    } else {
        tracer.predict_next(history, q).unwrap()
    }
}

/// Exact value of offering `first`, then `depth - 1` greedy one-step choices,
/// by enumerating every answer path.
fn brute_force_value(tracer: &KnowledgeTracer, pool: &ExercisePool, history: &[Interaction], first: usize, depth: usize) -> f64 {
    let one_step = |h: &[Interaction], q: usize| {
        let p = p_next(tracer, h, q);
        let mut right = h.to_vec();
        right.push(Interaction::new(q, true));
        let mut wrong = h.to_vec();
        wrong.push(Interaction::new(q, false));
        p * score_after(tracer, pool, &right) + (1.0 - p) * score_after(tracer, pool, &wrong)
    };
    if depth == 1 {
        return one_step(history, first);
    }
    let p = p_next(tracer, history, first);
    let mut total = 0.0;
    for (correct, weight) in [(true, p), (false, 1.0 - p)] {
        let mut h = history.to_vec();
        h.push(Interaction::new(first, correct));
        let mut best = (f64::NEG_INFINITY, 0);
        for &q in pool.exercises() {
            let v = one_step(&h, q);
            if v > best.0 {
                best = (v, q);
            }
        }
        total += weight * brute_force_value(tracer, pool, &h, best.1, depth - 1);
    }
    total
}

#[test]
fn single_step_sampling_agrees_with_exact_expectation() {
    let (tracer, pool) = trained();
    let state = tracer.initial_state();
    let exact = one_step_values(&tracer, &state, &pool).unwrap();
    let mut rng = Rng::new(17);
    for (i, &q) in pool.exercises().iter().enumerate().take(3) {
        let p = tracer.readout(&state)[q];
        let samples: Vec<f64> = (0..4000)
            .map(|_| {
                let it = Interaction::new(q, rng.bernoulli(p));
                knowledge_score(&tracer, &tracer.advance(&state, it).unwrap(), &pool).unwrap()
            })
            .collect();
        let (mean, se) = mean_and_stderr(&samples);
        assert!((mean - exact[i]).abs() <= 3.0 * se + 1e-12, "{mean} vs {} (se {se})", exact[i]);
        let (v, zero) = rollout_value(&tracer, &state, &pool, q, 1, 1, 0).unwrap();
        assert_eq!((v, zero), (exact[i], 0.0));
    }
}

#[test]
fn two_step_lookahead_is_exact() {
    let (tracer, pool) = trained();
    let history = [Interaction::new(pool.exercises()[2], true)];
    let state = tracer.advance(&tracer.initial_state(), history[0]).unwrap();
    for &q in pool.exercises().iter().take(4) {
        let (v, se) = rollout_value(&tracer, &state, &pool, q, 2, 7, 0).unwrap();
        let brute = brute_force_value(&tracer, &pool, &history, q, 2);
        assert!((v - brute).abs() < 1e-12, "{v} vs {brute}");
        assert_eq!(se, 0.0);
    }
}

#[test]
fn deeper_rollouts_agree_with_path_enumeration() {
    let (tracer, pool) = trained();
    let state = tracer.initial_state();
    for (i, &q) in pool.exercises().iter().enumerate().take(2) {
        let (v, se) = rollout_value(&tracer, &state, &pool, q, 3, 3000, 40 + i as u64).unwrap();
        let brute = brute_force_value(&tracer, &pool, &[], q, 3);
        assert!(se > 0.0);
        assert!((v - brute).abs() <= 3.0 * se, "{v} vs {brute} (se {se})");
    }
}

#[test]
fn greedy_choice_is_the_best_single_step() {
    let (tracer, pool) = trained();
    let state = tracer.initial_state();
    let values = one_step_values(&tracer, &state, &pool).unwrap();
    let q = choose_next_expectimax(&tracer, &state, &pool, 1, 1, &mut Rng::new(0)).unwrap();
    let chosen = values[pool.exercises().iter().position(|&e| e == q).unwrap()];
    assert!(values.iter().all(|&v| v <= chosen));
}

#[test]
fn standard_error_shrinks_with_particles() {
    let (tracer, pool) = trained();
    let small = run_curriculum(&tracer, CurriculumPolicy::Mixing, &pool, 10, 100, 4).unwrap();
    let large = run_curriculum(&tracer, CurriculumPolicy::Mixing, &pool, 10, 400, 4).unwrap();
    let ratio = small.points.last().unwrap().stderr / large.points.last().unwrap().stderr;
    assert!((1.4..2.8).contains(&ratio), "ratio {ratio}");
}

#[test]
fn curves_are_reproducible_and_start_after_one_answer() {
    let (tracer, pool) = trained();
    let policy = CurriculumPolicy::Expectimax { depth: 2, particles: 2 };
    let a = run_curriculum(&tracer, policy, &pool, 5, 6, 9).unwrap();
    let b = run_curriculum(&tracer, policy, &pool, 5, 6, 9).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.points.len(), 5);
    assert_eq!(a.points[0].step, 1);
    assert_eq!(a.policy, "mdp-2");
    assert_eq!(a.first_particle_log.len(), 5);
}

#[test]
fn fixed_orders_follow_the_pool() {
    let (tracer, pool) = trained();
    let blocking = run_curriculum(&tracer, CurriculumPolicy::Blocking, &pool, 6, 1, 0).unwrap();
    let offered: Vec<usize> = blocking.first_particle_log.iter().map(|i| i.exercise).collect();
    assert_eq!(offered, pool.blocking_order());
    let mixing = run_curriculum(&tracer, CurriculumPolicy::Mixing, &pool, 6, 1, 0).unwrap();
    let offered: Vec<usize> = mixing.first_particle_log.iter().map(|i| i.exercise).collect();
    assert_eq!(offered, pool.mixing_order());
    let k = knowledge_score(&tracer, &tracer.initial_state(), &pool).unwrap();
    assert!(k > 0.0 && k < 1.0);
}
