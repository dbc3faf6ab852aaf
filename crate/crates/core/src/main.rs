use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;

use dktlab::baselines::{fit_bkt, fit_marginal, identity_skill_map};
use dktlab::curriculum::{
    run_curriculum, write_curves_csv, CurriculumPolicy, ExercisePool, DEFAULT_HORIZON, DEFAULT_PARTICLES,
    DEFAULT_PLANNING_PARTICLES,
};
use dktlab::data::{
    concept_groups, load_csv, load_model, read_labels, read_truth_probabilities, save_csv, save_model,
    write_labels, write_truth_csv, CsvSchema, Dataset, DuplicatePolicy, LabelEntry,
};
use dktlab::encoding::{EncodingScheme, InteractionSequence};
use dktlab::evaluation::{
    auc, collect_predictions, cross_validate, report_rows, write_report_csv, CrossValidation, Predictor, ReportRow,
};
use dktlab::influence::{
    bias_marginal_check, conditional_accuracy_graph, cooccurrence_filter, influence_matrix, transition_graph,
    InfluenceGraph, DEFAULT_MIN_FOLLOW_RATE, DEFAULT_THRESHOLD,
};
use dktlab::models::{train, KnowledgeTracer, ModelKind, TrainConfig};
use dktlab::numerics::Rng;
use dktlab::simulator::{generate_dataset, OraclePredictor, SyntheticWorld, WorldConfig};
use dktlab::{Error, Result};

const SEED_ENV: &str = "DKTLAB_SEED";

#[derive(Parser, Serialize)]
#[command(name = "dktlab", version, about = "Deep knowledge tracing laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
enum Command {
    /// Generate synthetic students from an IRT world
    Simulate(SimulateArgs),
    /// Train a DKT model
    Train(TrainArgs),
    /// Cross-validated (or held-out) AUC of a model or baseline
    Eval(EvalArgs),
    /// Per-step predictions for every exercise
    Predict(PredictArgs),
    /// Influence graph as DOT and CSV
    Influence(InfluenceArgs),
    /// Predicted-knowledge curves for exercise policies
    Curriculum(CurriculumArgs),
    /// Model dimensions and bias introspection
    Inspect(InspectArgs),
}

#[derive(Args, Serialize, Clone)]
struct DataArgs {
    /// Interaction CSV
    #[arg(long)]
    data: PathBuf,
    /// Column preset
    #[arg(long, value_enum, default_value_t = SchemaPreset::Default)]
    schema: SchemaPreset,
    #[arg(long)]
    student_column: Option<String>,
    #[arg(long)]
    exercise_column: Option<String>,
    #[arg(long)]
    correct_column: Option<String>,
    /// Expert skill labels (used by BKT)
    #[arg(long)]
    skill_column: Option<String>,
    #[arg(long)]
    order_column: Option<String>,
    /// Rows sharing an order id
    #[arg(long, value_enum, default_value_t = Duplicates::KeepFirst)]
    duplicates: Duplicates,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
enum SchemaPreset {
    Default,
    Assistments,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
enum Duplicates {
    KeepFirst,
    Explode,
}

impl DataArgs {
    fn schema(&self) -> CsvSchema {
        let mut s = match self.schema {
            SchemaPreset::Default => CsvSchema::default(),
            SchemaPreset::Assistments => CsvSchema::assistments(),
        };
        if let Some(c) = &self.student_column {
            s.student_column = c.clone();
        }
        if let Some(c) = &self.exercise_column {
            s.exercise_column = c.clone();
        }
        if let Some(c) = &self.correct_column {
            s.correct_column = c.clone();
        }
        if self.skill_column.is_some() {
            s.skill_column = self.skill_column.clone();
        }
        if self.order_column.is_some() {
            s.order_column = self.order_column.clone();
        }
        s.duplicates = match self.duplicates {
            Duplicates::KeepFirst => DuplicatePolicy::KeepFirst,
            Duplicates::Explode => DuplicatePolicy::Explode,
        };
        s
    }

    fn load(&self) -> Result<Dataset> {
        let ds = load_csv(&self.data, &self.schema())?;
        let st = ds.stats();
        eprintln!(
            "{}: {} students / {} tags / {} answers ({} students dropped)",
            self.data.display(),
            st.students,
            st.exercise_tags,
            st.answers,
            ds.dropped_students
        );
        Ok(ds)
    }
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    /// Number of latent concepts
    #[arg(long, short = 'k', default_value_t = 5)]
    concepts: usize,
    #[arg(long, default_value_t = 2000)]
    students: usize,
    /// Extra students from the same world written as a test set
    #[arg(long, default_value_t = 0)]
    test_students: usize,
    #[arg(long, default_value_t = dktlab::simulator::DEFAULT_EXERCISES)]
    exercises: usize,
    /// Skill increment after each answer
    #[arg(long, default_value_t = dktlab::simulator::DEFAULT_LEARNING_INCREMENT)]
    learning_increment: f64,
    #[arg(long, default_value_t = dktlab::simulator::DEFAULT_GUESS)]
    guess: f64,
    #[arg(long, default_value_t = dktlab::simulator::DEFAULT_SKILL_STD)]
    skill_std: f64,
    #[arg(long, default_value_t = dktlab::simulator::DEFAULT_DIFFICULTY_STD)]
    difficulty_std: f64,
    /// Independent repetitions, written to rep00, rep01, ... with seeds seed+r
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Serialize, Clone)]
struct ModelArgs {
    #[arg(long, value_enum, default_value_t = KindArg::Lstm)]
    model: KindArg,
    #[arg(long, default_value_t = 200)]
    hidden: usize,
    #[arg(long, default_value_t = 100)]
    batch: usize,
    #[arg(long, default_value_t = 0.03)]
    lr: f64,
    #[arg(long, default_value_t = 25)]
    epochs: usize,
    /// Dropout keep probability on the readout path
    #[arg(long, default_value_t = 0.5)]
    keep: f64,
    /// Gradient-norm clipping threshold
    #[arg(long, default_value_t = 100.0)]
    clip: f64,
    #[arg(long, value_enum, default_value_t = EncodingArg::OneHot)]
    encoding: EncodingArg,
    /// Code length for compressed inputs (default max(16, ceil(4 log2 2M)))
    #[arg(long)]
    compressed_dim: Option<usize>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
enum KindArg {
    Rnn,
    Lstm,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
enum EncodingArg {
    OneHot,
    Compressed,
}

impl ModelArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            model_kind: match self.model {
                KindArg::Rnn => ModelKind::Rnn,
                KindArg::Lstm => ModelKind::Lstm,
            },
            hidden_dim: self.hidden,
            minibatch_size: self.batch,
            learning_rate: self.lr,
            epochs: self.epochs,
            dropout_keep_probability: self.keep,
            clip_norm_threshold: self.clip,
            seed: self.seed,
            threads: self.threads,
        }
    }

    fn encoding(&self, exercise_count: usize) -> Result<EncodingScheme> {
        match (self.encoding, self.compressed_dim) {
            (EncodingArg::OneHot, _) => Ok(EncodingScheme::one_hot(exercise_count)),
            (EncodingArg::Compressed, Some(n)) => EncodingScheme::compressed(exercise_count, n, self.seed),
            (EncodingArg::Compressed, None) => EncodingScheme::compressed_default(exercise_count, self.seed),
        }
    }
}

#[derive(Args, Serialize)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Model file to write; the loss log goes to <out>.loss.csv
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
enum Evaluated {
    Marginal,
    Bkt,
    Dkt,
    Oracle,
}

#[derive(Args, Serialize)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum)]
    predictor: Evaluated,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Score on this file after fitting on --data instead of cross-validating
    #[arg(long)]
    test: Option<PathBuf>,
    /// Truth CSV (oracle only); defaults to the simulator's sibling file
    #[arg(long)]
    truth: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    /// Report CSV; a JSON copy is written next to it
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// History CSV (student_id, exercise_tag, correct)
    #[arg(long)]
    history: PathBuf,
    /// Output CSV; standard output when absent
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
enum InfluenceVariant {
    Dkt,
    Transition,
    Conditional,
}

#[derive(Args, Serialize)]
struct InfluenceArgs {
    #[arg(long, value_enum, default_value_t = InfluenceVariant::Dkt)]
    variant: InfluenceVariant,
    /// Model file (dkt variant)
    #[arg(long)]
    model: Option<PathBuf>,
    /// Interaction CSV; required by the count-based variants and enables the
    /// co-occurrence filter
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SchemaPreset::Default)]
    schema: SchemaPreset,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    tau: f64,
    #[arg(long, default_value_t = DEFAULT_MIN_FOLLOW_RATE)]
    min_follow_rate: f64,
    /// Output stem: writes <out>.dot, <out>.csv and <out>.labels.csv
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
enum PolicyArg {
    Blocking,
    Mixing,
    Mdp,
}

#[derive(Args, Serialize)]
struct CurriculumArgs {
    #[arg(long)]
    model: PathBuf,
    /// One or more policies
    #[arg(long, value_enum, num_args = 1.., default_values_t = vec![PolicyArg::Blocking, PolicyArg::Mixing, PolicyArg::Mdp])]
    policy: Vec<PolicyArg>,
    /// Lookahead depth(s) for mdp
    #[arg(long, num_args = 1.., default_values_t = vec![1usize])]
    depth: Vec<usize>,
    /// Simulated students per policy
    #[arg(long, default_value_t = DEFAULT_PARTICLES)]
    particles: usize,
    /// Rollouts per candidate inside the planner (depth > 1)
    #[arg(long, default_value_t = DEFAULT_PLANNING_PARTICLES)]
    planning_particles: usize,
    #[arg(long, default_value_t = DEFAULT_HORIZON)]
    horizon: usize,
    /// Label file (index,name[,concept]) defining the pool and concepts
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Keep only the first N exercises of each concept in the pool
    #[arg(long)]
    per_concept: Option<usize>,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct InspectArgs {
    #[arg(long)]
    model: PathBuf,
    /// Interaction CSV for the bias-vs-marginal check
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SchemaPreset::Default)]
    schema: SchemaPreset,
}

fn preset(p: SchemaPreset) -> CsvSchema {
    match p {
        SchemaPreset::Default => CsvSchema::default(),
        SchemaPreset::Assistments => CsvSchema::assistments(),
    }
}

/// `<path>.run.json` holding the parsed command line.
fn write_run_config(next_to: &Path, cli: &Cli) -> Result<()> {
    let mut name = next_to.as_os_str().to_owned();
    name.push(".run.json");
    fs::write(PathBuf::from(name), serde_json::to_string_pretty(cli)? + "\n")?;
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

/// 4000 -> "4,000"
fn thousands(n: usize) -> String {
    let s = n.to_string();
    let mut out = String::new();
    for (i, c) in s.chars().enumerate() {
        if i > 0 && (s.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

/// 200000 -> "200 K", 1400000 -> "1.4 M"
fn compact(n: usize) -> String {
    if n >= 1_000_000 {
        format!("{} M", trim_float(n as f64 / 1e6))
    } else if n >= 1000 {
        format!("{} K", trim_float(n as f64 / 1e3))
    } else {
        n.to_string()
    }
}

fn trim_float(v: f64) -> String {
    let s = format!("{v:.1}");
    s.strip_suffix(".0").map(str::to_string).unwrap_or(s)
}

fn cmd_simulate(a: &SimulateArgs, cli: &Cli) -> Result<()> {
    if a.repeats == 0 {
        return Err(Error::InvalidConfig("repeats must be >= 1".into()));
    }
    let config = WorldConfig {
        concept_count: a.concepts,
        exercise_count: a.exercises,
        guess: a.guess,
        learning_increment: a.learning_increment,
        skill_std: a.skill_std,
        difficulty_std: a.difficulty_std,
    };
    config.validate()?;
    fs::create_dir_all(&a.out_dir)?;
    for r in 0..a.repeats {
        let dir = if a.repeats == 1 { a.out_dir.clone() } else { a.out_dir.join(format!("rep{r:02}")) };
        fs::create_dir_all(&dir)?;
        let mut rng = Rng::new(a.seed.wrapping_add(r as u64));
        let world = SyntheticWorld::generate(&config, &mut rng)?;
        let tags = world.tag_names();
        let mut write_split = |name: &str, count: usize| -> Result<()> {
            let sim = generate_dataset(&world, count, &mut rng)?;
            let ds = Dataset::from_sequences(sim.sequences.clone(), tags.clone())?;
            save_csv(&ds, &dir.join(format!("{name}.csv")))?;
            let ids: Vec<String> = sim.sequences.iter().map(|s| s.student_id.clone()).collect();
            write_truth_csv(&sim.truth, &ids, fs::File::create(dir.join(format!("{name}_truth.csv")))?)?;
            println!(
                "{}/{name}: {} / {} / {}",
                dir.display(),
                thousands(count),
                world.exercise_count,
                compact(sim.answer_count())
            );
            Ok(())
        };
        write_split("train", a.students)?;
        if a.test_students > 0 {
            write_split("test", a.test_students)?;
        }
        let labels: Vec<LabelEntry> = tags
            .iter()
            .enumerate()
            .map(|(i, name)| LabelEntry {
                index: i,
                name: name.clone(),
                concept: Some(format!("c{}", world.concept_of_exercise[i])),
            })
            .collect();
        write_labels(&labels, fs::File::create(dir.join("labels.csv"))?)?;
        fs::write(dir.join("world.json"), serde_json::to_string_pretty(&world)? + "\n")?;
    }
    write_run_config(&a.out_dir.join("simulate"), cli)
}

fn write_loss_log(path: &Path, history: &[dktlab::models::EpochStats]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "loss", "mean_loss", "targets", "max_grad_norm"])?;
    for e in history {
        w.write_record([
            e.epoch.to_string(),
            format!("{:.10}", e.loss),
            format!("{:.10}", e.mean_loss()),
            e.targets.to_string(),
            format!("{:.6}", e.max_grad_norm),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_train(a: &TrainArgs, cli: &Cli) -> Result<()> {
    let ds = a.data.load()?;
    let encoding = a.model.encoding(ds.exercise_count())?;
    let result = train(&ds.sequences, &encoding, &a.model.config())?;
    save_model(&a.out, &result.tracer, &ds.tag_names)?;
    write_loss_log(&with_suffix(&a.out, ".loss.csv"), &result.history)?;
    if let Some(last) = result.history.last() {
        println!("trained {} epochs; final mean loss {:.5}", result.history.len(), last.mean_loss());
    }
    write_run_config(&a.out, cli)
}

fn fit_predictor(
    which: Evaluated,
    train_seqs: &[InteractionSequence],
    ds: &Dataset,
    model: &ModelArgs,
) -> Result<Box<dyn Predictor>> {
    let m = ds.exercise_count();
    Ok(match which {
        Evaluated::Marginal => Box::new(fit_marginal(train_seqs, m)?),
        Evaluated::Bkt => {
            let map = ds.skill_of_exercise.clone().unwrap_or_else(|| identity_skill_map(m));
            Box::new(fit_bkt(train_seqs, &map)?)
        }
        Evaluated::Dkt => {
            let encoding = model.encoding(m)?;
            Box::new(train(train_seqs, &encoding, &model.config())?.tracer) as Box<dyn Predictor>
        }
        Evaluated::Oracle => unreachable!("oracle is not fitted"),
    })
}

fn oracle_for(a: &EvalArgs, data_path: &Path) -> Result<OraclePredictor> {
    let truth_path = match &a.truth {
        Some(p) => p.clone(),
        None => {
            let stem = data_path.file_stem().and_then(|s| s.to_str()).unwrap_or("data");
            data_path.with_file_name(format!("{stem}_truth.csv"))
        }
    };
    Ok(OraclePredictor {
        probabilities: read_truth_probabilities(&truth_path)?,
    })
}

fn cmd_eval(a: &EvalArgs, cli: &Cli) -> Result<()> {
    let ds = a.data.load()?;
    let dataset = a.test.as_ref().unwrap_or(&a.data.data).display().to_string();
    let name = match a.predictor {
        Evaluated::Marginal => "marginal",
        Evaluated::Bkt => "bkt",
        Evaluated::Dkt => "dkt",
        Evaluated::Oracle => "oracle",
    };
    let rows: Vec<ReportRow> = match &a.test {
        Some(test_path) => {
            let test = load_csv(test_path, &a.data.schema())?.align_to(&ds.tag_names)?;
            let predictor: Box<dyn Predictor> = if a.predictor == Evaluated::Oracle {
                Box::new(oracle_for(a, test_path)?)
            } else {
                fit_predictor(a.predictor, &ds.sequences, &ds, &a.model)?
            };
            let res = auc(&collect_predictions(predictor.as_ref(), &test.sequences)?)?;
            let cv = CrossValidation {
                fold_aucs: vec![res],
                mean_auc: res.auc,
                std_error: 0.0,
            };
            let mut rows = report_rows(&dataset, name, &cv);
            rows[0].fold = "test".into();
            rows
        }
        None => {
            let mut rng = Rng::with_stream(a.model.seed, 2);
            let oracle = if a.predictor == Evaluated::Oracle { Some(oracle_for(a, &a.data.data)?) } else { None };
            let cv = cross_validate(&ds.sequences, a.folds, &mut rng, |train_seqs| match &oracle {
                Some(o) => Ok(Box::new(o.clone()) as Box<dyn Predictor>),
                None => fit_predictor(a.predictor, train_seqs, &ds, &a.model),
            })?;
            report_rows(&dataset, name, &cv)
        }
    };
    for r in &rows {
        println!("{} {} fold {}: AUC {:.4}", r.dataset, r.model, r.fold, r.auc);
    }
    write_report_csv(&rows, fs::File::create(&a.out)?)?;
    fs::write(a.out.with_extension("json"), serde_json::to_string_pretty(&rows)? + "\n")?;
    write_run_config(&a.out, cli)
}

fn cmd_predict(a: &PredictArgs) -> Result<()> {
    let loaded = load_model(&a.model)?;
    let schema = CsvSchema {
        min_length: 1,
        ..CsvSchema::default()
    };
    let history = load_csv(&a.history, &schema)?.align_to(&loaded.tag_names)?;
    let out: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(fs::File::create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["student_id".to_string(), "step".into(), "exercise_tag".into(), "correct".into()];
    header.extend(loaded.tag_names.iter().cloned());
    w.write_record(&header)?;
    for seq in &history.sequences {
        let series = loaded.tracer.predict_series(&seq.steps)?;
        for (t, (it, y)) in seq.steps.iter().zip(&series.outputs).enumerate() {
            let mut rec = vec![
                seq.student_id.clone(),
                t.to_string(),
                loaded.tag_names[it.exercise].clone(),
                u8::from(it.correct).to_string(),
            ];
            rec.extend(y.iter().map(|v| format!("{v:.17e}")));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_influence(a: &InfluenceArgs, cli: &Cli) -> Result<()> {
    let loaded = a.model.as_deref().map(load_model).transpose()?;
    let data = match &a.data {
        Some(p) => {
            let ds = load_csv(p, &preset(a.schema))?;
            Some(match &loaded {
                Some(l) => ds.align_to(&l.tag_names)?,
                None => ds,
            })
        }
        None => None,
    };
    let need_data = || {
        data.as_ref()
            .ok_or_else(|| Error::InvalidConfig("--data is required for this variant".into()))
    };
    let graph: InfluenceGraph = match a.variant {
        InfluenceVariant::Dkt => {
            let l = loaded
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("--model is required for the dkt variant".into()))?;
            influence_matrix(&l.tracer)?.with_labels(&l.tag_names)?
        }
        InfluenceVariant::Transition => {
            let ds = need_data()?;
            transition_graph(&ds.sequences, ds.exercise_count())?.with_labels(&ds.tag_names)?
        }
        InfluenceVariant::Conditional => {
            let ds = need_data()?;
            conditional_accuracy_graph(&ds.sequences, ds.exercise_count())?.with_labels(&ds.tag_names)?
        }
    }
    .with_threshold(a.tau);
    let mut edges = graph.thresholded();
    if let Some(ds) = &data {
        let allowed = cooccurrence_filter(&ds.sequences, graph.exercise_count(), a.min_follow_rate)?;
        let before = edges.len();
        edges = InfluenceGraph::filter_edges(edges, &allowed);
        info!("co-occurrence filter kept {} of {before} edges", edges.len());
    }
    fs::write(with_suffix(&a.out, ".dot"), graph.to_dot(&edges))?;
    graph.write_csv(fs::File::create(with_suffix(&a.out, ".csv"))?)?;
    let labels: Vec<LabelEntry> = graph
        .labels
        .iter()
        .enumerate()
        .map(|(index, name)| LabelEntry {
            index,
            name: name.clone(),
            concept: None,
        })
        .collect();
    write_labels(&labels, fs::File::create(with_suffix(&a.out, ".labels.csv"))?)?;
    println!("{} edges at threshold {}", edges.len(), a.tau);
    write_run_config(&a.out, cli)
}

fn cmd_curriculum(a: &CurriculumArgs, cli: &Cli) -> Result<()> {
    let loaded = load_model(&a.model)?;
    let m = loaded.tracer.exercise_count();
    let groups = match &a.labels {
        Some(p) => {
            let entries = read_labels(p)?;
            let index_of = |name: &str| {
                loaded
                    .tag_names
                    .iter()
                    .position(|t| t == name)
                    .ok_or_else(|| Error::UnknownTag { tag: name.to_string() })
            };
            let remapped: Vec<LabelEntry> = entries
                .into_iter()
                .map(|e| {
                    Ok(LabelEntry {
                        index: index_of(&e.name)?,
                        ..e
                    })
                })
                .collect::<Result<_>>()?;
            concept_groups(&remapped)
        }
        None => (0..m).map(|q| vec![q]).collect(),
    };
    let mut pool = ExercisePool::from_groups(groups)?;
    if let Some(n) = a.per_concept {
        pool = pool.truncated(n)?;
    }
    let mut policies = Vec::new();
    for p in &a.policy {
        match p {
            PolicyArg::Blocking => policies.push(CurriculumPolicy::Blocking),
            PolicyArg::Mixing => policies.push(CurriculumPolicy::Mixing),
            PolicyArg::Mdp => policies.extend(a.depth.iter().map(|&depth| CurriculumPolicy::Expectimax {
                depth,
                particles: a.planning_particles,
            })),
        }
    }
    let mut curves = Vec::new();
    for policy in policies {
        let c = run_curriculum(&loaded.tracer, policy, &pool, a.horizon, a.particles, a.seed)?;
        println!("{}: final predicted knowledge {:.4}", c.policy, c.final_mean());
        curves.push(c);
    }
    write_curves_csv(&curves, fs::File::create(&a.out)?)?;
    write_run_config(&a.out, cli)
}

fn cmd_inspect(a: &InspectArgs) -> Result<()> {
    let loaded = load_model(&a.model)?;
    let t: &KnowledgeTracer = &loaded.tracer;
    println!("kind: {}", t.model.kind().name());
    println!("hidden: {}", t.model.hidden_dim());
    println!("input: {}", t.model.input_dim());
    println!("exercises: {}", t.model.output_dim());
    println!("parameters: {}", t.model.parameter_count());
    println!("encoding: {} (seed {})", t.encoding.variant().name(), t.encoding.seed());
    if let Some(p) = &a.data {
        let ds = load_csv(p, &preset(a.schema))?.align_to(&loaded.tag_names)?;
        let check = bias_marginal_check(t, &ds.sequences)?;
        match check.correlation {
            Some(r) => println!("bias_marginal_correlation: {r:.4}"),
            None => println!("bias_marginal_correlation: degenerate"),
        }
        println!("bias_marginal_exercises: {}", check.exercises_used);
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, cli),
        Command::Train(a) => cmd_train(a, cli),
        Command::Eval(a) => cmd_eval(a, cli),
        Command::Predict(a) => cmd_predict(a),
        Command::Influence(a) => cmd_influence(a, cli),
        Command::Curriculum(a) => cmd_curriculum(a, cli),
        Command::Inspect(a) => cmd_inspect(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{record}");
            ExitCode::FAILURE
        }
    }
}
