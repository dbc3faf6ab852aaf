//! Interaction CSV ingestion and export, label files, simulator truth dumps
//! and the text model format.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::encoding::{EncodingScheme, EncodingVariant, Interaction, InteractionSequence};
use crate::error::{Error, Result};
use crate::models::{DktModel, KnowledgeTracer, ModelKind};
use crate::simulator::TruthRecord;

/// What to do with rows that share an ordering id (multi-skill rows in some
/// benchmark releases).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DuplicatePolicy {
    #[default]
    KeepFirst,
    Explode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub student_column: String,
    pub exercise_column: String,
    pub correct_column: String,
    pub skill_column: Option<String>,
    /// When set, rows are stably sorted by this numeric column and rows
    /// sharing a value are handled by `duplicates`.
    pub order_column: Option<String>,
    pub duplicates: DuplicatePolicy,
    /// Students with fewer answers are dropped.
    pub min_length: usize,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            student_column: "student_id".into(),
            exercise_column: "exercise_tag".into(),
            correct_column: "correct".into(),
            skill_column: None,
            order_column: None,
            duplicates: DuplicatePolicy::KeepFirst,
            min_length: 2,
        }
    }
}

impl CsvSchema {
    /// Skill-builder style export: `order_id`, `user_id`, `skill_id`, `correct`.
    pub fn assistments() -> Self {
        CsvSchema {
            student_column: "user_id".into(),
            exercise_column: "skill_id".into(),
            correct_column: "correct".into(),
            skill_column: None,
            order_column: Some("order_id".into()),
            duplicates: DuplicatePolicy::KeepFirst,
            min_length: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub sequences: Vec<InteractionSequence>,
    pub tag_names: Vec<String>,
    /// Expert skill per exercise, when the source has a skill column.
    pub skill_of_exercise: Option<Vec<usize>>,
    pub skill_names: Vec<String>,
    pub source: String,
    pub dropped_students: usize,
    /// Rows skipped for an empty exercise tag or as duplicates.
    pub dropped_rows: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub students: usize,
    pub exercise_tags: usize,
    pub answers: usize,
}

impl Dataset {
    pub fn exercise_count(&self) -> usize {
        self.tag_names.len()
    }

    pub fn stats(&self) -> DatasetStats {
        DatasetStats {
            students: self.sequences.len(),
            exercise_tags: self.tag_names.len(),
            answers: self.sequences.iter().map(|s| s.len()).sum(),
        }
    }

    /// Builds a dataset from in-memory sequences; tags default to indices.
    pub fn from_sequences(sequences: Vec<InteractionSequence>, tag_names: Vec<String>) -> Result<Self> {
        let m = tag_names.len();
        for it in sequences.iter().flat_map(|s| &s.steps) {
            if it.exercise >= m {
                return Err(Error::ExerciseOutOfRange { index: it.exercise, count: m });
            }
        }
        Ok(Dataset {
            sequences,
            tag_names,
            skill_of_exercise: None,
            skill_names: Vec::new(),
            source: String::new(),
            dropped_students: 0,
            dropped_rows: 0,
        })
    }

    /// Re-indexes exercises against an existing tag dictionary (for example
    /// a trained model's). Unknown tags are an error.
    pub fn align_to(&self, tag_names: &[String]) -> Result<Dataset> {
        let index: HashMap<&str, usize> = tag_names.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
        let map: Vec<usize> = self
            .tag_names
            .iter()
            .map(|t| index.get(t.as_str()).copied().ok_or_else(|| Error::UnknownTag { tag: t.clone() }))
            .collect::<Result<_>>()?;
        let sequences = self
            .sequences
            .iter()
            .map(|s| {
                InteractionSequence::new(
                    s.student_id.clone(),
                    s.steps.iter().map(|it| Interaction::new(map[it.exercise], it.correct)).collect(),
                )
            })
            .collect();
        let skill_of_exercise = self.skill_of_exercise.as_ref().map(|old| {
            let mut out: Vec<usize> = Vec::with_capacity(tag_names.len());
            let mut extra = self.skill_names.len();
            for q in 0..tag_names.len() {
                match map.iter().position(|&m| m == q) {
                    Some(src) => out.push(old[src]),
                    None => {
                        out.push(extra);
                        extra += 1;
                    }
                }
            }
            out
        });
        let mut skill_names = self.skill_names.clone();
        if let Some(map) = &skill_of_exercise {
            let n = map.iter().max().map_or(0, |m| m + 1);
            while skill_names.len() < n {
                skill_names.push(format!("unseen:{}", skill_names.len()));
            }
        }
        Ok(Dataset {
            sequences,
            tag_names: tag_names.to_vec(),
            skill_of_exercise,
            skill_names,
            source: self.source.clone(),
            dropped_students: self.dropped_students,
            dropped_rows: self.dropped_rows,
        })
    }
}

fn parse_correct(path: &Path, line: usize, raw: &str) -> Result<bool> {
    match raw.trim() {
        "1" | "1.0" => Ok(true),
        "0" | "0.0" => Ok(false),
        other => Err(Error::BadCorrectness {
            path: path.to_path_buf(),
            line,
            value: other.to_string(),
        }),
    }
}

struct Row {
    line: usize,
    order: Option<f64>,
    student: String,
    tag: String,
    skill: Option<String>,
    correct: bool,
}

pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    let file = fs::File::open(path)?;
    read_csv(file, path, schema)
}

/// Parses CSV from any reader; `path` is only used in error messages.
pub fn read_csv<R: Read>(input: R, path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].trim().is_empty()) {
        return Err(Error::EmptyFile { path: path.to_path_buf() });
    }
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn {
                path: path.to_path_buf(),
                column: name.to_string(),
            })
    };
    let c_student = find(&schema.student_column)?;
    let c_tag = find(&schema.exercise_column)?;
    let c_correct = find(&schema.correct_column)?;
    let c_skill = schema.skill_column.as_deref().map(find).transpose()?;
    let c_order = schema.order_column.as_deref().map(find).transpose()?;

    let mut rows = Vec::new();
    let mut dropped_rows = 0;
    for (k, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(k + 2, |p| p.line() as usize);
        let field = |c: usize| {
            rec.get(c).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("row has {} fields, expected at least {}", rec.len(), c + 1),
            })
        };
        let tag = field(c_tag)?.trim();
        if tag.is_empty() {
            dropped_rows += 1;
            continue;
        }
        let order = match c_order {
            Some(c) => Some(field(c)?.trim().parse::<f64>().map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("order value: {e}"),
            })?),
            None => None,
        };
        rows.push(Row {
            line,
            order,
            student: field(c_student)?.trim().to_string(),
            tag: tag.to_string(),
            skill: c_skill.map(field).transpose()?.map(|s| s.trim().to_string()),
            correct: parse_correct(path, line, field(c_correct)?)?,
        });
    }
    if rows.is_empty() {
        return Err(Error::EmptyFile { path: path.to_path_buf() });
    }
    if c_order.is_some() {
        rows.sort_by(|a, b| a.order.unwrap().total_cmp(&b.order.unwrap()));
        if schema.duplicates == DuplicatePolicy::KeepFirst {
            let before = rows.len();
            rows.dedup_by(|b, a| a.order == b.order && a.student == b.student);
            dropped_rows += before - rows.len();
        }
    }

    let mut tag_index: HashMap<String, usize> = HashMap::new();
    let mut tag_names = Vec::new();
    let mut skill_index: HashMap<String, usize> = HashMap::new();
    let mut skill_names = Vec::new();
    let mut skill_of_tag: Vec<Option<usize>> = Vec::new();
    let mut student_index: HashMap<String, usize> = HashMap::new();
    let mut sequences: Vec<InteractionSequence> = Vec::new();
    for row in &rows {
        let q = *tag_index.entry(row.tag.clone()).or_insert_with(|| {
            tag_names.push(row.tag.clone());
            skill_of_tag.push(None);
            tag_names.len() - 1
        });
        if let Some(skill) = &row.skill {
            let s = *skill_index.entry(skill.clone()).or_insert_with(|| {
                skill_names.push(skill.clone());
                skill_names.len() - 1
            });
            match skill_of_tag[q] {
                None => skill_of_tag[q] = Some(s),
                Some(prev) if prev != s => warn!(
                    "{}:{}: exercise '{}' already mapped to skill '{}'; keeping it",
                    path.display(),
                    row.line,
                    row.tag,
                    skill_names[prev]
                ),
                _ => {}
            }
        }
        let s = *student_index.entry(row.student.clone()).or_insert_with(|| {
            sequences.push(InteractionSequence::new(row.student.clone(), Vec::new()));
            sequences.len() - 1
        });
        sequences[s].steps.push(Interaction::new(q, row.correct));
    }
    let before = sequences.len();
    sequences.retain(|s| s.len() >= schema.min_length.max(1));
    let dropped_students = before - sequences.len();
    if dropped_students > 0 {
        warn!("dropped {dropped_students} students with fewer than {} interactions", schema.min_length);
    }
    let skill_of_exercise = c_skill.map(|_| {
        // Tags seen without a skill value get their own skill.
        skill_of_tag
            .iter()
            .enumerate()
            .map(|(q, s)| {
                s.unwrap_or_else(|| {
                    skill_names.push(format!("tag:{}", tag_names[q]));
                    skill_names.len() - 1
                })
            })
            .collect()
    });
    let ds = Dataset {
        sequences,
        tag_names,
        skill_of_exercise,
        skill_names,
        source: path.display().to_string(),
        dropped_students,
        dropped_rows,
    };
    let st = ds.stats();
    info!(
        "{}: {} students, {} exercise tags, {} answers",
        ds.source, st.students, st.exercise_tags, st.answers
    );
    Ok(ds)
}

/// Writes `student_id,exercise_tag,correct[,skill_tag]`, one row per answer.
pub fn write_csv<W: Write>(ds: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let with_skill = ds.skill_of_exercise.is_some();
    if with_skill {
        w.write_record(["student_id", "exercise_tag", "correct", "skill_tag"])?;
    } else {
        w.write_record(["student_id", "exercise_tag", "correct"])?;
    }
    for seq in &ds.sequences {
        for it in &seq.steps {
            let correct = if it.correct { "1" } else { "0" };
            let tag = ds.tag_names[it.exercise].as_str();
            match &ds.skill_of_exercise {
                Some(map) => w.write_record([seq.student_id.as_str(), tag, correct, ds.skill_names[map[it.exercise]].as_str()])?,
                None => w.write_record([seq.student_id.as_str(), tag, correct])?,
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(ds: &Dataset, path: &Path) -> Result<()> {
    write_csv(ds, fs::File::create(path)?)
}

/// One line of a label file: `index,name[,concept]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub index: usize,
    pub name: String,
    pub concept: Option<String>,
}

pub fn write_labels<W: Write>(entries: &[LabelEntry], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).flexible(true).from_writer(out);
    for e in entries {
        let idx = e.index.to_string();
        match &e.concept {
            Some(c) => w.write_record([idx.as_str(), e.name.as_str(), c.as_str()])?,
            None => w.write_record([idx.as_str(), e.name.as_str()])?,
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels(path: &Path) -> Result<Vec<LabelEntry>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(fs::File::open(path)?);
    let mut out = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = k + 1;
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        if rec.len() < 2 {
            return Err(bad("expected index,name[,concept]".into()));
        }
        let index = rec[0].trim().parse().map_err(|e| bad(format!("index: {e}")))?;
        out.push(LabelEntry {
            index,
            name: rec[1].to_string(),
            concept: rec.get(2).map(str::to_string),
        });
    }
    if out.is_empty() {
        return Err(Error::EmptyFile { path: path.to_path_buf() });
    }
    Ok(out)
}

/// Concept groups from a label file; entries without a concept form their
/// own singleton group. Groups follow first appearance.
pub fn concept_groups(entries: &[LabelEntry]) -> Vec<Vec<usize>> {
    let mut order: Vec<Option<&str>> = Vec::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for e in entries {
        match e.concept.as_deref() {
            Some(c) => match order.iter().position(|o| *o == Some(c)) {
                Some(g) => groups[g].push(e.index),
                None => {
                    order.push(Some(c));
                    groups.push(vec![e.index]);
                }
            },
            None => {
                order.push(None);
                groups.push(vec![e.index]);
            }
        }
    }
    groups
}

/// `student_id,step,exercise,concept,difficulty,skill,probability,correct`
pub fn write_truth_csv<W: Write>(truth: &TruthRecord, student_ids: &[String], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["student_id", "step", "exercise", "concept", "difficulty", "skill", "probability", "correct"])?;
    for (id, steps) in student_ids.iter().zip(&truth.students) {
        for (t, s) in steps.iter().enumerate() {
            w.write_record([
                id.clone(),
                t.to_string(),
                s.exercise.to_string(),
                s.concept.to_string(),
                format!("{:.17e}", s.difficulty),
                format!("{:.17e}", s.skills[s.concept]),
                format!("{:.17e}", s.probability),
                u8::from(s.correct).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-student true response probabilities from a truth CSV, in step order.
pub fn read_truth_probabilities(path: &Path) -> Result<HashMap<String, Vec<f64>>> {
    let mut r = csv::Reader::from_reader(fs::File::open(path)?);
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::MissingColumn {
            path: path.to_path_buf(),
            column: name.to_string(),
        })
    };
    let (c_student, c_step, c_prob) = (col("student_id")?, col("step")?, col("probability")?);
    let mut out: HashMap<String, Vec<f64>> = HashMap::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let step: usize = rec[c_step].parse().map_err(|e| bad(format!("step: {e}")))?;
        let p: f64 = rec[c_prob].parse().map_err(|e| bad(format!("probability: {e}")))?;
        let v = out.entry(rec[c_student].to_string()).or_default();
        if v.len() != step {
            return Err(bad(format!("expected step {}, found {step}", v.len())));
        }
        v.push(p);
    }
    Ok(out)
}

pub const MODEL_MAGIC: &str = "dktlab-model";
pub const MODEL_VERSION: u32 = 1;

/// Serialises a model and its encoding. Numbers are written with 17
/// significant digits so every `f64` reads back unchanged.
pub fn model_to_string(tracer: &KnowledgeTracer, tag_names: &[String]) -> Result<String> {
    let model = &tracer.model;
    let enc = &tracer.encoding;
    if tag_names.len() != model.output_dim() {
        return Err(Error::DimensionMismatch {
            context: "tag names for model file".into(),
            expected: model.output_dim(),
            actual: tag_names.len(),
        });
    }
    let mut s = String::new();
    let _ = writeln!(s, "{MODEL_MAGIC} {MODEL_VERSION}");
    let _ = writeln!(s, "kind {}", model.kind().name());
    let _ = writeln!(
        s,
        "dims hidden={} input={} exercises={}",
        model.hidden_dim(),
        model.input_dim(),
        model.output_dim()
    );
    let _ = writeln!(
        s,
        "encoding {} exercises={} dim={} seed={}",
        enc.variant().name(),
        enc.exercise_count(),
        enc.compressed_dim(),
        enc.seed()
    );
    let _ = writeln!(s, "tags {}", tag_names.len());
    for t in tag_names {
        let _ = writeln!(s, "{}", serde_json::to_string(t)?);
    }
    for (name, m) in model.tensors() {
        let _ = writeln!(s, "tensor {name} {} {}", m.rows(), m.cols());
        for r in 0..m.rows() {
            let row: Vec<String> = m.row(r).iter().map(|v| format!("{v:.16e}")).collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
    }
    s.push_str("end\n");
    Ok(s)
}

pub fn save_model(path: &Path, tracer: &KnowledgeTracer, tag_names: &[String]) -> Result<()> {
    fs::write(path, model_to_string(tracer, tag_names)?)?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub tracer: KnowledgeTracer,
    pub tag_names: Vec<String>,
}

struct Lines<I> {
    inner: I,
    line: usize,
}

impl<I: Iterator<Item = std::io::Result<String>>> Lines<I> {
    fn next_line(&mut self, what: &str) -> Result<String> {
        self.line += 1;
        match self.inner.next() {
            Some(l) => Ok(l?),
            None => Err(Error::CorruptModel {
                line: self.line,
                message: format!("unexpected end of file, expected {what}"),
            }),
        }
    }

    fn corrupt(&self, message: impl Into<String>) -> Error {
        Error::CorruptModel {
            line: self.line,
            message: message.into(),
        }
    }
}

fn keyed<'a>(lines: &Lines<impl Iterator>, fields: &[&'a str], key: &str) -> Result<&'a str> {
    fields
        .iter()
        .find_map(|f| f.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .ok_or_else(|| Error::CorruptModel {
            line: lines.line,
            message: format!("missing '{key}=' field"),
        })
}

fn parse_num<T: std::str::FromStr>(lines: &Lines<impl Iterator>, raw: &str, what: &str) -> Result<T> {
    raw.parse().map_err(|_| Error::CorruptModel {
        line: lines.line,
        message: format!("bad {what} '{raw}'"),
    })
}

pub fn read_model<R: Read>(input: R) -> Result<LoadedModel> {
    let mut lines = Lines {
        inner: BufReader::new(input).lines(),
        line: 0,
    };
    let header = lines.next_line("header")?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some(MODEL_MAGIC) {
        return Err(lines.corrupt("not a model file"));
    }
    let version = parts.next().unwrap_or("");
    if version != MODEL_VERSION.to_string() {
        return Err(Error::VersionMismatch {
            expected: MODEL_VERSION.to_string(),
            found: version.to_string(),
        });
    }

    let kind_line = lines.next_line("kind")?;
    let kind: ModelKind = match kind_line.strip_prefix("kind ") {
        Some(k) => k.trim().parse().map_err(|_| lines.corrupt(format!("unknown model kind '{k}'")))?,
        None => return Err(lines.corrupt("expected 'kind'")),
    };

    let dims_line = lines.next_line("dims")?;
    let dims: Vec<&str> = dims_line.split_whitespace().collect();
    if dims.first() != Some(&"dims") {
        return Err(lines.corrupt("expected 'dims'"));
    }
    let hidden: usize = parse_num(&lines, keyed(&lines, &dims, "hidden")?, "hidden size")?;
    let input: usize = parse_num(&lines, keyed(&lines, &dims, "input")?, "input size")?;
    let exercises: usize = parse_num(&lines, keyed(&lines, &dims, "exercises")?, "exercise count")?;

    let enc_line = lines.next_line("encoding")?;
    let enc_fields: Vec<&str> = enc_line.split_whitespace().collect();
    if enc_fields.first() != Some(&"encoding") || enc_fields.len() < 2 {
        return Err(lines.corrupt("expected 'encoding'"));
    }
    let enc_m: usize = parse_num(&lines, keyed(&lines, &enc_fields, "exercises")?, "encoding exercise count")?;
    let enc_dim: usize = parse_num(&lines, keyed(&lines, &enc_fields, "dim")?, "encoding dimension")?;
    let enc_seed: u64 = parse_num(&lines, keyed(&lines, &enc_fields, "seed")?, "encoding seed")?;
    let encoding = match enc_fields[1] {
        v if v == EncodingVariant::OneHot.name() => EncodingScheme::one_hot(enc_m),
        v if v == EncodingVariant::CompressedGaussian.name() => EncodingScheme::compressed(enc_m, enc_dim, enc_seed)?,
        other => return Err(lines.corrupt(format!("unknown encoding '{other}'"))),
    };

    let tags_line = lines.next_line("tags")?;
    let tag_count: usize = match tags_line.strip_prefix("tags ") {
        Some(n) => parse_num(&lines, n.trim(), "tag count")?,
        None => return Err(lines.corrupt("expected 'tags'")),
    };
    let mut tag_names = Vec::with_capacity(tag_count);
    for _ in 0..tag_count {
        let l = lines.next_line("tag name")?;
        tag_names.push(serde_json::from_str::<String>(&l).map_err(|e| lines.corrupt(format!("tag name: {e}")))?);
    }

    if tag_count != exercises || enc_m != exercises || encoding.input_dim() != input {
        return Err(Error::ShapeInconsistency(format!(
            "exercises={exercises}, tags={tag_count}, encoding exercises={enc_m}, encoding input={} vs input={input}",
            encoding.input_dim()
        )));
    }
    let mut model = DktModel::zeros(kind, input, hidden, exercises);
    for (name, tensor) in model.tensors_mut() {
        let head = lines.next_line(&format!("tensor {name}"))?;
        let f: Vec<&str> = head.split_whitespace().collect();
        if f.len() != 4 || f[0] != "tensor" {
            return Err(lines.corrupt(format!("expected 'tensor {name} <rows> <cols>'")));
        }
        if f[1] != name {
            return Err(lines.corrupt(format!("expected tensor {name}, found {}", f[1])));
        }
        let rows: usize = parse_num(&lines, f[2], "row count")?;
        let cols: usize = parse_num(&lines, f[3], "column count")?;
        if (rows, cols) != tensor.shape() {
            return Err(Error::ShapeInconsistency(format!(
                "tensor {name} is {rows}x{cols}, expected {}x{}",
                tensor.rows(),
                tensor.cols()
            )));
        }
        for r in 0..rows {
            let l = lines.next_line(&format!("row {r} of {name}"))?;
            let row = tensor.row_mut(r);
            let mut n = 0;
            for (k, tok) in l.split_whitespace().enumerate() {
                if k >= cols {
                    return Err(lines.corrupt(format!("too many values in row {r} of {name}")));
                }
                row[k] = parse_num(&lines, tok, "number")?;
                n += 1;
            }
            if n != cols {
                return Err(lines.corrupt(format!("row {r} of {name} has {n} values, expected {cols}")));
            }
        }
    }
    if lines.next_line("end")?.trim() != "end" {
        return Err(lines.corrupt("expected 'end'"));
    }
    model.validate()?;
    if !model.is_finite() {
        return Err(Error::CorruptModel {
            line: lines.line,
            message: "non-finite parameter".into(),
        });
    }
    Ok(LoadedModel {
        tracer: KnowledgeTracer::new(model, encoding)?,
        tag_names,
    })
}

pub fn load_model(path: &Path) -> Result<LoadedModel> {
    read_model(fs::File::open(path)?)
}

/// Path of a sibling file with a different extension.
pub fn sibling(path: &Path, extension: &str) -> PathBuf {
    path.with_extension(extension)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn parse(text: &str, schema: &CsvSchema) -> Result<Dataset> {
        read_csv(text.as_bytes(), Path::new("mem.csv"), schema)
    }

    #[test]
    fn three_rows_one_student() {
        let ds = parse("student_id,exercise_tag,correct\na,x,1\na,y,0\na,x,1\n", &CsvSchema::default()).unwrap();
        assert_eq!(ds.sequences.len(), 1);
        assert_eq!(ds.sequences[0].len(), 3);
        assert_eq!(ds.tag_names, vec!["x", "y"]);
        assert_eq!(ds.sequences[0].steps[2], Interaction::new(0, true));
    }

    #[test]
    fn single_row_student_dropped() {
        let ds = parse("student_id,exercise_tag,correct\na,x,1\nb,y,0\nb,x,1\n", &CsvSchema::default()).unwrap();
        assert_eq!(ds.dropped_students, 1);
        assert_eq!(ds.sequences.len(), 1);
        assert_eq!(ds.sequences[0].student_id, "b");
        // Tag order still follows first appearance in the file.
        assert_eq!(ds.tag_names, vec!["x", "y"]);
    }

    #[test]
    fn distinct_errors() {
        let s = CsvSchema::default();
        assert!(matches!(parse("student_id,correct\na,1\n", &s), Err(Error::MissingColumn { column, .. }) if column == "exercise_tag"));
        assert!(matches!(
            parse("student_id,exercise_tag,correct\na,x,1\na,x,yes\n", &s),
            Err(Error::BadCorrectness { line: 3, value, .. }) if value == "yes"
        ));
        assert!(matches!(parse("", &s), Err(Error::EmptyFile { .. })));
        assert!(matches!(parse("student_id,exercise_tag,correct\n", &s), Err(Error::EmptyFile { .. })));
    }

    #[test]
    fn order_column_and_duplicates() {
        let text = "order_id,user_id,skill_id,correct\n3,u,b,1\n1,u,a,0\n2,u,a,1\n2,u,c,1\n";
        let ds = parse(text, &CsvSchema::assistments()).unwrap();
        assert_eq!(ds.tag_names, vec!["a", "b"]);
        assert_eq!(ds.sequences[0].len(), 3);
        assert_eq!(ds.dropped_rows, 1);
        let mut explode = CsvSchema::assistments();
        explode.duplicates = DuplicatePolicy::Explode;
        let ds = parse(text, &explode).unwrap();
        assert_eq!(ds.sequences[0].len(), 4);
        assert_eq!(ds.tag_names, vec!["a", "c", "b"]);
    }

    #[test]
    fn skill_column_maps_exercises() {
        let s = CsvSchema {
            skill_column: Some("skill".into()),
            ..CsvSchema::default()
        };
        let ds = parse("student_id,exercise_tag,correct,skill\na,x,1,k1\na,y,0,k2\na,z,1,k1\n", &s).unwrap();
        assert_eq!(ds.skill_of_exercise, Some(vec![0, 1, 0]));
        assert_eq!(ds.skill_names, vec!["k1", "k2"]);
    }

    #[test]
    fn export_import_round_trip() {
        let text = "student_id,exercise_tag,correct\nb,q 1,1\na,\"q,2\",0\nb,q 1,0\na,q 1,1\n";
        let ds = parse(text, &CsvSchema::default()).unwrap();
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        let back = parse(std::str::from_utf8(&buf).unwrap(), &CsvSchema::default()).unwrap();
        assert_eq!(back.sequences, ds.sequences);
        assert_eq!(back.tag_names, ds.tag_names);
    }

    fn tracer(kind: ModelKind, enc: EncodingScheme) -> KnowledgeTracer {
        let model = DktModel::init(kind, enc.input_dim(), 5, enc.exercise_count(), &mut Rng::new(4));
        KnowledgeTracer::new(model, enc).unwrap()
    }

    #[test]
    fn model_round_trip_is_bit_exact() {
        let tags: Vec<String> = vec!["a b".into(), "\"q\"".into(), "c".into()];
        for enc in [EncodingScheme::one_hot(3), EncodingScheme::compressed(3, 7, 99).unwrap()] {
            for kind in [ModelKind::Rnn, ModelKind::Lstm] {
                let t = tracer(kind, enc.clone());
                let text = model_to_string(&t, &tags).unwrap();
                let back = read_model(text.as_bytes()).unwrap();
                assert_eq!(back.tag_names, tags);
                assert_eq!(back.tracer.encoding, t.encoding);
                for ((n1, a), (n2, b)) in t.model.tensors().into_iter().zip(back.tracer.model.tensors()) {
                    assert_eq!(n1, n2);
                    let bits = |m: &crate::numerics::Matrix| m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
                    assert_eq!(bits(a), bits(b), "{n1}");
                }
            }
        }
    }

    #[test]
    fn truncated_and_corrupted_files() {
        let t = tracer(ModelKind::Lstm, EncodingScheme::one_hot(3));
        let tags: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
        let text = model_to_string(&t, &tags).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        let truncated = lines[..lines.len() / 2].join("\n");
        assert!(matches!(read_model(truncated.as_bytes()), Err(Error::CorruptModel { .. })));
        let garbled = text.replacen("e-", "x-", 1);
        assert!(matches!(read_model(garbled.as_bytes()), Err(Error::CorruptModel { .. })));
        let versioned = text.replacen("dktlab-model 1", "dktlab-model 9", 1);
        assert!(matches!(read_model(versioned.as_bytes()), Err(Error::VersionMismatch { .. })));
        let reshaped = text.replacen("tensor W_zm 3 5", "tensor W_zm 4 5", 1);
        assert!(matches!(read_model(reshaped.as_bytes()), Err(Error::ShapeInconsistency(_))));
    }

    #[test]
    fn align_to_model_tags() {
        let ds = parse("student_id,exercise_tag,correct\na,y,1\na,x,0\n", &CsvSchema::default()).unwrap();
        let tags: Vec<String> = vec!["x".into(), "z".into(), "y".into()];
        let al = ds.align_to(&tags).unwrap();
        assert_eq!(al.sequences[0].steps, vec![Interaction::new(2, true), Interaction::new(0, false)]);
        assert!(matches!(ds.align_to(&tags[..2]), Err(Error::UnknownTag { tag }) if tag == "y"));
    }

    #[test]
    fn labels_round_trip_and_groups() {
        let entries = vec![
            LabelEntry { index: 0, name: "a".into(), concept: Some("c1".into()) },
            LabelEntry { index: 1, name: "b,x".into(), concept: Some("c0".into()) },
            LabelEntry { index: 2, name: "c".into(), concept: Some("c1".into()) },
            LabelEntry { index: 3, name: "d".into(), concept: None },
        ];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("labels.csv");
        write_labels(&entries, fs::File::create(&p).unwrap()).unwrap();
        assert_eq!(read_labels(&p).unwrap(), entries);
        assert_eq!(concept_groups(&entries), vec![vec![0, 2], vec![1], vec![3]]);
    }
}
