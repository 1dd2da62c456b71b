//! Versioned text serialization for models and fit results.
//!
//! Floats are written in Rust's shortest round-trip decimal form, so a
//! parse of what was written recovers bit-identical values. The model
//! schema is shared by all three kinds; `kind` decides whether the per-group
//! matrix is a transition matrix or a generator.
//!
//! ```text
//! clickmix-model v1
//! kind: cm
//! groups: 2
//! states: 5
//! weights: 0.5 0.5
//! initial 1: 0.2 0.2 0.2 0.2 0.2
//! matrix 1:
//! -0.1 0.05 0.02 0.02 0.01
//! ...
//! ```

use std::fmt::Write as _;

use ndarray::{Array1, Array2};

use crate::continuous::{ContinuousMixtureModel, GeneratorMatrix};
use crate::discrete::{DiscreteMixtureModel, DiscreteVariant};
use crate::em::{FitResult, FittedModel, ModelKind};
use crate::error::{Error, Result};

const MODEL_HEADER: &str = "clickmix-model v1";
const FIT_HEADER: &str = "clickmix-fit v1";

fn join_floats(values: impl IntoIterator<Item = f64>) -> String {
    values
        .into_iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Render a model in the versioned text schema.
pub fn write_model(model: &FittedModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MODEL_HEADER}");
    let _ = writeln!(out, "kind: {}", model.kind());
    let _ = writeln!(out, "groups: {}", model.num_groups());
    let _ = writeln!(out, "states: {}", model.num_states());
    let _ = writeln!(out, "weights: {}", join_floats(model.weights().iter().copied()));
    let (initial_probs, matrices): (&Array2<f64>, Vec<&Array2<f64>>) = match model {
        FittedModel::Discrete(m) => (&m.initial_probs, m.transitions.iter().collect()),
        FittedModel::Continuous(m) => (
            &m.initial_probs,
            m.generators.iter().map(|q| q.rates()).collect(),
        ),
    };
    for (g, matrix) in matrices.iter().enumerate() {
        let _ = writeln!(
            out,
            "initial {}: {}",
            g + 1,
            join_floats(initial_probs.row(g).iter().copied())
        );
        let _ = writeln!(out, "matrix {}:", g + 1);
        for row in matrix.rows() {
            let _ = writeln!(out, "{}", join_floats(row.iter().copied()));
        }
    }
    out
}

struct LineReader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> LineReader<'a> {
    fn new(text: &'a str) -> Self {
        LineReader {
            lines: text.lines().enumerate(),
        }
    }

    fn next_line(&mut self) -> Result<(usize, &'a str)> {
        for (idx, raw) in self.lines.by_ref() {
            let line = raw.trim();
            if !line.is_empty() {
                return Ok((idx + 1, line));
            }
        }
        Err(Error::InvalidModel("unexpected end of document".into()))
    }

    fn expect_key(&mut self, key: &str) -> Result<(usize, String)> {
        let (no, line) = self.next_line()?;
        let (k, v) = line
            .split_once(':')
            .ok_or_else(|| Error::parse(no, format!("expected '{key}:'")))?;
        if k.trim() != key {
            return Err(Error::parse(no, format!("expected '{key}:', found '{k}'")));
        }
        Ok((no, v.trim().to_string()))
    }
}

fn parse_floats(no: usize, text: &str, expect: usize) -> Result<Vec<f64>> {
    let values: std::result::Result<Vec<f64>, _> =
        text.split_whitespace().map(str::parse::<f64>).collect();
    let values = values.map_err(|_| Error::parse(no, "bad numeric value"))?;
    if values.len() != expect {
        return Err(Error::parse(
            no,
            format!("expected {} values, found {}", expect, values.len()),
        ));
    }
    Ok(values)
}

/// Parse a model document, revalidating all invariants.
pub fn parse_model(text: &str) -> Result<FittedModel> {
    let mut reader = LineReader::new(text);
    let (no, header) = reader.next_line()?;
    if header != MODEL_HEADER {
        return Err(Error::parse(no, format!("expected '{MODEL_HEADER}'")));
    }
    parse_model_body(&mut reader)
}

fn parse_model_body(reader: &mut LineReader) -> Result<FittedModel> {
    let (no, kind) = reader.expect_key("kind")?;
    let kind = ModelKind::parse(&kind).map_err(|e| Error::parse(no, e.to_string()))?;
    let (no, groups) = reader.expect_key("groups")?;
    let g_count: usize = groups
        .parse()
        .map_err(|_| Error::parse(no, "bad group count"))?;
    let (no, states) = reader.expect_key("states")?;
    let j_count: usize = states
        .parse()
        .map_err(|_| Error::parse(no, "bad state count"))?;
    if g_count == 0 || j_count == 0 {
        return Err(Error::InvalidModel("empty model document".into()));
    }
    let (no, weights) = reader.expect_key("weights")?;
    let weights = Array1::from_vec(parse_floats(no, &weights, g_count)?);

    let mut initial_probs = Array2::zeros((g_count, j_count));
    let mut matrices = Vec::with_capacity(g_count);
    for g in 0..g_count {
        let (no, initial) = reader.expect_key(&format!("initial {}", g + 1))?;
        initial_probs
            .row_mut(g)
            .assign(&Array1::from_vec(parse_floats(no, &initial, j_count)?));
        let (no, rest) = reader.expect_key(&format!("matrix {}", g + 1))?;
        if !rest.is_empty() {
            return Err(Error::parse(no, "matrix header takes no inline value"));
        }
        let mut matrix = Array2::zeros((j_count, j_count));
        for j in 0..j_count {
            let (no, line) = reader.next_line()?;
            matrix
                .row_mut(j)
                .assign(&Array1::from_vec(parse_floats(no, line, j_count)?));
        }
        matrices.push(matrix);
    }

    match kind {
        ModelKind::Dwm | ModelKind::Dm => {
            let variant = if kind == ModelKind::Dwm {
                DiscreteVariant::WithSelfTransitions
            } else {
                DiscreteVariant::NoSelfTransitions
            };
            Ok(FittedModel::Discrete(DiscreteMixtureModel::new(
                weights,
                initial_probs,
                matrices,
                variant,
            )?))
        }
        ModelKind::Cm => {
            let generators: Result<Vec<GeneratorMatrix>> =
                matrices.into_iter().map(GeneratorMatrix::new).collect();
            Ok(FittedModel::Continuous(ContinuousMixtureModel::new(
                weights,
                initial_probs,
                generators?,
            )?))
        }
    }
}

/// A fit result plus the run context needed to reproduce or reuse it.
#[derive(Debug, Clone, PartialEq)]
pub struct FitDocument {
    pub model: FittedModel,
    pub bic: f64,
    pub loglik: f64,
    pub iterations: usize,
    pub chosen_start: usize,
    pub converged: bool,
    pub floor_decreases: usize,
    pub hard_decreases: usize,
    pub trace: Vec<f64>,
    /// Number of sequences the model was fitted to.
    pub data_len: usize,
    /// Whether repeats were collapsed before fitting.
    pub collapsed: bool,
    pub seed: u64,
    /// Per-G BIC column of a sweep; empty for a single fit. None marks a
    /// failed fit at that G.
    pub sweep_rows: Vec<(usize, Option<f64>)>,
}

impl FitDocument {
    pub fn from_fit(fit: &FitResult, data_len: usize, collapsed: bool, seed: u64) -> Self {
        FitDocument {
            model: fit.model.clone(),
            bic: fit.bic,
            loglik: fit.log_likelihood(),
            iterations: fit.iterations,
            chosen_start: fit.chosen_start,
            converged: fit.converged,
            floor_decreases: fit.floor_decreases,
            hard_decreases: fit.hard_decreases,
            trace: fit.loglik_trace.clone(),
            data_len,
            collapsed,
            seed,
            sweep_rows: Vec::new(),
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{FIT_HEADER}");
        let _ = writeln!(out, "data-n: {}", self.data_len);
        let _ = writeln!(out, "collapsed: {}", self.collapsed);
        let _ = writeln!(out, "seed: {}", self.seed);
        let _ = writeln!(out, "bic: {}", self.bic);
        let _ = writeln!(out, "loglik: {}", self.loglik);
        let _ = writeln!(out, "iterations: {}", self.iterations);
        let _ = writeln!(out, "chosen-start: {}", self.chosen_start);
        let _ = writeln!(out, "converged: {}", self.converged);
        let _ = writeln!(out, "floor-decreases: {}", self.floor_decreases);
        let _ = writeln!(out, "hard-decreases: {}", self.hard_decreases);
        let _ = writeln!(out, "trace: {}", join_floats(self.trace.iter().copied()));
        for (g, bic) in &self.sweep_rows {
            match bic {
                Some(b) => {
                    let _ = writeln!(out, "sweep {g}: {b}");
                }
                None => {
                    let _ = writeln!(out, "sweep {g}: failed");
                }
            }
        }
        let _ = writeln!(out, "model:");
        out.push_str(&write_model(&self.model));
        out
    }

    pub fn parse(text: &str) -> Result<FitDocument> {
        let mut reader = LineReader::new(text);
        let (no, header) = reader.next_line()?;
        if header != FIT_HEADER {
            return Err(Error::parse(no, format!("expected '{FIT_HEADER}'")));
        }
        let (no, data_len) = reader.expect_key("data-n")?;
        let data_len = data_len
            .parse()
            .map_err(|_| Error::parse(no, "bad data count"))?;
        let (no, collapsed) = reader.expect_key("collapsed")?;
        let collapsed = collapsed
            .parse()
            .map_err(|_| Error::parse(no, "bad flag"))?;
        let (no, seed) = reader.expect_key("seed")?;
        let seed = seed.parse().map_err(|_| Error::parse(no, "bad seed"))?;
        let (no, bic) = reader.expect_key("bic")?;
        let bic = bic.parse().map_err(|_| Error::parse(no, "bad bic"))?;
        let (no, loglik) = reader.expect_key("loglik")?;
        let loglik = loglik
            .parse()
            .map_err(|_| Error::parse(no, "bad loglik"))?;
        let (no, iterations) = reader.expect_key("iterations")?;
        let iterations = iterations
            .parse()
            .map_err(|_| Error::parse(no, "bad iteration count"))?;
        let (no, chosen_start) = reader.expect_key("chosen-start")?;
        let chosen_start = chosen_start
            .parse()
            .map_err(|_| Error::parse(no, "bad start index"))?;
        let (no, converged) = reader.expect_key("converged")?;
        let converged = converged
            .parse()
            .map_err(|_| Error::parse(no, "bad flag"))?;
        let (no, floor_decreases) = reader.expect_key("floor-decreases")?;
        let floor_decreases = floor_decreases
            .parse()
            .map_err(|_| Error::parse(no, "bad count"))?;
        let (no, hard_decreases) = reader.expect_key("hard-decreases")?;
        let hard_decreases = hard_decreases
            .parse()
            .map_err(|_| Error::parse(no, "bad count"))?;
        let (no, trace_text) = reader.expect_key("trace")?;
        let trace: std::result::Result<Vec<f64>, _> =
            trace_text.split_whitespace().map(str::parse).collect();
        let trace = trace.map_err(|_| Error::parse(no, "bad trace value"))?;

        let mut sweep_rows = Vec::new();
        loop {
            let (no, line) = reader.next_line()?;
            if line == "model:" {
                break;
            }
            let rest = line
                .strip_prefix("sweep ")
                .ok_or_else(|| Error::parse(no, "expected 'sweep G:' or 'model:'"))?;
            let (g, value) = rest
                .split_once(':')
                .ok_or_else(|| Error::parse(no, "expected 'sweep G: value'"))?;
            let g: usize = g
                .trim()
                .parse()
                .map_err(|_| Error::parse(no, "bad sweep G"))?;
            let value = value.trim();
            let bic = if value == "failed" {
                None
            } else {
                Some(
                    value
                        .parse()
                        .map_err(|_| Error::parse(no, "bad sweep bic"))?,
                )
            };
            sweep_rows.push((g, bic));
        }
        let (no, header) = reader.next_line()?;
        if header != MODEL_HEADER {
            return Err(Error::parse(no, format!("expected '{MODEL_HEADER}'")));
        }
        let model = parse_model_body(&mut reader)?;
        Ok(FitDocument {
            model,
            bic,
            loglik,
            iterations,
            chosen_start,
            converged,
            floor_decreases,
            hard_decreases,
            trace,
            data_len,
            collapsed,
            seed,
            sweep_rows,
        })
    }
}
