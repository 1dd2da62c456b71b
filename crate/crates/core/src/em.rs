//! Fitting: multi-start initialization, the EM loop with an
//! acceleration-based stopping rule, model selection over the number of
//! groups, and MAP classification.

use std::ops::RangeInclusive;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::continuous::{ContinuousMixtureModel, GeneratorMatrix};
use crate::discrete::{DiscreteMixtureModel, DiscreteVariant};
use crate::error::{Error, Result};
use crate::math::draw_simplex;
use crate::mixture::{
    check_labels, log_likelihood_from, responsibilities_from, GeneratorUpdate, MStepOptions,
    MarkovMixture,
};
use crate::seq::{Dataset, TransitionCounts};
use crate::stream::rng_stream;

/// The three model families under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Discrete time, self-transitions allowed.
    Dwm,
    /// Discrete time, self-transitions forbidden.
    Dm,
    /// Continuous time.
    Cm,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Dwm => "dwm",
            ModelKind::Dm => "dm",
            ModelKind::Cm => "cm",
        }
    }

    pub fn parse(token: &str) -> Result<Self> {
        match token {
            "dwm" => Ok(ModelKind::Dwm),
            "dm" => Ok(ModelKind::Dm),
            "cm" => Ok(ModelKind::Cm),
            other => Err(Error::InvalidData(format!(
                "unknown model kind '{other}' (expected dwm, dm, or cm)"
            ))),
        }
    }

    pub fn requires_times(self) -> bool {
        matches!(self, ModelKind::Cm)
    }

    pub fn allows_self_transitions(self) -> bool {
        matches!(self, ModelKind::Dwm)
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Fitting protocol: number of random starts, burst length, convergence
/// tolerance, iteration cap, parameter floor, and the sweep range for the
/// number of groups.
#[derive(Debug, Clone)]
pub struct EmConfig {
    pub model_kind: ModelKind,
    pub num_starts: usize,
    pub short_iters: usize,
    pub epsilon: f64,
    pub max_iters: usize,
    pub floor: f64,
    pub g_range: RangeInclusive<usize>,
    pub seed: u64,
    pub generator_update: GeneratorUpdate,
}

impl EmConfig {
    pub fn new(model_kind: ModelKind) -> Self {
        EmConfig {
            model_kind,
            num_starts: 50,
            short_iters: 5,
            epsilon: 1e-6,
            max_iters: 1000,
            floor: 1e-6,
            g_range: 1..=5,
            seed: 0,
            generator_update: GeneratorUpdate::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if self.num_starts < 1
            || self.short_iters < 1
            || self.max_iters < 1
            || !positive(self.epsilon)
            || !positive(self.floor)
            || self.g_range.is_empty()
            || *self.g_range.start() < 1
        {
            return Err(Error::InvalidData(
                "fit configuration out of range".into(),
            ));
        }
        Ok(())
    }

    fn m_step_options(&self) -> MStepOptions {
        MStepOptions {
            floor: self.floor,
            generator_update: self.generator_update,
        }
    }
}

/// A fitted model of either family.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel {
    Discrete(DiscreteMixtureModel),
    Continuous(ContinuousMixtureModel),
}

impl FittedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            FittedModel::Discrete(m) => match m.variant {
                DiscreteVariant::WithSelfTransitions => ModelKind::Dwm,
                DiscreteVariant::NoSelfTransitions => ModelKind::Dm,
            },
            FittedModel::Continuous(_) => ModelKind::Cm,
        }
    }

    pub fn num_groups(&self) -> usize {
        match self {
            FittedModel::Discrete(m) => m.num_groups(),
            FittedModel::Continuous(m) => m.num_groups(),
        }
    }

    pub fn num_states(&self) -> usize {
        match self {
            FittedModel::Discrete(m) => m.num_states(),
            FittedModel::Continuous(m) => m.num_states(),
        }
    }

    pub fn weights(&self) -> &Array1<f64> {
        match self {
            FittedModel::Discrete(m) => &m.weights,
            FittedModel::Continuous(m) => &m.weights,
        }
    }

    pub fn free_parameters(&self) -> usize {
        free_parameter_count(self.kind(), self.num_groups(), self.num_states())
            .expect("fitted model has countable parameters")
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FittedModel::Discrete(m) => m.validate(),
            FittedModel::Continuous(m) => m.validate(),
        }
    }

    /// Posterior responsibilities of `dataset` under this model, labelled
    /// columns fixed one-hot.
    pub fn responsibilities(&self, dataset: &Dataset) -> Result<Array2<f64>> {
        let stats = dataset.summaries();
        let labels = dataset.labels();
        check_labels(&labels, self.num_groups())?;
        match self {
            FittedModel::Discrete(m) => crate::discrete::e_step(m, &stats, &labels),
            FittedModel::Continuous(m) => crate::continuous::e_step(m, &stats, &labels),
        }
    }

    /// Observed log-likelihood of `dataset` under this model.
    pub fn log_likelihood(&self, dataset: &Dataset) -> Result<f64> {
        let stats = dataset.summaries();
        let labels = dataset.labels();
        check_labels(&labels, self.num_groups())?;
        match self {
            FittedModel::Discrete(m) => {
                crate::discrete::observed_log_likelihood(m, &stats, &labels)
            }
            FittedModel::Continuous(m) => {
                crate::continuous::observed_log_likelihood(m, &stats, &labels)
            }
        }
    }
}

/// Outcome of one fit, including the log-likelihood trace and restart
/// diagnostics.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: FittedModel,
    /// G×N posterior matrix; labelled columns are one-hot.
    pub responsibilities: Array2<f64>,
    /// Observed log-likelihood after initialization and after each
    /// iteration.
    pub loglik_trace: Vec<f64>,
    pub bic: f64,
    pub iterations: usize,
    pub chosen_start: usize,
    pub converged: bool,
    /// Iterations where the log-likelihood dipped beyond tolerance while the
    /// parameter floor was binding. Bounded dips at the floor boundary are
    /// expected; anything else is counted in `hard_decreases`.
    pub floor_decreases: usize,
    pub hard_decreases: usize,
}

impl FitResult {
    pub fn log_likelihood(&self) -> f64 {
        *self.loglik_trace.last().expect("nonempty trace")
    }

    /// MAP group per sequence, ties toward the smaller index.
    pub fn assignments(&self) -> Vec<usize> {
        assignments_from(&self.responsibilities)
    }
}

/// Argmax down each column, ties toward the smaller group index.
pub fn assignments_from(responsibilities: &Array2<f64>) -> Vec<usize> {
    responsibilities
        .columns()
        .into_iter()
        .map(|col| {
            let mut best = 0;
            for (g, &z) in col.iter().enumerate() {
                if z > col[best] {
                    best = g;
                }
            }
            best
        })
        .collect()
}

/// MAP classification of every sequence in `dataset`; labelled sequences map
/// to their own label.
pub fn classify(model: &FittedModel, dataset: &Dataset) -> Result<Vec<usize>> {
    Ok(assignments_from(&model.responsibilities(dataset)?))
}

/// Number of free parameters: G−1 mixing weights, G(J−1) initial
/// probabilities, and the per-group transition structure — J(J−1) free
/// entries for the self-transition and continuous families, J(J−2) when the
/// diagonal is structurally zero.
pub fn free_parameter_count(kind: ModelKind, num_groups: usize, num_states: usize) -> Result<usize> {
    let (g, j) = (num_groups, num_states);
    if g < 1 || j < 1 {
        return Err(Error::InvalidData("need at least one group and state".into()));
    }
    let structure = match kind {
        ModelKind::Dwm | ModelKind::Cm => g * j * (j - 1),
        ModelKind::Dm => {
            if j < 2 {
                return Err(Error::InvalidData(
                    "the no-self-transition model needs at least two states".into(),
                ));
            }
            g * j * (j - 2)
        }
    };
    Ok((g - 1) + g * (j - 1) + structure)
}

/// Bayesian information criterion, larger is better.
pub fn bic(loglik: f64, free_parameters: usize, n: usize) -> f64 {
    2.0 * loglik - free_parameters as f64 * (n as f64).ln()
}

/// Convergence test on three consecutive log-likelihood values: extrapolate
/// the trace's limit from its acceleration and stop once the projected gain
/// is a nonnegative amount below `epsilon`. A flat trace stops immediately.
pub fn aitken_should_stop(l_prev: f64, l_curr: f64, l_next: f64, epsilon: f64) -> bool {
    let denom = l_curr - l_prev;
    if denom.abs() < 1e-14 {
        return true;
    }
    let accel = (l_next - l_curr) / denom;
    let projected = l_curr + (l_next - l_curr) / (1.0 - accel);
    let gain = projected - l_curr;
    (0.0..epsilon).contains(&gain)
}

/// Draw a fresh random model: weights and probability rows from flat
/// simplex draws, generator rates uniform on (0.05, 1.0).
pub fn random_initialize(
    dataset: &Dataset,
    num_groups: usize,
    kind: ModelKind,
    rng: &mut ChaCha8Rng,
) -> Result<FittedModel> {
    let j = dataset.num_states;
    Ok(match kind {
        ModelKind::Dwm | ModelKind::Dm => {
            let variant = if kind == ModelKind::Dwm {
                DiscreteVariant::WithSelfTransitions
            } else {
                DiscreteVariant::NoSelfTransitions
            };
            FittedModel::Discrete(random_discrete(num_groups, j, variant, rng)?)
        }
        ModelKind::Cm => FittedModel::Continuous(random_continuous(num_groups, j, rng)?),
    })
}

fn random_discrete(
    g_count: usize,
    j_count: usize,
    variant: DiscreteVariant,
    rng: &mut ChaCha8Rng,
) -> Result<DiscreteMixtureModel> {
    if !variant.allows_self_transitions() && j_count < 2 {
        return Err(Error::InvalidData(
            "the no-self-transition model needs at least two states".into(),
        ));
    }
    let weights = Array1::from_vec(draw_simplex(g_count, rng));
    let mut initial_probs = Array2::zeros((g_count, j_count));
    let mut transitions = Vec::with_capacity(g_count);
    for g in 0..g_count {
        initial_probs
            .row_mut(g)
            .assign(&Array1::from_vec(draw_simplex(j_count, rng)));
        let mut trans = Array2::zeros((j_count, j_count));
        for j in 0..j_count {
            if variant.allows_self_transitions() {
                trans
                    .row_mut(j)
                    .assign(&Array1::from_vec(draw_simplex(j_count, rng)));
            } else {
                let off = draw_simplex(j_count - 1, rng);
                let mut next = 0;
                for k in 0..j_count {
                    if k != j {
                        trans[[j, k]] = off[next];
                        next += 1;
                    }
                }
            }
        }
        transitions.push(trans);
    }
    Ok(DiscreteMixtureModel {
        weights,
        initial_probs,
        transitions,
        variant,
    })
}

fn random_continuous(
    g_count: usize,
    j_count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ContinuousMixtureModel> {
    if j_count < 2 {
        return Err(Error::InvalidData(
            "the continuous-time model needs at least two states".into(),
        ));
    }
    let weights = Array1::from_vec(draw_simplex(g_count, rng));
    let mut initial_probs = Array2::zeros((g_count, j_count));
    let mut generators = Vec::with_capacity(g_count);
    for g in 0..g_count {
        initial_probs
            .row_mut(g)
            .assign(&Array1::from_vec(draw_simplex(j_count, rng)));
        let mut rates = Array2::zeros((j_count, j_count));
        for j in 0..j_count {
            for k in 0..j_count {
                if k != j {
                    rates[[j, k]] = rng.gen_range(0.05..1.0);
                }
            }
        }
        generators.push(GeneratorMatrix::from_off_diagonal(rates)?);
    }
    Ok(ContinuousMixtureModel {
        weights,
        initial_probs,
        generators,
    })
}

struct EmRun<M> {
    model: M,
    responsibilities: Array2<f64>,
    trace: Vec<f64>,
    converged: bool,
    floor_decreases: usize,
    hard_decreases: usize,
}

/// Drive EM from `model`. With `stop_epsilon` set, the acceleration rule
/// decides termination (up to `max_steps` iterations); without it, exactly
/// `max_steps` iterations run, as in the short bursts of the multi-start
/// phase.
fn run_em<M: MarkovMixture>(
    mut model: M,
    stats: &[TransitionCounts],
    labels: &[Option<usize>],
    opts: &MStepOptions,
    max_steps: usize,
    stop_epsilon: Option<f64>,
) -> Result<EmRun<M>> {
    let mut trace: Vec<f64> = Vec::with_capacity(max_steps.min(64) + 1);
    let mut floor_decreases = 0;
    let mut hard_decreases = 0;
    let mut last_floor_events = 0;
    let mut converged = false;
    loop {
        let densities = model.log_density_matrix(stats);
        let loglik = log_likelihood_from(&densities, model.weights(), labels)?;
        if let Some(&prev) = trace.last() {
            if loglik < prev - 1e-8 * prev.abs() {
                if last_floor_events > 0 {
                    floor_decreases += 1;
                    log::debug!(
                        "log-likelihood dipped {} -> {} with the floor binding",
                        prev,
                        loglik
                    );
                } else {
                    hard_decreases += 1;
                    log::warn!("log-likelihood decreased {} -> {}", prev, loglik);
                }
            }
        }
        trace.push(loglik);
        let steps_done = trace.len() - 1;
        if let Some(eps) = stop_epsilon {
            if trace.len() >= 3
                && aitken_should_stop(
                    trace[trace.len() - 3],
                    trace[trace.len() - 2],
                    trace[trace.len() - 1],
                    eps,
                )
            {
                converged = true;
            }
        }
        if converged || steps_done >= max_steps {
            let responsibilities = responsibilities_from(&densities, model.weights(), labels)?;
            return Ok(EmRun {
                model,
                responsibilities,
                trace,
                converged,
                floor_decreases,
                hard_decreases,
            });
        }
        let resp = responsibilities_from(&densities, model.weights(), labels)?;
        let (next, floor_events) = model
            .reestimate(stats, &resp, opts)
            .map_err(|d| Error::FitFailed(d.to_string()))?;
        last_floor_events = floor_events;
        model = next;
    }
}

struct ShortRun<M> {
    start_index: usize,
    model: M,
    loglik: f64,
}

/// Run every random start for a few iterations and rank the survivors by
/// final observed log-likelihood, best first.
fn short_phase<M, F>(
    stats: &[TransitionCounts],
    labels: &[Option<usize>],
    config: &EmConfig,
    num_groups: usize,
    init: F,
) -> Result<Vec<ShortRun<M>>>
where
    M: MarkovMixture,
    F: Fn(&mut ChaCha8Rng) -> Result<M> + Sync,
{
    let opts = config.m_step_options();
    let runs: Vec<std::result::Result<ShortRun<M>, String>> = (0..config.num_starts)
        .into_par_iter()
        .map(|start| {
            let mut rng = rng_stream(
                config.seed,
                &[config.model_kind as u64, num_groups as u64, start as u64],
            );
            let model = init(&mut rng).map_err(|e| e.to_string())?;
            let run = run_em(model, stats, labels, &opts, config.short_iters, None)
                .map_err(|e| e.to_string())?;
            Ok(ShortRun {
                start_index: start,
                model: run.model,
                loglik: *run.trace.last().unwrap(),
            })
        })
        .collect();

    let mut survivors: Vec<ShortRun<M>> = Vec::new();
    let mut last_error = String::new();
    for run in runs {
        match run {
            Ok(r) => survivors.push(r),
            Err(e) => last_error = e,
        }
    }
    if survivors.is_empty() {
        return Err(Error::FitFailed(format!(
            "all {} starts failed; last error: {last_error}",
            config.num_starts
        )));
    }
    // Best first; equal likelihoods keep the smaller start index.
    survivors.sort_by(|a, b| {
        b.loglik
            .partial_cmp(&a.loglik)
            .unwrap()
            .then(a.start_index.cmp(&b.start_index))
    });
    Ok(survivors)
}

/// Multi-start initialization: run `num_starts` short EM bursts and return
/// the end state of the burst with the greatest observed log-likelihood.
pub fn em_em(dataset: &Dataset, num_groups: usize, config: &EmConfig) -> Result<FittedModel> {
    let prepared = Prepared::build(dataset, num_groups, config)?;
    match config.model_kind {
        ModelKind::Dwm | ModelKind::Dm => {
            let variant = discrete_variant(config.model_kind);
            let runs = short_phase(
                &prepared.stats,
                &prepared.labels,
                config,
                num_groups,
                |rng| random_discrete(num_groups, prepared.num_states, variant, rng),
            )?;
            Ok(FittedModel::Discrete(runs.into_iter().next().unwrap().model))
        }
        ModelKind::Cm => {
            let runs = short_phase(
                &prepared.stats,
                &prepared.labels,
                config,
                num_groups,
                |rng| random_continuous(num_groups, prepared.num_states, rng),
            )?;
            Ok(FittedModel::Continuous(
                runs.into_iter().next().unwrap().model,
            ))
        }
    }
}

fn discrete_variant(kind: ModelKind) -> DiscreteVariant {
    match kind {
        ModelKind::Dwm => DiscreteVariant::WithSelfTransitions,
        ModelKind::Dm => DiscreteVariant::NoSelfTransitions,
        ModelKind::Cm => unreachable!("not a discrete kind"),
    }
}

/// Pre-validated fitting inputs.
struct Prepared {
    stats: Vec<TransitionCounts>,
    labels: Vec<Option<usize>>,
    num_states: usize,
}

impl Prepared {
    fn build(dataset: &Dataset, num_groups: usize, config: &EmConfig) -> Result<Prepared> {
        config.validate()?;
        if num_groups < 1 {
            return Err(Error::InvalidData("need at least one group".into()));
        }
        if dataset.is_empty() {
            return Err(Error::InvalidData("dataset has no sequences".into()));
        }
        let labels = dataset.labels();
        check_labels(&labels, num_groups)?;
        let kind = config.model_kind;
        if kind.requires_times() && !dataset.all_have_times() {
            return Err(Error::InvalidData(
                "the continuous-time model needs holding times on every sequence".into(),
            ));
        }
        if !kind.allows_self_transitions() {
            if let Some(i) = dataset
                .sequences
                .iter()
                .position(|s| s.has_self_transitions())
            {
                return Err(Error::InvalidData(format!(
                    "sequence {} repeats a state consecutively; collapse repeats before fitting the {} model",
                    i + 1,
                    kind
                )));
            }
        }
        free_parameter_count(kind, num_groups, dataset.num_states)?;
        if kind == ModelKind::Cm && dataset.num_states < 2 {
            return Err(Error::InvalidData(
                "the continuous-time model needs at least two states".into(),
            ));
        }
        Ok(Prepared {
            stats: dataset.summaries(),
            labels,
            num_states: dataset.num_states,
        })
    }
}

/// Fit a mixture with `num_groups` groups: multi-start initialization
/// followed by the full EM loop. Starts are retried in likelihood order if
/// the leading one degenerates during the long run.
pub fn fit(dataset: &Dataset, num_groups: usize, config: &EmConfig) -> Result<FitResult> {
    let prepared = Prepared::build(dataset, num_groups, config)?;
    match config.model_kind {
        ModelKind::Dwm | ModelKind::Dm => {
            let variant = discrete_variant(config.model_kind);
            fit_generic(&prepared, num_groups, config, |rng| {
                random_discrete(num_groups, prepared.num_states, variant, rng)
            })
            .map(|(r, m)| finish(r, FittedModel::Discrete(m), dataset.len()))
        }
        ModelKind::Cm => fit_generic(&prepared, num_groups, config, |rng| {
            random_continuous(num_groups, prepared.num_states, rng)
        })
        .map(|(r, m)| finish(r, FittedModel::Continuous(m), dataset.len())),
    }
}

type GenericOutcome<M> = (
    (Vec<f64>, Array2<f64>, usize, bool, usize, usize),
    M,
);

fn fit_generic<M, F>(
    prepared: &Prepared,
    num_groups: usize,
    config: &EmConfig,
    init: F,
) -> Result<GenericOutcome<M>>
where
    M: MarkovMixture,
    F: Fn(&mut ChaCha8Rng) -> Result<M> + Sync,
{
    let opts = config.m_step_options();
    let candidates = short_phase(&prepared.stats, &prepared.labels, config, num_groups, init)?;
    let mut last_error = Error::FitFailed("no start survived".into());
    for candidate in candidates {
        match run_em(
            candidate.model,
            &prepared.stats,
            &prepared.labels,
            &opts,
            config.max_iters,
            Some(config.epsilon),
        ) {
            Ok(run) => {
                return Ok((
                    (
                        run.trace,
                        run.responsibilities,
                        candidate.start_index,
                        run.converged,
                        run.floor_decreases,
                        run.hard_decreases,
                    ),
                    run.model,
                ));
            }
            Err(e) => last_error = e,
        }
    }
    Err(last_error)
}

fn finish(
    parts: (Vec<f64>, Array2<f64>, usize, bool, usize, usize),
    model: FittedModel,
    n: usize,
) -> FitResult {
    let (loglik_trace, responsibilities, chosen_start, converged, floor_decreases, hard_decreases) =
        parts;
    let iterations = loglik_trace.len() - 1;
    let loglik = *loglik_trace.last().unwrap();
    let bic_value = bic(loglik, model.free_parameters(), n);
    FitResult {
        model,
        responsibilities,
        loglik_trace,
        bic: bic_value,
        iterations,
        chosen_start,
        converged,
        floor_decreases,
        hard_decreases,
    }
}

/// One row of the model-selection table.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub num_groups: usize,
    pub bic: Option<f64>,
    pub loglik: Option<f64>,
    pub error: Option<String>,
}

/// Fits for every candidate number of groups, with the BIC-best one marked.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub fits: Vec<Option<FitResult>>,
    best_index: usize,
}

impl SweepResult {
    pub fn best(&self) -> &FitResult {
        self.fits[self.best_index]
            .as_ref()
            .expect("best index points at a successful fit")
    }

    pub fn best_num_groups(&self) -> usize {
        self.rows[self.best_index].num_groups
    }
}

/// Fit every G in the configured range and select the BIC maximizer, ties
/// toward the smaller G. Candidates run in parallel; per-G failures are
/// recorded, and the sweep fails only if every G fails.
pub fn sweep(dataset: &Dataset, config: &EmConfig) -> Result<SweepResult> {
    config.validate()?;
    let outcomes: Vec<(usize, Result<FitResult>)> = config
        .g_range
        .clone()
        .collect::<Vec<usize>>()
        .into_par_iter()
        .map(|g| (g, fit(dataset, g, config)))
        .collect();
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for (g, outcome) in outcomes {
        match outcome {
            Ok(result) => {
                rows.push(SweepRow {
                    num_groups: g,
                    bic: Some(result.bic),
                    loglik: Some(result.log_likelihood()),
                    error: None,
                });
                fits.push(Some(result));
            }
            Err(e) => {
                rows.push(SweepRow {
                    num_groups: g,
                    bic: None,
                    loglik: None,
                    error: Some(e.to_string()),
                });
                fits.push(None);
            }
        }
    }
    let mut best_index: Option<usize> = None;
    for (i, row) in rows.iter().enumerate() {
        if let Some(b) = row.bic {
            let better = match best_index {
                None => true,
                Some(prev) => b > rows[prev].bic.unwrap(),
            };
            if better {
                best_index = Some(i);
            }
        }
    }
    match best_index {
        Some(best_index) => Ok(SweepResult {
            rows,
            fits,
            best_index,
        }),
        None => Err(Error::FitFailed(
            "every candidate number of groups failed to fit".into(),
        )),
    }
}
