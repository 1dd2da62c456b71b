//! Continuous-time first-order Markov mixture: infinitesimal generator
//! matrices, exponential holding times, and the closed-form generator
//! update.

use ndarray::{Array1, Array2};

use crate::error::{DegenerateStart, Error, Result};
use crate::math::floor_and_normalize;
use crate::mixture::{
    log_likelihood_from, responsibilities_from, GeneratorUpdate, MStepOptions, MarkovMixture,
    DEGENERATE_MASS, DEGENERATE_TIME,
};
use crate::seq::TransitionCounts;

/// Infinitesimal generator of a continuous-time Markov chain: nonnegative
/// off-diagonal rates, each diagonal entry the negated sum of its row's
/// off-diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    rates: Array2<f64>,
}

impl GeneratorMatrix {
    /// Build from a full matrix, validating the generator invariants.
    pub fn new(rates: Array2<f64>) -> Result<Self> {
        let q = GeneratorMatrix { rates };
        q.validate()?;
        Ok(q)
    }

    /// Build from a matrix whose off-diagonal entries are the rates; the
    /// diagonal is overwritten with the negated row sums.
    pub fn from_off_diagonal(mut rates: Array2<f64>) -> Result<Self> {
        let j_count = rates.nrows();
        for j in 0..j_count {
            let row_sum: f64 = (0..j_count)
                .filter(|&k| k != j)
                .map(|k| rates[[j, k]])
                .sum();
            rates[[j, j]] = -row_sum;
        }
        Self::new(rates)
    }

    pub fn validate(&self) -> Result<()> {
        let (r, c) = self.rates.dim();
        if r != c || r == 0 {
            return Err(Error::InvalidModel("generator is not square".into()));
        }
        for j in 0..r {
            let mut off_sum = 0.0;
            for k in 0..c {
                let q = self.rates[[j, k]];
                if !q.is_finite() {
                    return Err(Error::InvalidModel("non-finite generator entry".into()));
                }
                if j != k {
                    if q < 0.0 {
                        return Err(Error::InvalidModel(format!(
                            "rate ({}, {}) must be nonnegative, got {}",
                            j + 1,
                            k + 1,
                            q
                        )));
                    }
                    off_sum += q;
                }
            }
            let diag = self.rates[[j, j]];
            if diag >= 0.0 {
                return Err(Error::InvalidModel(format!(
                    "diagonal entry {} must be negative",
                    j + 1
                )));
            }
            if (diag + off_sum).abs() > 1e-12 * off_sum.max(1.0) {
                return Err(Error::InvalidModel(format!(
                    "row {} diagonal {} does not balance off-diagonal sum {}",
                    j + 1,
                    diag,
                    off_sum
                )));
            }
        }
        Ok(())
    }

    pub fn num_states(&self) -> usize {
        self.rates.nrows()
    }

    pub fn rates(&self) -> &Array2<f64> {
        &self.rates
    }

    /// Rate of leaving state `j`.
    pub fn exit_rate(&self, j: usize) -> f64 {
        -self.rates[[j, j]]
    }

    /// Mean holding time in state `j`, the reciprocal of its exit rate.
    pub fn expected_holding_time(&self, j: usize) -> f64 {
        1.0 / self.exit_rate(j)
    }

    /// The jump chain's transition probabilities: off-diagonal rates divided
    /// by the exit rate, with a zero diagonal. Rows sum to one.
    pub fn embedded_transition_probs(&self) -> Array2<f64> {
        let j_count = self.num_states();
        let mut probs = Array2::zeros((j_count, j_count));
        for j in 0..j_count {
            let exit = self.exit_rate(j);
            for k in 0..j_count {
                if k != j {
                    probs[[j, k]] = self.rates[[j, k]] / exit;
                }
            }
        }
        probs
    }
}

/// Mixture of continuous-time Markov chains.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousMixtureModel {
    pub weights: Array1<f64>,
    /// G×J; row g is group g's initial distribution.
    pub initial_probs: Array2<f64>,
    pub generators: Vec<GeneratorMatrix>,
}

impl ContinuousMixtureModel {
    pub fn new(
        weights: Array1<f64>,
        initial_probs: Array2<f64>,
        generators: Vec<GeneratorMatrix>,
    ) -> Result<Self> {
        let model = ContinuousMixtureModel {
            weights,
            initial_probs,
            generators,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let g_count = self.weights.len();
        let j_count = self.initial_probs.ncols();
        if g_count == 0 || j_count < 2 {
            return Err(Error::InvalidModel(
                "continuous mixture needs at least one group and two states".into(),
            ));
        }
        if self.initial_probs.nrows() != g_count || self.generators.len() != g_count {
            return Err(Error::InvalidModel("group count mismatch".into()));
        }
        check_simplex("weights", self.weights.as_slice().unwrap())?;
        for g in 0..g_count {
            check_simplex(
                &format!("initial probabilities of group {}", g + 1),
                self.initial_probs.row(g).as_slice().unwrap(),
            )?;
            if self.generators[g].num_states() != j_count {
                return Err(Error::InvalidModel(format!(
                    "generator of group {} is not {}x{}",
                    g + 1,
                    j_count,
                    j_count
                )));
            }
            self.generators[g].validate()?;
        }
        Ok(())
    }

    /// Log of group `g`'s component density: initial probability, one rate
    /// factor per transition, the terminal state's exit rate, and the
    /// exponential holding-time factor over total time per state.
    ///
    /// Errors if the statistics carry no holding times or contain
    /// self-transitions.
    pub fn log_component_density(&self, stats: &TransitionCounts, g: usize) -> Result<f64> {
        if stats.time_in_state.is_none() {
            return Err(Error::InvalidData(
                "holding times required by the continuous-time model".into(),
            ));
        }
        if stats.has_self_transitions() {
            return Err(Error::InvalidData(
                "self-transitions present; collapse repeats first".into(),
            ));
        }
        Ok(self.log_density(stats, g))
    }
}

fn check_simplex(what: &str, row: &[f64]) -> Result<()> {
    if row.iter().any(|&v| !(0.0..=1.0).contains(&v) || !v.is_finite()) {
        return Err(Error::InvalidModel(format!("{what}: entry outside [0, 1]")));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidModel(format!("{what}: sums to {sum}, not 1")));
    }
    Ok(())
}

impl MarkovMixture for ContinuousMixtureModel {
    fn num_groups(&self) -> usize {
        self.weights.len()
    }

    fn num_states(&self) -> usize {
        self.initial_probs.ncols()
    }

    fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    fn log_density(&self, stats: &TransitionCounts, g: usize) -> f64 {
        let q = self.generators[g].rates();
        let mut ld = self.initial_probs[[g, stats.first_state]].ln();
        for ((j, k), &c) in stats.counts.indexed_iter() {
            if c > 0 && j != k {
                ld += c as f64 * q[[j, k]].ln();
            }
        }
        ld += self.generators[g].exit_rate(stats.last_state).ln();
        let times = stats
            .time_in_state
            .as_ref()
            .expect("continuous density needs holding times");
        for (j, &t) in times.iter().enumerate() {
            if t > 0.0 {
                ld += q[[j, j]] * t;
            }
        }
        ld
    }

    fn check_compatible(&self, stats: &[TransitionCounts]) -> Result<()> {
        for (i, s) in stats.iter().enumerate() {
            if s.num_states() != self.num_states() {
                return Err(Error::InvalidData(format!(
                    "sequence {} was summarized over {} states, model has {}",
                    i + 1,
                    s.num_states(),
                    self.num_states()
                )));
            }
            if s.time_in_state.is_none() {
                return Err(Error::InvalidData(format!(
                    "sequence {} has no holding times",
                    i + 1
                )));
            }
            if s.has_self_transitions() {
                return Err(Error::InvalidData(format!(
                    "sequence {} repeats a state consecutively; collapse repeats first",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    fn reestimate(
        &self,
        stats: &[TransitionCounts],
        responsibilities: &Array2<f64>,
        opts: &MStepOptions,
    ) -> std::result::Result<(Self, usize), DegenerateStart> {
        m_step(stats, responsibilities, opts.floor, opts.generator_update)
    }

    fn free_parameters(&self) -> usize {
        crate::em::free_parameter_count(
            crate::em::ModelKind::Cm,
            self.num_groups(),
            self.num_states(),
        )
        .expect("validated model has countable parameters")
    }
}

/// Posterior responsibilities; labelled columns are fixed one-hot.
pub fn e_step(
    model: &ContinuousMixtureModel,
    stats: &[TransitionCounts],
    labels: &[Option<usize>],
) -> Result<Array2<f64>> {
    model.check_compatible(stats)?;
    responsibilities_from(&model.log_density_matrix(stats), &model.weights, labels)
}

/// Observed log-likelihood of the data under the mixture.
pub fn observed_log_likelihood(
    model: &ContinuousMixtureModel,
    stats: &[TransitionCounts],
    labels: &[Option<usize>],
) -> Result<f64> {
    model.check_compatible(stats)?;
    log_likelihood_from(&model.log_density_matrix(stats), &model.weights, labels)
}

/// Closed-form M-step for the continuous mixture. Weights and initial
/// probabilities follow the discrete updates; each generator row is rebuilt
/// from the group's weighted transition counts, terminal-visit mass, and
/// holding times, floored on the off-diagonal with the diagonal recomputed.
pub fn m_step(
    stats: &[TransitionCounts],
    responsibilities: &Array2<f64>,
    floor: f64,
    update: GeneratorUpdate,
) -> std::result::Result<(ContinuousMixtureModel, usize), DegenerateStart> {
    let g_count = responsibilities.nrows();
    let n = stats.len();
    debug_assert_eq!(responsibilities.ncols(), n);
    let j_count = stats[0].num_states();
    let mut floor_events = 0;

    let mut weights = Array1::<f64>::zeros(g_count);
    for g in 0..g_count {
        let mass: f64 = responsibilities.row(g).sum();
        if mass < DEGENERATE_MASS {
            return Err(DegenerateStart::EmptyGroup { group: g });
        }
        weights[g] = mass / n as f64;
    }
    floor_events += floor_and_normalize(weights.as_slice_mut().unwrap(), floor, None);

    let mut initial_probs = Array2::<f64>::zeros((g_count, j_count));
    let mut generators = Vec::with_capacity(g_count);
    for g in 0..g_count {
        let mut counts = Array2::<f64>::zeros((j_count, j_count));
        let mut time = Array1::<f64>::zeros(j_count);
        let mut terminal = Array1::<f64>::zeros(j_count);
        for (i, s) in stats.iter().enumerate() {
            let z = responsibilities[[g, i]];
            if z == 0.0 {
                continue;
            }
            initial_probs[[g, s.first_state]] += z;
            terminal[s.last_state] += z;
            for (idx, &c) in s.counts.indexed_iter() {
                if c > 0 {
                    counts[idx] += z * c as f64;
                }
            }
            let t = s
                .time_in_state
                .as_ref()
                .expect("continuous M-step needs holding times");
            for (j, &tj) in t.iter().enumerate() {
                if tj > 0.0 {
                    time[j] += z * tj;
                }
            }
        }
        floor_events += floor_and_normalize(
            initial_probs.row_mut(g).as_slice_mut().unwrap(),
            floor,
            None,
        );

        let mut rates = Array2::<f64>::zeros((j_count, j_count));
        for j in 0..j_count {
            let t_j = time[j];
            if t_j < DEGENERATE_TIME {
                return Err(DegenerateStart::VanishingTime { group: g, state: j });
            }
            let exits: f64 = (0..j_count).filter(|&k| k != j).map(|k| counts[[j, k]]).sum();
            let term = terminal[j];
            for k in 0..j_count {
                if k == j {
                    continue;
                }
                let raw = match update {
                    GeneratorUpdate::ClosedForm => {
                        if exits > 0.0 {
                            counts[[j, k]] * (exits + term) / (t_j * exits)
                        } else {
                            // Only terminal visits: the total exit rate is
                            // identified as term / t_j but its split is not;
                            // spread it evenly.
                            term / t_j / (j_count - 1) as f64
                        }
                    }
                    GeneratorUpdate::CountTimeRatio => {
                        counts[[j, k]] * (term + exits) / (t_j + exits)
                    }
                };
                if raw < floor {
                    floor_events += 1;
                    rates[[j, k]] = floor;
                } else {
                    rates[[j, k]] = raw;
                }
            }
            let row_sum: f64 = (0..j_count).filter(|&k| k != j).map(|k| rates[[j, k]]).sum();
            rates[[j, j]] = -row_sum;
        }
        generators.push(GeneratorMatrix { rates });
    }

    Ok((
        ContinuousMixtureModel {
            weights,
            initial_probs,
            generators,
        },
        floor_events,
    ))
}
