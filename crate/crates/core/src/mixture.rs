//! Machinery shared by the discrete- and continuous-time mixtures: the
//! model trait the EM engine drives, plus log-domain responsibilities and
//! observed log-likelihood.

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use crate::error::{DegenerateStart, Error, Result};
use crate::math::log_sum_exp;
use crate::seq::TransitionCounts;

/// Group responsibility masses below this are treated as a dead group and
/// fail the start.
pub const DEGENERATE_MASS: f64 = 1e-8;

/// Holding-time masses below this make a generator row unidentifiable.
pub const DEGENERATE_TIME: f64 = 1e-12;

/// Which generator update the continuous M-step applies; ignored by the
/// discrete models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GeneratorUpdate {
    /// The stationary maximizer of the expected complete-data
    /// log-likelihood: off-diagonal rates scale weighted transition counts
    /// by (exits + terminals) / (time · exits).
    #[default]
    ClosedForm,
    /// An alternative that divides counts by (time + exits) / (terminals +
    /// exits). Kept for side-by-side comparison; it does not stationarize
    /// the expected complete-data log-likelihood.
    CountTimeRatio,
}

/// Options threaded through every M-step.
#[derive(Debug, Clone, Copy)]
pub struct MStepOptions {
    pub floor: f64,
    pub generator_update: GeneratorUpdate,
}

impl MStepOptions {
    pub fn with_floor(floor: f64) -> Self {
        MStepOptions {
            floor,
            generator_update: GeneratorUpdate::default(),
        }
    }
}

/// Common surface of the two mixture families. Densities are evaluated on
/// pre-validated sufficient statistics; the engine checks compatibility once
/// per fit, not per evaluation.
pub trait MarkovMixture: Sized + Clone + Send + Sync {
    fn num_groups(&self) -> usize;
    fn num_states(&self) -> usize;
    fn weights(&self) -> &Array1<f64>;

    /// Log density of one sequence's statistics under component `g`,
    /// without the mixing weight.
    fn log_density(&self, stats: &TransitionCounts, g: usize) -> f64;

    /// Verify that the statistics can be scored by this model at all.
    fn check_compatible(&self, stats: &[TransitionCounts]) -> Result<()>;

    /// Closed-form M-step producing the next model. Returns the new model
    /// and the number of parameters clamped at the floor.
    fn reestimate(
        &self,
        stats: &[TransitionCounts],
        responsibilities: &Array2<f64>,
        opts: &MStepOptions,
    ) -> std::result::Result<(Self, usize), DegenerateStart>;

    fn free_parameters(&self) -> usize;

    /// Log component densities for every (group, sequence) pair, evaluated
    /// in parallel over sequences. Column `i` holds sequence `i`.
    fn log_density_matrix(&self, stats: &[TransitionCounts]) -> Array2<f64> {
        let g_count = self.num_groups();
        let columns: Vec<Vec<f64>> = stats
            .par_iter()
            .with_min_len(64)
            .map(|s| (0..g_count).map(|g| self.log_density(s, g)).collect())
            .collect();
        let mut out = Array2::zeros((g_count, stats.len()));
        for (i, col) in columns.iter().enumerate() {
            for (g, &v) in col.iter().enumerate() {
                out[[g, i]] = v;
            }
        }
        out
    }
}

/// Posterior group probabilities per sequence, computed in the log domain.
/// Labelled sequences keep their fixed one-hot membership. Columns sum to
/// one exactly up to a final renormalization.
pub fn responsibilities_from(
    log_densities: &Array2<f64>,
    weights: &Array1<f64>,
    labels: &[Option<usize>],
) -> Result<Array2<f64>> {
    let (g_count, n) = log_densities.dim();
    let mut resp = Array2::zeros((g_count, n));
    let log_weights: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
    let mut scores = vec![0.0; g_count];
    for i in 0..n {
        if let Some(label) = labels[i] {
            resp[[label, i]] = 1.0;
            continue;
        }
        for g in 0..g_count {
            scores[g] = log_weights[g] + log_densities[[g, i]];
        }
        let lse = log_sum_exp(&scores);
        if !lse.is_finite() {
            return Err(Error::NonFinite(format!(
                "sequence {} has log-density {} under every group",
                i + 1,
                lse
            )));
        }
        let mut total = 0.0;
        for g in 0..g_count {
            let z = (scores[g] - lse).exp();
            resp[[g, i]] = z;
            total += z;
        }
        for g in 0..g_count {
            resp[[g, i]] /= total;
        }
        debug_assert!((resp.column(i).sum() - 1.0).abs() < 1e-10);
    }
    Ok(resp)
}

/// Observed log-likelihood from a density matrix: unlabelled sequences
/// contribute the log mixture, labelled ones the log of their own weighted
/// component.
pub fn log_likelihood_from(
    log_densities: &Array2<f64>,
    weights: &Array1<f64>,
    labels: &[Option<usize>],
) -> Result<f64> {
    let (g_count, n) = log_densities.dim();
    let log_weights: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
    let mut scores = vec![0.0; g_count];
    let mut total = 0.0;
    for i in 0..n {
        let term = match labels[i] {
            Some(label) => log_weights[label] + log_densities[[label, i]],
            None => {
                for g in 0..g_count {
                    scores[g] = log_weights[g] + log_densities[[g, i]];
                }
                log_sum_exp(&scores)
            }
        };
        if term.is_nan() {
            return Err(Error::NonFinite(format!(
                "sequence {} has NaN log-density",
                i + 1
            )));
        }
        total += term;
    }
    Ok(total)
}

/// One-hot column check used when validating labelled data against G.
pub fn check_labels(labels: &[Option<usize>], num_groups: usize) -> Result<()> {
    for (i, label) in labels.iter().enumerate() {
        if let Some(g) = label {
            if *g >= num_groups {
                return Err(Error::InvalidData(format!(
                    "sequence {} is labelled with group {} but the model has {} groups",
                    i + 1,
                    g + 1,
                    num_groups
                )));
            }
        }
    }
    Ok(())
}
