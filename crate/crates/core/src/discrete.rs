//! Discrete-time first-order Markov mixture, in two variants: with
//! self-transitions allowed (suited to raw streams where a user may stay in
//! a category) and with self-transitions forbidden (the jump-chain view).

use ndarray::{Array1, Array2};

use crate::error::{DegenerateStart, Error, Result};
use crate::math::floor_and_normalize;
use crate::mixture::{
    log_likelihood_from, responsibilities_from, MStepOptions, MarkovMixture, DEGENERATE_MASS,
};
use crate::seq::TransitionCounts;

/// Whether the chain may remain in its current state on a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiscreteVariant {
    /// Self-transitions allowed; all J×J entries are free.
    WithSelfTransitions,
    /// Self-transitions forbidden; diagonal entries are structurally zero.
    NoSelfTransitions,
}

impl DiscreteVariant {
    pub fn allows_self_transitions(self) -> bool {
        matches!(self, DiscreteVariant::WithSelfTransitions)
    }
}

/// Mixture of discrete-time Markov chains: mixing weights, per-group initial
/// probabilities, and per-group row-stochastic transition matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMixtureModel {
    pub weights: Array1<f64>,
    /// G×J; row g is group g's initial distribution.
    pub initial_probs: Array2<f64>,
    /// One J×J transition matrix per group.
    pub transitions: Vec<Array2<f64>>,
    pub variant: DiscreteVariant,
}

impl DiscreteMixtureModel {
    pub fn new(
        weights: Array1<f64>,
        initial_probs: Array2<f64>,
        transitions: Vec<Array2<f64>>,
        variant: DiscreteVariant,
    ) -> Result<Self> {
        let model = DiscreteMixtureModel {
            weights,
            initial_probs,
            transitions,
            variant,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let g_count = self.weights.len();
        let j_count = self.initial_probs.ncols();
        if g_count == 0 || j_count == 0 {
            return Err(Error::InvalidModel("empty model".into()));
        }
        if self.initial_probs.nrows() != g_count || self.transitions.len() != g_count {
            return Err(Error::InvalidModel("group count mismatch".into()));
        }
        check_simplex("weights", self.weights.as_slice().unwrap())?;
        for g in 0..g_count {
            let alpha = self.initial_probs.row(g);
            check_simplex(
                &format!("initial probabilities of group {}", g + 1),
                alpha.as_slice().unwrap(),
            )?;
            let trans = &self.transitions[g];
            if trans.dim() != (j_count, j_count) {
                return Err(Error::InvalidModel(format!(
                    "transition matrix of group {} is not {}x{}",
                    g + 1,
                    j_count,
                    j_count
                )));
            }
            for j in 0..j_count {
                check_simplex(
                    &format!("transition row {} of group {}", j + 1, g + 1),
                    trans.row(j).as_slice().unwrap(),
                )?;
                if !self.variant.allows_self_transitions() && trans[[j, j]] != 0.0 {
                    return Err(Error::InvalidModel(format!(
                        "group {} has a nonzero self-transition at state {}",
                        g + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(())
    }

    /// Log of group `g`'s component density for one sequence, per the chain
    /// factorization: initial probability times one factor per transition.
    ///
    /// Errors if the data contain self-transitions the variant forbids.
    pub fn log_component_density(&self, stats: &TransitionCounts, g: usize) -> Result<f64> {
        if !self.variant.allows_self_transitions() && stats.has_self_transitions() {
            return Err(Error::InvalidData(
                "self-transitions present but the model forbids them".into(),
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

impl MarkovMixture for DiscreteMixtureModel {
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
        let trans = &self.transitions[g];
        let mut ld = self.initial_probs[[g, stats.first_state]].ln();
        for (idx, &c) in stats.counts.indexed_iter() {
            if c > 0 {
                ld += c as f64 * trans[idx].ln();
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
            if !self.variant.allows_self_transitions() && s.has_self_transitions() {
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
        m_step(stats, responsibilities, self.variant, opts.floor)
    }

    fn free_parameters(&self) -> usize {
        crate::em::free_parameter_count(
            match self.variant {
                DiscreteVariant::WithSelfTransitions => crate::em::ModelKind::Dwm,
                DiscreteVariant::NoSelfTransitions => crate::em::ModelKind::Dm,
            },
            self.num_groups(),
            self.num_states(),
        )
        .expect("validated model has countable parameters")
    }
}

/// Posterior responsibilities for every sequence; labelled columns are fixed
/// one-hot.
pub fn e_step(
    model: &DiscreteMixtureModel,
    stats: &[TransitionCounts],
    labels: &[Option<usize>],
) -> Result<Array2<f64>> {
    model.check_compatible(stats)?;
    responsibilities_from(&model.log_density_matrix(stats), &model.weights, labels)
}

/// Observed log-likelihood of the data under the mixture.
pub fn observed_log_likelihood(
    model: &DiscreteMixtureModel,
    stats: &[TransitionCounts],
    labels: &[Option<usize>],
) -> Result<f64> {
    model.check_compatible(stats)?;
    log_likelihood_from(&model.log_density_matrix(stats), &model.weights, labels)
}

/// Closed-form M-step: mixing weights from responsibility masses, initial
/// probabilities from weighted first-state counts, transition rows from
/// weighted transition counts, each floored and renormalized.
///
/// Returns the model and the number of entries clamped at the floor.
pub fn m_step(
    stats: &[TransitionCounts],
    responsibilities: &Array2<f64>,
    variant: DiscreteVariant,
    floor: f64,
) -> std::result::Result<(DiscreteMixtureModel, usize), DegenerateStart> {
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
    let mut transitions = vec![Array2::<f64>::zeros((j_count, j_count)); g_count];
    for g in 0..g_count {
        for (i, s) in stats.iter().enumerate() {
            let z = responsibilities[[g, i]];
            if z == 0.0 {
                continue;
            }
            initial_probs[[g, s.first_state]] += z;
            for (idx, &c) in s.counts.indexed_iter() {
                if c > 0 {
                    transitions[g][idx] += z * c as f64;
                }
            }
        }
        floor_events += floor_and_normalize(
            initial_probs.row_mut(g).as_slice_mut().unwrap(),
            floor,
            None,
        );
        for j in 0..j_count {
            let skip = if variant.allows_self_transitions() {
                None
            } else {
                Some(j)
            };
            floor_events += floor_and_normalize(
                transitions[g].row_mut(j).as_slice_mut().unwrap(),
                floor,
                skip,
            );
        }
    }

    Ok((
        DiscreteMixtureModel {
            weights,
            initial_probs,
            transitions,
            variant,
        },
        floor_events,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seq::{summarize, ClickSequence};
    use approx::assert_relative_eq;
    use ndarray::array;

    fn stats_of(states: Vec<usize>, j: usize) -> TransitionCounts {
        summarize(&ClickSequence::new(states), j)
    }

    fn two_state_model(alpha0: f64, lam: [[f64; 2]; 2]) -> DiscreteMixtureModel {
        DiscreteMixtureModel::new(
            array![1.0],
            array![[alpha0, 1.0 - alpha0]],
            vec![array![[lam[0][0], lam[0][1]], [lam[1][0], lam[1][1]]]],
            DiscreteVariant::WithSelfTransitions,
        )
        .unwrap()
    }

    #[test]
    fn density_of_single_visit_is_initial_prob() {
        let model = two_state_model(0.3, [[0.5, 0.5], [0.5, 0.5]]);
        let stats = stats_of(vec![0], 2);
        assert_relative_eq!(
            model.log_component_density(&stats, 0).unwrap(),
            0.3f64.ln()
        );
    }

    #[test]
    fn density_matches_hand_evaluation() {
        // Uniform transition rows: two transitions contribute 2·ln(1/2).
        let f = 1e-6;
        let model = two_state_model(1.0 - f, [[0.5, 0.5], [0.5, 0.5]]);
        let stats = stats_of(vec![0, 1, 0], 2);
        let expected = (1.0 - f).ln() + 2.0 * 0.5f64.ln();
        assert_relative_eq!(
            model.log_component_density(&stats, 0).unwrap(),
            expected,
            max_relative = 1e-14
        );
    }

    #[test]
    fn floored_entries_enter_density_as_floor() {
        let f = 1e-6;
        let model = two_state_model(0.5, [[f, 1.0 - f], [0.5, 0.5]]);
        // Two 0->0 self-transitions hit the floored entry.
        let stats = stats_of(vec![0, 0, 0], 2);
        let expected = 0.5f64.ln() + 2.0 * f.ln();
        assert_relative_eq!(
            model.log_component_density(&stats, 0).unwrap(),
            expected,
            max_relative = 1e-14
        );
    }

    #[test]
    fn no_self_transition_variant_rejects_diagonal_counts() {
        let model = DiscreteMixtureModel::new(
            array![1.0],
            array![[0.5, 0.5]],
            vec![array![[0.0, 1.0], [1.0, 0.0]]],
            DiscreteVariant::NoSelfTransitions,
        )
        .unwrap();
        let stats = stats_of(vec![0, 0], 2);
        assert!(model.log_component_density(&stats, 0).is_err());
    }

    #[test]
    fn e_step_single_group_is_all_ones() {
        let model = two_state_model(0.5, [[0.5, 0.5], [0.5, 0.5]]);
        let stats = vec![stats_of(vec![0, 1], 2), stats_of(vec![1], 2)];
        let resp = e_step(&model, &stats, &[None, None]).unwrap();
        assert!(resp.iter().all(|&z| z == 1.0));
    }

    #[test]
    fn e_step_identical_components_split_evenly() {
        let model = DiscreteMixtureModel::new(
            array![0.5, 0.5],
            array![[0.4, 0.6], [0.4, 0.6]],
            vec![
                array![[0.2, 0.8], [0.7, 0.3]],
                array![[0.2, 0.8], [0.7, 0.3]],
            ],
            DiscreteVariant::WithSelfTransitions,
        )
        .unwrap();
        let stats = vec![stats_of(vec![0, 1, 1], 2)];
        let resp = e_step(&model, &stats, &[None]).unwrap();
        assert_relative_eq!(resp[[0, 0]], 0.5, max_relative = 1e-12);
        assert_relative_eq!(resp[[1, 0]], 0.5, max_relative = 1e-12);
    }

    #[test]
    fn e_step_matches_direct_density_ratio() {
        let model = DiscreteMixtureModel::new(
            array![0.3, 0.7],
            array![[0.9, 0.1], [0.2, 0.8]],
            vec![
                array![[0.6, 0.4], [0.3, 0.7]],
                array![[0.1, 0.9], [0.8, 0.2]],
            ],
            DiscreteVariant::WithSelfTransitions,
        )
        .unwrap();
        let stats = vec![stats_of(vec![0, 1, 0, 0], 2)];
        let resp = e_step(&model, &stats, &[None]).unwrap();
        // Direct evaluation of the two weighted component densities.
        let d1 = 0.3 * 0.9 * (0.4 * 0.3 * 0.6);
        let d2 = 0.7 * 0.2 * (0.9 * 0.8 * 0.1);
        assert_relative_eq!(resp[[0, 0]], d1 / (d1 + d2), max_relative = 1e-12);
        assert_relative_eq!(resp[[1, 0]], d2 / (d1 + d2), max_relative = 1e-12);
    }

    #[test]
    fn m_step_weights_follow_responsibility_mass() {
        let stats = vec![
            stats_of(vec![0, 1], 2),
            stats_of(vec![1, 0], 2),
            stats_of(vec![0], 2),
            stats_of(vec![1], 2),
        ];
        let resp = array![[1.0, 0.0, 0.5, 0.5], [0.0, 1.0, 0.5, 0.5]];
        let (model, _) =
            m_step(&stats, &resp, DiscreteVariant::WithSelfTransitions, 0.0).unwrap();
        assert_relative_eq!(model.weights[0], 0.5, max_relative = 1e-12);
        assert_relative_eq!(model.weights[1], 0.5, max_relative = 1e-12);
    }

    #[test]
    fn m_step_initial_probs_from_first_states() {
        let stats = vec![stats_of(vec![0, 2], 3), stats_of(vec![1, 2], 3)];
        let resp = array![[1.0, 1.0]];
        let (model, _) =
            m_step(&stats, &resp, DiscreteVariant::WithSelfTransitions, 0.0).unwrap();
        assert_relative_eq!(model.initial_probs[[0, 0]], 0.5);
        assert_relative_eq!(model.initial_probs[[0, 1]], 0.5);
        assert_relative_eq!(model.initial_probs[[0, 2]], 0.0);
    }

    #[test]
    fn m_step_transition_rows_are_count_ratios() {
        // Pairs: one 0->0 and three 0->1.
        let stats = vec![stats_of(vec![0, 0, 1, 0, 1, 0, 1], 2)];
        let resp = array![[1.0]];
        let (model, _) =
            m_step(&stats, &resp, DiscreteVariant::WithSelfTransitions, 0.0).unwrap();
        assert_relative_eq!(model.transitions[0][[0, 0]], 0.25, max_relative = 1e-12);
        assert_relative_eq!(model.transitions[0][[0, 1]], 0.75, max_relative = 1e-12);
    }

    #[test]
    fn m_step_rejects_empty_group() {
        let stats = vec![stats_of(vec![0, 1], 2)];
        let resp = array![[1.0], [0.0]];
        let err = m_step(&stats, &resp, DiscreteVariant::WithSelfTransitions, 1e-6).unwrap_err();
        assert_eq!(err, DegenerateStart::EmptyGroup { group: 1 });
    }

    #[test]
    fn self_transition_free_data_floors_diagonal() {
        let stats = vec![stats_of(vec![0, 1, 0, 1], 2)];
        let resp = array![[1.0]];
        let (model, events) =
            m_step(&stats, &resp, DiscreteVariant::WithSelfTransitions, 1e-6).unwrap();
        assert_eq!(model.transitions[0][[0, 0]], 1e-6);
        assert_eq!(model.transitions[0][[1, 1]], 1e-6);
        assert!(events >= 2);
        model.validate().unwrap();
    }

    #[test]
    fn no_self_transition_mstep_keeps_diagonal_zero() {
        let stats = vec![stats_of(vec![0, 1, 2, 0], 3)];
        let resp = array![[1.0]];
        let (model, _) = m_step(&stats, &resp, DiscreteVariant::NoSelfTransitions, 1e-6).unwrap();
        for j in 0..3 {
            assert_eq!(model.transitions[0][[j, j]], 0.0);
        }
        model.validate().unwrap();
    }

    #[test]
    fn fully_labelled_m_step_is_supervised_mle() {
        let stats = vec![
            stats_of(vec![0, 1, 1], 2),
            stats_of(vec![1, 0], 2),
            stats_of(vec![0, 0, 1], 2),
        ];
        // Sequences 0 and 2 in group 0, sequence 1 in group 1.
        let resp = array![[1.0, 0.0, 1.0], [0.0, 1.0, 0.0]];
        let (model, _) =
            m_step(&stats, &resp, DiscreteVariant::WithSelfTransitions, 0.0).unwrap();
        assert_relative_eq!(model.weights[0], 2.0 / 3.0, max_relative = 1e-12);
        // Group 0 transitions: 0->1 twice, 0->0 once, 1->1 once.
        assert_relative_eq!(model.transitions[0][[0, 1]], 2.0 / 3.0, max_relative = 1e-12);
        assert_relative_eq!(model.transitions[0][[0, 0]], 1.0 / 3.0, max_relative = 1e-12);
        assert_relative_eq!(model.transitions[0][[1, 1]], 1.0, max_relative = 1e-12);
        // Group 1: single 1->0 transition.
        assert_relative_eq!(model.transitions[1][[1, 0]], 1.0, max_relative = 1e-12);
    }

    #[test]
    fn likelihood_matches_brute_force_on_mixed_data() {
        let model = DiscreteMixtureModel::new(
            array![0.4, 0.6],
            array![[0.7, 0.3], [0.2, 0.8]],
            vec![
                array![[0.5, 0.5], [0.6, 0.4]],
                array![[0.9, 0.1], [0.3, 0.7]],
            ],
            DiscreteVariant::WithSelfTransitions,
        )
        .unwrap();
        let seqs = [vec![0usize, 1, 1], vec![1, 0], vec![0, 0, 0, 1]];
        let labels = [None, Some(0), Some(1)];
        let stats: Vec<_> = seqs.iter().map(|s| stats_of(s.clone(), 2)).collect();
        let ll = observed_log_likelihood(&model, &stats, &labels).unwrap();

        // Direct product evaluation of the mixture and labelled factors.
        let dens = |g: usize, s: &[usize]| -> f64 {
            let mut p = model.initial_probs[[g, s[0]]];
            for w in s.windows(2) {
                p *= model.transitions[g][[w[0], w[1]]];
            }
            p
        };
        let brute = (0.4 * dens(0, &seqs[0]) + 0.6 * dens(1, &seqs[0])).ln()
            + (0.4 * dens(0, &seqs[1])).ln()
            + (0.6 * dens(1, &seqs[2])).ln();
        assert_relative_eq!(ll, brute, max_relative = 1e-10);
    }

    #[test]
    fn empty_data_gives_zero_likelihood() {
        let model = two_state_model(0.5, [[0.5, 0.5], [0.5, 0.5]]);
        assert_eq!(observed_log_likelihood(&model, &[], &[]).unwrap(), 0.0);
    }

    #[test]
    fn single_group_likelihood_is_density_sum() {
        let model = two_state_model(0.3, [[0.2, 0.8], [0.7, 0.3]]);
        let stats = vec![stats_of(vec![0, 1, 1], 2), stats_of(vec![1, 0], 2)];
        let sum: f64 = stats.iter().map(|s| model.log_density(s, 0)).sum();
        assert_relative_eq!(
            observed_log_likelihood(&model, &stats, &[None, None]).unwrap(),
            sum,
            max_relative = 1e-12
        );
    }
}
