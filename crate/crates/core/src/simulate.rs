//! Sampling from the mixture models and the built-in simulation scenarios,
//! including stream time augmentation from hidden rate sets.

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::constants;
use crate::continuous::GeneratorMatrix;
use crate::em::FittedModel;
use crate::error::{Error, Result};
use crate::math::{draw_categorical, draw_exponential};
use crate::seq::{ClickSequence, Dataset};
use crate::stream::rng_stream;

const SCENARIO_TAG: u64 = 0x5C31;

/// Sample one continuous-time path of exactly `length` visits: the first
/// state from `alpha`, exponential holding times at each state's exit rate,
/// jumps from the embedded chain. The terminal holding time is observed in
/// full.
pub fn sample_ctmc_path(
    alpha: &[f64],
    generator: &GeneratorMatrix,
    length: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ClickSequence> {
    if length < 1 {
        return Err(Error::InvalidData("path length must be at least 1".into()));
    }
    let embedded = generator.embedded_transition_probs();
    let mut states = Vec::with_capacity(length);
    let mut times = Vec::with_capacity(length);
    let mut state = draw_categorical(alpha, rng);
    for step in 0..length {
        states.push(state);
        times.push(draw_exponential(generator.exit_rate(state), rng));
        if step + 1 < length {
            state = draw_categorical(embedded.row(state).as_slice().unwrap(), rng);
        }
    }
    Ok(ClickSequence::with_times(states, times))
}

/// Sample one discrete-time path of exactly `length` visits, without times.
/// With `allow_repeats` false the transition matrix must have a zero
/// diagonal.
pub fn sample_dtmc_path(
    alpha: &[f64],
    transitions: &Array2<f64>,
    length: usize,
    allow_repeats: bool,
    rng: &mut ChaCha8Rng,
) -> Result<ClickSequence> {
    if length < 1 {
        return Err(Error::InvalidData("path length must be at least 1".into()));
    }
    if !allow_repeats && transitions.diag().iter().any(|&d| d != 0.0) {
        return Err(Error::InvalidData(
            "repeat-free sampling needs a zero-diagonal transition matrix".into(),
        ));
    }
    let mut states = Vec::with_capacity(length);
    let mut state = draw_categorical(alpha, rng);
    states.push(state);
    for _ in 1..length {
        state = draw_categorical(transitions.row(state).as_slice().unwrap(), rng);
        states.push(state);
    }
    Ok(ClickSequence::new(states))
}

/// Attach holding times to discrete streams: each sequence picks one of the
/// rate sets uniformly, then every visit draws an exponential time at that
/// set's rate for the visited category. Returns the augmented data and the
/// hidden set index per sequence.
pub fn augment_with_times(
    dataset: &Dataset,
    rate_sets: &[Vec<f64>],
    rng: &mut ChaCha8Rng,
) -> Result<(Dataset, Vec<usize>)> {
    if rate_sets.is_empty() {
        return Err(Error::InvalidData("no rate sets provided".into()));
    }
    let mut sequences = Vec::with_capacity(dataset.len());
    let mut set_indices = Vec::with_capacity(dataset.len());
    for seq in &dataset.sequences {
        let set = (draw_categorical(&vec![1.0; rate_sets.len()], rng)) % rate_sets.len();
        let rates = &rate_sets[set];
        let mut times = Vec::with_capacity(seq.len());
        for &state in &seq.states {
            let rate = *rates.get(state).ok_or_else(|| {
                Error::InvalidData(format!(
                    "state {} exceeds the {}-entry rate set",
                    state + 1,
                    rates.len()
                ))
            })?;
            times.push(draw_exponential(rate, rng));
        }
        sequences.push(ClickSequence {
            states: seq.states.clone(),
            times: Some(times),
            label: seq.label,
        });
        set_indices.push(set);
    }
    let augmented = Dataset::with_num_states(sequences, dataset.num_states)?;
    Ok((augmented, set_indices))
}

/// The built-in studies plus free-form sampling from a supplied model.
#[derive(Debug, Clone)]
pub enum ScenarioKind {
    /// Two 5-state groups separated in jump chains only; small size.
    Sim1Small,
    /// Two 5-state groups separated in jump chains only; large size.
    Sim1Large,
    /// Three 7-state groups separated in jump chains and holding times;
    /// small size.
    Sim2Small,
    /// Same three groups; large size.
    Sim2Large,
    /// The three-group data with a labelled fraction for semi-supervised
    /// runs.
    Sim3,
    /// 17-category streams with self-transitions, augmented with times from
    /// four hidden rate sets.
    MsnbcAugment,
    /// Sample from a user-supplied model.
    Custom(Box<FittedModel>),
}

impl ScenarioKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::Sim1Small => "sim1-small",
            ScenarioKind::Sim1Large => "sim1-large",
            ScenarioKind::Sim2Small => "sim2-small",
            ScenarioKind::Sim2Large => "sim2-large",
            ScenarioKind::Sim3 => "sim3",
            ScenarioKind::MsnbcAugment => "msnbc-augment",
            ScenarioKind::Custom(_) => "custom",
        }
    }
}

/// A sampling plan: which scenario, how many sequences and replicates, the
/// visit-count range, the labelled fraction, and the seed.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub num_sequences: usize,
    /// Inclusive bounds on the number of visits per sequence.
    pub length_range: (usize, usize),
    pub labelled_fraction: f64,
    pub replicates: usize,
    pub seed: u64,
}

impl ScenarioSpec {
    /// The published sizes for each study; `Custom` gets a neutral default.
    pub fn preset(kind: ScenarioKind, seed: u64) -> ScenarioSpec {
        let (num_sequences, length_range, labelled_fraction) = match &kind {
            ScenarioKind::Sim1Small | ScenarioKind::Sim2Small => (50, (4, 25), 0.0),
            ScenarioKind::Sim1Large | ScenarioKind::Sim2Large => (100, (25, 100), 0.0),
            ScenarioKind::Sim3 => (100, (25, 100), 0.7),
            ScenarioKind::MsnbcAugment => (1000, (40, 100), 0.0),
            ScenarioKind::Custom(_) => (100, (10, 50), 0.0),
        };
        ScenarioSpec {
            kind,
            num_sequences,
            length_range,
            labelled_fraction,
            replicates: 100,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_sequences < 1
            || self.replicates < 1
            || self.length_range.0 < 1
            || self.length_range.0 > self.length_range.1
            || !(0.0..=1.0).contains(&self.labelled_fraction)
        {
            return Err(Error::InvalidData("scenario out of range".into()));
        }
        Ok(())
    }
}

/// Generate every replicate of a scenario. Each element pairs the dataset
/// with the hidden true group per sequence (for the stream scenario, the
/// hidden rate-set index).
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<Vec<(Dataset, Vec<usize>)>> {
    spec.validate()?;
    (0..spec.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_stream(spec.seed, &[SCENARIO_TAG, r as u64]);
            generate_replicate(spec, &mut rng)
        })
        .collect()
}

fn generate_replicate(spec: &ScenarioSpec, rng: &mut ChaCha8Rng) -> Result<(Dataset, Vec<usize>)> {
    let (mut dataset, truth) = match &spec.kind {
        ScenarioKind::Sim1Small | ScenarioKind::Sim1Large => sample_ctmc_mixture(
            spec,
            constants::two_group_weights().as_slice().unwrap(),
            &constants::two_group_initial_probs(),
            &constants::two_group_generators(),
            rng,
        )?,
        ScenarioKind::Sim2Small | ScenarioKind::Sim2Large | ScenarioKind::Sim3 => {
            sample_ctmc_mixture(
                spec,
                constants::three_group_weights().as_slice().unwrap(),
                &constants::three_group_initial_probs(),
                &constants::three_group_generators(),
                rng,
            )?
        }
        ScenarioKind::MsnbcAugment => {
            let model = constants::stream_generating_model();
            let streams = sample_discrete_mixture(
                spec,
                model.weights.as_slice().unwrap(),
                &model.initial_probs,
                &model.transitions,
                true,
                rng,
            )?;
            let (augmented, sets) =
                augment_with_times(&streams.0, &constants::stream_rate_sets(), rng)?;
            (augmented, sets)
        }
        ScenarioKind::Custom(model) => match model.as_ref() {
            FittedModel::Discrete(m) => sample_discrete_mixture(
                spec,
                m.weights.as_slice().unwrap(),
                &m.initial_probs,
                &m.transitions,
                m.variant.allows_self_transitions(),
                rng,
            )?,
            FittedModel::Continuous(m) => {
                let generators: Vec<GeneratorMatrix> = m.generators.clone();
                sample_ctmc_mixture(
                    spec,
                    m.weights.as_slice().unwrap(),
                    &m.initial_probs,
                    &generators,
                    rng,
                )?
            }
        },
    };
    apply_labels(&mut dataset, &truth, spec.labelled_fraction, rng);
    Ok((dataset, truth))
}

fn draw_length(spec: &ScenarioSpec, rng: &mut ChaCha8Rng) -> usize {
    let (lo, hi) = spec.length_range;
    use rand::Rng;
    rng.gen_range(lo..=hi)
}

fn sample_ctmc_mixture(
    spec: &ScenarioSpec,
    weights: &[f64],
    initial_probs: &Array2<f64>,
    generators: &[GeneratorMatrix],
    rng: &mut ChaCha8Rng,
) -> Result<(Dataset, Vec<usize>)> {
    let mut sequences = Vec::with_capacity(spec.num_sequences);
    let mut truth = Vec::with_capacity(spec.num_sequences);
    for _ in 0..spec.num_sequences {
        let g = draw_categorical(weights, rng);
        let length = draw_length(spec, rng);
        let alpha = initial_probs.row(g);
        sequences.push(sample_ctmc_path(
            alpha.as_slice().unwrap(),
            &generators[g],
            length,
            rng,
        )?);
        truth.push(g);
    }
    let dataset = Dataset::with_num_states(sequences, initial_probs.ncols())?;
    Ok((dataset, truth))
}

fn sample_discrete_mixture(
    spec: &ScenarioSpec,
    weights: &[f64],
    initial_probs: &Array2<f64>,
    transitions: &[Array2<f64>],
    allow_repeats: bool,
    rng: &mut ChaCha8Rng,
) -> Result<(Dataset, Vec<usize>)> {
    let mut sequences = Vec::with_capacity(spec.num_sequences);
    let mut truth = Vec::with_capacity(spec.num_sequences);
    for _ in 0..spec.num_sequences {
        let g = draw_categorical(weights, rng);
        let length = draw_length(spec, rng);
        let alpha = initial_probs.row(g);
        sequences.push(sample_dtmc_path(
            alpha.as_slice().unwrap(),
            &transitions[g],
            length,
            allow_repeats,
            rng,
        )?);
        truth.push(g);
    }
    let dataset = Dataset::with_num_states(sequences, initial_probs.ncols())?;
    Ok((dataset, truth))
}

/// Label exactly `round(fraction · N)` sequences, chosen uniformly at
/// random, with their true group.
fn apply_labels(dataset: &mut Dataset, truth: &[usize], fraction: f64, rng: &mut ChaCha8Rng) {
    let n = dataset.len();
    let want = (fraction * n as f64).round() as usize;
    if want == 0 {
        return;
    }
    // Partial Fisher-Yates over the index list.
    use rand::Rng;
    let mut indices: Vec<usize> = (0..n).collect();
    for pick in 0..want.min(n) {
        let swap_with = rng.gen_range(pick..n);
        indices.swap(pick, swap_with);
        let i = indices[pick];
        dataset.sequences[i].label = Some(truth[i]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn q1() -> GeneratorMatrix {
        constants::two_group_generators()[0].clone()
    }

    #[test]
    fn single_visit_path() {
        let mut rng = rng_stream(1, &[]);
        let alpha = [0.0, 1.0, 0.0, 0.0, 0.0];
        let seq = sample_ctmc_path(&alpha, &q1(), 1, &mut rng).unwrap();
        assert_eq!(seq.states, vec![1]);
        assert_eq!(seq.times.as_ref().unwrap().len(), 1);
        assert!(sample_ctmc_path(&alpha, &q1(), 0, &mut rng).is_err());
    }

    #[test]
    fn two_state_generator_alternates() {
        let q = GeneratorMatrix::new(array![[-0.5, 0.5], [2.0, -2.0]]).unwrap();
        let mut rng = rng_stream(2, &[]);
        let seq = sample_ctmc_path(&[1.0, 0.0], &q, 10, &mut rng).unwrap();
        assert_eq!(seq.states, vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1]);
        assert!(!seq.has_self_transitions());
    }

    #[test]
    fn holding_times_and_exits_follow_the_generator() {
        // Visit state 1 of the two-group study's first generator many times;
        // its mean holding time is 10 and its exit split (0.5, 0.2, 0.2, 0.1).
        let q = q1();
        let mut rng = rng_stream(3, &[]);
        let n = 100_000;
        let mut total_time = 0.0;
        let mut exits = [0usize; 5];
        for _ in 0..n {
            let seq = sample_ctmc_path(&[1.0, 0.0, 0.0, 0.0, 0.0], &q, 2, &mut rng).unwrap();
            total_time += seq.times.as_ref().unwrap()[0];
            exits[seq.states[1]] += 1;
        }
        let mean = total_time / n as f64;
        assert!((mean - 10.0).abs() < 0.2, "mean holding time {mean}");
        let expected = [0.0, 0.5, 0.2, 0.2, 0.1];
        for (k, &e) in expected.iter().enumerate() {
            let freq = exits[k] as f64 / n as f64;
            assert!((freq - e).abs() < 0.01, "exit {k}: {freq} vs {e}");
        }
    }

    #[test]
    fn dtmc_absorbing_row_repeats_forever() {
        let lambda = array![[1.0, 0.0], [0.0, 1.0]];
        let mut rng = rng_stream(4, &[]);
        let seq = sample_dtmc_path(&[1.0, 0.0], &lambda, 6, true, &mut rng).unwrap();
        assert_eq!(seq.states, vec![0; 6]);
        assert!(seq.times.is_none());
        assert!(sample_dtmc_path(&[1.0, 0.0], &lambda, 6, false, &mut rng).is_err());
    }

    #[test]
    fn dtmc_frequencies_match_uniform_rows() {
        let third = 1.0 / 3.0;
        let lambda = Array2::from_elem((3, 3), third);
        let mut rng = rng_stream(5, &[]);
        let seq = sample_dtmc_path(&[third; 3], &lambda, 100_001, true, &mut rng).unwrap();
        let mut counts = Array2::<f64>::zeros((3, 3));
        for w in seq.states.windows(2) {
            counts[[w[0], w[1]]] += 1.0;
        }
        for j in 0..3 {
            let row_total: f64 = counts.row(j).sum();
            for k in 0..3 {
                assert!((counts[[j, k]] / row_total - third).abs() < 0.01);
            }
        }
    }

    #[test]
    fn two_group_scenario_shapes() {
        let mut spec = ScenarioSpec::preset(ScenarioKind::Sim1Small, 7);
        spec.replicates = 3;
        let reps = generate_scenario(&spec).unwrap();
        assert_eq!(reps.len(), 3);
        for (ds, truth) in &reps {
            assert_eq!(ds.len(), 50);
            assert_eq!(ds.num_states, 5);
            assert_eq!(truth.len(), 50);
            assert!(truth.iter().all(|&g| g < 2));
            for seq in &ds.sequences {
                assert!((4..=25).contains(&seq.len()));
                assert!(seq.has_times());
                assert!(!seq.has_self_transitions());
                assert!(seq.label.is_none());
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let mut spec = ScenarioSpec::preset(ScenarioKind::Sim2Small, 99);
        spec.replicates = 2;
        let a = generate_scenario(&spec).unwrap();
        let b = generate_scenario(&spec).unwrap();
        for ((da, ta), (db, tb)) in a.iter().zip(&b) {
            assert_eq!(ta, tb);
            assert_eq!(da.sequences, db.sequences);
        }
    }

    #[test]
    fn three_group_proportions_and_initials() {
        let mut spec = ScenarioSpec::preset(ScenarioKind::Sim2Small, 31);
        spec.replicates = 30;
        let reps = generate_scenario(&spec).unwrap();
        let mut group_counts = [0usize; 3];
        let mut group3_first_state3 = 0usize;
        let mut group3_total = 0usize;
        for (ds, truth) in &reps {
            for (seq, &g) in ds.sequences.iter().zip(truth) {
                group_counts[g] += 1;
                if g == 2 {
                    group3_total += 1;
                    if seq.states[0] == 2 {
                        group3_first_state3 += 1;
                    }
                }
            }
        }
        let total: usize = group_counts.iter().sum();
        let expected = [0.2, 0.4, 0.4];
        for (g, &e) in expected.iter().enumerate() {
            let freq = group_counts[g] as f64 / total as f64;
            let se = (e * (1.0 - e) / total as f64).sqrt();
            assert!((freq - e).abs() < 3.0 * se + 0.01, "group {g}: {freq}");
        }
        // Group 3 starts in state 3 with probability 0.4.
        let freq = group3_first_state3 as f64 / group3_total as f64;
        let se = (0.4 * 0.6 / group3_total as f64).sqrt();
        assert!((freq - 0.4).abs() < 3.0 * se + 0.005, "{freq}");
    }

    #[test]
    fn labelled_fraction_is_exact() {
        let mut spec = ScenarioSpec::preset(ScenarioKind::Sim3, 13);
        spec.replicates = 2;
        spec.num_sequences = 47;
        let reps = generate_scenario(&spec).unwrap();
        for (ds, truth) in &reps {
            assert_eq!(ds.num_labelled(), (0.7f64 * 47.0).round() as usize);
            for (seq, &g) in ds.sequences.iter().zip(truth) {
                if let Some(label) = seq.label {
                    assert_eq!(label, g);
                }
            }
        }
    }

    #[test]
    fn stream_scenario_attaches_times_and_set_indices() {
        let mut spec = ScenarioSpec::preset(ScenarioKind::MsnbcAugment, 5);
        spec.replicates = 1;
        spec.num_sequences = 40;
        let reps = generate_scenario(&spec).unwrap();
        let (ds, truth) = &reps[0];
        assert_eq!(ds.num_states, 17);
        assert!(truth.iter().all(|&s| s < 4));
        assert!(truth.iter().any(|&s| s != truth[0]));
        for seq in &ds.sequences {
            assert!(seq.has_times());
            assert!(seq.times.as_ref().unwrap().iter().all(|&t| t > 0.0));
        }
        // Streams keep their self-transitions; the jump models view them
        // collapsed.
        assert!(ds.sequences.iter().any(|s| s.has_self_transitions()));
    }

    #[test]
    fn augment_with_single_rate_set_is_degenerate() {
        let ds = Dataset::with_num_states(
            vec![
                ClickSequence::new(vec![0, 1, 1, 2]),
                ClickSequence::new(vec![2, 0]),
            ],
            3,
        )
        .unwrap();
        let sets = vec![vec![1.0, 2.0, 3.0]];
        let mut rng = rng_stream(8, &[]);
        let (out, indices) = augment_with_times(&ds, &sets, &mut rng).unwrap();
        assert_eq!(indices, vec![0, 0]);
        assert!(out.all_have_times());
        // A state beyond the rate set errors.
        let bad = Dataset::with_num_states(vec![ClickSequence::new(vec![0, 3])], 4).unwrap();
        let mut rng = rng_stream(8, &[]);
        assert!(augment_with_times(&bad, &sets, &mut rng).is_err());
    }

    #[test]
    fn augmentation_is_deterministic() {
        let ds = Dataset::with_num_states(
            vec![ClickSequence::new(vec![0, 1, 0]), ClickSequence::new(vec![1])],
            2,
        )
        .unwrap();
        let sets = vec![vec![1.0, 2.0], vec![0.1, 0.2]];
        let mut rng1 = rng_stream(12, &[1]);
        let mut rng2 = rng_stream(12, &[1]);
        let a = augment_with_times(&ds, &sets, &mut rng1).unwrap();
        let b = augment_with_times(&ds, &sets, &mut rng2).unwrap();
        assert_eq!(a.1, b.1);
        assert_eq!(a.0.sequences, b.0.sequences);
    }
}
