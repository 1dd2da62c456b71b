//! Versioned constants behind the built-in simulation scenarios: the
//! generator matrices, mixing proportions, and initial distributions of the
//! two- and three-group studies, plus the 17-category stream model and the
//! four exponential rate sets used for time augmentation.
//!
//! These values are frozen; bump [`CONSTANTS_VERSION`] if any of them ever
//! change so that manifests distinguish outputs.

use ndarray::{array, Array1, Array2};

use crate::continuous::GeneratorMatrix;
use crate::discrete::{DiscreteMixtureModel, DiscreteVariant};

/// Identifies the constants below in simulation manifests.
pub const CONSTANTS_VERSION: &str = "1";

/// Number of categories in the stream-augmentation scenario.
pub const STREAM_NUM_STATES: usize = 17;

/// Number of rate sets used for time augmentation.
pub const NUM_RATE_SETS: usize = 4;

/// Two 5-state generators with matching diagonals, so the groups differ in
/// their jump chains but not in mean holding times.
pub fn two_group_generators() -> [GeneratorMatrix; 2] {
    let q1 = GeneratorMatrix::new(array![
        [-0.100, 0.050, 0.020, 0.020, 0.010],
        [0.100, -1.000, 0.200, 0.100, 0.600],
        [0.020, 0.050, -0.100, 0.005, 0.025],
        [0.050, 0.050, 0.050, -1.000, 0.850],
        [0.006, 0.004, 0.050, 0.040, -0.100],
    ])
    .expect("valid generator");
    let q2 = GeneratorMatrix::new(array![
        [-0.100, 0.001, 0.009, 0.015, 0.075],
        [0.700, -1.000, 0.200, 0.050, 0.050],
        [0.010, 0.005, -0.100, 0.030, 0.055],
        [0.400, 0.400, 0.100, -1.000, 0.100],
        [0.030, 0.030, 0.020, 0.020, -0.100],
    ])
    .expect("valid generator");
    [q1, q2]
}

/// Mixing proportions of the two-group study (equal by assumption).
pub fn two_group_weights() -> Array1<f64> {
    array![0.5, 0.5]
}

/// Initial distributions of the two-group study (uniform by assumption).
pub fn two_group_initial_probs() -> Array2<f64> {
    Array2::from_elem((2, 5), 0.2)
}

/// Three 7-state generators separated in both jump chains and holding
/// times. Diagonals are derived from the off-diagonal sums.
pub fn three_group_generators() -> [GeneratorMatrix; 3] {
    let q1 = GeneratorMatrix::from_off_diagonal(array![
        [0.0, 0.05, 0.02, 0.02, 0.01, 0.02, 0.02],
        [0.10, 0.0, 0.20, 0.10, 0.60, 0.20, 0.20],
        [0.02, 0.05, 0.0, 0.01, 0.03, 0.02, 0.02],
        [0.05, 0.05, 0.05, 0.0, 0.80, 0.25, 0.20],
        [0.01, 0.00, 0.05, 0.04, 0.0, 0.04, 0.01],
        [0.70, 0.10, 0.10, 0.10, 0.10, 0.0, 0.30],
        [0.50, 0.50, 0.05, 0.05, 0.10, 0.20, 0.0],
    ])
    .expect("valid generator");
    let q2 = GeneratorMatrix::from_off_diagonal(array![
        [0.0, 0.40, 0.30, 0.15, 0.15, 0.25, 0.15],
        [0.02, 0.0, 0.03, 0.02, 0.03, 0.03, 0.01],
        [0.30, 0.50, 0.0, 0.10, 0.10, 0.20, 0.20],
        [0.01, 0.01, 0.01, 0.0, 0.05, 0.03, 0.03],
        [0.01, 0.01, 0.04, 0.05, 0.0, 0.02, 0.02],
        [0.70, 0.05, 0.15, 0.05, 0.15, 0.0, 0.30],
        [0.05, 0.05, 0.01, 0.01, 0.01, 0.01, 0.0],
    ])
    .expect("valid generator");
    let q3 = GeneratorMatrix::from_off_diagonal(array![
        [0.0, 0.20, 0.70, 0.20, 0.10, 0.10, 0.10],
        [0.60, 0.0, 0.20, 0.20, 0.20, 0.10, 0.10],
        [0.10, 0.10, 0.0, 0.80, 0.10, 0.10, 0.20],
        [0.05, 0.03, 0.03, 0.0, 0.01, 0.01, 0.01],
        [0.05, 0.05, 0.01, 0.01, 0.0, 0.01, 0.02],
        [1.00, 0.02, 0.03, 0.02, 0.03, 0.0, 0.30],
        [0.20, 0.20, 0.20, 0.20, 0.20, 0.40, 0.0],
    ])
    .expect("valid generator");
    [q1, q2, q3]
}

/// Mixing proportions of the three-group study.
pub fn three_group_weights() -> Array1<f64> {
    array![0.2, 0.4, 0.4]
}

/// Initial distributions of the three-group study: uniform for group 1;
/// groups 2 and 3 put probability 0.4 on states 7 and 3 respectively and
/// 0.1 everywhere else.
pub fn three_group_initial_probs() -> Array2<f64> {
    let mut probs = Array2::zeros((3, 7));
    probs.row_mut(0).fill(1.0 / 7.0);
    probs.row_mut(1).fill(0.1);
    probs[[1, 6]] = 0.4;
    probs.row_mut(2).fill(0.1);
    probs[[2, 3 - 1]] = 0.4;
    probs
}

/// Four sets of 17 exponential rates, one per visited category, drawn once
/// from well-separated bands (mean holding times near 1, 5, 20, and 60 time
/// units) and frozen here.
pub fn stream_rate_sets() -> [Vec<f64>; NUM_RATE_SETS] {
    [
        vec![
            1.28311, 1.02982, 1.27424, 0.80465, 0.94038, 1.1687, 1.04717, 1.0245, 1.26798,
            0.81796, 1.07802, 0.79951, 1.19638, 0.77225, 1.11873, 1.00348, 0.89252,
        ],
        vec![
            0.15933, 0.23246, 0.22715, 0.18763, 0.15461, 0.14678, 0.15776, 0.22782, 0.15282,
            0.14697, 0.15481, 0.17301, 0.15792, 0.14903, 0.15255, 0.16288, 0.14503,
        ],
        vec![
            0.04916, 0.03778, 0.03884, 0.03908, 0.06028, 0.04669, 0.04051, 0.06246, 0.03864,
            0.04335, 0.05946, 0.04169, 0.06699, 0.05913, 0.05652, 0.06571, 0.04284,
        ],
        vec![
            0.01531, 0.01882, 0.01949, 0.01918, 0.02042, 0.01397, 0.01259, 0.02287, 0.01954,
            0.01797, 0.01211, 0.01929, 0.01247, 0.01786, 0.0159, 0.01416, 0.02231,
        ],
    ]
}

/// Per-group self-transition probabilities of the 17-category stream model.
const STREAM_SELF_PROBS: [f64; 3] = [0.20, 0.35, 0.50];

/// The 17-category stream-generating model: three groups that share one
/// jump-chain shape but hold different self-transition probabilities, so the
/// groups are visible to a with-repetition fit and invisible once repeats
/// are collapsed.
pub fn stream_generating_model() -> DiscreteMixtureModel {
    let j = STREAM_NUM_STATES;
    let base = stream_base_weights();
    let mut transitions = Vec::with_capacity(3);
    for &self_prob in &STREAM_SELF_PROBS {
        let mut trans = Array2::zeros((j, j));
        for row in 0..j {
            let row_total: f64 = (0..j).filter(|&k| k != row).map(|k| base[[row, k]]).sum();
            for k in 0..j {
                trans[[row, k]] = if k == row {
                    self_prob
                } else {
                    (1.0 - self_prob) * base[[row, k]] / row_total
                };
            }
        }
        transitions.push(trans);
    }
    DiscreteMixtureModel::new(
        array![0.3, 0.3, 0.4],
        Array2::from_elem((3, j), 1.0 / j as f64),
        transitions,
        DiscreteVariant::WithSelfTransitions,
    )
    .expect("valid stream model")
}

/// Shared off-diagonal jump-weight pattern: nearby categories attract more
/// traffic, and the two front categories attract a fixed extra share.
fn stream_base_weights() -> Array2<f64> {
    let j = STREAM_NUM_STATES;
    let mut base = Array2::zeros((j, j));
    for row in 0..j {
        for k in 0..j {
            if k != row {
                let distance = (row as f64 - k as f64).abs();
                let popularity = if k < 2 { 0.5 } else { 0.0 };
                base[[row, k]] = 1.0 / (1.0 + distance) + popularity;
            }
        }
    }
    base
}
