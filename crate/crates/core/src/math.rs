//! Small numeric helpers shared across the fitting and simulation code.

use rand::Rng;

/// Log of a sum of exponentials, shifted by the maximum for stability.
///
/// Returns negative infinity for an empty slice or when every term is
/// negative infinity.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Normalize `row` into a probability vector whose free entries are at least
/// `floor`, keeping clamped entries pegged exactly at the floor value.
///
/// `skip` marks an index that is structurally zero (a forbidden
/// self-transition); it is excluded from both flooring and normalization.
/// A row with no mass at all is replaced by the uniform distribution over
/// the free entries, which is as good a maximizer as any since the data
/// never exercises that row.
///
/// Returns the number of entries that were clamped to the floor.
pub fn floor_and_normalize(row: &mut [f64], floor: f64, skip: Option<usize>) -> usize {
    let free: Vec<usize> = (0..row.len()).filter(|&i| Some(i) != skip).collect();
    if let Some(s) = skip {
        row[s] = 0.0;
    }
    let total: f64 = free.iter().map(|&i| row[i]).sum();
    if total <= 0.0 || !total.is_finite() {
        let u = 1.0 / free.len() as f64;
        for &i in &free {
            row[i] = u;
        }
        return 0;
    }
    for &i in &free {
        row[i] /= total;
    }
    // Peg entries below the floor and rescale the rest; repeat in case the
    // rescaling pushes new entries under.
    let mut pegged = vec![false; row.len()];
    loop {
        let mut grew = false;
        for &i in &free {
            if !pegged[i] && row[i] < floor {
                pegged[i] = true;
                grew = true;
            }
        }
        if !grew {
            break;
        }
        let n_pegged = free.iter().filter(|&&i| pegged[i]).count();
        let spare = 1.0 - floor * n_pegged as f64;
        if spare <= 0.0 || n_pegged == free.len() {
            // Floor so large the row cannot hold it; fall back to uniform.
            let u = 1.0 / free.len() as f64;
            for &i in &free {
                row[i] = u;
            }
            return free.len();
        }
        let unpegged_sum: f64 = free
            .iter()
            .filter(|&&i| !pegged[i])
            .map(|&i| row[i])
            .sum();
        for &i in &free {
            if pegged[i] {
                row[i] = floor;
            } else {
                row[i] *= spare / unpegged_sum;
            }
        }
    }
    free.iter().filter(|&&i| pegged[i]).count()
}

/// Draw from the flat Dirichlet over the `n`-simplex.
pub fn draw_simplex<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let draws: Vec<f64> = (0..n).map(|_| draw_exponential(1.0, rng)).collect();
    let total: f64 = draws.iter().sum();
    draws.iter().map(|d| d / total).collect()
}

/// Sample an index from an unnormalized nonnegative weight vector.
pub fn draw_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        u -= w;
        if u < 0.0 {
            return i;
        }
    }
    // Rounding can leave u marginally nonnegative; return the last nonzero.
    weights
        .iter()
        .rposition(|&w| w > 0.0)
        .expect("categorical draw from all-zero weights")
}

/// Sample a strictly positive exponential holding time with the given rate.
pub fn draw_exponential<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            return -u.ln() / rate;
        }
    }
}

/// Mean and sample standard deviation; the deviation is 0 for fewer than
/// two values.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Median of a value list; NaN for an empty list.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = sorted.len() / 2;
    if sorted.len().is_multiple_of(2) {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    } else {
        sorted[mid]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn log_sum_exp_matches_naive_in_range() {
        let vals = [0.5f64, -1.2, 2.0];
        let naive = vals.iter().map(|v: &f64| v.exp()).sum::<f64>().ln();
        assert_relative_eq!(log_sum_exp(&vals), naive, max_relative = 1e-14);
    }

    #[test]
    fn log_sum_exp_survives_large_magnitudes() {
        let vals = [-1e4, -1e4 + 2.0];
        let expected = -1e4 + (1.0 + 2f64.exp()).ln();
        assert_relative_eq!(log_sum_exp(&vals), expected, max_relative = 1e-14);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn floor_keeps_row_stochastic() {
        let mut row = vec![0.9999999, 0.0000001, 0.0];
        let clamped = floor_and_normalize(&mut row, 1e-6, None);
        assert_eq!(clamped, 2);
        assert_relative_eq!(row.iter().sum::<f64>(), 1.0, max_relative = 1e-12);
        assert_eq!(row[1], 1e-6);
        assert_eq!(row[2], 1e-6);
    }

    #[test]
    fn floor_respects_skipped_entry() {
        let mut row = vec![3.0, 5.0, 1.0];
        let clamped = floor_and_normalize(&mut row, 1e-6, Some(1));
        assert_eq!(clamped, 0);
        assert_eq!(row[1], 0.0);
        assert_relative_eq!(row[0], 0.75, max_relative = 1e-12);
        assert_relative_eq!(row[2], 0.25, max_relative = 1e-12);
    }

    #[test]
    fn empty_row_becomes_uniform() {
        let mut row = vec![0.0, 0.0, 0.0, 0.0];
        floor_and_normalize(&mut row, 1e-6, Some(2));
        assert_eq!(row[2], 0.0);
        for i in [0usize, 1, 3] {
            assert_relative_eq!(row[i], 1.0 / 3.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn simplex_draws_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..6 {
            let s = draw_simplex(n, &mut rng);
            assert_relative_eq!(s.iter().sum::<f64>(), 1.0, max_relative = 1e-12);
            assert!(s.iter().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn categorical_respects_point_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            assert_eq!(draw_categorical(&[0.0, 1.0, 0.0], &mut rng), 1);
        }
    }

    #[test]
    fn exponential_draws_are_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            assert!(draw_exponential(0.1, &mut rng) > 0.0);
        }
    }

    #[test]
    fn mean_sd_degenerate_cases() {
        assert_eq!(mean_sd(&[4.0]), (4.0, 0.0));
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0]);
        assert_relative_eq!(m, 2.0);
        assert_relative_eq!(s, 1.0);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
