//! Clustering evaluation: the adjusted Rand index, selection-count
//! summaries over replicates, and BIC comparison tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::math::mean_sd;

/// Adjusted Rand index between two partitions of the same items, in the
/// permutation-model (Hubert–Arabie) form: 1 for identical partitions up to
/// relabeling, near 0 for chance-level agreement.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidData(format!(
            "partition lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::InvalidData(
            "need at least two items to compare partitions".into(),
        ));
    }
    let mut cells: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut rows: BTreeMap<usize, f64> = BTreeMap::new();
    let mut cols: BTreeMap<usize, f64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *cells.entry((x, y)).or_insert(0.0) += 1.0;
        *rows.entry(x).or_insert(0.0) += 1.0;
        *cols.entry(y).or_insert(0.0) += 1.0;
    }
    let comb2 = |n: f64| n * (n - 1.0) / 2.0;
    let index: f64 = cells.values().map(|&n| comb2(n)).sum();
    let row_sum: f64 = rows.values().map(|&n| comb2(n)).sum();
    let col_sum: f64 = cols.values().map(|&n| comb2(n)).sum();
    let total = comb2(a.len() as f64);
    let expected = row_sum * col_sum / total;
    let max_index = (row_sum + col_sum) / 2.0;
    if max_index == expected {
        // Both partitions degenerate the same way (all one cluster or all
        // singletons): identical, hence perfect agreement.
        return Ok(1.0);
    }
    Ok((index - expected) / (max_index - expected))
}

/// One replicate's outcome under a sweep: the selected number of groups and
/// the ARI of the selected model's classification against the truth.
#[derive(Debug, Clone, Copy)]
pub struct ReplicateOutcome {
    pub selected_groups: usize,
    pub ari: f64,
}

/// Selection counts and ARI summary for one model kind over replicates.
#[derive(Debug, Clone)]
pub struct EvalSummary {
    pub kind: String,
    pub g_values: Vec<usize>,
    /// How many replicates selected each G, aligned with `g_values`.
    pub histogram: Vec<usize>,
    pub ari_values: Vec<f64>,
    pub mean_ari: f64,
    pub sd_ari: f64,
}

/// Tabulate replicate outcomes: a G-selection histogram over the sweep
/// range plus the mean and standard deviation of the per-replicate ARI.
pub fn selection_table(
    kind: &str,
    g_values: &[usize],
    outcomes: &[ReplicateOutcome],
) -> Result<EvalSummary> {
    let mut histogram = vec![0usize; g_values.len()];
    for outcome in outcomes {
        let slot = g_values
            .iter()
            .position(|&g| g == outcome.selected_groups)
            .ok_or_else(|| {
                Error::InvalidData(format!(
                    "selected G={} lies outside the sweep range",
                    outcome.selected_groups
                ))
            })?;
        histogram[slot] += 1;
    }
    let ari_values: Vec<f64> = outcomes.iter().map(|o| o.ari).collect();
    let (mean_ari, sd_ari) = mean_sd(&ari_values);
    Ok(EvalSummary {
        kind: kind.to_string(),
        g_values: g_values.to_vec(),
        histogram,
        ari_values,
        mean_ari,
        sd_ari,
    })
}

/// Render selection summaries as an aligned text table, one row per model
/// kind.
pub fn format_selection_table(summaries: &[EvalSummary]) -> String {
    let mut out = String::new();
    if summaries.is_empty() {
        return out;
    }
    let g_values = &summaries[0].g_values;
    let _ = write!(out, "{:<12}", "model");
    for g in g_values {
        let _ = write!(out, "{:>8}", format!("G={g}"));
    }
    let _ = writeln!(out, "  {:>16}", "mean ARI (sd)");
    for s in summaries {
        let _ = write!(out, "{:<12}", s.kind);
        for count in &s.histogram {
            let _ = write!(out, "{count:>8}");
        }
        let _ = writeln!(out, "  {:>16}", format!("{:.3}({:.3})", s.mean_ari, s.sd_ari));
    }
    out
}

/// BIC values per model kind and number of groups, with each row's maximum
/// flagged.
#[derive(Debug, Clone)]
pub struct BicTable {
    pub g_values: Vec<usize>,
    /// (kind, BIC per G; None marks a failed fit).
    pub rows: Vec<(String, Vec<Option<f64>>)>,
}

impl BicTable {
    pub fn new(g_values: Vec<usize>) -> Self {
        BicTable {
            g_values,
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, kind: &str, bics: Vec<Option<f64>>) {
        debug_assert_eq!(bics.len(), self.g_values.len());
        self.rows.push((kind.to_string(), bics));
    }

    /// Index of the row maximum, ties toward the smaller G.
    pub fn best_in_row(&self, row: usize) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, value) in self.rows[row].1.iter().enumerate() {
            if let Some(v) = value {
                if best.is_none() || *v > self.rows[row].1[best.unwrap()].unwrap() {
                    best = Some(i);
                }
            }
        }
        best
    }

    /// Largest minus smallest finite BIC in a row.
    pub fn row_spread(&self, row: usize) -> Option<f64> {
        let finite: Vec<f64> = self.rows[row].1.iter().flatten().copied().collect();
        if finite.is_empty() {
            return None;
        }
        let max = finite.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = finite.iter().cloned().fold(f64::INFINITY, f64::min);
        Some(max - min)
    }

    /// Aligned text rendering; the row maximum is starred.
    pub fn format_text(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<8}", "model");
        for g in &self.g_values {
            let _ = write!(out, "{:>14}", format!("G={g}"));
        }
        let _ = writeln!(out);
        for (row, (kind, bics)) in self.rows.iter().enumerate() {
            let best = self.best_in_row(row);
            let _ = write!(out, "{kind:<8}");
            for (i, value) in bics.iter().enumerate() {
                match value {
                    Some(v) => {
                        let star = if best == Some(i) { "*" } else { "" };
                        let _ = write!(out, "{:>14}", format!("{v:.2}{star}"));
                    }
                    None => {
                        let _ = write!(out, "{:>14}", "-");
                    }
                }
            }
            let _ = writeln!(out);
        }
        out
    }

    /// Machine-readable rows: `kind,G,bic` with empty BIC for failures.
    pub fn format_csv(&self) -> String {
        let mut out = String::from("model,groups,bic\n");
        for (kind, bics) in &self.rows {
            for (g, value) in self.g_values.iter().zip(bics) {
                match value {
                    Some(v) => {
                        let _ = writeln!(out, "{kind},{g},{v}");
                    }
                    None => {
                        let _ = writeln!(out, "{kind},{g},");
                    }
                }
            }
        }
        out
    }
}
