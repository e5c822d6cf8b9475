//! Run summaries and the evaluation statistics built from them.
//!
//! A [`RunSummary`] covers one or more drops of one scheduler. Summaries
//! merge by concatenating per-UE entries and per-drop totals in canonical
//! order, so the merged value does not depend on merge order.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// α-fair utility: `log x` for α = 1, `x^(1-α) / (1-α)` otherwise.
pub fn alpha_fair(x: f64, alpha: f64) -> Result<f64> {
    if x.is_nan() || x <= 0.0 {
        return Err(Error::Domain(format!("alpha-fair utility at x = {x}")));
    }
    Ok(if alpha == 1.0 {
        x.ln()
    } else {
        x.powf(1.0 - alpha) / (1.0 - alpha)
    })
}

/// Jain's index `(Σx)² / (n·Σx²)`; 1 for an all-zero list.
pub fn jain_index(values: &[f64]) -> f64 {
    let sum: f64 = values.iter().sum();
    let sq: f64 = values.iter().map(|v| v * v).sum();
    if sq == 0.0 {
        return 1.0;
    }
    sum * sum / (values.len() as f64 * sq)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupMeans {
    pub count: usize,
    pub arithmetic: f64,
    pub geometric: f64,
    /// Arithmetic mean rounded to the nearest integer.
    pub rounded: f64,
}

impl GroupMeans {
    fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let arithmetic = values.iter().sum::<f64>() / n;
        let geometric = if values.iter().any(|&v| v <= 0.0) {
            0.0
        } else {
            (values.iter().map(|v| v.ln()).sum::<f64>() / n).exp()
        };
        Self {
            count: values.len(),
            arithmetic,
            geometric,
            rounded: arithmetic.round(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoodputGroups {
    pub top95: GroupMeans,
    pub bottom5: GroupMeans,
    pub bottom10: GroupMeans,
}

fn bottom_count(n: usize, percent: usize) -> usize {
    (n * percent).div_ceil(100).max(1).min(n)
}

/// Means over the bottom 5 %, bottom 10 % and top 95 % of UEs by goodput.
///
/// A bottom group holds the `ceil(k·N)` lowest UEs; the top group is the
/// complement of the bottom 5 %, or every UE when that complement is empty.
pub fn goodput_groups(per_ue_goodput: &[f64]) -> GoodputGroups {
    assert!(!per_ue_goodput.is_empty(), "goodput groups need at least one UE");
    let mut sorted = per_ue_goodput.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let b5 = bottom_count(n, 5);
    let b10 = bottom_count(n, 10);
    let top = if b5 < n { &sorted[b5..] } else { &sorted[..] };
    GoodputGroups {
        top95: GroupMeans::of(top),
        bottom5: GroupMeans::of(&sorted[..b5]),
        bottom10: GroupMeans::of(&sorted[..b10]),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
    pub mean: f64,
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Tukey box statistics with 1.5·IQR fences.
pub fn paoi_boxstats(per_ue_paoi: &[f64]) -> BoxStats {
    assert!(!per_ue_paoi.is_empty(), "box statistics need at least one value");
    let mut sorted = per_ue_paoi.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let median = quantile_sorted(&sorted, 0.5);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside = || sorted.iter().copied().filter(|&v| v >= lo_fence && v <= hi_fence);
    BoxStats {
        q1,
        median,
        q3,
        whisker_low: inside().fold(f64::INFINITY, f64::min),
        whisker_high: inside().fold(f64::NEG_INFINITY, f64::max),
        outliers: sorted
            .iter()
            .copied()
            .filter(|&v| v < lo_fence || v > hi_fence)
            .collect(),
        mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
    }
}

/// Fraction of UEs whose PAoI meets the delay budget (inclusive).
pub fn xr_capacity(per_ue_paoi: &[f64], pdb: u32) -> f64 {
    assert!(!per_ue_paoi.is_empty(), "XR capacity needs at least one UE");
    let ok = per_ue_paoi.iter().filter(|&&p| p <= f64::from(pdb)).count();
    ok as f64 / per_ue_paoi.len() as f64
}

/// Normalizes co-scheduled-UE counts into a pmf.
pub fn pmf_from_counts(counts: &[u64]) -> Vec<f64> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return vec![0.0; counts.len()];
    }
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

/// Empirical pmf of the number of co-scheduled UEs over `0..=n_ues`.
pub fn cosched_pmf<'a>(
    records: impl IntoIterator<Item = &'a crate::engine::TtiRecord>,
    n_ues: usize,
) -> Vec<f64> {
    let mut counts = vec![0u64; n_ues + 1];
    for r in records {
        counts[r.cosched] += 1;
    }
    pmf_from_counts(&counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UeSummary {
    pub drop: u32,
    pub ue: usize,
    pub delivered_packets: u64,
    pub expired_packets: u64,
    pub scheduled_ttis: u64,
    pub delivered_bits: u64,
    pub expired_bits: u64,
    pub generated_bits: u64,
    pub final_remaining: u64,
    /// Time-averaged PAoI; `None` if the UE never had a reset.
    pub paoi: Option<f64>,
    pub paoi_samples: u64,
}

impl UeSummary {
    /// Generated bits are exactly accounted for by delivered, expired and
    /// still-pending bits.
    pub fn conserves_bits(&self) -> bool {
        self.delivered_bits + self.expired_bits + self.final_remaining == self.generated_bits
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropTotals {
    pub drop: u32,
    pub ttis: u64,
    /// Σ_t Σ_n β·log Q over the drop.
    pub objective_sum: f64,
    /// TTIs that scheduled fewer UEs than the largest feasible set.
    pub below_cap_ttis: u64,
    pub xr_capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub pdb: u32,
    pub age_clip: u32,
    pub drops: Vec<DropTotals>,
    pub ues: Vec<UeSummary>,
    pub cosched_counts: Vec<u64>,
}

impl RunSummary {
    pub fn tti_count(&self) -> u64 {
        self.drops.iter().map(|d| d.ttis).sum()
    }

    /// PAoI used for constraint checks: undefined maps to the age clip.
    pub fn constraint_paoi(&self) -> Vec<f64> {
        self.ues
            .iter()
            .map(|u| u.paoi.unwrap_or(f64::from(self.age_clip)))
            .collect()
    }

    pub fn satisfied(&self) -> Vec<bool> {
        self.constraint_paoi()
            .iter()
            .map(|&p| p <= f64::from(self.pdb))
            .collect()
    }

    pub fn xr_capacity(&self) -> f64 {
        xr_capacity(&self.constraint_paoi(), self.pdb)
    }

    pub fn paoi_box(&self) -> BoxStats {
        paoi_boxstats(&self.constraint_paoi())
    }

    pub fn mean_paoi(&self) -> f64 {
        let p = self.constraint_paoi();
        p.iter().sum::<f64>() / p.len() as f64
    }

    pub fn goodput(&self) -> Vec<f64> {
        self.ues.iter().map(|u| u.delivered_packets as f64).collect()
    }

    pub fn goodput_groups(&self) -> GoodputGroups {
        goodput_groups(&self.goodput())
    }

    pub fn cosched_pmf(&self) -> Vec<f64> {
        pmf_from_counts(&self.cosched_counts)
    }

    /// Time-averaged log-utility objective.
    pub fn objective_value(&self) -> f64 {
        let sum: f64 = self.drops.iter().map(|d| d.objective_sum).sum();
        sum / self.tti_count() as f64
    }

    pub fn below_cap_fraction(&self) -> f64 {
        let below: u64 = self.drops.iter().map(|d| d.below_cap_ttis).sum();
        below as f64 / self.tti_count() as f64
    }

    pub fn conserves_bits(&self) -> bool {
        self.ues.iter().all(UeSummary::conserves_bits)
    }

    /// Combines summaries of disjoint drops.
    pub fn merge(mut self, other: RunSummary) -> RunSummary {
        assert_eq!(
            (self.pdb, self.age_clip),
            (other.pdb, other.age_clip),
            "merging summaries with different budgets"
        );
        self.drops.extend(other.drops);
        self.drops.sort_by_key(|d| d.drop);
        self.ues.extend(other.ues);
        self.ues.sort_by_key(|u| (u.drop, u.ue));
        if self.cosched_counts.len() < other.cosched_counts.len() {
            self.cosched_counts.resize(other.cosched_counts.len(), 0);
        }
        for (a, b) in self.cosched_counts.iter_mut().zip(&other.cosched_counts) {
            *a += b;
        }
        self
    }

    pub fn merge_all(summaries: impl IntoIterator<Item = RunSummary>) -> Option<RunSummary> {
        summaries.into_iter().reduce(RunSummary::merge)
    }
}
