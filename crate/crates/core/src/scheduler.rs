//! Per-TTI UE selection.
//!
//! All schedulers maximize the weighted proportional-fair sum
//! `Q_sum(S) = Σ_{n∈S} Q_n(S) / (Q̄_n · W_n)` where `Q_n(S)` is the
//! throughput of UE `n` when the set `S` is co-scheduled. Throughputs are
//! coupled through MU-MIMO interference, so every evaluation recomputes the
//! whole set.
//!
//! - [`greedy_schedule`] walks the candidates once, keeping a UE iff it
//!   strictly raises `Q_sum`, and stops as soon as the set breaks the UE or
//!   layer cap, returning the set from before that addition.
//! - [`exhaustive_schedule`] enumerates every feasible subset.
//!
//! With PAoI weights this is the timely-throughput scheduler; with unit
//! weights it is the classical PF baseline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::PrecodedChannels;
use crate::{Error, Result};

/// Floor on the PF average, bits per TTI.
pub const Q_AVG_MIN: f64 = 1e-6;

/// Largest candidate list [`exhaustive_schedule`] accepts.
pub const EXHAUSTIVE_LIMIT: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerKind {
    /// Greedy selection with PAoI weights.
    PaoiWpf,
    /// Greedy selection with unit weights.
    ClassicPf,
    /// Exhaustive search with PAoI weights.
    Exhaustive,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 3] = [Self::PaoiWpf, Self::ClassicPf, Self::Exhaustive];

    pub fn name(self) -> &'static str {
        match self {
            Self::PaoiWpf => "paoi_wpf",
            Self::ClassicPf => "classic_pf",
            Self::Exhaustive => "exhaustive",
        }
    }

    pub fn uses_paoi_weights(self) -> bool {
        !matches!(self, Self::ClassicPf)
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown scheduler `{0}` (expected one of paoi_wpf, classic_pf, exhaustive)")]
pub struct UnknownScheduler(pub String);

impl FromStr for SchedulerKind {
    type Err = UnknownScheduler;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| UnknownScheduler(s.to_string()))
    }
}

/// Per-UE throughput of a co-scheduled set.
pub trait ThroughputModel {
    fn n_ues(&self) -> usize;

    /// `Q_n` of each member of `cosched`, in order.
    fn throughputs(&self, cosched: &[usize]) -> Result<Vec<f64>>;
}

impl ThroughputModel for PrecodedChannels {
    fn n_ues(&self) -> usize {
        PrecodedChannels::n_ues(self)
    }

    fn throughputs(&self, cosched: &[usize]) -> Result<Vec<f64>> {
        PrecodedChannels::throughputs(self, cosched)
    }
}

/// Exponentially smoothed throughput of one UE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PfState {
    pub q_avg: f64,
    pub tau: f64,
    pub floor: f64,
}

impl PfState {
    pub fn new(q_avg: f64, tau: f64) -> Self {
        Self::with_floor(q_avg, tau, Q_AVG_MIN)
    }

    pub fn with_floor(q_avg: f64, tau: f64, floor: f64) -> Self {
        Self {
            q_avg: q_avg.max(floor),
            tau,
            floor,
        }
    }
}

/// `Q̄ ← (1 − τ)·Q̄ + τ·β·Q`, floored.
pub fn pf_update(state: PfState, scheduled: bool, q: f64) -> PfState {
    let served = if scheduled { q } else { 0.0 };
    let q_avg = (1.0 - state.tau) * state.q_avg + state.tau * served;
    PfState {
        q_avg: q_avg.max(state.floor),
        ..state
    }
}

/// One UE's contribution to `Q_sum`.
pub fn ue_metric(q: f64, pf: &PfState, w: f64) -> f64 {
    q / (pf.q_avg * w)
}

/// Bound on the number of co-scheduled UEs implied by the layer cap:
/// `ceil(Λ̄ / mean(λ))` with the mean over all `n_total` UEs.
pub fn ue_cap(lambdas: &[usize], layer_cap: usize, n_total: usize) -> usize {
    let total: usize = lambdas.iter().sum();
    if total == 0 {
        return n_total;
    }
    (layer_cap * n_total).div_ceil(total)
}

/// Descending metric, ties by ascending index.
pub fn candidate_order(metrics: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..metrics.len()).collect();
    order.sort_by(|&a, &b| metrics[b].total_cmp(&metrics[a]).then(a.cmp(&b)));
    order
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulingDecision {
    pub scheduled: Vec<bool>,
    pub streams: Vec<usize>,
    pub granted_bits: Vec<u64>,
    /// `Q_n` under the chosen set; zero for unscheduled UEs.
    pub rates: Vec<f64>,
    pub q_sum: f64,
    /// UE cap in force for this TTI.
    pub ue_cap: usize,
    /// `Q_sum` after each accepted greedy addition.
    pub history: Vec<f64>,
}

impl SchedulingDecision {
    fn from_set(
        n_ues: usize,
        set: &[usize],
        rates: &[f64],
        q_sum: f64,
        lambdas: &[usize],
        ue_cap: usize,
    ) -> Self {
        let mut scheduled = vec![false; n_ues];
        let mut all_rates = vec![0.0; n_ues];
        for (&ue, &q) in set.iter().zip(rates) {
            scheduled[ue] = true;
            all_rates[ue] = q;
        }
        Self {
            scheduled,
            streams: lambdas.to_vec(),
            granted_bits: vec![0; n_ues],
            rates: all_rates,
            q_sum,
            ue_cap,
            history: Vec::new(),
        }
    }

    pub fn members(&self) -> Vec<usize> {
        (0..self.scheduled.len()).filter(|&n| self.scheduled[n]).collect()
    }

    pub fn count(&self) -> usize {
        self.scheduled.iter().filter(|&&b| b).count()
    }

    pub fn layers(&self) -> usize {
        self.members().iter().map(|&n| self.streams[n]).sum()
    }

    /// Whether the decision respects both the layer cap and the UE cap.
    pub fn is_feasible(&self, layer_cap: usize) -> bool {
        self.layers() <= layer_cap && self.count() <= self.ue_cap
    }

    /// TB sizes: `floor(gap · Q_n)` clamped by each UE's BSR.
    pub fn grant(&mut self, bsr: &[u64], gap_factor: f64) {
        for (n, granted) in self.granted_bits.iter_mut().enumerate() {
            *granted = if self.scheduled[n] {
                ((gap_factor * self.rates[n]).floor() as u64).min(bsr[n])
            } else {
                0
            };
        }
    }
}

fn q_sum_of(set: &[usize], rates: &[f64], pf: &[PfState], w: &[f64]) -> f64 {
    set.iter()
        .zip(rates)
        .map(|(&n, &q)| ue_metric(q, &pf[n], w[n]))
        .sum()
}

/// Interference-free metric of every UE, the basis of the greedy order.
pub fn standalone_metrics<M: ThroughputModel + ?Sized>(
    model: &M,
    pf: &[PfState],
    w: &[f64],
) -> Result<Vec<f64>> {
    (0..model.n_ues())
        .map(|n| Ok(ue_metric(model.throughputs(&[n])?[0], &pf[n], w[n])))
        .collect()
}

/// Greedy weighted-PF selection with early stopping.
pub fn greedy_schedule<M: ThroughputModel + ?Sized>(
    model: &M,
    candidates: &[usize],
    pf: &[PfState],
    w: &[f64],
    lambdas: &[usize],
    layer_cap: usize,
) -> Result<SchedulingDecision> {
    let n_ues = model.n_ues();
    let cap = ue_cap(lambdas, layer_cap, n_ues);

    let mut set: Vec<usize> = Vec::new();
    let mut rates: Vec<f64> = Vec::new();
    let mut q_sum = 0.0;
    let mut history = Vec::new();

    for &n in candidates {
        let before = (set.clone(), rates.clone(), q_sum);

        let mut trial = set.clone();
        trial.push(n);
        // Evaluate sets in index order so a set scores the same here and in
        // the exhaustive search, bit for bit.
        trial.sort_unstable();
        let trial_rates = model.throughputs(&trial)?;
        let trial_sum = q_sum_of(&trial, &trial_rates, pf, w);
        if trial_sum > q_sum {
            set = trial;
            rates = trial_rates;
            q_sum = trial_sum;
            history.push(q_sum);
        }

        let layers: usize = set.iter().map(|&m| lambdas[m]).sum();
        if set.len() > cap || layers > layer_cap {
            let (set, rates, q_sum) = before;
            history.pop();
            let mut d = SchedulingDecision::from_set(n_ues, &set, &rates, q_sum, lambdas, cap);
            d.history = history;
            return Ok(d);
        }
    }

    let mut d = SchedulingDecision::from_set(n_ues, &set, &rates, q_sum, lambdas, cap);
    d.history = history;
    Ok(d)
}

/// Best feasible subset by full enumeration; ties go to the
/// lexicographically smallest scheduling vector.
pub fn exhaustive_schedule<M: ThroughputModel + ?Sized>(
    model: &M,
    candidates: &[usize],
    pf: &[PfState],
    w: &[f64],
    lambdas: &[usize],
    layer_cap: usize,
) -> Result<SchedulingDecision> {
    if candidates.len() > EXHAUSTIVE_LIMIT {
        return Err(Error::TooManyCandidates {
            given: candidates.len(),
            limit: EXHAUSTIVE_LIMIT,
        });
    }
    let n_ues = model.n_ues();
    let cap = ue_cap(lambdas, layer_cap, n_ues);

    let mut best_set: Vec<usize> = Vec::new();
    let mut best_rates: Vec<f64> = Vec::new();
    let mut best_sum = 0.0;
    let mut best_beta = vec![false; n_ues];

    for mask in 1u32..(1u32 << candidates.len()) {
        let mut set: Vec<usize> = (0..candidates.len())
            .filter(|&i| mask & (1 << i) != 0)
            .map(|i| candidates[i])
            .collect();
        set.sort_unstable();
        let layers: usize = set.iter().map(|&m| lambdas[m]).sum();
        if set.len() > cap || layers > layer_cap {
            continue;
        }
        let rates = model.throughputs(&set)?;
        let sum = q_sum_of(&set, &rates, pf, w);
        let mut beta = vec![false; n_ues];
        set.iter().for_each(|&m| beta[m] = true);
        if sum > best_sum || (sum == best_sum && beta < best_beta) {
            best_set = set;
            best_rates = rates;
            best_sum = sum;
            best_beta = beta;
        }
    }
    Ok(SchedulingDecision::from_set(
        n_ues,
        &best_set,
        &best_rates,
        best_sum,
        lambdas,
        cap,
    ))
}
