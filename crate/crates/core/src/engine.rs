//! TTI-slotted simulation loop.
//!
//! Each TTI runs, in order: BSR reporting, channel evolution, rank
//! selection, PAoI weights, UE selection, grants, transmission with
//! instantaneous feedback, packet replacement, AoI update and PF update.
//! Control signalling has zero delay.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aoi::{self, AoiParams, AoiState};
use crate::channel::{spread_gains_db, ChannelConfig, ChannelGenerator, ChannelSource, ChannelSvd};
use crate::metrics::{xr_capacity, DropTotals, RunSummary, UeSummary};
use crate::scheduler::{
    candidate_order, exhaustive_schedule, greedy_schedule, pf_update, ue_metric, PfState,
    SchedulerKind, SchedulingDecision, ThroughputModel, Q_AVG_MIN,
};
use crate::traffic::{self, BsrReporter, PacketState, Replacement, TbOutcome, TrafficConfig};
use crate::{Error, Invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AoiConfig {
    pub kappa: f64,
    pub theta: f64,
    /// Age clip; must exceed the packet delay budget.
    pub age_clip: u32,
}

impl Default for AoiConfig {
    fn default() -> Self {
        Self {
            kappa: 2.0,
            theta: 0.5,
            age_clip: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerConfig {
    pub kind: SchedulerKind,
    /// PF smoothing constant.
    pub tau: f64,
    /// Maximum number of spatial layers per TTI.
    pub layer_cap: usize,
    /// Initial PF average; `None` uses each UE's interference-free
    /// throughput at TTI 0.
    pub q_avg_init: Option<f64>,
    pub q_avg_min: f64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            kind: SchedulerKind::PaoiWpf,
            tau: 0.001,
            layer_cap: 8,
            q_avg_init: None,
            q_avg_min: Q_AVG_MIN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_ues: usize,
    pub ttis: u64,
    pub drops: u32,
    pub seed: u64,
    pub channel: ChannelConfig,
    pub traffic: TrafficConfig,
    pub aoi: AoiConfig,
    pub scheduler: SchedulerConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        let mut cfg = Self {
            n_ues: 10,
            ttis: 1_000_000,
            drops: 35,
            seed: 1,
            channel: ChannelConfig::default(),
            traffic: TrafficConfig::default(),
            aoi: AoiConfig::default(),
            scheduler: SchedulerConfig::default(),
        };
        cfg.fill_gains();
        cfg
    }
}

impl SimConfig {
    /// Fills an empty gain list with `n_ues` gains spread over
    /// `channel.gain_spread_db`.
    pub fn fill_gains(&mut self) {
        if self.channel.per_ue_gain_db.is_empty() {
            self.channel.per_ue_gain_db = spread_gains_db(self.n_ues, self.channel.gain_spread_db);
        }
    }

    pub fn aoi_params(&self) -> AoiParams {
        AoiParams {
            kappa: self.aoi.kappa,
            theta: self.aoi.theta,
            pdb: self.traffic.pdb,
        }
    }

    /// Largest stream count any UE may use.
    pub fn max_rank(&self) -> usize {
        self.channel.n_ue_trx.min(self.scheduler.layer_cap).max(1)
    }

    pub fn validate(&self) -> Vec<Invalid> {
        let mut issues = Vec::new();
        if self.n_ues == 0 {
            issues.push(Invalid::new("n_ues", "must be at least 1"));
        }
        if self.ttis == 0 {
            issues.push(Invalid::new("ttis", "must be at least 1"));
        }
        if self.drops == 0 {
            issues.push(Invalid::new("drops", "must be at least 1"));
        }
        issues.extend(self.channel.validate().into_iter().map(|i| i.nested("channel")));
        if !self.channel.per_ue_gain_db.is_empty() && self.channel.per_ue_gain_db.len() != self.n_ues {
            issues.push(Invalid::new(
                "channel.per_ue_gain_db",
                format!("has {} entries for {} UEs", self.channel.per_ue_gain_db.len(), self.n_ues),
            ));
        }
        issues.extend(self.traffic.validate().into_iter().map(|i| i.nested("traffic")));
        issues.extend(
            self.aoi_params()
                .validate()
                .into_iter()
                .filter(|i| i.field != "pdb")
                .map(|i| i.nested("aoi")),
        );
        if self.aoi.age_clip <= self.traffic.pdb {
            issues.push(Invalid::new("aoi.age_clip", "must exceed traffic.pdb"));
        }
        let s = &self.scheduler;
        if !(s.tau > 0.0 && s.tau <= 1.0) {
            issues.push(Invalid::new("scheduler.tau", "must lie in (0, 1]"));
        }
        if s.layer_cap == 0 {
            issues.push(Invalid::new("scheduler.layer_cap", "must be at least 1"));
        }
        if s.layer_cap > self.channel.n_gnb_trx {
            issues.push(Invalid::new("scheduler.layer_cap", "must not exceed channel.n_gnb_trx"));
        }
        if let Some(q) = s.q_avg_init {
            if !(q.is_finite() && q > 0.0) {
                issues.push(Invalid::new("scheduler.q_avg_init", "must be positive"));
            }
        }
        if !(s.q_avg_min.is_finite() && s.q_avg_min > 0.0) {
            issues.push(Invalid::new("scheduler.q_avg_min", "must be positive"));
        }
        if s.kind == SchedulerKind::Exhaustive && self.n_ues > crate::scheduler::EXHAUSTIVE_LIMIT {
            issues.push(Invalid::new("scheduler.kind", "exhaustive search supports at most 15 UEs"));
        }
        issues
    }

    pub fn check(&self) -> Result<()> {
        let issues = self.validate();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(issues))
        }
    }
}

/// Everything observed in one TTI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtiRecord {
    pub tti: u64,
    pub age: Vec<u32>,
    pub weighted_age: Vec<f64>,
    pub weight: Vec<f64>,
    pub q_avg: Vec<f64>,
    pub lambda: Vec<usize>,
    pub bsr: Vec<u64>,
    pub q: Vec<f64>,
    pub scheduled: Vec<bool>,
    pub s: Vec<bool>,
    pub tb_bits: Vec<u64>,
    pub delivered: Vec<bool>,
    pub expired: Vec<bool>,
    /// Residual bits dropped by an expiry this TTI.
    pub expired_bits: Vec<u64>,
    pub phi: Vec<bool>,
    pub q_sum: f64,
    pub cosched: usize,
    pub ue_cap: usize,
    /// Size of the largest set allowed by both caps.
    pub max_feasible: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Ledger {
    generated_bits: u64,
    delivered_bits: u64,
    expired_bits: u64,
    delivered_packets: u64,
    expired_packets: u64,
    scheduled_ttis: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UeState {
    pub packet: PacketState,
    pub aoi: AoiState,
    pub pf: PfState,
    ledger: Ledger,
}

/// Largest number of UEs satisfying both caps given this TTI's ranks.
pub fn max_feasible(lambdas: &[usize], layer_cap: usize, ue_cap: usize) -> usize {
    let mut sorted = lambdas.to_vec();
    sorted.sort_unstable();
    let mut layers = 0;
    let mut k = 0;
    for l in sorted {
        if k == ue_cap || layers + l > layer_cap {
            break;
        }
        layers += l;
        k += 1;
    }
    k
}

/// Mixes a drop index into the base seed.
pub fn drop_seed(seed: u64, drop: u32) -> u64 {
    let mut z = u64::from(drop).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    seed ^ (z ^ (z >> 31))
}

const CHANNEL_STREAM: u64 = 0;
const LOSS_STREAM: u64 = 1;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Channel generator of a drop; shared by every scheduler run on that drop.
pub fn drop_channel(cfg: &SimConfig, drop: u32) -> ChannelGenerator<ChaCha8Rng> {
    ChannelGenerator::new(
        cfg.channel.clone(),
        stream_rng(drop_seed(cfg.seed, drop), CHANNEL_STREAM),
    )
}

pub struct Simulation<S> {
    cfg: SimConfig,
    params: AoiParams,
    source: S,
    loss_rng: ChaCha8Rng,
    bsr: BsrReporter,
    powers: Vec<f64>,
    ues: Vec<UeState>,
    pf_ready: bool,
    tti: u64,
}

impl<S: ChannelSource> Simulation<S> {
    pub fn new(cfg: SimConfig, source: S, drop: u32) -> Result<Self> {
        cfg.check()?;
        let ues = (0..cfg.n_ues)
            .map(|_| UeState {
                packet: PacketState::fresh(cfg.traffic.packet_bits, 0),
                aoi: AoiState::new(cfg.aoi.age_clip),
                pf: PfState::with_floor(
                    cfg.scheduler.q_avg_init.unwrap_or(cfg.scheduler.q_avg_min),
                    cfg.scheduler.tau,
                    cfg.scheduler.q_avg_min,
                ),
                ledger: Ledger {
                    generated_bits: cfg.traffic.packet_bits,
                    delivered_bits: 0,
                    expired_bits: 0,
                    delivered_packets: 0,
                    expired_packets: 0,
                    scheduled_ttis: 0,
                },
            })
            .collect();
        Ok(Self {
            params: cfg.aoi_params(),
            bsr: BsrReporter::new(&cfg.traffic),
            powers: cfg.channel.powers(),
            loss_rng: stream_rng(drop_seed(cfg.seed, drop), LOSS_STREAM),
            pf_ready: cfg.scheduler.q_avg_init.is_some(),
            source,
            ues,
            cfg,
            tti: 0,
        })
    }

    pub fn ues(&self) -> &[UeState] {
        &self.ues
    }

    pub fn tti(&self) -> u64 {
        self.tti
    }

    fn weights(&self) -> (Vec<f64>, Vec<f64>) {
        let wa: Vec<f64> = self
            .ues
            .iter()
            .map(|u| aoi::weighted_age(&u.aoi, &self.params))
            .collect();
        let w = if self.cfg.scheduler.kind.uses_paoi_weights() {
            wa.iter().map(|&d| aoi::paoi_weight(d, &self.params)).collect()
        } else {
            vec![1.0; wa.len()]
        };
        (wa, w)
    }

    fn decide<M: ThroughputModel>(
        &mut self,
        model: &M,
        w: &[f64],
        lambdas: &[usize],
    ) -> Result<SchedulingDecision> {
        let n = self.cfg.n_ues;
        let alone: Vec<f64> = (0..n)
            .map(|ue| model.throughputs(&[ue]).map(|q| q[0]))
            .collect::<Result<_>>()?;
        if !self.pf_ready {
            for (u, &q) in self.ues.iter_mut().zip(&alone) {
                u.pf = PfState::with_floor(q, self.cfg.scheduler.tau, self.cfg.scheduler.q_avg_min);
            }
            self.pf_ready = true;
        }
        let pf: Vec<PfState> = self.ues.iter().map(|u| u.pf).collect();
        let metrics: Vec<f64> = (0..n).map(|ue| ue_metric(alone[ue], &pf[ue], w[ue])).collect();
        let order = candidate_order(&metrics);
        let layer_cap = self.cfg.scheduler.layer_cap;
        match self.cfg.scheduler.kind {
            SchedulerKind::PaoiWpf | SchedulerKind::ClassicPf => {
                greedy_schedule(model, &order, &pf, w, lambdas, layer_cap)
            }
            SchedulerKind::Exhaustive => exhaustive_schedule(model, &order, &pf, w, lambdas, layer_cap),
        }
    }

    pub fn step(&mut self) -> Result<TtiRecord> {
        let n = self.cfg.n_ues;
        let tti = self.tti;

        let bsr: Vec<u64> = self.ues.iter().map(|u| self.bsr.report(&u.packet)).collect();

        let real = self.source.next_realization()?;
        let shape = (real.n_ues, real.n_rb, real.n_gnb_trx(), real.n_ue_trx());
        let want = (n, self.cfg.channel.n_rb, self.cfg.channel.n_gnb_trx, self.cfg.channel.n_ue_trx);
        if shape != want {
            return Err(Error::ChannelShape {
                expected: format!("{want:?} (ues, rbs, gNB TRX, UE TRX)"),
                got: format!("{shape:?}"),
            });
        }

        let svd = ChannelSvd::new(&real);
        let max_rank = self.cfg.max_rank();
        let lambdas: Vec<usize> = (0..n)
            .map(|ue| svd.rank(ue, max_rank, self.cfg.channel.rank_threshold))
            .collect();
        let model = svd.precode(&lambdas, &self.powers, self.cfg.channel.n_re_per_rb);

        let (wa, w) = self.weights();
        let age: Vec<u32> = self.ues.iter().map(|u| u.aoi.age).collect();

        let mut decision = self.decide(&model, &w, &lambdas)?;
        let q_avg: Vec<f64> = self.ues.iter().map(|u| u.pf.q_avg).collect();

        decision.grant(&bsr, self.cfg.channel.gap_factor);

        let mut outcomes = Vec::with_capacity(n);
        let mut expired_bits = vec![0; n];
        let mut phis = Vec::with_capacity(n);
        for (ue, state) in self.ues.iter_mut().enumerate() {
            let beta = decision.scheduled[ue];
            let (mut out, pkt) = traffic::transmit(
                state.packet,
                decision.granted_bits[ue],
                self.cfg.traffic.loss_prob,
                &mut self.loss_rng,
            );
            let (next_pkt, replacement) = traffic::advance(pkt, &out, &self.cfg.traffic, tti);
            out.expired_packet = matches!(replacement, Replacement::Expired { .. });

            let ledger = &mut state.ledger;
            if beta {
                ledger.scheduled_ttis += 1;
            }
            if out.s {
                ledger.delivered_bits += out.tb_bits;
            }
            match replacement {
                Replacement::Kept => {}
                Replacement::Delivered => ledger.delivered_packets += 1,
                Replacement::Expired { residual_bits } => {
                    ledger.expired_packets += 1;
                    ledger.expired_bits += residual_bits;
                    expired_bits[ue] = residual_bits;
                }
            }
            if replacement.replaced() {
                ledger.generated_bits += next_pkt.size;
            }
            state.packet = next_pkt;

            // a delivery-triggered replacement is what grows the BSR
            let grew = replacement == Replacement::Delivered;
            let phi = aoi::phi(beta, out.s, grew);
            state.aoi = state.aoi.step(phi);
            state.pf = pf_update(state.pf, beta, decision.rates[ue]);

            phis.push(phi);
            outcomes.push(out);
        }

        self.tti += 1;
        let cosched = decision.count();
        Ok(TtiRecord {
            tti,
            age,
            weighted_age: wa,
            weight: w,
            q_avg,
            max_feasible: max_feasible(&lambdas, self.cfg.scheduler.layer_cap, decision.ue_cap),
            lambda: lambdas,
            bsr,
            q: decision.rates.clone(),
            scheduled: decision.scheduled.clone(),
            s: outcomes.iter().map(|o: &TbOutcome| o.s).collect(),
            tb_bits: outcomes.iter().map(|o| o.tb_bits).collect(),
            delivered: outcomes.iter().map(|o| o.delivered_packet).collect(),
            expired: outcomes.iter().map(|o| o.expired_packet).collect(),
            expired_bits,
            phi: phis,
            q_sum: decision.q_sum,
            cosched,
            ue_cap: decision.ue_cap,
        })
    }
}

/// Accumulates per-TTI records into a drop summary.
#[derive(Debug, Clone)]
pub struct SummaryBuilder {
    drop: u32,
    ttis: u64,
    objective_sum: f64,
    below_cap: u64,
    counts: Vec<u64>,
}

impl SummaryBuilder {
    pub fn new(drop: u32, n_ues: usize) -> Self {
        Self {
            drop,
            ttis: 0,
            objective_sum: 0.0,
            below_cap: 0,
            counts: vec![0; n_ues + 1],
        }
    }

    pub fn observe(&mut self, rec: &TtiRecord) {
        self.ttis += 1;
        self.counts[rec.cosched] += 1;
        if rec.cosched < rec.max_feasible {
            self.below_cap += 1;
        }
        self.objective_sum += rec
            .scheduled
            .iter()
            .zip(&rec.q)
            .filter(|(&b, &q)| b && q > 0.0)
            .map(|(_, q)| q.ln())
            .sum::<f64>();
    }

    pub fn finish<S>(self, sim: &Simulation<S>) -> RunSummary {
        let ues: Vec<UeSummary> = sim
            .ues
            .iter()
            .enumerate()
            .map(|(ue, s)| UeSummary {
                drop: self.drop,
                ue,
                delivered_packets: s.ledger.delivered_packets,
                expired_packets: s.ledger.expired_packets,
                scheduled_ttis: s.ledger.scheduled_ttis,
                delivered_bits: s.ledger.delivered_bits,
                expired_bits: s.ledger.expired_bits,
                generated_bits: s.ledger.generated_bits,
                final_remaining: s.packet.remaining,
                paoi: s.aoi.paoi(),
                paoi_samples: s.aoi.paoi_count,
            })
            .collect();
        let clip = sim.cfg.aoi.age_clip;
        let pdb = sim.cfg.traffic.pdb;
        let paoi: Vec<f64> = ues
            .iter()
            .map(|u| u.paoi.unwrap_or(f64::from(clip)))
            .collect();
        RunSummary {
            pdb,
            age_clip: clip,
            drops: vec![DropTotals {
                drop: self.drop,
                ttis: self.ttis,
                objective_sum: self.objective_sum,
                below_cap_ttis: self.below_cap,
                xr_capacity: xr_capacity(&paoi, pdb),
            }],
            ues,
            cosched_counts: self.counts,
        }
    }
}

/// Runs one drop on the given channel source, feeding every record to `sink`.
pub fn run_drop_with<S: ChannelSource>(
    cfg: &SimConfig,
    drop: u32,
    source: S,
    mut sink: impl FnMut(&TtiRecord),
) -> Result<RunSummary> {
    let mut sim = Simulation::new(cfg.clone(), source, drop)?;
    let mut builder = SummaryBuilder::new(drop, cfg.n_ues);
    for _ in 0..cfg.ttis {
        let rec = sim.step()?;
        builder.observe(&rec);
        sink(&rec);
    }
    Ok(builder.finish(&sim))
}

/// Runs one drop on its seeded channel.
pub fn run_drop(cfg: &SimConfig, drop: u32, sink: impl FnMut(&TtiRecord)) -> Result<RunSummary> {
    run_drop_with(cfg, drop, drop_channel(cfg, drop), sink)
}
