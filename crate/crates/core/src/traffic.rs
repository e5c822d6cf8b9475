//! XR uplink traffic: one packet in flight per UE.
//!
//! A UE generates a new packet only when the current one is fully
//! acknowledged or has outlived the packet delay budget plus a short grace
//! window. The gNB learns the buffer state through a per-TTI BSR.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::Invalid;

/// Number of quantization levels of the logarithmic BSR table.
pub const BSR_LEVELS: usize = 254;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BsrQuantizer {
    #[default]
    Exact,
    LogTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficConfig {
    /// Packet size in bits, identical for every UE.
    pub packet_bits: u64,
    /// Packet delay budget in TTIs.
    pub pdb: u32,
    /// Extra TTIs a packet may keep transmitting after the budget.
    pub grace: u32,
    pub bsr_quantizer: BsrQuantizer,
    /// Independent per-TTI transport block loss probability.
    pub loss_prob: f64,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            packet_bits: 75_000,
            pdb: 30,
            grace: 2,
            bsr_quantizer: BsrQuantizer::Exact,
            loss_prob: 0.0,
        }
    }
}

impl TrafficConfig {
    pub fn validate(&self) -> Vec<Invalid> {
        let mut issues = Vec::new();
        if self.packet_bits == 0 {
            issues.push(Invalid::new("packet_bits", "must be at least 1 bit"));
        }
        if self.pdb == 0 {
            issues.push(Invalid::new("pdb", "must be at least 1 TTI"));
        }
        if !(0.0..=1.0).contains(&self.loss_prob) {
            issues.push(Invalid::new("loss_prob", "must lie in [0, 1]"));
        }
        issues
    }

    /// Oldest age a packet may reach before it is replaced.
    pub fn max_age(&self) -> u32 {
        self.pdb + self.grace
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketState {
    pub size: u64,
    pub remaining: u64,
    /// TTIs since generation.
    pub age: u32,
    pub generation_tti: u64,
}

impl PacketState {
    pub fn fresh(size: u64, tti: u64) -> Self {
        Self {
            size,
            remaining: size,
            age: 0,
            generation_tti: tti,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TbOutcome {
    pub tb_bits: u64,
    /// Instantaneous ACK.
    pub s: bool,
    pub delivered_packet: bool,
    pub expired_packet: bool,
}

/// What [`advance`] did with the packet in flight.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Replacement {
    Kept,
    Delivered,
    Expired { residual_bits: u64 },
}

impl Replacement {
    pub fn replaced(self) -> bool {
        !matches!(self, Replacement::Kept)
    }
}

/// Geometric BSR table with [`BSR_LEVELS`] upper edges spanning `[1, max_bits]`.
///
/// Edge `k` is `ceil(max_bits^(k / (BSR_LEVELS - 1)))`; the first edge is 1
/// and the last is exactly `max_bits`. Low edges repeat while the geometric
/// step is below one bit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BsrTable {
    edges: Vec<u64>,
}

impl BsrTable {
    pub fn geometric(max_bits: u64) -> Self {
        let top = max_bits.max(1);
        let span = (BSR_LEVELS - 1) as f64;
        let mut edges = (0..BSR_LEVELS)
            .map(|k| {
                let edge = (top as f64).powf(k as f64 / span).ceil() as u64;
                edge.clamp(1, top)
            })
            .collect::<Vec<_>>();
        edges[BSR_LEVELS - 1] = top;
        Self { edges }
    }

    pub fn edges(&self) -> &[u64] {
        &self.edges
    }

    /// Smallest edge not below `bits`; zero stays zero.
    pub fn quantize(&self, bits: u64) -> u64 {
        if bits == 0 {
            return 0;
        }
        let idx = self.edges.partition_point(|&e| e < bits);
        self.edges.get(idx).copied().unwrap_or(self.edges[BSR_LEVELS - 1])
    }
}

/// BSR reporting with the quantization table fixed at construction.
#[derive(Debug, Clone)]
pub struct BsrReporter {
    table: Option<BsrTable>,
}

impl BsrReporter {
    pub fn new(cfg: &TrafficConfig) -> Self {
        let table = match cfg.bsr_quantizer {
            BsrQuantizer::Exact => None,
            BsrQuantizer::LogTable => Some(BsrTable::geometric(cfg.packet_bits)),
        };
        Self { table }
    }

    pub fn report(&self, pkt: &PacketState) -> u64 {
        match &self.table {
            None => pkt.remaining,
            Some(table) => table.quantize(pkt.remaining),
        }
    }
}

pub fn report_bsr(pkt: &PacketState, cfg: &TrafficConfig) -> u64 {
    BsrReporter::new(cfg).report(pkt)
}

/// Sends one transport block of at most `granted_bits`.
///
/// A zero grant means the UE was not scheduled: nothing is sent and the
/// feedback is a NACK.
pub fn transmit<R: Rng + ?Sized>(
    pkt: PacketState,
    granted_bits: u64,
    loss_prob: f64,
    rng: &mut R,
) -> (TbOutcome, PacketState) {
    if granted_bits == 0 {
        return (TbOutcome::default(), pkt);
    }
    let tb_bits = granted_bits.min(pkt.remaining);
    let s = if loss_prob <= 0.0 {
        true
    } else if loss_prob >= 1.0 {
        false
    } else {
        rng.random::<f64>() >= loss_prob
    };
    let mut next = pkt;
    if s {
        next.remaining -= tb_bits;
    }
    let outcome = TbOutcome {
        tb_bits,
        s,
        delivered_packet: s && next.remaining == 0,
        expired_packet: false,
    };
    (outcome, next)
}

/// End-of-TTI packet bookkeeping at TTI `tti`.
///
/// Delivery replaces the packet first, so a final TB sent inside the grace
/// window still counts as delivered.
pub fn advance(
    pkt: PacketState,
    outcome: &TbOutcome,
    cfg: &TrafficConfig,
    tti: u64,
) -> (PacketState, Replacement) {
    if outcome.delivered_packet {
        return (
            PacketState::fresh(cfg.packet_bits, tti + 1),
            Replacement::Delivered,
        );
    }
    if pkt.age + 1 > cfg.max_age() {
        return (
            PacketState::fresh(cfg.packet_bits, tti + 1),
            Replacement::Expired {
                residual_bits: pkt.remaining,
            },
        );
    }
    let mut next = pkt;
    next.age += 1;
    (next, Replacement::Kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pkt(remaining: u64, age: u32) -> PacketState {
        PacketState {
            size: 75_000,
            remaining,
            age,
            generation_tti: 0,
        }
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn exact_bsr() {
        let cfg = TrafficConfig::default();
        assert_eq!(report_bsr(&pkt(75_000, 0), &cfg), 75_000);
        assert_eq!(report_bsr(&pkt(0, 0), &cfg), 0);
    }

    #[test]
    fn log_table_shape() {
        let table = BsrTable::geometric(75_000);
        let edges = table.edges();
        assert_eq!(edges.len(), BSR_LEVELS);
        assert_eq!(edges[0], 1);
        assert_eq!(edges[BSR_LEVELS - 1], 75_000);
        assert!(edges.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn log_table_rounds_up() {
        // Independent evaluation of the edges around 100 bits:
        // 75000^(103/253) = 96.4.. and 75000^(104/253) = 100.8..
        let k103 = 75_000f64.powf(103.0 / 253.0);
        let k104 = 75_000f64.powf(104.0 / 253.0);
        assert!(k103 < 100.0 && k104 > 100.0);
        let cfg = TrafficConfig {
            bsr_quantizer: BsrQuantizer::LogTable,
            ..TrafficConfig::default()
        };
        assert_eq!(report_bsr(&pkt(100, 0), &cfg), 101);
        assert_eq!(report_bsr(&pkt(97, 0), &cfg), 97);
        assert_eq!(report_bsr(&pkt(0, 0), &cfg), 0);
        assert_eq!(report_bsr(&pkt(75_000, 0), &cfg), 75_000);
    }

    #[test]
    fn final_fragment_delivers() {
        let (out, next) = transmit(pkt(100, 3), 150, 0.0, &mut rng());
        assert_eq!(out.tb_bits, 100);
        assert!(out.s && out.delivered_packet);
        assert_eq!(next.remaining, 0);
    }

    #[test]
    fn partial_transmission() {
        let (out, next) = transmit(pkt(500, 3), 200, 0.0, &mut rng());
        assert_eq!((out.tb_bits, out.s, out.delivered_packet), (200, true, false));
        assert_eq!(next.remaining, 300);
    }

    #[test]
    fn certain_loss_keeps_buffer() {
        let (out, next) = transmit(pkt(500, 3), 200, 1.0, &mut rng());
        assert!(!out.s && !out.delivered_packet);
        assert_eq!(next.remaining, 500);
    }

    #[test]
    fn unscheduled_gets_nack() {
        let (out, next) = transmit(pkt(500, 3), 0, 0.0, &mut rng());
        assert_eq!(out, TbOutcome::default());
        assert_eq!(next, pkt(500, 3));
    }

    #[test]
    fn loss_rate_is_respected() {
        let mut r = rng();
        let acks = (0..20_000)
            .filter(|_| transmit(pkt(500, 0), 10, 0.3, &mut r).0.s)
            .count();
        let rate = acks as f64 / 20_000.0;
        assert!((rate - 0.7).abs() < 0.02, "ack rate {rate}");
    }

    #[test]
    fn delivery_replaces_packet() {
        let cfg = TrafficConfig::default();
        let done = TbOutcome {
            tb_bits: 10,
            s: true,
            delivered_packet: true,
            expired_packet: false,
        };
        let (next, why) = advance(pkt(0, 12), &done, &cfg, 40);
        assert_eq!(why, Replacement::Delivered);
        assert_eq!(next, PacketState::fresh(75_000, 41));
    }

    #[test]
    fn grace_window_boundary() {
        let cfg = TrafficConfig::default();
        let idle = TbOutcome::default();
        let (next, why) = advance(pkt(900, 31), &idle, &cfg, 0);
        assert_eq!((next.age, why), (32, Replacement::Kept));
        let (next, why) = advance(pkt(900, 32), &idle, &cfg, 0);
        assert_eq!(why, Replacement::Expired { residual_bits: 900 });
        assert_eq!(next.remaining, 75_000);
        assert_eq!(next.age, 0);
    }

    #[test]
    fn delivery_inside_grace_wins_over_expiry() {
        let cfg = TrafficConfig::default();
        let done = TbOutcome {
            tb_bits: 5,
            s: true,
            delivered_packet: true,
            expired_packet: false,
        };
        assert_eq!(advance(pkt(0, 32), &done, &cfg, 0).1, Replacement::Delivered);
    }
}
