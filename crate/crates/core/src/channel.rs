//! Block-fading uplink channels and per-stream link abstraction.
//!
//! Each UE sees an `N_G x N_U` matrix per resource block. Matrices follow a
//! first-order Gauss-Markov process across TTIs and across adjacent RBs,
//! scaled by a per-UE large-scale gain. A UE transmitting `λ` streams is
//! SVD-precoded: its effective columns are the top-`λ` left singular
//! vectors scaled by their singular values and by `sqrt(p / λ)`.
//!
//! The receiver is linear MMSE, so the SINR of a stream with effective
//! column `u` is `uᴴ R⁻¹ u`, where `R` is the noise covariance plus the
//! outer products of every other co-scheduled stream.

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Invalid, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Per-UE uplink transmit power rule.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PowerControl {
    /// Every UE transmits at `tx_power`.
    #[default]
    Equal,
    /// Open-loop fractional pathloss compensation:
    /// `p = min(tx_power, p0 * gain^-exponent)`.
    FractionalPathloss { p0: f64, exponent: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub n_gnb_trx: usize,
    pub n_ue_trx: usize,
    pub n_rb: usize,
    /// Resource elements per RB per TTI (subcarriers x symbols).
    pub n_re_per_rb: usize,
    pub temporal_corr: f64,
    pub freq_corr: f64,
    /// Exponential correlation between adjacent gNB antennas.
    pub rx_corr: f64,
    /// Large-scale gain per UE in dB; its length fixes the UE count.
    pub per_ue_gain_db: Vec<f64>,
    /// Spread used to fill `per_ue_gain_db` when a config leaves it empty.
    pub gain_spread_db: f64,
    /// Thermal noise variance per receive antenna.
    pub noise_cov_scale: f64,
    /// Power of an exponentially correlated interference term added to the
    /// noise covariance.
    pub interference_power: f64,
    pub interference_corr: f64,
    pub tx_power: f64,
    pub power_control: PowerControl,
    /// Relative singular-value threshold for rank selection.
    pub rank_threshold: f64,
    /// Fraction of the achievable throughput granted as TB size.
    pub gap_factor: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            n_gnb_trx: 16,
            n_ue_trx: 4,
            n_rb: 4,
            n_re_per_rb: 12 * 14,
            temporal_corr: 0.9,
            freq_corr: 0.5,
            rx_corr: 0.0,
            per_ue_gain_db: Vec::new(),
            gain_spread_db: 20.0,
            noise_cov_scale: 1.0,
            interference_power: 0.0,
            interference_corr: 0.5,
            tx_power: 1.0,
            power_control: PowerControl::Equal,
            rank_threshold: 0.5,
            gap_factor: 1.0,
        }
    }
}

/// `n` gains evenly spaced from 0 dB down to `-spread_db`.
pub fn spread_gains_db(n: usize, spread_db: f64) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n)
            .map(|i| -spread_db * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

impl ChannelConfig {
    pub fn n_ues(&self) -> usize {
        self.per_ue_gain_db.len()
    }

    /// Linear large-scale power gain per UE.
    pub fn gains(&self) -> Vec<f64> {
        self.per_ue_gain_db
            .iter()
            .map(|db| 10f64.powf(db / 10.0))
            .collect()
    }

    pub fn powers(&self) -> Vec<f64> {
        self.gains()
            .into_iter()
            .map(|g| match self.power_control {
                PowerControl::Equal => self.tx_power,
                PowerControl::FractionalPathloss { p0, exponent } => {
                    (p0 * g.powf(-exponent)).min(self.tx_power)
                }
            })
            .collect()
    }

    /// Lower Cholesky factor of the gNB-side correlation `R_ij = c^|i-j|`.
    pub fn rx_correlation_factor(&self) -> CMatrix {
        let n = self.n_gnb_trx;
        let c = self.rx_corr;
        // closed form for the exponential (AR(1)) correlation matrix
        let tail = (1.0 - c * c).sqrt();
        CMatrix::from_fn(n, n, |i, j| match (i, j) {
            (i, j) if j > i => Complex64::new(0.0, 0.0),
            (i, 0) => Complex64::new(c.powi(i as i32), 0.0),
            (i, j) => Complex64::new(tail * c.powi((i - j) as i32), 0.0),
        })
    }

    pub fn noise_covariance(&self) -> CMatrix {
        let n = self.n_gnb_trx;
        CMatrix::from_fn(n, n, |i, j| {
            let mut v = self.interference_power * self.interference_corr.powi(i.abs_diff(j) as i32);
            if i == j {
                v += self.noise_cov_scale;
            }
            Complex64::new(v, 0.0)
        })
    }

    pub fn validate(&self) -> Vec<Invalid> {
        let mut issues = Vec::new();
        if self.n_ue_trx == 0 {
            issues.push(Invalid::new("n_ue_trx", "must be at least 1"));
        }
        if self.n_gnb_trx < self.n_ue_trx.max(1) {
            issues.push(Invalid::new("n_gnb_trx", "must be at least n_ue_trx"));
        }
        if self.n_rb == 0 {
            issues.push(Invalid::new("n_rb", "must be at least 1"));
        }
        if self.n_re_per_rb == 0 {
            issues.push(Invalid::new("n_re_per_rb", "must be at least 1"));
        }
        for (name, v) in [
            ("temporal_corr", self.temporal_corr),
            ("freq_corr", self.freq_corr),
            ("rx_corr", self.rx_corr),
            ("interference_corr", self.interference_corr),
        ] {
            if !(0.0..1.0).contains(&v) {
                issues.push(Invalid::new(name, "must lie in [0, 1)"));
            }
        }
        if self.per_ue_gain_db.is_empty() {
            issues.push(Invalid::new("per_ue_gain_db", "must list one gain per UE"));
        }
        if self.per_ue_gain_db.iter().any(|g| !g.is_finite()) {
            issues.push(Invalid::new("per_ue_gain_db", "gains must be finite"));
        }
        if !(self.gain_spread_db.is_finite() && self.gain_spread_db >= 0.0) {
            issues.push(Invalid::new("gain_spread_db", "must be non-negative"));
        }
        if !(self.noise_cov_scale.is_finite() && self.noise_cov_scale > 0.0) {
            issues.push(Invalid::new("noise_cov_scale", "must be positive"));
        }
        if !(self.interference_power.is_finite() && self.interference_power >= 0.0) {
            issues.push(Invalid::new("interference_power", "must be non-negative"));
        }
        if !(self.tx_power.is_finite() && self.tx_power > 0.0) {
            issues.push(Invalid::new("tx_power", "must be positive"));
        }
        if let PowerControl::FractionalPathloss { p0, exponent } = self.power_control {
            if !(p0.is_finite() && p0 > 0.0) {
                issues.push(Invalid::new("power_control.p0", "must be positive"));
            }
            if !(0.0..=1.0).contains(&exponent) {
                issues.push(Invalid::new("power_control.exponent", "must lie in [0, 1]"));
            }
        }
        if !(self.rank_threshold > 0.0 && self.rank_threshold <= 1.0) {
            issues.push(Invalid::new("rank_threshold", "must lie in (0, 1]"));
        }
        if !(self.gap_factor > 0.0 && self.gap_factor <= 1.0) {
            issues.push(Invalid::new("gap_factor", "must lie in (0, 1]"));
        }
        issues
    }
}

/// Effective channels of every UE on every RB for one TTI.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub tti: u64,
    pub n_ues: usize,
    pub n_rb: usize,
    /// Row-major over `(ue, rb)`.
    pub h: Vec<CMatrix>,
    pub noise_cov: CMatrix,
}

impl ChannelRealization {
    pub fn h(&self, ue: usize, rb: usize) -> &CMatrix {
        &self.h[ue * self.n_rb + rb]
    }

    pub fn ue_blocks(&self, ue: usize) -> &[CMatrix] {
        &self.h[ue * self.n_rb..(ue + 1) * self.n_rb]
    }

    pub fn n_gnb_trx(&self) -> usize {
        self.noise_cov.nrows()
    }

    pub fn n_ue_trx(&self) -> usize {
        self.h.first().map_or(0, |m| m.ncols())
    }
}

fn cn01<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// One TTI step of the fading process; `prev = None` draws TTI 0.
pub fn evolve_channel<R: Rng + ?Sized>(
    prev: Option<&ChannelRealization>,
    cfg: &ChannelConfig,
    rng: &mut R,
) -> ChannelRealization {
    let (rows, cols, n_rb) = (cfg.n_gnb_trx, cfg.n_ue_trx, cfg.n_rb);
    let a = cfg.temporal_corr;
    let b = cfg.freq_corr;
    let innov_t = (1.0 - a * a).sqrt();
    let innov_f = (1.0 - b * b).sqrt();
    let amps: Vec<f64> = cfg.gains().into_iter().map(f64::sqrt).collect();
    let corr = (cfg.rx_corr > 0.0).then(|| cfg.rx_correlation_factor());

    let mut h = Vec::with_capacity(amps.len() * n_rb);
    for (ue, amp) in amps.iter().enumerate() {
        // unit-variance innovation, correlated across RBs
        let mut g = CMatrix::from_fn(rows, cols, |_, _| cn01(rng));
        for rb in 0..n_rb {
            if rb > 0 {
                g = g * Complex64::from(b)
                    + CMatrix::from_fn(rows, cols, |_, _| cn01(rng)) * Complex64::from(innov_f);
            }
            let shaped = match &corr {
                Some(l) => l * &g,
                None => g.clone(),
            };
            let scaled = shaped * Complex64::from(*amp);
            let next = match prev {
                Some(p) => p.h(ue, rb) * Complex64::from(a) + scaled * Complex64::from(innov_t),
                None => scaled,
            };
            h.push(next);
        }
    }
    ChannelRealization {
        tti: prev.map_or(0, |p| p.tti + 1),
        n_ues: amps.len(),
        n_rb,
        h,
        noise_cov: cfg.noise_covariance(),
    }
}

/// Where the engine gets its per-TTI channels from.
pub trait ChannelSource {
    fn next_realization(&mut self) -> Result<ChannelRealization>;
}

/// Seeded Gauss-Markov generator.
#[derive(Debug, Clone)]
pub struct ChannelGenerator<R> {
    cfg: ChannelConfig,
    rng: R,
    last: Option<ChannelRealization>,
}

impl<R: Rng> ChannelGenerator<R> {
    pub fn new(cfg: ChannelConfig, rng: R) -> Self {
        Self {
            cfg,
            rng,
            last: None,
        }
    }
}

impl<R: Rng> ChannelSource for ChannelGenerator<R> {
    fn next_realization(&mut self) -> Result<ChannelRealization> {
        let next = evolve_channel(self.last.as_ref(), &self.cfg, &mut self.rng);
        self.last = Some(next.clone());
        Ok(next)
    }
}

/// Repeats one realization forever, bumping the TTI index.
#[derive(Debug, Clone)]
pub struct StaticChannel {
    real: ChannelRealization,
    tti: u64,
}

impl StaticChannel {
    pub fn new(real: ChannelRealization) -> Self {
        Self { real, tti: 0 }
    }
}

impl ChannelSource for StaticChannel {
    fn next_realization(&mut self) -> Result<ChannelRealization> {
        let mut out = self.real.clone();
        out.tti = self.tti;
        self.tti += 1;
        Ok(out)
    }
}

/// Sorted singular values and left singular vectors of each RB block.
#[derive(Debug, Clone)]
struct BlockSvd {
    sigma: Vec<f64>,
    u: CMatrix,
}

fn block_svd(h: &CMatrix) -> BlockSvd {
    let svd = h.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sigma = order.iter().map(|&i| svd.singular_values[i]).collect();
    let u = CMatrix::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
    BlockSvd { sigma, u }
}

fn rank_from_sigma(mean_sigma: &[f64], max_rank: usize, threshold: f64) -> usize {
    let top = mean_sigma.iter().copied().fold(0.0, f64::max);
    if top <= 0.0 || !top.is_finite() {
        return 1;
    }
    let passing = mean_sigma.iter().filter(|&&s| s >= threshold * top).count();
    passing.clamp(1, max_rank.max(1))
}

fn mean_sigma<'a>(blocks: impl Iterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut acc: Vec<f64> = Vec::new();
    let mut n = 0usize;
    for sigma in blocks {
        if acc.is_empty() {
            acc = vec![0.0; sigma.len()];
        }
        for (a, s) in acc.iter_mut().zip(sigma) {
            *a += s;
        }
        n += 1;
    }
    if n > 0 {
        acc.iter_mut().for_each(|a| *a /= n as f64);
    }
    acc
}

/// Number of singular values (averaged over the given RB blocks) within
/// `threshold` of the largest, clamped to `[1, max_rank]`. An all-zero
/// channel gets rank 1.
pub fn select_rank(h_blocks: &[CMatrix], max_rank: usize, threshold: f64) -> usize {
    let svds: Vec<BlockSvd> = h_blocks.iter().map(block_svd).collect();
    let mean = mean_sigma(svds.iter().map(|s| s.sigma.as_slice()));
    rank_from_sigma(&mean, max_rank, threshold)
}

/// SVD of every `(ue, rb)` block of a realization, computed once per TTI.
#[derive(Debug, Clone)]
pub struct ChannelSvd {
    n_ues: usize,
    n_rb: usize,
    blocks: Vec<BlockSvd>,
    noise_cov: CMatrix,
}

impl ChannelSvd {
    pub fn new(real: &ChannelRealization) -> Self {
        Self {
            n_ues: real.n_ues,
            n_rb: real.n_rb,
            blocks: real.h.iter().map(block_svd).collect(),
            noise_cov: real.noise_cov.clone(),
        }
    }

    pub fn rank(&self, ue: usize, max_rank: usize, threshold: f64) -> usize {
        let blocks = &self.blocks[ue * self.n_rb..(ue + 1) * self.n_rb];
        let mean = mean_sigma(blocks.iter().map(|b| b.sigma.as_slice()));
        rank_from_sigma(&mean, max_rank, threshold)
    }

    /// Effective per-stream columns for the given stream counts and powers.
    pub fn precode(&self, streams: &[usize], powers: &[f64], n_re_per_rb: usize) -> PrecodedChannels {
        assert_eq!(streams.len(), self.n_ues, "one stream count per UE");
        assert_eq!(powers.len(), self.n_ues, "one power per UE");
        let mut columns = Vec::with_capacity(self.n_ues);
        for ue in 0..self.n_ues {
            let lambda = streams[ue].min(self.blocks[ue * self.n_rb].sigma.len());
            let scale = (powers[ue] / lambda.max(1) as f64).sqrt();
            let per_rb = (0..self.n_rb)
                .map(|rb| {
                    let b = &self.blocks[ue * self.n_rb + rb];
                    (0..lambda)
                        .map(|l| b.u.column(l) * Complex64::from(b.sigma[l] * scale))
                        .collect()
                })
                .collect();
            columns.push(per_rb);
        }
        PrecodedChannels {
            n_rb: self.n_rb,
            n_re_per_rb,
            streams: streams.to_vec(),
            columns,
            noise_cov: self.noise_cov.clone(),
        }
    }
}

/// Power-scaled effective stream columns for every UE, ready for SINR
/// evaluation over arbitrary co-scheduled subsets.
#[derive(Debug, Clone)]
pub struct PrecodedChannels {
    n_rb: usize,
    n_re_per_rb: usize,
    streams: Vec<usize>,
    /// `[ue][rb][stream]`
    columns: Vec<Vec<Vec<CVector>>>,
    noise_cov: CMatrix,
}

impl PrecodedChannels {
    pub fn n_ues(&self) -> usize {
        self.columns.len()
    }

    pub fn streams(&self) -> &[usize] {
        &self.streams
    }

    pub fn n_re_per_rb(&self) -> usize {
        self.n_re_per_rb
    }

    /// MMSE SINR of every stream of every UE in `cosched`.
    ///
    /// With `C = R_cov + Σ vvᴴ` over all scheduled streams and
    /// `a = uᴴ C⁻¹ u`, the SINR against the other streams is `a / (1 - a)`.
    pub fn sinr(&self, cosched: &[usize]) -> Result<SinrReport> {
        let mut sinr: Vec<Vec<f64>> = cosched
            .iter()
            .map(|&ue| Vec::with_capacity(self.n_rb * self.columns[ue][0].len()))
            .collect();
        let one = Complex64::new(1.0, 0.0);
        for rb in 0..self.n_rb {
            let mut cov = self.noise_cov.clone();
            for &ue in cosched {
                for u in &self.columns[ue][rb] {
                    cov.gerc(one, u, u, one);
                }
            }
            let chol = Cholesky::new(cov).ok_or(Error::SingularCovariance)?;
            for (k, &ue) in cosched.iter().enumerate() {
                for u in &self.columns[ue][rb] {
                    let w = chol
                        .l_dirty()
                        .solve_lower_triangular(u)
                        .ok_or(Error::SingularCovariance)?;
                    let a = w.norm_squared();
                    let rest = 1.0 - a;
                    let s = if rest > 0.0 { a / rest } else { f64::MAX };
                    sinr[k].push(s.max(0.0));
                }
            }
        }
        Ok(SinrReport {
            ues: cosched.to_vec(),
            streams: cosched.iter().map(|&ue| self.columns[ue][0].len()).collect(),
            n_rb: self.n_rb,
            n_re_per_rb: self.n_re_per_rb,
            sinr,
        })
    }

    /// Achievable throughput of each member of `cosched`, in the same order.
    pub fn throughputs(&self, cosched: &[usize]) -> Result<Vec<f64>> {
        let report = self.sinr(cosched)?;
        Ok((0..cosched.len()).map(|k| report.throughput_at(k)).collect())
    }
}

/// Post-equalization SINR of each scheduled stream, one value per
/// `(ue, rb, stream)` since fading is flat within an RB.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrReport {
    pub ues: Vec<usize>,
    pub streams: Vec<usize>,
    pub n_rb: usize,
    pub n_re_per_rb: usize,
    /// Per member, indexed `rb * streams + l`.
    pub sinr: Vec<Vec<f64>>,
}

impl SinrReport {
    fn position(&self, ue: usize) -> Option<usize> {
        self.ues.iter().position(|&u| u == ue)
    }

    pub fn sinr(&self, ue: usize, rb: usize, stream: usize) -> Option<f64> {
        let k = self.position(ue)?;
        (stream < self.streams[k] && rb < self.n_rb).then(|| self.sinr[k][rb * self.streams[k] + stream])
    }

    fn throughput_at(&self, k: usize) -> f64 {
        let lambda = self.streams[k];
        if lambda == 0 {
            return 0.0;
        }
        let per_rb: f64 = self.sinr[k]
            .chunks(lambda)
            .map(|rb| {
                let mean = rb.iter().sum::<f64>() / lambda as f64;
                self.n_re_per_rb as f64 * (1.0 + mean).log2()
            })
            .sum();
        lambda as f64 * per_rb
    }
}

/// MMSE SINR of a co-scheduled set under SVD precoding.
pub fn mmse_sinr(
    real: &ChannelRealization,
    cosched: &[usize],
    streams: &[usize],
    tx_power: &[f64],
    n_re_per_rb: usize,
) -> Result<SinrReport> {
    ChannelSvd::new(real)
        .precode(streams, tx_power, n_re_per_rb)
        .sinr(cosched)
}

/// `λ · Σ_f I_f · log2(1 + ρ̄_f)` in bits per TTI, where `ρ̄_f` is the
/// stream-averaged SINR on RB `f`. `None` if `ue` is not in the report.
pub fn achievable_throughput(report: &SinrReport, ue: usize) -> Option<f64> {
    report.position(ue).map(|k| report.throughput_at(k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn single(h: CMatrix, noise: f64) -> ChannelRealization {
        let n = h.nrows();
        ChannelRealization {
            tti: 0,
            n_ues: 1,
            n_rb: 1,
            h: vec![h],
            noise_cov: CMatrix::identity(n, n) * c(noise),
        }
    }

    fn two(h0: CMatrix, h1: CMatrix) -> ChannelRealization {
        let n = h0.nrows();
        ChannelRealization {
            tti: 0,
            n_ues: 2,
            n_rb: 1,
            h: vec![h0, h1],
            noise_cov: CMatrix::identity(n, n),
        }
    }

    fn report(sinr: Vec<f64>, lambda: usize, n_rb: usize, n_re: usize) -> SinrReport {
        SinrReport {
            ues: vec![0],
            streams: vec![lambda],
            n_rb,
            n_re_per_rb: n_re,
            sinr: vec![sinr],
        }
    }

    fn diag(values: &[f64]) -> CMatrix {
        let n = values.len();
        CMatrix::from_fn(n, n, |i, j| if i == j { c(values[i]) } else { c(0.0) })
    }

    #[test]
    fn rank_examples() {
        assert_eq!(select_rank(&[CMatrix::identity(4, 4)], 4, 0.5), 4);
        assert_eq!(select_rank(&[diag(&[1.0, 0.1, 0.0, 0.0])], 4, 0.5), 1);
        assert_eq!(select_rank(&[diag(&[1.0, 0.6])], 2, 0.5), 2);
        assert_eq!(select_rank(&[CMatrix::zeros(4, 2)], 2, 0.5), 1);
        assert_eq!(select_rank(&[CMatrix::identity(4, 4)], 2, 0.5), 2);
    }

    #[test]
    fn rank_averages_over_blocks() {
        // per-RB sigma {1, 0.2} and {1, 1}: mean {1, 0.6}
        let blocks = [diag(&[1.0, 0.2]), diag(&[1.0, 1.0])];
        assert_eq!(select_rank(&blocks, 2, 0.5), 2);
        assert_eq!(select_rank(&blocks, 2, 0.7), 1);
    }

    #[test]
    fn isotropic_single_stream_sinr() {
        // ||h||^2 = 4
        let h = CMatrix::from_column_slice(2, 1, &[c(2.0), c(0.0)]);
        let r = mmse_sinr(&single(h, 1.0), &[0], &[1], &[1.0], 1).unwrap();
        assert!((r.sinr(0, 0, 0).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_users_do_not_interfere() {
        let h0 = CMatrix::from_column_slice(2, 1, &[c(1.5), c(0.0)]);
        let h1 = CMatrix::from_column_slice(2, 1, &[c(0.0), c(0.7)]);
        let real = two(h0, h1);
        let both = mmse_sinr(&real, &[0, 1], &[1, 1], &[1.0, 3.0], 1).unwrap();
        assert!((both.sinr(0, 0, 0).unwrap() - 2.25).abs() < 1e-12);
        assert!((both.sinr(1, 0, 0).unwrap() - 3.0 * 0.49).abs() < 1e-12);
    }

    #[test]
    fn identical_users_halve() {
        let h = CMatrix::from_column_slice(2, 1, &[c(1.0), c(0.0)]);
        let real = two(h.clone(), h);
        let r = mmse_sinr(&real, &[0, 1], &[1, 1], &[1.0, 1.0], 1).unwrap();
        assert!((r.sinr(0, 0, 0).unwrap() - 0.5).abs() < 1e-12);
        assert!((r.sinr(1, 0, 0).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn throughput_examples() {
        assert_eq!(achievable_throughput(&report(vec![1.0], 1, 1, 1), 0), Some(1.0));
        assert_eq!(
            achievable_throughput(&report(vec![3.0, 3.0], 2, 1, 2), 0),
            Some(8.0)
        );
        assert_eq!(
            achievable_throughput(&report(vec![0.0, 0.0, 0.0, 0.0], 2, 2, 7), 0),
            Some(0.0)
        );
        assert_eq!(achievable_throughput(&report(vec![1.0], 1, 1, 1), 3), None);
    }

    #[test]
    fn throughput_uses_stream_mean_per_rb() {
        // streams {1, 5} -> mean 3 -> 2 * 1 * log2(4) = 4
        let r = report(vec![1.0, 5.0], 2, 1, 1);
        assert_eq!(achievable_throughput(&r, 0), Some(4.0));
    }

    #[test]
    fn zero_channel_gives_zero_sinr() {
        let real = single(CMatrix::zeros(4, 2), 1.0);
        let r = mmse_sinr(&real, &[0], &[1], &[1.0], 10).unwrap();
        assert_eq!(r.sinr(0, 0, 0), Some(0.0));
        assert_eq!(achievable_throughput(&r, 0), Some(0.0));
    }

    #[test]
    fn generator_is_deterministic() {
        let cfg = ChannelConfig {
            per_ue_gain_db: vec![0.0, -3.0],
            ..ChannelConfig::default()
        };
        let mut a = ChannelGenerator::new(cfg.clone(), ChaCha8Rng::seed_from_u64(11));
        let mut b = ChannelGenerator::new(cfg, ChaCha8Rng::seed_from_u64(11));
        for _ in 0..3 {
            assert_eq!(a.next_realization().unwrap(), b.next_realization().unwrap());
        }
    }

    #[test]
    fn generator_shapes() {
        let cfg = ChannelConfig {
            per_ue_gain_db: vec![0.0; 3],
            ..ChannelConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r0 = evolve_channel(None, &cfg, &mut rng);
        let r1 = evolve_channel(Some(&r0), &cfg, &mut rng);
        assert_eq!((r0.tti, r1.tti), (0, 1));
        assert_eq!(r1.h.len(), 3 * cfg.n_rb);
        assert_eq!((r1.n_gnb_trx(), r1.n_ue_trx()), (16, 4));
        assert!(r1.h.iter().all(|m| m.iter().all(|z| z.re.is_finite() && z.im.is_finite())));
    }

    #[test]
    fn rx_correlation_factor_reproduces_covariance() {
        let cfg = ChannelConfig {
            n_gnb_trx: 6,
            rx_corr: 0.7,
            ..ChannelConfig::default()
        };
        let l = cfg.rx_correlation_factor();
        let r = &l * l.adjoint();
        for i in 0..6usize {
            for j in 0..6 {
                let want = 0.7f64.powi(i.abs_diff(j) as i32);
                assert!((r[(i, j)].re - want).abs() < 1e-12 && r[(i, j)].im == 0.0);
            }
        }
    }

    #[test]
    fn noise_covariance_is_hermitian_pd() {
        let cfg = ChannelConfig {
            per_ue_gain_db: vec![0.0],
            interference_power: 2.0,
            interference_corr: 0.8,
            ..ChannelConfig::default()
        };
        let r = cfg.noise_covariance();
        assert_eq!(r, r.adjoint());
        assert!(Cholesky::new(r).is_some());
    }

    #[test]
    fn fractional_power_control() {
        let cfg = ChannelConfig {
            per_ue_gain_db: vec![0.0, -10.0, -30.0],
            tx_power: 20.0,
            power_control: PowerControl::FractionalPathloss {
                p0: 1.0,
                exponent: 0.5,
            },
            ..ChannelConfig::default()
        };
        let p = cfg.powers();
        assert!((p[0] - 1.0).abs() < 1e-12);
        assert!((p[1] - 10f64.sqrt()).abs() < 1e-12);
        assert_eq!(p[2], 20.0);
    }

    #[test]
    fn spread_gains() {
        assert_eq!(spread_gains_db(3, 20.0), vec![0.0, -10.0, -20.0]);
        assert_eq!(spread_gains_db(1, 20.0), vec![0.0]);
    }

    #[test]
    fn validation() {
        let bad = ChannelConfig {
            n_gnb_trx: 2,
            n_ue_trx: 4,
            temporal_corr: 1.0,
            ..ChannelConfig::default()
        };
        let fields: Vec<_> = bad.validate().into_iter().map(|i| i.field).collect();
        assert!(fields.contains(&"n_gnb_trx".to_string()));
        assert!(fields.contains(&"temporal_corr".to_string()));
        assert!(fields.contains(&"per_ue_gain_db".to_string()));
    }
}
