//! Per-UE age of information.
//!
//! The gNB keeps one age counter per UE. The counter grows by one per TTI,
//! is clipped at `clip`, and resets to 1 on the TTI after a scheduled UE
//! has its packet acknowledged and its buffer replenished. The age seen
//! right before a reset is a peak-age (PAoI) sample.

use serde::{Deserialize, Serialize};

use crate::Invalid;

/// Age value a counter starts from and resets to.
pub const DEFAULT_AGE: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AoiParams {
    /// Exponent of the PAoI weight.
    pub kappa: f64,
    /// Mix between instantaneous age and PAoI history in the weighted age.
    pub theta: f64,
    /// Packet delay budget in TTIs.
    pub pdb: u32,
}

impl Default for AoiParams {
    fn default() -> Self {
        Self {
            kappa: 2.0,
            theta: 0.5,
            pdb: 30,
        }
    }
}

impl AoiParams {
    pub fn validate(&self) -> Vec<Invalid> {
        let mut issues = Vec::new();
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            issues.push(Invalid::new("kappa", "must be a positive real"));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            issues.push(Invalid::new("theta", "must lie in [0, 1]"));
        }
        if self.pdb == 0 {
            issues.push(Invalid::new("pdb", "must be at least 1 TTI"));
        }
        issues
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AoiState {
    pub age: u32,
    pub clip: u32,
    /// Sum of the ages captured right before each reset.
    pub paoi_sum: u64,
    /// Number of resets.
    pub paoi_count: u64,
    pub last_phi: bool,
    pub elapsed: u64,
}

impl AoiState {
    pub fn new(clip: u32) -> Self {
        assert!(clip >= 1, "age clip must be positive");
        Self {
            age: DEFAULT_AGE,
            clip,
            paoi_sum: 0,
            paoi_count: 0,
            last_phi: false,
            elapsed: 0,
        }
    }

    /// Advances one TTI given the reset indicator for the next TTI.
    pub fn step(self, phi_next: bool) -> Self {
        aoi_step(self, phi_next)
    }

    pub fn paoi(&self) -> Option<f64> {
        paoi(self)
    }
}

/// Joint reset indicator: scheduled, acknowledged and replenished.
pub fn phi(beta: bool, s: bool, bsr_grew: bool) -> bool {
    beta && s && bsr_grew
}

/// `age' = min(age, clip) * (1 - phi) + 1`, recording a PAoI sample on reset.
pub fn aoi_step(state: AoiState, phi_next: bool) -> AoiState {
    let mut next = state;
    next.age = if phi_next {
        DEFAULT_AGE
    } else {
        state.age.min(state.clip) + 1
    };
    if phi_next {
        next.paoi_sum += u64::from(state.age);
        next.paoi_count += 1;
    }
    next.last_phi = phi_next;
    next.elapsed += 1;
    next
}

/// Time-averaged PAoI, `None` until the first reset.
pub fn paoi(state: &AoiState) -> Option<f64> {
    (state.paoi_count > 0).then(|| state.paoi_sum as f64 / state.paoi_count as f64)
}

/// Blend of the current age and the running PAoI mean.
///
/// Before the first reset there is no PAoI history and the current age
/// stands in for it, so the result stays on the age scale.
pub fn weighted_age(state: &AoiState, params: &AoiParams) -> f64 {
    let age = f64::from(state.age);
    let history = paoi(state).unwrap_or(age);
    params.theta * age + (1.0 - params.theta) * history
}

/// PAoI weight: `d^-kappa` inside the delay budget, `1 - d^-kappa` past it.
///
/// The jump at `d = pdb` is intentional.
pub fn paoi_weight(delta_wa: f64, params: &AoiParams) -> f64 {
    debug_assert!(delta_wa >= 1.0, "weighted age below 1: {delta_wa}");
    let decay = delta_wa.powf(-params.kappa);
    if delta_wa <= f64::from(params.pdb) {
        decay
    } else {
        1.0 - decay
    }
}
