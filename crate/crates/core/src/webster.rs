//! Webster fixed-time signal timing: optimal cycle, green splits and the
//! two-term delay estimate.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{Phase, SignalPlan, MAX_CYCLE_S, MIN_CYCLE_S, MIN_GREEN_S};

/// Flow ratio at or above which no practical cycle exists.
pub const OVERSATURATION_Y: f64 = 0.95;

/// Flow ratios are resolved to this grid so that plans depend only on the
/// ratio q/s and not on rounding noise in its operands.
pub const FLOW_RATIO_RESOLUTION: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum WebsterError {
    #[error("oversaturated: total flow ratio Y = {y:.3} >= {OVERSATURATION_Y}")]
    Oversaturated { y: f64 },
    #[error("infeasible: {phases} phases x {g_min} s minimum green exceeds effective green {effective:.3} s")]
    Infeasible { phases: usize, g_min: f64, effective: f64 },
    #[error("saturated approach: degree of saturation x = {x:.3} >= 1")]
    Saturated { x: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T, E = WebsterError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDemand {
    pub phase_id: String,
    /// Critical movement flow, vehicles per hour.
    pub critical_flow: f64,
    /// Saturation flow of the critical movement, vehicles per hour.
    pub sat_flow: f64,
    /// Lost time, seconds.
    pub lost: f64,
    /// Roads served; carried through into the resulting plan.
    #[serde(default)]
    pub movements: Vec<String>,
}

impl PhaseDemand {
    pub fn new(phase_id: impl Into<String>, critical_flow: f64, sat_flow: f64, lost: f64) -> Self {
        Self {
            phase_id: phase_id.into(),
            critical_flow,
            sat_flow,
            lost,
            movements: Vec::new(),
        }
    }

    pub fn with_movements(mut self, movements: Vec<String>) -> Self {
        self.movements = movements;
        self
    }

    /// y = q / s on the resolution grid.
    pub fn flow_ratio(&self) -> f64 {
        let y = self.critical_flow / self.sat_flow;
        (y / FLOW_RATIO_RESOLUTION).round() * FLOW_RATIO_RESOLUTION
    }

    fn check(&self) -> Result<()> {
        if !(self.sat_flow > 0.0) || !self.sat_flow.is_finite() {
            return Err(WebsterError::InvalidInput(format!("phase {}: sat_flow must be > 0", self.phase_id)));
        }
        if !(self.critical_flow >= 0.0) || !self.critical_flow.is_finite() {
            return Err(WebsterError::InvalidInput(format!("phase {}: flow must be >= 0", self.phase_id)));
        }
        if !(self.lost >= 0.0) || !self.lost.is_finite() {
            return Err(WebsterError::InvalidInput(format!("phase {}: lost time must be >= 0", self.phase_id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizationConstraints {
    pub c_min: f64,
    pub c_max: f64,
    pub g_min: f64,
}

impl Default for OptimizationConstraints {
    fn default() -> Self {
        Self {
            c_min: MIN_CYCLE_S,
            c_max: MAX_CYCLE_S,
            g_min: MIN_GREEN_S,
        }
    }
}

impl OptimizationConstraints {
    fn check(&self) -> Result<()> {
        if !(0.0 < self.c_min && self.c_min < self.c_max && self.g_min > 0.0) {
            return Err(WebsterError::InvalidInput(format!("bad constraints {self:?}")));
        }
        Ok(())
    }
}

/// Unclamped Webster cycle `(1.5 L + 5) / (1 - Y)`.
pub fn webster_cycle_raw(total_lost: f64, total_flow_ratio: f64) -> Result<f64> {
    if !(total_lost > 0.0) || !total_lost.is_finite() {
        return Err(WebsterError::InvalidInput("total lost time must be > 0".into()));
    }
    if !(total_flow_ratio >= 0.0) {
        return Err(WebsterError::InvalidInput("total flow ratio must be >= 0".into()));
    }
    if total_flow_ratio >= OVERSATURATION_Y {
        return Err(WebsterError::Oversaturated { y: total_flow_ratio });
    }
    Ok((1.5 * total_lost + 5.0) / (1.0 - total_flow_ratio))
}

/// Webster cycle clamped to `[c_min, c_max]`.
pub fn webster_cycle(total_lost: f64, total_flow_ratio: f64, cons: &OptimizationConstraints) -> Result<f64> {
    cons.check()?;
    Ok(webster_cycle_raw(total_lost, total_flow_ratio)?.clamp(cons.c_min, cons.c_max))
}

/// Splits the effective green `cycle - L` in proportion to flow ratios.
///
/// Phases falling below `g_min` are pinned there and the remainder is shared
/// proportionally among the others, repeating until no new phase is pinned.
/// The last phase absorbs rounding so the greens sum to `cycle - L`.
pub fn webster_splits(
    cycle: f64,
    phases: &[PhaseDemand],
    cons: &OptimizationConstraints,
) -> Result<BTreeMap<String, f64>> {
    let greens = split_greens(cycle, phases, cons)?;
    Ok(phases.iter().map(|p| p.phase_id.clone()).zip(greens).collect())
}

fn split_greens(cycle: f64, phases: &[PhaseDemand], cons: &OptimizationConstraints) -> Result<Vec<f64>> {
    cons.check()?;
    if phases.is_empty() {
        return Err(WebsterError::InvalidInput("no phases".into()));
    }
    for p in phases {
        p.check()?;
    }
    let lost: f64 = phases.iter().map(|p| p.lost).sum();
    let effective = cycle - lost;
    if !(effective > 0.0) {
        return Err(WebsterError::InvalidInput(format!(
            "cycle {cycle} s does not exceed total lost time {lost} s"
        )));
    }
    let ratios: Vec<f64> = phases.iter().map(PhaseDemand::flow_ratio).collect();
    if !(ratios.iter().sum::<f64>() > 0.0) {
        return Err(WebsterError::InvalidInput("total flow ratio must be > 0".into()));
    }
    let n = phases.len();
    if cons.g_min * n as f64 > effective {
        return Err(WebsterError::Infeasible {
            phases: n,
            g_min: cons.g_min,
            effective,
        });
    }

    let mut pinned = vec![false; n];
    let mut greens = vec![0.0; n];
    loop {
        let n_pinned = pinned.iter().filter(|p| **p).count();
        let free_green = effective - cons.g_min * n_pinned as f64;
        let free_ratio: f64 = (0..n).filter(|&i| !pinned[i]).map(|i| ratios[i]).sum();
        let mut changed = false;
        for i in 0..n {
            if pinned[i] {
                greens[i] = cons.g_min;
            } else {
                greens[i] = if free_ratio > 0.0 { ratios[i] / free_ratio * free_green } else { 0.0 };
                if greens[i] < cons.g_min {
                    pinned[i] = true;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }

    // The last unpinned phase takes the residue so pinned phases stay at
    // g_min exactly; nudge until the phase-order sum equals the effective green.
    let absorber = (0..n).rev().find(|&i| !pinned[i]).expect("at least one phase is unpinned");
    let others: f64 = (0..n).filter(|&i| i != absorber).map(|i| greens[i]).sum();
    greens[absorber] = effective - others;
    for _ in 0..8 {
        let total: f64 = greens.iter().sum();
        if total == effective {
            break;
        }
        greens[absorber] += effective - total;
    }
    // Otherwise the last phase takes the residue of the prefix sum. A pinned
    // last phase may only grow, so the absorber gives way first; when the
    // residue lands on a rounding tie an earlier phase moves by one ulp.
    let last = n - 1;
    for _ in 0..64 {
        if greens.iter().sum::<f64>() == effective {
            break;
        }
        let prefix: f64 = greens[..last].iter().sum();
        let residue = effective - prefix;
        if pinned[last] && residue < cons.g_min {
            greens[absorber] = greens[absorber].next_down();
        } else if greens[last] == residue && last > 0 {
            greens[0] = greens[0].next_up();
        } else {
            greens[last] = residue;
        }
    }
    Ok(greens)
}

/// Full Webster plan for one intersection. Offset is zero; movements are
/// taken from the phase demands.
pub fn optimize_intersection(phases: &[PhaseDemand], cons: &OptimizationConstraints) -> Result<SignalPlan> {
    if phases.is_empty() {
        return Err(WebsterError::InvalidInput("no phases".into()));
    }
    for p in phases {
        p.check()?;
    }
    let total_lost: f64 = phases.iter().map(|p| p.lost).sum();
    let total_ratio: f64 = phases.iter().map(PhaseDemand::flow_ratio).sum();
    let cycle = webster_cycle(total_lost, total_ratio, cons)?;
    let greens = split_greens(cycle, phases, cons)?;
    let plan_phases = phases
        .iter()
        .zip(greens)
        .map(|(p, green)| Phase {
            phase_id: p.phase_id.clone(),
            green,
            lost: p.lost,
            movements: p.movements.clone(),
        })
        .collect();
    Ok(SignalPlan {
        cycle,
        offset: 0.0,
        phases: plan_phases,
    })
}

/// Webster two-term average delay per vehicle, seconds.
///
/// Flows are vehicles per hour; the random-arrival term is evaluated with
/// the arrival rate in vehicles per second.
pub fn estimate_delay(cycle: f64, green: f64, flow_vph: f64, sat_flow_vph: f64) -> Result<f64> {
    if !(0.0 < green && green < cycle) {
        return Err(WebsterError::InvalidInput(format!("need 0 < green ({green}) < cycle ({cycle})")));
    }
    if !(sat_flow_vph > 0.0) || !(flow_vph >= 0.0) {
        return Err(WebsterError::InvalidInput("flows must be non-negative, sat_flow positive".into()));
    }
    let lambda = green / cycle;
    let x = flow_vph / (lambda * sat_flow_vph);
    if x >= 1.0 {
        return Err(WebsterError::Saturated { x });
    }
    let uniform = uniform_delay(cycle, lambda, x);
    let q = flow_vph / 3600.0;
    let random = if q > 0.0 { x * x / (2.0 * q * (1.0 - x)) } else { 0.0 };
    Ok(0.9 * (uniform + random))
}

/// Uniform-arrival delay term `C (1 - λ)² / (2 (1 - λ x))`.
pub fn uniform_delay(cycle: f64, green_ratio: f64, x: f64) -> f64 {
    cycle * (1.0 - green_ratio).powi(2) / (2.0 * (1.0 - green_ratio * x))
}
