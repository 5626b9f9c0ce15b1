//! The M-step communication probability: the priority measure each agent
//! sends to the scheduler.
//!
//! The probability of communicating M steps ahead is expanded over all
//! 2^M intra-horizon communication patterns; each conditional is
//! approximated by an exit-table lookup whose error and time-to-exit follow
//! from the pattern (a communication resets the error to zero, so only the
//! gap since the latest reset matters). Errors already on or outside the
//! boundary are a standing demand: the probability is the boundary value 1
//! for every horizon, which keeps the measure nondecreasing in the error
//! norm.

use crate::error::{Error, Result};
use crate::exit::ExitProbTable;

/// Horizon parameters shared by every agent of a run.
#[derive(Debug, Clone, Copy)]
pub struct HorizonParams {
    /// Prediction horizon M (steps ahead at which slots are granted).
    pub m: usize,
    /// Communication threshold on the error norm.
    pub delta: f64,
    /// Lower bound below which probabilities are not sent (0 disables).
    pub p_lower: f64,
}

impl HorizonParams {
    pub fn validate(&self, table: &ExitProbTable) -> Result<()> {
        if self.m > MAX_HORIZON {
            return Err(Error::config(format!(
                "horizon M={} exceeds the enumeration limit {MAX_HORIZON}",
                self.m
            )));
        }
        if self.m > table.max_steps {
            return Err(Error::config(format!(
                "horizon M={} exceeds table horizon {}",
                self.m, table.max_steps
            )));
        }
        if !(0.0..1.0).contains(&self.p_lower) {
            return Err(Error::config("p_lower must lie in [0, 1)"));
        }
        if !(self.delta > 0.0) {
            return Err(Error::config("delta must be positive"));
        }
        Ok(())
    }
}

/// The evaluation enumerates 2^M patterns; larger horizons are rejected at
/// configuration time.
pub const MAX_HORIZON: usize = 10;

/// Intra-horizon communication outcomes for the events at offsets
/// `0..M-1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommSequence(pub Vec<bool>);

impl CommSequence {
    fn from_mask(mask: u32, m: usize) -> Self {
        CommSequence((0..m).map(|i| mask >> i & 1 == 1).collect())
    }
}

/// Conditional probability of communicating at offset `target_offset`
/// given the outcomes of the earlier events in `outcomes_so_far`.
///
/// With a communication at offset `j` in the prefix, the error resets to
/// zero there and only the `target_offset - j` remaining steps matter;
/// without one the current error norm and the full gap apply. At offset 0
/// this reduces to the indicator of the error being outside the ball.
pub fn conditional_probability(
    table: &ExitProbTable,
    z_norm: f64,
    outcomes_so_far: &[bool],
    target_offset: usize,
) -> Result<f64> {
    if outcomes_so_far.len() < target_offset {
        return Err(Error::config(format!(
            "prefix of length {} cannot condition the event at offset {}",
            outcomes_so_far.len(),
            target_offset
        )));
    }
    let latest_reset = outcomes_so_far[..target_offset]
        .iter()
        .rposition(|&communicated| communicated);
    match latest_reset {
        Some(j) => table.query_exit_probability(0.0, target_offset - j),
        None => table.query_exit_probability(z_norm, target_offset),
    }
}

/// Probability weights of the 2^M intra-horizon communication patterns.
///
/// The weight of a pattern is the product over its outcomes of the
/// conditional probability (for a communication) or its complement (for
/// none). The weights of all patterns sum to one.
pub fn sequence_weights(
    table: &ExitProbTable,
    params: &HorizonParams,
    z_norm: f64,
) -> Result<Vec<f64>> {
    params.validate(table)?;
    let m = params.m;
    let mut weights = Vec::with_capacity(1 << m);
    for mask in 0..(1u32 << m) {
        let seq = CommSequence::from_mask(mask, m);
        let mut w = 1.0;
        for offset in 0..m {
            let p = conditional_probability(table, z_norm, &seq.0[..offset], offset)?;
            w *= if seq.0[offset] { p } else { 1.0 - p };
        }
        weights.push(w);
    }
    Ok(weights)
}

/// The M-step communication probability for an error of the given norm.
///
/// M = 0 degenerates to the indicator of the error being outside the ball,
/// which makes the predictive trigger behave as an event trigger. On or
/// outside the boundary the result is 1 for every M.
pub fn m_step_probability(
    table: &ExitProbTable,
    params: &HorizonParams,
    z_norm: f64,
) -> Result<f64> {
    params.validate(table)?;
    if !z_norm.is_finite() || z_norm < 0.0 {
        return Err(Error::config(format!("invalid error norm {z_norm}")));
    }
    if z_norm >= params.delta {
        return Ok(1.0);
    }
    let m = params.m;
    if m == 0 {
        // interior: zero-time exit is impossible
        return Ok(0.0);
    }
    let mut total = 0.0;
    for mask in 0..(1u32 << m) {
        let seq = CommSequence::from_mask(mask, m);
        let mut w = 1.0;
        for offset in 0..m {
            let p = conditional_probability(table, z_norm, &seq.0[..offset], offset)?;
            w *= if seq.0[offset] { p } else { 1.0 - p };
            if w == 0.0 {
                break;
            }
        }
        if w == 0.0 {
            continue;
        }
        let final_conditional = conditional_probability(table, z_norm, &seq.0, m)?;
        total += w * final_conditional;
    }
    Ok(total.clamp(0.0, 1.0))
}

/// Casts a probability into the 1-byte integer sent to the scheduler.
pub fn quantize(p: f64) -> Result<u8> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Internal(format!(
            "probability {p} escaped the [0, 1] clamp"
        )));
    }
    Ok((100.0 * p).floor() as u8)
}

/// Probability represented by a quantized priority value.
pub fn dequantize(value: u8) -> f64 {
    f64::from(value) / 100.0
}

/// Whether the probability is worth sending to the scheduler.
pub fn should_send(p: f64, params: &HorizonParams) -> bool {
    p > params.p_lower
}

/// Quantized scheduling payload of one agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuantizedPriority {
    pub agent_id: usize,
    pub value: u8,
}
