//! Centralized slot allocation, per-agent trigger decisions and byte-exact
//! network-utilization accounting.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Allocation policy for the K communication slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Policy {
    /// Predictive triggering: rank by the quantized M-step probability.
    Pt,
    /// Predictive triggering with a lower bound on submitted probabilities.
    PtStar,
    /// Slots go to K agents drawn uniformly at random.
    Et1,
    /// Slots go to the K agents with the largest transmitted error norms.
    Et2,
}

impl Policy {
    /// Per-agent scheduling-message size in bytes.
    pub fn scheduling_bytes(self) -> usize {
        match self {
            Policy::Pt | Policy::PtStar => 1,
            Policy::Et2 => 4,
            Policy::Et1 => 0,
        }
    }

    pub fn is_predictive(self) -> bool {
        matches!(self, Policy::Pt | Policy::PtStar)
    }

    pub const ALL: [Policy; 4] = [Policy::Pt, Policy::PtStar, Policy::Et1, Policy::Et2];

    /// Stable small integer used to salt the scheduler random stream.
    pub fn stream_tag(self) -> u64 {
        match self {
            Policy::Pt => 0,
            Policy::PtStar => 1,
            Policy::Et1 => 2,
            Policy::Et2 => 3,
        }
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Policy::Pt => "PT",
            Policy::PtStar => "PT*",
            Policy::Et1 => "ET1",
            Policy::Et2 => "ET2",
        };
        write!(f, "{name}")
    }
}

impl std::str::FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "PT" => Ok(Policy::Pt),
            "PT*" | "PTSTAR" | "PT-STAR" => Ok(Policy::PtStar),
            "ET1" => Ok(Policy::Et1),
            "ET2" => Ok(Policy::Et2),
            other => Err(Error::Parse(format!(
                "unknown policy '{other}' (expected PT, PT*, ET1 or ET2)"
            ))),
        }
    }
}

/// Shared-network description: agent count, slots per step and the derived
/// per-step byte capacity.
#[derive(Debug, Clone, Copy)]
pub struct NetworkSpec {
    pub n_agents: usize,
    pub slots: usize,
    pub state_dim: usize,
    pub policy: Policy,
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_agents == 0 {
            return Err(Error::config("agent count must be positive"));
        }
        if self.slots == 0 || self.slots >= self.n_agents {
            return Err(Error::config(format!(
                "slot count K={} must satisfy 0 < K < N={}",
                self.slots, self.n_agents
            )));
        }
        if self.state_dim == 0 {
            return Err(Error::config("state dimension must be positive"));
        }
        Ok(())
    }

    /// Per-step capacity in bytes: 4 bytes of scheduling headroom per agent
    /// plus a 4-byte float per state entry for each slot.
    pub fn capacity(&self) -> usize {
        4 * self.n_agents + 4 * self.state_dim * self.slots
    }
}

/// Scheduler output: the set of agents granted a slot at one time step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotAllocation {
    /// Time index the allocation applies to (decision step plus horizon).
    pub step: usize,
    pub granted: BTreeSet<usize>,
}

/// Trigger parameters shared by every agent.
#[derive(Debug, Clone, Copy)]
pub struct TriggerParams {
    pub delta: f64,
    /// Refinement factor in [0, 1]: a granted agent communicates only when
    /// its error norm is at least `c * delta`.
    pub c: f64,
}

impl TriggerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) {
            return Err(Error::config("delta must be positive"));
        }
        if !(0.0..=1.0).contains(&self.c) {
            return Err(Error::config("trigger factor c must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Selects up to `k` entries with the largest keys. Entries tied at the
/// cutoff key are chosen uniformly at random, ordered by id first so the
/// outcome is invariant under permutations of the input list.
fn top_k_with_random_ties<R: rand::Rng>(
    mut entries: Vec<(usize, u64)>,
    k: usize,
    rng: &mut R,
) -> BTreeSet<usize> {
    let mut granted = BTreeSet::new();
    if entries.len() <= k {
        granted.extend(entries.into_iter().map(|(id, _)| id));
        return granted;
    }
    entries.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let cutoff = entries[k - 1].1;
    let mut tied = Vec::new();
    for &(id, key) in &entries {
        if key > cutoff {
            granted.insert(id);
        } else if key == cutoff {
            tied.push(id);
        }
    }
    let remaining = k - granted.len();
    if remaining > 0 {
        // tied is sorted by id already (stable order within equal keys)
        let picks = rand::seq::index::sample(rng, tied.len(), remaining);
        for idx in picks.iter() {
            granted.insert(tied[idx]);
        }
    }
    granted
}

fn check_unique_ids(ids: impl Iterator<Item = usize>) -> Result<()> {
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::Scheduler(format!("duplicate agent id {id}")));
        }
    }
    Ok(())
}

/// Predictive allocation: slots go to the K agents with the largest
/// quantized priorities among those that submitted one.
pub fn pt_schedule<R: rand::Rng>(
    priorities: &[(usize, u8)],
    k: usize,
    for_step: usize,
    rng: &mut R,
) -> Result<SlotAllocation> {
    check_unique_ids(priorities.iter().map(|&(id, _)| id))?;
    let entries = priorities
        .iter()
        .map(|&(id, p)| (id, u64::from(p)))
        .collect();
    Ok(SlotAllocation {
        step: for_step,
        granted: top_k_with_random_ties(entries, k, rng),
    })
}

/// Baseline allocation to K agents drawn uniformly at random.
pub fn et1_schedule<R: rand::Rng>(
    n_agents: usize,
    k: usize,
    for_step: usize,
    rng: &mut R,
) -> Result<SlotAllocation> {
    if k >= n_agents {
        return Err(Error::Scheduler(format!(
            "cannot draw {k} distinct agents out of {n_agents}"
        )));
    }
    let picks = rand::seq::index::sample(rng, n_agents, k);
    Ok(SlotAllocation {
        step: for_step,
        granted: picks.iter().collect(),
    })
}

/// Baseline allocation to the K agents with the largest error norms.
pub fn et2_schedule<R: rand::Rng>(
    error_norms: &[(usize, f64)],
    k: usize,
    for_step: usize,
    rng: &mut R,
) -> Result<SlotAllocation> {
    check_unique_ids(error_norms.iter().map(|&(id, _)| id))?;
    if error_norms.iter().any(|&(_, norm)| !norm.is_finite()) {
        return Err(Error::Scheduler("nonfinite error norm submitted".to_string()));
    }
    // norms arrive as 4-byte floats; rank by their bit pattern, which
    // orders nonnegative finite values like the numbers themselves
    let entries = error_norms
        .iter()
        .map(|&(id, norm)| (id, u64::from((norm.max(0.0) as f32).to_bits())))
        .collect();
    Ok(SlotAllocation {
        step: for_step,
        granted: top_k_with_random_ties(entries, k, rng),
    })
}

/// Communication decision of a granted agent: send only when the error
/// norm has reached `c * delta`. With `c = 0` a slot is always used.
pub fn trigger_decision(granted: bool, z_norm: f64, params: &TriggerParams) -> bool {
    granted && z_norm >= params.c * params.delta
}

/// Fraction of the per-step byte capacity consumed by `n_priorities`
/// scheduling messages and `n_comms` state transmissions.
pub fn network_utilization(spec: &NetworkSpec, n_priorities: usize, n_comms: usize) -> Result<f64> {
    if n_priorities > spec.n_agents {
        return Err(Error::Accounting(format!(
            "{n_priorities} scheduling messages from {} agents",
            spec.n_agents
        )));
    }
    if n_comms > spec.slots {
        return Err(Error::Accounting(format!(
            "{n_comms} state transmissions with {} slots",
            spec.slots
        )));
    }
    let bytes = spec.policy.scheduling_bytes() * n_priorities + 4 * spec.state_dim * n_comms;
    Ok(bytes as f64 / spec.capacity() as f64)
}
