//! Domain types and the physical/economic formulas of the market:
//! per-round latency and energy of a client, the uplink data rate, the
//! accuracy proxy `Γ`, the client utility and the server utility.
//!
//! All quantities are SI base units (Hz, s, J, W, bits); prices and
//! utilities are dimensionless currency. Every function here is a pure
//! function of its inputs.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Opaque client identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClientId(pub u32);

impl fmt::Display for ClientId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Immutable physical and economic parameters of one client.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClientProfile {
    pub id: ClientId,
    /// CPU cycles needed to train on one data-tuple.
    pub cycles_per_tuple: f64,
    /// Local SGD passes per round.
    pub local_iters: u32,
    /// Number of local data-tuples.
    pub data_size: u64,
    /// Maximum CPU frequency, Hz.
    #[serde(rename = "f_max_hz")]
    pub f_max: f64,
    /// Effective switched-capacitance coefficient of the CPU.
    pub capacitance: f64,
    /// Cost per joule.
    pub energy_cost: f64,
    /// Uplink transmit power, W.
    #[serde(rename = "tx_power_w")]
    pub tx_power: f64,
    /// Uplink channel power gain.
    pub channel_gain: f64,
}

impl ClientProfile {
    /// Total CPU cycles of one local training round.
    pub fn work_cycles(&self) -> f64 {
        self.cycles_per_tuple * self.local_iters as f64 * self.data_size as f64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Error::InvalidProfile {
            id: self.id,
            reason: reason.to_string(),
        };
        if !(self.cycles_per_tuple > 0.0 && self.cycles_per_tuple.is_finite()) {
            return Err(bad("cycles_per_tuple must be positive"));
        }
        if self.local_iters < 1 {
            return Err(bad("local_iters must be >= 1"));
        }
        if self.data_size < 1 {
            return Err(bad("data_size must be >= 1"));
        }
        for (name, v) in [
            ("f_max", self.f_max),
            ("capacitance", self.capacitance),
            ("energy_cost", self.energy_cost),
            ("tx_power", self.tx_power),
            ("channel_gain", self.channel_gain),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(bad(&format!("{name} must be positive and finite")));
            }
        }
        Ok(())
    }
}

/// Server-side constants of the system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Uplink bandwidth, Hz.
    pub bandwidth: f64,
    /// Receiver noise power, W.
    pub noise_power: f64,
    /// Size of the model update, bits.
    pub model_bits: f64,
    /// Per-round latency deadline, s.
    pub t0: f64,
    /// Weight on the accuracy proxy.
    pub kappa: f64,
    /// Weight on total training time.
    pub mu: f64,
    /// Number of global training rounds.
    pub global_rounds: u32,
    /// Client-count threshold used by selection policies.
    pub n0: u32,
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("bandwidth", self.bandwidth),
            ("noise_power", self.noise_power),
            ("model_bits", self.model_bits),
            ("t0", self.t0),
            ("kappa", self.kappa),
            ("mu", self.mu),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be positive and finite"
                )));
            }
        }
        if self.global_rounds < 1 {
            return Err(Error::InvalidConfig("global_rounds must be >= 1".into()));
        }
        if self.n0 < 1 {
            return Err(Error::InvalidConfig("n0 must be >= 1".into()));
        }
        Ok(())
    }
}

/// Equilibrium outcome of a single client.
///
/// Non-participating clients are kept in the outcome vector with every
/// numeric field zeroed, so sums over the full candidate set stay literal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClientOutcome {
    pub client_id: ClientId,
    /// Offered price per second of latency margin.
    pub price: f64,
    /// Chosen CPU frequency, Hz.
    pub frequency: f64,
    /// Round latency, s.
    pub latency: f64,
    /// Client utility.
    pub utility: f64,
    /// Payment received from the server.
    pub payment: f64,
    pub participating: bool,
}

impl ClientOutcome {
    /// Zeroed outcome for a client that is not part of the coalition.
    pub fn non_participant(id: ClientId) -> Self {
        Self {
            client_id: id,
            price: 0.0,
            frequency: 0.0,
            latency: 0.0,
            utility: 0.0,
            payment: 0.0,
            participating: false,
        }
    }
}

/// Diagnostics attached to a solver result.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Objective evaluations performed by the solver.
    pub iterations: u64,
    /// Sampled (control variable, objective) pairs along the solve.
    pub path: Vec<(f64, f64)>,
    /// Objective trajectory of the greedy elimination, one entry per
    /// accepted coalition.
    pub q_trajectory: Vec<f64>,
    /// Candidates dropped up front because they can never meet the deadline.
    pub infeasible: Vec<ClientId>,
}

/// Solved game over a candidate set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameSolution {
    /// Ids of the clients that participate.
    pub selected: BTreeSet<ClientId>,
    /// One outcome per candidate client, input order preserved.
    pub outcomes: Vec<ClientOutcome>,
    /// Completion time of the slowest participating client, s.
    pub system_latency: f64,
    /// Server utility at the solution.
    pub ps_utility: f64,
    pub diagnostics: Diagnostics,
}

impl GameSolution {
    /// Total data held by the participating clients.
    pub fn selected_data(&self, candidates: &[ClientProfile]) -> u64 {
        candidates
            .iter()
            .filter(|c| self.selected.contains(&c.id))
            .map(|c| c.data_size)
            .sum()
    }

    /// Sum of payments made by the server per round.
    pub fn total_payment(&self) -> f64 {
        self.outcomes.iter().map(|o| o.payment).sum()
    }
}

/// Uplink data rate of a client, bits/s: `B log2(1 + p g / sigma^2)`.
pub fn uplink_rate(client: &ClientProfile, sys: &SystemConfig) -> f64 {
    sys.bandwidth * (1.0 + client.tx_power * client.channel_gain / sys.noise_power).log2()
}

/// Time to upload one model update, s.
pub fn comm_time(client: &ClientProfile, sys: &SystemConfig) -> f64 {
    sys.model_bits / uplink_rate(client, sys)
}

/// Energy spent uploading one model update, J.
pub fn comm_energy(client: &ClientProfile, sys: &SystemConfig) -> f64 {
    client.tx_power * comm_time(client, sys)
}

/// Local training time of one round at frequency `f`, s.
pub fn train_time(client: &ClientProfile, f: f64) -> Result<f64> {
    if f.is_nan() || f <= 0.0 {
        return Err(Error::NonPositiveFrequency(f));
    }
    Ok(client.work_cycles() / f)
}

/// Energy of one local training round at frequency `f`, J: `v f^2 c I D`.
pub fn train_energy(client: &ClientProfile, f: f64) -> Result<f64> {
    if f.is_nan() || f <= 0.0 {
        return Err(Error::NonPositiveFrequency(f));
    }
    Ok(client.capacitance * f * f * client.work_cycles())
}

/// Full round latency (upload plus training) at frequency `f`, s.
pub fn round_time(client: &ClientProfile, sys: &SystemConfig, f: f64) -> Result<f64> {
    Ok(comm_time(client, sys) + train_time(client, f)?)
}

/// Accuracy proxy: upper bound on the loss gap after `global_rounds`
/// rounds over `total_data` tuples. Strictly decreasing in both arguments.
pub fn gamma_bound(total_data: u64, global_rounds: u32) -> Result<f64> {
    if total_data == 0 {
        return Err(Error::EmptyCoalition);
    }
    if global_rounds == 0 {
        return Err(Error::InvalidConfig("global_rounds must be >= 1".into()));
    }
    let ig = global_rounds as f64;
    Ok(1.0 / (ig * total_data as f64).sqrt() + 1.0 / ig)
}

/// Client utility at price `alpha` and frequency `f`:
/// `alpha (T0 - T_m) - beta (E_trn + E_com)`.
///
/// `f = 0` is the non-participant convention and is only valid together
/// with `alpha = 0`, yielding zero utility.
pub fn client_utility(
    client: &ClientProfile,
    sys: &SystemConfig,
    alpha: f64,
    f: f64,
) -> Result<f64> {
    if f == 0.0 {
        if alpha != 0.0 {
            return Err(Error::NonPositiveFrequency(f));
        }
        return Ok(0.0);
    }
    let t_m = round_time(client, sys, f)?;
    let energy = train_energy(client, f)? + comm_energy(client, sys);
    Ok(alpha * (sys.t0 - t_m) - client.energy_cost * energy)
}

/// Server utility over an outcome vector:
/// `kappa Γ + mu I_g T + I_g Σ alpha_m (T0 - T_m)`.
///
/// `T` is the maximum latency among participating outcomes; the payment
/// sum runs over all outcomes, with non-participants contributing zero.
/// `total_data` is the data held by the participating clients.
pub fn ps_utility(outcomes: &[ClientOutcome], total_data: u64, sys: &SystemConfig) -> Result<f64> {
    let t = outcomes
        .iter()
        .filter(|o| o.participating)
        .map(|o| o.latency)
        .fold(f64::NEG_INFINITY, f64::max);
    if !t.is_finite() {
        return Err(Error::EmptyCoalition);
    }
    let gamma = gamma_bound(total_data, sys.global_rounds)?;
    let ig = sys.global_rounds as f64;
    let payments: f64 = outcomes
        .iter()
        .map(|o| o.price * (sys.t0 - o.latency))
        .sum();
    Ok(sys.kappa * gamma + sys.mu * ig * t + ig * payments)
}
