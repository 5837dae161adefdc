//! Seeded synthetic client populations.
//!
//! Defaults follow the reference parameterization: 40 clients, CPU caps
//! uniform on 2..4 GHz, transmit power uniform on 0.02..0.1 W, channel
//! gain `1e-3 / d^3` with distance uniform on 10..100 m, and either a
//! flat data distribution (100..2000 tuples) or a skewed class-based one
//! (1..10 classes of 10..400 tuples each).
//!
//! Generation is bit-deterministic: same spec and seed give the same
//! population on every platform.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClientId, ClientProfile, SystemConfig};
use crate::rng::SeededRng;

/// Closed interval for a uniform draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.lo > 0.0 && self.lo <= self.hi && self.hi.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "{name} range must satisfy 0 < lo <= hi, got [{}, {}]",
                self.lo, self.hi
            )));
        }
        Ok(())
    }
}

/// How client data sizes are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataMode {
    /// Flat: data_size uniform over `iid_data` tuples.
    Iid,
    /// Skewed: a uniform number of distinct classes, each contributing a
    /// uniform number of tuples.
    NonIid,
}

impl std::fmt::Display for DataMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DataMode::Iid => write!(f, "iid"),
            DataMode::NonIid => write!(f, "non_iid"),
        }
    }
}

/// Parameters of the synthetic population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub n_clients: usize,
    pub data_mode: DataMode,
    /// CPU frequency cap range, Hz.
    pub f_max: Range,
    /// Transmit power range, W.
    pub tx_power: Range,
    /// Client distance range, m.
    pub distance: Range,
    /// Channel gain constant in `gain = k / d^3`.
    pub gain_const: f64,
    pub cycles_per_tuple: f64,
    pub capacitance: f64,
    pub energy_cost: f64,
    pub local_iters: u32,
    /// Data-size bounds (tuples) in the flat mode, inclusive.
    pub iid_data: (u64, u64),
    /// Bounds on the number of classes a client holds, inclusive.
    pub class_count: (u64, u64),
    /// Per-class tuple bounds, inclusive.
    pub class_size: (u64, u64),
    /// Number of distinct classes in the corpus.
    pub num_classes: u64,
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_clients < 1 {
            return Err(Error::InvalidConfig("n_clients must be >= 1".into()));
        }
        self.f_max.validate("f_max")?;
        self.tx_power.validate("tx_power")?;
        self.distance.validate("distance")?;
        for (name, v) in [
            ("gain_const", self.gain_const),
            ("cycles_per_tuple", self.cycles_per_tuple),
            ("capacitance", self.capacitance),
            ("energy_cost", self.energy_cost),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.local_iters < 1 {
            return Err(Error::InvalidConfig("local_iters must be >= 1".into()));
        }
        for (name, (lo, hi)) in [
            ("iid_data", self.iid_data),
            ("class_count", self.class_count),
            ("class_size", self.class_size),
        ] {
            if lo < 1 || lo > hi {
                return Err(Error::InvalidConfig(format!(
                    "{name} bounds must satisfy 1 <= lo <= hi, got ({lo}, {hi})"
                )));
            }
        }
        if self.num_classes < self.class_count.1 {
            return Err(Error::InvalidConfig(
                "num_classes must cover the class_count upper bound".into(),
            ));
        }
        Ok(())
    }
}

/// Reference population parameters.
pub fn default_spec() -> PopulationSpec {
    PopulationSpec {
        n_clients: 40,
        data_mode: DataMode::Iid,
        f_max: Range::new(2e9, 4e9),
        tx_power: Range::new(0.02, 0.1),
        distance: Range::new(10.0, 100.0),
        gain_const: 1e-3,
        cycles_per_tuple: 5e5,
        capacitance: 1e-28,
        energy_cost: 1.0,
        local_iters: 1,
        iid_data: (100, 2000),
        class_count: (1, 10),
        class_size: (10, 400),
        num_classes: 10,
    }
}

/// Reference system constants: 1 MHz uplink, -90 dBm noise, a 0.6 Mb
/// model, a 10 s deadline, objective weights kappa = 1e6 and mu = 1,
/// 100 global rounds and a selection threshold of 10 clients.
pub fn default_system() -> SystemConfig {
    SystemConfig {
        bandwidth: 1e6,
        noise_power: 1e-9,
        model_bits: 6e5,
        t0: 10.0,
        kappa: 1e6,
        mu: 1.0,
        global_rounds: 100,
        n0: 10,
    }
}

/// Draws a population.
///
/// Per client, the draw order is fixed: CPU cap, transmit power,
/// distance, then data (flat mode: one size draw; skewed mode: class
/// count, class identities without replacement, one size per class).
/// That order is part of the reproducibility contract.
pub fn generate(spec: &PopulationSpec, seed: u64) -> Result<Vec<ClientProfile>> {
    spec.validate()?;
    let mut rng = SeededRng::new(seed);
    let mut clients = Vec::with_capacity(spec.n_clients);
    for i in 0..spec.n_clients {
        let f_max = rng.uniform_f64(spec.f_max.lo, spec.f_max.hi);
        let tx_power = rng.uniform_f64(spec.tx_power.lo, spec.tx_power.hi);
        let distance = rng.uniform_f64(spec.distance.lo, spec.distance.hi);
        let channel_gain = spec.gain_const / (distance * distance * distance);
        let data_size = match spec.data_mode {
            DataMode::Iid => rng.uniform_u64(spec.iid_data.0, spec.iid_data.1),
            DataMode::NonIid => {
                let k = rng.uniform_u64(spec.class_count.0, spec.class_count.1);
                // Class identities are drawn without replacement; only the
                // total tuple count feeds the game.
                let _classes = rng.choose_distinct(spec.num_classes as usize, k as usize);
                (0..k)
                    .map(|_| rng.uniform_u64(spec.class_size.0, spec.class_size.1))
                    .sum()
            }
        };
        let profile = ClientProfile {
            id: ClientId(i as u32),
            cycles_per_tuple: spec.cycles_per_tuple,
            local_iters: spec.local_iters,
            data_size,
            f_max,
            capacitance: spec.capacitance,
            energy_cost: spec.energy_cost,
            tx_power,
            channel_gain,
        };
        profile.validate()?;
        clients.push(profile);
    }
    Ok(clients)
}
