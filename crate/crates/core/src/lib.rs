//! Deterministic simulator and solvers for a monopsony market where a
//! federated-learning server buys training rounds from heterogeneous
//! clients.
//!
//! The server offers each client an individual price per second of
//! latency margin; clients respond by choosing a CPU frequency. The crate
//! provides the closed-form client best responses, equilibrium pricing
//! for a fixed coalition, greedy client selection with an exhaustive
//! oracle, the random/data-first/time-first selection baselines, a
//! uniform-pricing baseline, and seeded synthetic population generation.

pub mod baselines;
pub mod client_strategy;
pub mod error;
pub mod model;
pub mod ne_solver;
pub mod numeric;
pub mod population;
pub(crate) mod rng;
pub mod selection;

pub use error::{Error, Result};
pub use model::{ClientId, ClientOutcome, ClientProfile, Diagnostics, GameSolution, SystemConfig};
pub use ne_solver::{Coalition, EquilibriumReport, SolverMode, SolverOptions};
pub use population::{DataMode, PopulationSpec};
pub use selection::{N0Rule, SelectionOptions};

#[cfg(test)]
pub(crate) mod testutil {
    use crate::client_strategy::compute_thresholds;
    use crate::model::{ClientId, ClientProfile, SystemConfig};
    use crate::population;

    /// Relative closeness with the larger magnitude as the scale.
    pub fn approx_rel(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs())
    }

    /// Reference system constants.
    pub fn default_system() -> SystemConfig {
        population::default_system()
    }

    /// Hand-picked client with round numbers everywhere: uplink rate
    /// exactly 1e6 bits/s (upload takes 0.6 s and 0.06 J), 5e8 cycles of
    /// work per round.
    pub fn example_client() -> ClientProfile {
        ClientProfile {
            id: ClientId(0),
            cycles_per_tuple: 5e5,
            local_iters: 1,
            data_size: 1000,
            f_max: 2.5e9,
            capacitance: 1e-28,
            energy_cost: 1.0,
            tx_power: 0.1,
            channel_gain: 1e-8,
        }
    }

    /// Three heterogeneous clients used as a frozen cross-check coalition.
    pub fn fixed_oracle_coalition() -> Vec<ClientProfile> {
        let mut a = example_client();
        a.data_size = 1500;
        a.f_max = 2.4e9;
        a.tx_power = 0.08;
        a.channel_gain = 2.0e-7;
        let mut b = example_client();
        b.id = ClientId(1);
        b.data_size = 600;
        b.f_max = 3.1e9;
        b.tx_power = 0.05;
        b.channel_gain = 5.0e-8;
        let mut c = example_client();
        c.id = ClientId(2);
        c.local_iters = 2;
        c.data_size = 900;
        c.f_max = 2.9e9;
        c.tx_power = 0.03;
        c.channel_gain = 8.0e-8;
        vec![a, b, c]
    }

    /// Reference-population draw with `n` clients.
    pub fn seeded_clients(seed: u64, n: usize) -> Vec<ClientProfile> {
        let mut spec = population::default_spec();
        spec.n_clients = n;
        population::generate(&spec, seed).expect("valid default spec")
    }

    /// Reference-population draw keeping only clients that can meet the
    /// deadline.
    pub fn seeded_feasible_clients(seed: u64, n: usize) -> Vec<ClientProfile> {
        let sys = default_system();
        let mut out = Vec::new();
        let mut next_seed = seed;
        // Top up from follow-on seeds so the requested count is met even
        // when a draw contains infeasible clients.
        while out.len() < n {
            for c in seeded_clients(next_seed, n) {
                if out.len() == n {
                    break;
                }
                if compute_thresholds(&c, &sys).is_ok() {
                    let mut c = c;
                    c.id = ClientId(out.len() as u32);
                    out.push(c);
                }
            }
            next_seed = next_seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
        }
        out
    }
}
