//! Reference policies the price-discrimination mechanism is compared
//! against: random selection, data-first (ACA) and time-first (TCA)
//! selection, and the identical-pricing game (IPG) where every client
//! receives the same price.
//!
//! The selection baselines fix a coalition and reuse the equilibrium
//! pricer, so objective comparisons isolate the selection policy.

use crate::client_strategy::{best_response, pinned_price};
use crate::error::{Error, Result};
use crate::model::{
    client_utility, gamma_bound, ps_utility, round_time, ClientId, ClientOutcome, ClientProfile,
    Diagnostics, GameSolution, SystemConfig,
};
use crate::ne_solver::{solve_refined_coalition, Coalition, CoalitionMember, SolverOptions};
use crate::numeric::golden_min;
use crate::rng::SeededRng;
use crate::selection::{expand_to_candidates, partition_feasible};

/// Uniform draw of `n0` feasible clients under the given seed.
pub fn random_coalition(
    candidates: &[ClientProfile],
    sys: &SystemConfig,
    n0: usize,
    seed: u64,
) -> Result<Vec<ClientProfile>> {
    let (mut members, _) = partition_feasible(candidates, sys)?;
    if members.is_empty() {
        return Err(Error::NoCandidates(
            "every candidate misses the deadline".into(),
        ));
    }
    // Shuffle over the id-sorted feasible list so the draw depends only on
    // the id set and the seed, not on input order.
    members.sort_by_key(|m| m.profile.id);
    let mut rng = SeededRng::new(seed);
    let picks = rng.choose_distinct(members.len(), n0.min(members.len()));
    Ok(picks.into_iter().map(|i| members[i].profile).collect())
}

/// Uniformly samples `n0` feasible clients with the given seed and prices
/// the fixed coalition through the equilibrium solver.
pub fn random_select(
    candidates: &[ClientProfile],
    sys: &SystemConfig,
    n0: usize,
    seed: u64,
    solver: &SolverOptions,
) -> Result<GameSolution> {
    let (_, infeasible) = partition_feasible(candidates, sys)?;
    let chosen = random_coalition(candidates, sys, n0, seed)?
        .into_iter()
        .map(|c| CoalitionMember::new(c, sys))
        .collect::<Result<Vec<_>>>()?;
    price_fixed_coalition(candidates, chosen, sys, solver, infeasible)
}

/// Data-first selection: the `n0` clients holding the most data-tuples
/// (ties broken by id).
pub fn aca_select(
    candidates: &[ClientProfile],
    sys: &SystemConfig,
    n0: usize,
    solver: &SolverOptions,
) -> Result<GameSolution> {
    let (mut members, infeasible) = partition_feasible(candidates, sys)?;
    if members.is_empty() {
        return Err(Error::NoCandidates(
            "every candidate misses the deadline".into(),
        ));
    }
    members.sort_by(|a, b| {
        b.profile
            .data_size
            .cmp(&a.profile.data_size)
            .then(a.profile.id.cmp(&b.profile.id))
    });
    members.truncate(n0.min(members.len()));
    price_fixed_coalition(candidates, members, sys, solver, infeasible)
}

/// Time-first selection: the `n0` intrinsically fastest clients, ranked
/// by their latency floor at full frequency (ties broken by id).
pub fn tca_select(
    candidates: &[ClientProfile],
    sys: &SystemConfig,
    n0: usize,
    solver: &SolverOptions,
) -> Result<GameSolution> {
    let (mut members, infeasible) = partition_feasible(candidates, sys)?;
    if members.is_empty() {
        return Err(Error::NoCandidates(
            "every candidate misses the deadline".into(),
        ));
    }
    members.sort_by(|a, b| {
        a.thresholds
            .t_min
            .total_cmp(&b.thresholds.t_min)
            .then(a.profile.id.cmp(&b.profile.id))
    });
    members.truncate(n0.min(members.len()));
    price_fixed_coalition(candidates, members, sys, solver, infeasible)
}

fn price_fixed_coalition(
    candidates: &[ClientProfile],
    members: Vec<CoalitionMember>,
    sys: &SystemConfig,
    solver: &SolverOptions,
    infeasible: Vec<ClientId>,
) -> Result<GameSolution> {
    solver.validate()?;
    let coalition = Coalition::from_members(members, sys)?;
    let solution = solve_refined_coalition(&coalition, sys, solver)?;
    let mut diagnostics = solution.diagnostics.clone();
    diagnostics.infeasible = infeasible;
    Ok(expand_to_candidates(candidates, solution, diagnostics))
}

/// Identical-pricing game on a fixed coalition.
///
/// One price is offered to every client; each client best-responds, and a
/// client whose utility would be negative simply abstains. The price is
/// chosen by scanning a logarithmic grid between the cheapest break-even
/// price and the largest full-speed pinning price, then refining around
/// the best grid point.
pub fn ipg_solve(
    selected_clients: &[ClientProfile],
    sys: &SystemConfig,
    grid: usize,
) -> Result<GameSolution> {
    if grid < 2 {
        return Err(Error::InvalidOptions(format!(
            "IPG grid needs at least 2 points, got {grid}"
        )));
    }
    let (members, infeasible) = partition_feasible(selected_clients, sys)?;
    if members.is_empty() {
        return Err(Error::NoCandidates(
            "every coalition member misses the deadline".into(),
        ));
    }

    // Break-even participation price of each client is its pinned price
    // anywhere past t_tilde.
    let mut a_lo = f64::INFINITY;
    let mut a_hi = f64::NEG_INFINITY;
    for m in &members {
        let past = (m.thresholds.pinned_floor() + sys.t0) * 0.5;
        let part = pinned_price(&m.profile, sys, &m.thresholds, past)?;
        a_lo = a_lo.min(part);
        // Full-speed pinning price: 2 beta v f_max^3.
        let cap = 2.0 * m.profile.energy_cost * m.profile.capacitance * m.profile.f_max.powi(3);
        a_hi = a_hi.max(cap);
    }
    a_lo *= 1.0 - 1e-6;
    a_hi = a_hi.max(a_lo * (1.0 + 1e-6));

    let eval = |alpha: f64| -> Option<(f64, Vec<ClientOutcome>)> {
        ipg_outcomes(&members, sys, alpha).ok().flatten()
    };

    let log_lo = a_lo.ln();
    let log_hi = a_hi.ln();
    let mut best: Option<(usize, f64, f64)> = None; // (index, alpha, q)
    for k in 0..grid {
        let alpha = (log_lo + (log_hi - log_lo) * k as f64 / (grid - 1) as f64).exp();
        if let Some((q, _)) = eval(alpha) {
            if best.is_none_or(|(_, _, bq)| q < bq) {
                best = Some((k, alpha, q));
            }
        }
    }
    let (idx, _, mut q_star) = best.ok_or(Error::NoUniformPrice)?;

    // Local refinement between the grid neighbours of the winner.
    let at = |k: usize| (log_lo + (log_hi - log_lo) * k as f64 / (grid - 1) as f64).exp();
    let lo = at(idx.saturating_sub(1));
    let hi = at((idx + 1).min(grid - 1));
    let (alpha_ref, q_ref, evals) = golden_min(
        |a| eval(a).map_or(f64::INFINITY, |(q, _)| q),
        lo,
        hi,
        1e-9 * hi,
    );
    let mut alpha_star = at(idx);
    if q_ref < q_star {
        alpha_star = alpha_ref;
        q_star = q_ref;
    }

    let (_, outcomes) = eval(alpha_star).ok_or(Error::NoUniformPrice)?;
    let solution = assemble_ipg_solution(outcomes, q_star, sys)?;
    Ok(expand_to_candidates(
        selected_clients,
        solution,
        Diagnostics {
            iterations: grid as u64 + evals,
            path: vec![(alpha_star, q_star)],
            q_trajectory: Vec::new(),
            infeasible,
        },
    ))
}

/// Identical-pricing objective at a fixed latency target, for sweep
/// comparisons against the discriminating objective.
///
/// The uniform price is the smallest one at which every coalition member
/// both meets the target where able and keeps non-negative utility: the
/// largest pinned price across the coalition. Clients best-respond to it
/// and may finish earlier than the target; the time term is charged at
/// the swept target, mirroring the discriminating objective.
pub fn ipg_objective_at(
    selected_clients: &[ClientProfile],
    sys: &SystemConfig,
    t: f64,
) -> Result<f64> {
    let coalition = Coalition::new(selected_clients, sys)?;
    ipg_objective_at_coalition(&coalition, sys, t)
}

pub fn ipg_objective_at_coalition(
    coalition: &Coalition,
    sys: &SystemConfig,
    t: f64,
) -> Result<f64> {
    let members = coalition.members();
    let mut alpha = f64::NEG_INFINITY;
    for m in members {
        alpha = alpha.max(pinned_price(&m.profile, sys, &m.thresholds, t)?);
    }
    let ig = sys.global_rounds as f64;
    let mut payments = 0.0;
    for m in members {
        let f = best_response(&m.profile, alpha)?;
        let t_m = round_time(&m.profile, sys, f)?;
        debug_assert!(
            client_utility(&m.profile, sys, alpha, f).unwrap() >= -1e-9,
            "uniform price must keep every member willing"
        );
        payments += alpha * (sys.t0 - t_m);
    }
    let gamma = gamma_bound(coalition.total_data(), sys.global_rounds)?;
    Ok(sys.kappa * gamma + sys.mu * ig * t + ig * payments)
}

/// Outcomes under a uniform price; `None` when nobody participates.
fn ipg_outcomes(
    members: &[CoalitionMember],
    sys: &SystemConfig,
    alpha: f64,
) -> Result<Option<(f64, Vec<ClientOutcome>)>> {
    let mut outcomes = Vec::with_capacity(members.len());
    let mut total_data = 0u64;
    for m in members {
        let f = best_response(&m.profile, alpha)?;
        let utility = client_utility(&m.profile, sys, alpha, f)?;
        if utility >= 0.0 {
            let latency = round_time(&m.profile, sys, f)?;
            total_data += m.profile.data_size;
            outcomes.push(ClientOutcome {
                client_id: m.profile.id,
                price: alpha,
                frequency: f,
                latency,
                utility,
                payment: alpha * (sys.t0 - latency),
                participating: true,
            });
        } else {
            outcomes.push(ClientOutcome::non_participant(m.profile.id));
        }
    }
    if total_data == 0 {
        return Ok(None);
    }
    let q = ps_utility(&outcomes, total_data, sys)?;
    Ok(Some((q, outcomes)))
}

fn assemble_ipg_solution(
    outcomes: Vec<ClientOutcome>,
    q: f64,
    _sys: &SystemConfig,
) -> Result<GameSolution> {
    let system_latency = outcomes
        .iter()
        .filter(|o| o.participating)
        .map(|o| o.latency)
        .fold(f64::NEG_INFINITY, f64::max);
    if !system_latency.is_finite() {
        return Err(Error::NoUniformPrice);
    }
    Ok(GameSolution {
        selected: outcomes
            .iter()
            .filter(|o| o.participating)
            .map(|o| o.client_id)
            .collect(),
        outcomes,
        system_latency,
        ps_utility: q,
        diagnostics: Diagnostics::default(),
    })
}
