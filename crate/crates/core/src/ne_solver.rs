//! Equilibrium pricing for a fixed client set.
//!
//! With the per-client thresholds in hand, the server objective collapses
//! to a scalar function `Q(T)` of the common latency target: the accuracy
//! proxy is constant for a fixed coalition, the time term is linear and
//! the payment of every client is a smooth decreasing function of `T` up
//! to its break-even point and constant afterwards. `Q` is continuous and
//! piecewise smooth with kinks only at client break-even points, and its
//! slope never decreases across a kink, so each smooth piece is unimodal.
//!
//! Three solvers are provided over that structure: the faithful iterative
//! price-raising walk, a golden-section refinement per smooth piece, and
//! a dense grid scan kept as a slow reference.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::client_strategy::{
    best_response, compute_thresholds, min_price, payment, payment_derivative, pinned_latency,
    pinned_price, ClientThresholds,
};
use crate::error::{Error, Result};
use crate::model::{
    client_utility, ps_utility, ClientId, ClientOutcome, ClientProfile, Diagnostics, GameSolution,
    SystemConfig,
};
use crate::numeric::golden_min;

/// Grid density used by the equilibrium verifier.
const VERIFY_GRID: usize = 10_000;

/// How the inner game is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMode {
    /// Faithful iterative walk from the break-even point.
    Iterative,
    /// Piecewise golden-section refinement (default).
    Refined,
    /// Dense grid scan, used as a reference oracle.
    Oracle,
}

/// Tuning knobs of the inner solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Latency decrement per iterative step; defaults to a thousandth of
    /// the feasible range.
    pub t_step: Option<f64>,
    /// Interval tolerance of the golden-section refinement; defaults to
    /// `1e-9 * T0`.
    pub refine_tol: Option<f64>,
    /// Grid density of the oracle mode.
    pub grid_points: usize,
    pub mode: SolverMode,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            t_step: None,
            refine_tol: None,
            grid_points: 100_000,
            mode: SolverMode::Refined,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if let Some(s) = self.t_step {
            if s.is_nan() || s <= 0.0 {
                return Err(Error::InvalidOptions(format!(
                    "t_step must be > 0, got {s}"
                )));
            }
        }
        if let Some(t) = self.refine_tol {
            if t.is_nan() || t <= 0.0 {
                return Err(Error::InvalidOptions(format!(
                    "refine_tol must be > 0, got {t}"
                )));
            }
        }
        if self.grid_points < 100 {
            return Err(Error::InvalidOptions(format!(
                "grid_points must be >= 100, got {}",
                self.grid_points
            )));
        }
        Ok(())
    }

    fn step(&self, t_lo: f64, t_hi: f64) -> f64 {
        self.t_step.unwrap_or((t_hi - t_lo) / 1000.0)
    }

    fn tol(&self, t0: f64) -> f64 {
        self.refine_tol.unwrap_or(1e-9 * t0)
    }
}

/// One client together with its cached latency landmarks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoalitionMember {
    pub profile: ClientProfile,
    pub thresholds: ClientThresholds,
}

impl CoalitionMember {
    pub fn new(profile: ClientProfile, sys: &SystemConfig) -> Result<Self> {
        profile.validate()?;
        let thresholds = compute_thresholds(&profile, sys)?;
        Ok(Self {
            profile,
            thresholds,
        })
    }
}

/// A fixed client set with precomputed thresholds and latency range.
#[derive(Debug, Clone, PartialEq)]
pub struct Coalition {
    members: Vec<CoalitionMember>,
    total_data: u64,
    t_lo: f64,
    t_hi: f64,
}

impl Coalition {
    pub fn new(clients: &[ClientProfile], sys: &SystemConfig) -> Result<Self> {
        sys.validate()?;
        let members = clients
            .iter()
            .map(|c| CoalitionMember::new(*c, sys))
            .collect::<Result<Vec<_>>>()?;
        Self::from_members(members, sys)
    }

    /// Builds a coalition from members whose thresholds are already known.
    pub fn from_members(members: Vec<CoalitionMember>, sys: &SystemConfig) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::EmptyCoalition);
        }
        let mut ids = BTreeSet::new();
        for m in &members {
            if !ids.insert(m.profile.id) {
                return Err(Error::InvalidOptions(format!(
                    "duplicate client id {}",
                    m.profile.id
                )));
            }
        }
        let t_lo = members
            .iter()
            .map(|m| m.thresholds.t_min)
            .fold(f64::NEG_INFINITY, f64::max);
        let t_max_tilde = members
            .iter()
            .map(|m| m.thresholds.t_tilde)
            .fold(f64::NEG_INFINITY, f64::max);
        let t_hi = (sys.t0 * (1.0 - 1e-9)).min(t_lo.max(t_max_tilde));
        if t_lo > t_hi {
            return Err(Error::InfeasibleCoalition(format!(
                "latency floor {t_lo} s leaves no room under the deadline {} s",
                sys.t0
            )));
        }
        let total_data = members.iter().map(|m| m.profile.data_size).sum();
        Ok(Self {
            members,
            total_data,
            t_lo,
            t_hi,
        })
    }

    pub fn members(&self) -> &[CoalitionMember] {
        &self.members
    }

    pub fn total_data(&self) -> u64 {
        self.total_data
    }

    /// Search range of the latency target: from the slowest client's floor
    /// to the largest break-even point (clipped below the deadline).
    pub fn latency_range(&self) -> (f64, f64) {
        (self.t_lo, self.t_hi)
    }

    /// Server objective at latency target `t`:
    /// `kappa Γ + mu I_g t + I_g Σ R_m(t)`.
    ///
    /// Defined on `[t_lo, T0)`; past the largest break-even point every
    /// payment is constant and the objective is affine in `t`.
    pub fn objective_at(&self, sys: &SystemConfig, t: f64) -> Result<f64> {
        if t < self.t_lo {
            return Err(Error::LatencyDomain {
                latency: t,
                reason: format!("below the coalition latency floor {}", self.t_lo),
            });
        }
        if t >= sys.t0 {
            return Err(Error::LatencyDomain {
                latency: t,
                reason: format!("at or beyond the deadline T0 = {}", sys.t0),
            });
        }
        let gamma = crate::model::gamma_bound(self.total_data, sys.global_rounds)?;
        let ig = sys.global_rounds as f64;
        let mut payments = 0.0;
        for m in &self.members {
            payments += payment(&m.profile, sys, &m.thresholds, t)?;
        }
        Ok(sys.kappa * gamma + sys.mu * ig * t + ig * payments)
    }

    /// Analytic slope of [`Self::objective_at`] on a smooth piece:
    /// `I_g (mu + Σ dR_m/dT)`.
    pub fn objective_derivative_at(&self, sys: &SystemConfig, t: f64) -> Result<f64> {
        let ig = sys.global_rounds as f64;
        let mut dr = 0.0;
        for m in &self.members {
            dr += payment_derivative(&m.profile, sys, &m.thresholds, t)?;
        }
        Ok(ig * (sys.mu + dr))
    }

    /// Kinks of the objective inside the open search range.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut bps: Vec<f64> = self
            .members
            .iter()
            .flat_map(|m| [m.thresholds.t_tilde, m.thresholds.t_min])
            .filter(|t| *t > self.t_lo && *t < self.t_hi)
            .collect();
        bps.sort_by(f64::total_cmp);
        bps.dedup();
        bps
    }

    /// Outcome vector induced by the pinned strategies at target `t`.
    ///
    /// Clients past their break-even point sit at their floor with zero
    /// utility by construction; pushed clients run exactly at `t`.
    pub fn outcomes_at(&self, sys: &SystemConfig, t: f64) -> Result<Vec<ClientOutcome>> {
        self.members
            .iter()
            .map(|m| {
                let latency = pinned_latency(&m.thresholds, t)?;
                let price = pinned_price(&m.profile, sys, &m.thresholds, t)?;
                let frequency =
                    (m.profile.work_cycles() / (latency - m.thresholds.t_com)).min(m.profile.f_max);
                let utility = if t <= m.thresholds.t_tilde {
                    client_utility(&m.profile, sys, price, frequency)?
                } else {
                    0.0
                };
                Ok(ClientOutcome {
                    client_id: m.profile.id,
                    price,
                    frequency,
                    latency,
                    utility,
                    payment: price * (sys.t0 - latency),
                    participating: true,
                })
            })
            .collect()
    }

    fn solution_at(
        &self,
        sys: &SystemConfig,
        t: f64,
        q: f64,
        diagnostics: Diagnostics,
    ) -> Result<GameSolution> {
        let outcomes = self.outcomes_at(sys, t)?;
        let system_latency = outcomes
            .iter()
            .map(|o| o.latency)
            .fold(f64::NEG_INFINITY, f64::max);
        Ok(GameSolution {
            selected: outcomes.iter().map(|o| o.client_id).collect(),
            outcomes,
            system_latency,
            ps_utility: q,
            diagnostics,
        })
    }
}

/// Server objective for an ad-hoc client set. Prefer building a
/// [`Coalition`] once when evaluating many targets.
pub fn ps_objective_at(clients: &[ClientProfile], sys: &SystemConfig, t: f64) -> Result<f64> {
    Coalition::new(clients, sys)?.objective_at(sys, t)
}

/// Valid search range `(T_lo, T_hi)` of the latency target for a client set.
pub fn feasible_latency_range(clients: &[ClientProfile], sys: &SystemConfig) -> Result<(f64, f64)> {
    Ok(Coalition::new(clients, sys)?.latency_range())
}

/// Iterative price-raising solver.
///
/// Starts with every client at its break-even point (the largest target)
/// and repeatedly asks the straggler set to run one `t_step` faster,
/// re-pricing through the pinned strategies, until the objective starts
/// to increase or the floor is reached. Returns the best target seen.
pub fn solve_iterative(
    clients: &[ClientProfile],
    sys: &SystemConfig,
    opts: &SolverOptions,
) -> Result<GameSolution> {
    opts.validate()?;
    let coalition = Coalition::new(clients, sys)?;
    solve_iterative_coalition(&coalition, sys, opts)
}

pub fn solve_iterative_coalition(
    coalition: &Coalition,
    sys: &SystemConfig,
    opts: &SolverOptions,
) -> Result<GameSolution> {
    let (t_lo, t_hi) = coalition.latency_range();
    let mut path = Vec::new();
    let q_start = coalition.objective_at(sys, t_hi)?;
    path.push((t_hi, q_start));
    let mut best = (t_hi, q_start);
    let mut iterations = 1u64;

    if t_hi > t_lo {
        let step = opts.step(t_lo, t_hi);
        let mut t = t_hi;
        let mut prev = q_start;
        loop {
            t = (t - step).max(t_lo);
            let q = coalition.objective_at(sys, t)?;
            path.push((t, q));
            iterations += 1;
            if q < best.1 {
                best = (t, q);
            }
            if q > prev || t <= t_lo {
                break;
            }
            prev = q;
        }
    }

    coalition.solution_at(
        sys,
        best.0,
        best.1,
        Diagnostics {
            iterations,
            path,
            ..Diagnostics::default()
        },
    )
}

/// Piecewise golden-section solver (the default).
///
/// Splits the search range at every client landmark and refines each
/// smooth piece independently; the global winner is the piecewise
/// minimum, with ties resolved toward the smaller target.
pub fn solve_refined(
    clients: &[ClientProfile],
    sys: &SystemConfig,
    opts: &SolverOptions,
) -> Result<GameSolution> {
    opts.validate()?;
    let coalition = Coalition::new(clients, sys)?;
    solve_refined_coalition(&coalition, sys, opts)
}

pub fn solve_refined_coalition(
    coalition: &Coalition,
    sys: &SystemConfig,
    opts: &SolverOptions,
) -> Result<GameSolution> {
    let (t_lo, t_hi) = coalition.latency_range();
    let tol = opts.tol(sys.t0);
    let mut edges = vec![t_lo];
    edges.extend(coalition.breakpoints());
    edges.push(t_hi);

    let mut best: Option<(f64, f64)> = None;
    let mut path = Vec::new();
    let mut iterations = 0u64;
    for pair in edges.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b < a {
            continue;
        }
        let (x, q, evals) = golden_min(
            |t| {
                coalition
                    .objective_at(sys, t)
                    .expect("objective defined on the search range")
            },
            a,
            b,
            tol,
        );
        iterations += evals;
        path.push((x, q));
        best = Some(match best {
            None => (x, q),
            Some(cur) => {
                let tie = 1e-12 * cur.1.abs();
                if q < cur.1 - tie || (q <= cur.1 + tie && x < cur.0) {
                    (x, q)
                } else {
                    cur
                }
            }
        });
    }
    let (t_star, q_star) = best.expect("at least one piece");

    coalition.solution_at(
        sys,
        t_star,
        q_star,
        Diagnostics {
            iterations,
            path,
            ..Diagnostics::default()
        },
    )
}

/// Dense grid reference solver.
pub fn solve_oracle(
    clients: &[ClientProfile],
    sys: &SystemConfig,
    opts: &SolverOptions,
) -> Result<GameSolution> {
    opts.validate()?;
    let coalition = Coalition::new(clients, sys)?;
    solve_oracle_coalition(&coalition, sys, opts)
}

pub fn solve_oracle_coalition(
    coalition: &Coalition,
    sys: &SystemConfig,
    opts: &SolverOptions,
) -> Result<GameSolution> {
    let (t_lo, t_hi) = coalition.latency_range();
    let n = opts.grid_points.max(2);
    let mut best = (t_lo, coalition.objective_at(sys, t_lo)?);
    if t_hi > t_lo {
        for k in 1..n {
            let t = t_lo + (t_hi - t_lo) * k as f64 / (n - 1) as f64;
            let q = coalition.objective_at(sys, t)?;
            if q < best.1 {
                best = (t, q);
            }
        }
    }
    coalition.solution_at(
        sys,
        best.0,
        best.1,
        Diagnostics {
            iterations: n as u64,
            path: vec![best],
            ..Diagnostics::default()
        },
    )
}

/// Solves the inner game with the mode selected in `opts`.
pub fn solve(
    clients: &[ClientProfile],
    sys: &SystemConfig,
    opts: &SolverOptions,
) -> Result<GameSolution> {
    match opts.mode {
        SolverMode::Iterative => solve_iterative(clients, sys, opts),
        SolverMode::Refined => solve_refined(clients, sys, opts),
        SolverMode::Oracle => solve_oracle(clients, sys, opts),
    }
}

/// Named equilibrium checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CheckKind {
    ClientBestResponse,
    ClientGridImprovement,
    PsGridImprovement,
    LatencyThreshold,
    FrequencyBound,
    ParticipationRationality,
    PriceFloor,
    PaymentConsistency,
    NonParticipantZeroed,
    SelectionConsistency,
    SystemLatency,
    UtilityRecomputation,
}

/// A single failed check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub check: CheckKind,
    pub client: Option<ClientId>,
    pub detail: String,
}

/// Result of auditing a solution against the equilibrium conditions.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub violations: Vec<Violation>,
    pub checks_run: usize,
}

impl EquilibriumReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    fn fail(&mut self, check: CheckKind, client: Option<ClientId>, detail: String) {
        self.violations.push(Violation {
            check,
            client,
            detail,
        });
    }
}

/// Full equilibrium audit: the constraint checks of
/// [`verify_constraints`] plus the server-side grid check that no latency
/// target on a dense grid beats the solution objective.
pub fn verify_equilibrium(
    solution: &GameSolution,
    candidates: &[ClientProfile],
    sys: &SystemConfig,
) -> Result<EquilibriumReport> {
    let mut report = verify_constraints(solution, candidates, sys)?;

    let participants: Vec<ClientProfile> = candidates
        .iter()
        .filter(|c| solution.selected.contains(&c.id))
        .copied()
        .collect();
    if participants.is_empty() {
        return Ok(report);
    }

    // No latency target on a dense grid may improve on the solution.
    report.checks_run += 1;
    match Coalition::new(&participants, sys) {
        Ok(coalition) => {
            let (t_lo, t_hi) = coalition.latency_range();
            let tol = 1e-9 * solution.ps_utility.abs();
            for k in 0..VERIFY_GRID {
                let t = if VERIFY_GRID > 1 {
                    t_lo + (t_hi - t_lo) * k as f64 / (VERIFY_GRID - 1) as f64
                } else {
                    t_lo
                };
                let q = coalition.objective_at(sys, t)?;
                if q < solution.ps_utility - tol {
                    report.fail(
                        CheckKind::PsGridImprovement,
                        None,
                        format!(
                            "target {t} yields Q {q}, below solution Q {}",
                            solution.ps_utility
                        ),
                    );
                    break;
                }
            }
        }
        Err(e) => report.fail(CheckKind::PsGridImprovement, None, e.to_string()),
    }

    Ok(report)
}

/// Constraint audit of a solution: best responses (closed form and
/// against a frequency grid), participation rationality, price floors,
/// latency deadline, payment and bookkeeping consistency. Does not run
/// the server-side grid check, so it also applies to operating points
/// that are not equilibria of the discriminating game.
pub fn verify_constraints(
    solution: &GameSolution,
    candidates: &[ClientProfile],
    sys: &SystemConfig,
) -> Result<EquilibriumReport> {
    let mut report = EquilibriumReport::default();
    let by_id: std::collections::BTreeMap<ClientId, &ClientProfile> =
        candidates.iter().map(|c| (c.id, c)).collect();

    let mut participant_ids = BTreeSet::new();
    let mut participants = Vec::new();
    for outcome in &solution.outcomes {
        report.checks_run += 1;
        if !outcome.participating {
            if outcome.price != 0.0
                || outcome.frequency != 0.0
                || outcome.utility != 0.0
                || outcome.payment != 0.0
            {
                report.fail(
                    CheckKind::NonParticipantZeroed,
                    Some(outcome.client_id),
                    format!(
                        "non-participant carries price {} frequency {} utility {} payment {}",
                        outcome.price, outcome.frequency, outcome.utility, outcome.payment
                    ),
                );
            }
            continue;
        }
        participant_ids.insert(outcome.client_id);
        let profile = match by_id.get(&outcome.client_id) {
            Some(p) => **p,
            None => {
                return Err(Error::NoCandidates(format!(
                    "outcome references unknown client {}",
                    outcome.client_id
                )))
            }
        };
        participants.push(profile);
        audit_participant(&mut report, &profile, outcome, sys);
    }

    if participant_ids != solution.selected {
        report.fail(
            CheckKind::SelectionConsistency,
            None,
            "selected set does not match participating outcomes".to_string(),
        );
    }

    if participants.is_empty() {
        report.fail(
            CheckKind::SelectionConsistency,
            None,
            "solution has no participants".to_string(),
        );
        return Ok(report);
    }

    // System latency must be the straggler's latency.
    let max_latency = solution
        .outcomes
        .iter()
        .filter(|o| o.participating)
        .map(|o| o.latency)
        .fold(f64::NEG_INFINITY, f64::max);
    report.checks_run += 1;
    if (solution.system_latency - max_latency).abs() > 1e-9 * max_latency.abs().max(1e-300) {
        report.fail(
            CheckKind::SystemLatency,
            None,
            format!(
                "stored system latency {} vs straggler latency {max_latency}",
                solution.system_latency
            ),
        );
    }

    // Stored objective must recompute from the outcome vector.
    report.checks_run += 1;
    let total_data: u64 = participants.iter().map(|c| c.data_size).sum();
    match ps_utility(&solution.outcomes, total_data, sys) {
        Ok(q) => {
            if (q - solution.ps_utility).abs() > 1e-9 * q.abs().max(1e-300) {
                report.fail(
                    CheckKind::UtilityRecomputation,
                    None,
                    format!("stored Q {} vs recomputed {q}", solution.ps_utility),
                );
            }
        }
        Err(e) => report.fail(CheckKind::UtilityRecomputation, None, e.to_string()),
    }

    Ok(report)
}

fn audit_participant(
    report: &mut EquilibriumReport,
    profile: &ClientProfile,
    outcome: &ClientOutcome,
    sys: &SystemConfig,
) {
    let id = Some(outcome.client_id);

    if outcome.latency > sys.t0 * (1.0 + 1e-12) {
        report.fail(
            CheckKind::LatencyThreshold,
            id,
            format!("latency {} exceeds deadline {}", outcome.latency, sys.t0),
        );
    }
    if !(outcome.frequency > 0.0 && outcome.frequency <= profile.f_max * (1.0 + 1e-9)) {
        report.fail(
            CheckKind::FrequencyBound,
            id,
            format!(
                "frequency {} outside (0, {}]",
                outcome.frequency, profile.f_max
            ),
        );
    }

    let energy_scale = crate::model::train_energy(profile, outcome.frequency.max(1.0))
        .unwrap_or(0.0)
        + crate::model::comm_energy(profile, sys);
    let scale = profile.energy_cost * energy_scale;
    if outcome.utility < -1e-9 * scale.max(1e-300) {
        report.fail(
            CheckKind::ParticipationRationality,
            id,
            format!("utility {} is negative", outcome.utility),
        );
    }

    match min_price(profile, sys, outcome.latency, outcome.frequency) {
        Ok(floor) => {
            if outcome.price < floor * (1.0 - 1e-9) {
                report.fail(
                    CheckKind::PriceFloor,
                    id,
                    format!("price {} below minimum {floor}", outcome.price),
                );
            }
        }
        Err(e) => report.fail(CheckKind::PriceFloor, id, e.to_string()),
    }

    let expected_payment = outcome.price * (sys.t0 - outcome.latency);
    if (outcome.payment - expected_payment).abs() > 1e-9 * expected_payment.abs().max(1e-300) {
        report.fail(
            CheckKind::PaymentConsistency,
            id,
            format!(
                "payment {} vs price * margin {expected_payment}",
                outcome.payment
            ),
        );
    }

    match best_response(profile, outcome.price) {
        Ok(f_star) => {
            if (outcome.frequency - f_star).abs() > 1e-9 * f_star {
                report.fail(
                    CheckKind::ClientBestResponse,
                    id,
                    format!(
                        "frequency {} differs from best response {f_star}",
                        outcome.frequency
                    ),
                );
            }
            let u_star = client_utility(profile, sys, outcome.price, outcome.frequency)
                .unwrap_or(f64::NEG_INFINITY);
            for k in 1..=VERIFY_GRID {
                let f = profile.f_max * k as f64 / VERIFY_GRID as f64;
                let u = client_utility(profile, sys, outcome.price, f)
                    .expect("positive frequency on grid");
                if u > u_star + 1e-9 * u.abs().max(1e-300) {
                    report.fail(
                        CheckKind::ClientGridImprovement,
                        id,
                        format!("frequency {f} improves utility {u_star} -> {u}"),
                    );
                    break;
                }
            }
        }
        Err(e) => report.fail(CheckKind::ClientBestResponse, id, e.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{approx_rel, default_system, example_client, seeded_feasible_clients};

    fn opts() -> SolverOptions {
        SolverOptions::default()
    }

    #[test]
    fn objective_matches_ps_utility_route() {
        let sys = default_system();
        for seed in 0..10 {
            let clients = seeded_feasible_clients(seed, 8);
            let coalition = Coalition::new(&clients, &sys).unwrap();
            let (t_lo, t_hi) = coalition.latency_range();
            for k in 0..=100 {
                let t = t_lo + (t_hi - t_lo) * k as f64 / 100.0;
                let q = coalition.objective_at(&sys, t).unwrap();
                let outcomes = coalition.outcomes_at(&sys, t).unwrap();
                let q2 = ps_utility(&outcomes, coalition.total_data(), &sys).unwrap();
                assert!(approx_rel(q, q2, 1e-9), "routes disagree: {q} vs {q2}");
            }
        }
    }

    #[test]
    fn objective_affine_past_all_break_evens() {
        let sys = default_system();
        let clients = seeded_feasible_clients(3, 6);
        let coalition = Coalition::new(&clients, &sys).unwrap();
        let (_, t_hi) = coalition.latency_range();
        let ig = sys.global_rounds as f64;
        let t1 = t_hi + 0.1 * (sys.t0 - t_hi);
        let t2 = t_hi + 0.7 * (sys.t0 - t_hi);
        let q1 = coalition.objective_at(&sys, t1).unwrap();
        let q2 = coalition.objective_at(&sys, t2).unwrap();
        assert!(approx_rel(q2 - q1, sys.mu * ig * (t2 - t1), 1e-9));
    }

    #[test]
    fn objective_domain_errors() {
        let sys = default_system();
        let clients = seeded_feasible_clients(4, 4);
        let coalition = Coalition::new(&clients, &sys).unwrap();
        let (t_lo, _) = coalition.latency_range();
        assert!(coalition.objective_at(&sys, t_lo * 0.5).is_err());
        assert!(coalition.objective_at(&sys, sys.t0).is_err());
    }

    #[test]
    fn single_client_objective_at_break_even() {
        let sys = default_system();
        let c = example_client();
        let coalition = Coalition::new(&[c], &sys).unwrap();
        let th = compute_thresholds(&c, &sys).unwrap();
        let f = c.work_cycles() / (th.t_tilde - th.t_com);
        let a_min = min_price(&c, &sys, th.t_tilde, f).unwrap();
        let ig = sys.global_rounds as f64;
        let expect = sys.kappa * crate::model::gamma_bound(c.data_size, sys.global_rounds).unwrap()
            + sys.mu * ig * th.t_tilde
            + ig * a_min * (sys.t0 - th.t_tilde);
        let got = coalition.objective_at(&sys, th.t_tilde).unwrap();
        assert!(approx_rel(got, expect, 1e-9));
    }

    #[test]
    fn latency_range_composition() {
        let sys = default_system();
        let c = example_client();
        let (lo, hi) = feasible_latency_range(&[c], &sys).unwrap();
        let th = compute_thresholds(&c, &sys).unwrap();
        assert_eq!(lo, th.t_min);
        assert_eq!(hi, th.t_tilde.max(th.t_min).min(sys.t0 * (1.0 - 1e-9)));

        for seed in 0..5 {
            let clients = seeded_feasible_clients(seed + 100, 6);
            let (lo, hi) = feasible_latency_range(&clients, &sys).unwrap();
            let ths: Vec<_> = clients
                .iter()
                .map(|c| compute_thresholds(c, &sys).unwrap())
                .collect();
            let want_lo = ths.iter().map(|t| t.t_min).fold(f64::MIN, f64::max);
            let want_hi = ths
                .iter()
                .map(|t| t.t_tilde)
                .fold(f64::MIN, f64::max)
                .max(want_lo)
                .min(sys.t0 * (1.0 - 1e-9));
            assert_eq!(lo, want_lo);
            assert_eq!(hi, want_hi);
        }
    }

    #[test]
    fn degenerate_range_when_all_forced() {
        let sys = default_system();
        // t_trn(f_max) = 9 s makes the client forced (t_min > t_tilde).
        let mut a = example_client();
        a.f_max = 5e8 / 9.0;
        let mut b = a;
        b.id = ClientId(1);
        b.data_size = 900;
        b.f_max = 4.5e8 / 9.0;
        let coalition = Coalition::new(&[a, b], &sys).unwrap();
        for m in coalition.members() {
            assert!(m.thresholds.forced_min_price);
        }
        let (lo, hi) = coalition.latency_range();
        assert_eq!(lo, hi);

        let solution = solve_iterative(&[a, b], &sys, &opts()).unwrap();
        assert_eq!(solution.diagnostics.iterations, 1);
        assert_eq!(solution.system_latency, lo);
    }

    #[test]
    fn iterative_returns_start_when_objective_increases_immediately() {
        // A negligible time weight makes lowering the target pure cost, so
        // the walk stops after one step and keeps the break-even start.
        let mut sys = default_system();
        sys.mu = 1e-12;
        let clients = seeded_feasible_clients(7, 5);
        let solution = solve_iterative(&clients, &sys, &opts()).unwrap();
        let coalition = Coalition::new(&clients, &sys).unwrap();
        let (_, t_hi) = coalition.latency_range();
        assert_eq!(solution.diagnostics.path[0].0, t_hi);
        // Best seen is the start.
        let q_start = solution.diagnostics.path[0].1;
        assert!(solution.ps_utility <= q_start);
    }

    #[test]
    fn refined_dominates_iterative_and_matches_oracle() {
        let sys = default_system();
        for seed in 0..20 {
            let clients = seeded_feasible_clients(seed + 500, 8);
            let refined = solve_refined(&clients, &sys, &opts()).unwrap();
            let iterative = solve_iterative(&clients, &sys, &opts()).unwrap();
            let oracle = solve_oracle(&clients, &sys, &opts()).unwrap();
            assert!(refined.ps_utility <= iterative.ps_utility + 1e-9 * iterative.ps_utility.abs());
            assert!(approx_rel(refined.ps_utility, oracle.ps_utility, 1e-6));
            let coalition = Coalition::new(&clients, &sys).unwrap();
            let (t_lo, t_hi) = coalition.latency_range();
            let step = opts().step(t_lo, t_hi);
            let bound = sys.mu * sys.global_rounds as f64 * step + 1e-6 * oracle.ps_utility.abs();
            assert!(iterative.ps_utility - oracle.ps_utility <= bound);
        }
    }

    #[test]
    fn refined_first_branch_clients_sit_exactly_at_target() {
        let sys = default_system();
        for seed in 0..10 {
            let clients = seeded_feasible_clients(seed + 900, 8);
            let solution = solve_refined(&clients, &sys, &opts()).unwrap();
            let t = solution.system_latency;
            let coalition = Coalition::new(&clients, &sys).unwrap();
            for (m, o) in coalition.members().iter().zip(&solution.outcomes) {
                if t <= m.thresholds.t_tilde {
                    assert_eq!(o.latency, t, "pushed client must run at the target");
                    // Slightly negative values only from the break-even
                    // root tolerance.
                    assert!(o.utility >= -1e-9 * o.payment.abs().max(1e-12));
                } else {
                    assert_eq!(o.latency, m.thresholds.pinned_floor());
                    assert!(o.latency <= t);
                    // Held clients sit exactly on the zero-utility surface.
                    assert_eq!(o.utility, 0.0);
                }
            }
        }
    }

    #[test]
    fn analytic_derivative_matches_finite_differences() {
        let sys = default_system();
        for seed in 0..10 {
            let clients = seeded_feasible_clients(seed + 1300, 6);
            let coalition = Coalition::new(&clients, &sys).unwrap();
            let (t_lo, t_hi) = coalition.latency_range();
            if t_hi - t_lo < 1e-6 {
                continue;
            }
            let mut bps = coalition.breakpoints();
            bps.insert(0, t_lo);
            bps.push(t_hi);
            for pair in bps.windows(2) {
                let (a, b) = (pair[0], pair[1]);
                if b - a < 1e-4 {
                    continue;
                }
                for k in 1..=10 {
                    let t = a + (b - a) * k as f64 / 11.0;
                    let h = (1e-6 * t).min(0.25 * (b - a).min(t - a).min(b - t));
                    if h <= 0.0 {
                        continue;
                    }
                    let ana = coalition.objective_derivative_at(&sys, t).unwrap();
                    let fd = (coalition.objective_at(&sys, t + h).unwrap()
                        - coalition.objective_at(&sys, t - h).unwrap())
                        / (2.0 * h);
                    let denom = ana.abs().max(fd.abs()).max(1e-6 * sys.mu * 100.0);
                    assert!(
                        (ana - fd).abs() <= 1e-4 * denom,
                        "seed {seed}: {ana} vs {fd} at t={t}"
                    );
                }
            }
        }
    }

    #[test]
    fn objective_shape_has_at_most_one_sign_change() {
        let sys = default_system();
        for seed in 0..20 {
            let clients = seeded_feasible_clients(seed + 1700, 8);
            let coalition = Coalition::new(&clients, &sys).unwrap();
            let (t_lo, t_hi) = coalition.latency_range();
            if t_hi - t_lo < 1e-9 {
                continue;
            }
            let n = 10_000;
            let mut qs = Vec::with_capacity(n);
            for k in 0..n {
                let t = t_lo + (t_hi - t_lo) * k as f64 / (n - 1) as f64;
                qs.push(coalition.objective_at(&sys, t).unwrap());
            }
            let band = 1e-9 * qs.iter().fold(0.0f64, |m, q| m.max(q.abs()));
            let mut signs = Vec::new();
            for w in qs.windows(2) {
                let d = w[1] - w[0];
                if d > band {
                    signs.push(1i8);
                } else if d < -band {
                    signs.push(-1i8);
                }
            }
            let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
            let up_then_down = signs.windows(2).any(|w| w[0] == 1 && w[1] == -1);
            assert!(
                changes <= 1 && !up_then_down,
                "seed {seed}: objective is not unimodal"
            );
        }
    }

    #[test]
    fn solver_is_deterministic() {
        let sys = default_system();
        let clients = seeded_feasible_clients(42, 10);
        let a = solve_refined(&clients, &sys, &opts()).unwrap();
        let b = solve_refined(&clients, &sys, &opts()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn verify_accepts_refined_solutions() {
        let sys = default_system();
        for seed in 0..10 {
            let clients = seeded_feasible_clients(seed + 2100, 8);
            let solution = solve_refined(&clients, &sys, &opts()).unwrap();
            let report = verify_equilibrium(&solution, &clients, &sys).unwrap();
            assert!(report.passed(), "violations: {:?}", report.violations);
        }
    }

    #[test]
    fn verify_rejects_corrupted_price() {
        let sys = default_system();
        let clients = seeded_feasible_clients(2500, 6);
        let mut solution = solve_refined(&clients, &sys, &opts()).unwrap();
        solution.outcomes[0].price *= 0.5;
        let report = verify_equilibrium(&solution, &clients, &sys).unwrap();
        assert!(!report.passed());
        assert!(report.violations.iter().any(|v| {
            matches!(
                v.check,
                CheckKind::ClientBestResponse
                    | CheckKind::PriceFloor
                    | CheckKind::ParticipationRationality
                    | CheckKind::UtilityRecomputation
            )
        }));
    }

    #[test]
    fn verify_rejects_perturbed_target() {
        let sys = default_system();
        for seed in 0..20 {
            let clients = seeded_feasible_clients(seed + 2900, 8);
            let coalition = Coalition::new(&clients, &sys).unwrap();
            let solution = solve_refined_coalition(&coalition, &sys, &opts()).unwrap();
            let (t_lo, t_hi) = coalition.latency_range();
            let t_perturbed = (solution.system_latency * 1.1).min(t_hi);
            // Only meaningful when the optimum is interior.
            if t_perturbed <= solution.system_latency
                || solution.system_latency <= t_lo
                || t_perturbed >= t_hi
            {
                continue;
            }
            let q = coalition.objective_at(&sys, t_perturbed).unwrap();
            if !approx_rel(q, solution.ps_utility, 1e-7) {
                let bad = coalition
                    .solution_at(&sys, t_perturbed, q, Diagnostics::default())
                    .unwrap();
                let report = verify_equilibrium(&bad, &clients, &sys).unwrap();
                assert!(
                    report
                        .violations
                        .iter()
                        .any(|v| v.check == CheckKind::PsGridImprovement),
                    "seed {seed}: perturbed solution passed the grid check"
                );
                return;
            }
        }
        panic!("no coalition with an interior optimum found");
    }
}
