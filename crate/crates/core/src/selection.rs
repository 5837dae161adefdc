//! Client selection: greedy marginal-loss elimination and an exhaustive
//! subset oracle for small instances.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    ClientId, ClientOutcome, ClientProfile, Diagnostics, GameSolution, SystemConfig,
};
use crate::ne_solver::{solve_refined_coalition, Coalition, CoalitionMember, SolverOptions};

/// Reading of the client-count threshold `N0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum N0Rule {
    /// `N0` is a floor: elimination stops before the coalition would drop
    /// below it (default).
    #[default]
    Floor,
    /// `N0` is a ceiling: elimination always continues down to `N0`
    /// members and may keep going while the objective improves.
    Ceiling,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionOptions {
    /// Client-count threshold.
    pub n0: usize,
    pub n0_rule: N0Rule,
    pub solver: SolverOptions,
}

impl SelectionOptions {
    pub fn new(n0: usize) -> Self {
        Self {
            n0,
            n0_rule: N0Rule::default(),
            solver: SolverOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n0 < 1 {
            return Err(Error::InvalidOptions("n0 must be >= 1".into()));
        }
        self.solver.validate()
    }
}

/// Splits candidates into solvable members and clients that can never
/// meet the deadline.
pub fn partition_feasible(
    candidates: &[ClientProfile],
    sys: &SystemConfig,
) -> Result<(Vec<CoalitionMember>, Vec<ClientId>)> {
    let mut members = Vec::new();
    let mut infeasible = Vec::new();
    for c in candidates {
        match CoalitionMember::new(*c, sys) {
            Ok(m) => members.push(m),
            Err(Error::InfeasibleClient { id, .. }) => infeasible.push(id),
            Err(e) => return Err(e),
        }
    }
    Ok((members, infeasible))
}

/// Greedy elimination: start from every feasible candidate and repeatedly
/// drop the client whose removal lowers the server objective the most,
/// until no removal helps or the `N0` threshold binds.
///
/// The returned solution carries one outcome per candidate, with removed
/// and infeasible clients zeroed, and records the objective trajectory of
/// the accepted coalitions in the diagnostics.
pub fn greedy_select(
    candidates: &[ClientProfile],
    sys: &SystemConfig,
    opts: &SelectionOptions,
) -> Result<GameSolution> {
    opts.validate()?;
    if candidates.is_empty() {
        return Err(Error::NoCandidates("empty candidate set".into()));
    }
    let (mut members, infeasible) = partition_feasible(candidates, sys)?;
    if members.is_empty() {
        return Err(Error::NoCandidates(
            "every candidate misses the deadline".into(),
        ));
    }

    let mut inner_solves = 0u64;
    let solve = |members: &[CoalitionMember]| -> Result<GameSolution> {
        let coalition = Coalition::from_members(members.to_vec(), sys)?;
        solve_refined_coalition(&coalition, sys, &opts.solver)
    };

    let mut current = solve(&members)?;
    inner_solves += 1;
    let mut trajectory = vec![current.ps_utility];

    loop {
        let over_floor = match opts.n0_rule {
            N0Rule::Floor => members.len() > opts.n0,
            N0Rule::Ceiling => members.len() > 1,
        };
        if !over_floor || members.len() == 1 {
            break;
        }

        // Best single removal; ties go to the smaller client id.
        let mut best: Option<(f64, ClientId, usize)> = None;
        for i in 0..members.len() {
            let mut reduced = members.clone();
            reduced.remove(i);
            let q = solve(&reduced)?.ps_utility;
            inner_solves += 1;
            let id = members[i].profile.id;
            let better = match &best {
                None => true,
                Some((bq, bid, _)) => q < *bq || (q == *bq && id < *bid),
            };
            if better {
                best = Some((q, id, i));
            }
        }
        let (q, _, idx) = best.expect("non-empty member set");

        let must_shrink = opts.n0_rule == N0Rule::Ceiling && members.len() > opts.n0;
        if !must_shrink && q >= current.ps_utility {
            break;
        }
        members.remove(idx);
        current = solve(&members)?;
        inner_solves += 1;
        trajectory.push(current.ps_utility);
    }

    Ok(expand_to_candidates(
        candidates,
        current,
        Diagnostics {
            iterations: inner_solves,
            path: Vec::new(),
            q_trajectory: trajectory,
            infeasible,
        },
    ))
}

/// Exhaustive oracle: the non-empty feasible subset (optionally capped in
/// size) with the smallest objective. Ties resolve to the
/// lexicographically smallest id set. Intended for small instances.
pub fn exhaustive_select(
    candidates: &[ClientProfile],
    sys: &SystemConfig,
    max_size_cap: Option<usize>,
    solver: &SolverOptions,
) -> Result<GameSolution> {
    solver.validate()?;
    if candidates.len() > 14 {
        return Err(Error::InvalidOptions(format!(
            "exhaustive search over {} candidates is not tractable (max 14)",
            candidates.len()
        )));
    }
    let (members, infeasible) = partition_feasible(candidates, sys)?;
    if members.is_empty() {
        return Err(Error::NoCandidates(
            "every candidate misses the deadline".into(),
        ));
    }
    let cap = max_size_cap.unwrap_or(members.len()).max(1);

    let mut best: Option<(GameSolution, Vec<ClientId>)> = None;
    for mask in 1u32..(1 << members.len()) {
        if mask.count_ones() as usize > cap {
            continue;
        }
        let subset: Vec<CoalitionMember> = members
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, m)| *m)
            .collect();
        let coalition = Coalition::from_members(subset.clone(), sys)?;
        let solution = solve_refined_coalition(&coalition, sys, solver)?;
        let ids: Vec<ClientId> = subset.iter().map(|m| m.profile.id).collect();
        let better = match &best {
            None => true,
            Some((cur, cur_ids)) => {
                solution.ps_utility < cur.ps_utility
                    || (solution.ps_utility == cur.ps_utility && ids < *cur_ids)
            }
        };
        if better {
            best = Some((solution, ids));
        }
    }
    let (solution, _) = best.expect("at least one subset");
    Ok(expand_to_candidates(
        candidates,
        solution,
        Diagnostics {
            iterations: (1u64 << members.len()) - 1,
            path: Vec::new(),
            q_trajectory: Vec::new(),
            infeasible,
        },
    ))
}

/// Re-aligns a coalition solution onto the full candidate list, zeroing
/// everyone outside the selected set.
pub fn expand_to_candidates(
    candidates: &[ClientProfile],
    solution: GameSolution,
    diagnostics: Diagnostics,
) -> GameSolution {
    let selected: BTreeSet<ClientId> = solution.selected;
    let by_id: std::collections::BTreeMap<ClientId, ClientOutcome> = solution
        .outcomes
        .into_iter()
        .map(|o| (o.client_id, o))
        .collect();
    let outcomes = candidates
        .iter()
        .map(|c| match by_id.get(&c.id) {
            Some(o) if selected.contains(&c.id) => *o,
            _ => ClientOutcome::non_participant(c.id),
        })
        .collect();
    GameSolution {
        selected,
        outcomes,
        system_latency: solution.system_latency,
        ps_utility: solution.ps_utility,
        diagnostics,
    }
}
