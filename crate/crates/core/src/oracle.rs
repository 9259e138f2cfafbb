//! Ground-truth plan verification and a naive exhaustive optimizer.
//!
//! [`verify`] simulates a plan and reports everything wrong with it as
//! data, never as a failure. [`brute_force_optimal`] exhaustively searches
//! tiny instances and serves as the independent check for the planner; it
//! deliberately re-implements goal checking and round enumeration rather
//! than reusing the planner's machinery.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::atoms::{AgentId, InfoUniverse};
use crate::calls::{
    apply_round, check_round_shape, flow, Call, KnowledgeState, Plan, Round, SemanticsError,
    SharePolicy, Trace,
};
use crate::problem::{goal_satisfied, GossipProblem, Mode, PlanCost, ProblemError};

/// One problem with a plan, reported at a time step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub time: u32,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t={}: {}", self.time, self.message)
    }
}

/// Result of simulating a plan against a problem. The plan is valid iff
/// `violations` is empty; `goal_time` is the earliest step at which the
/// goal holds, independent of validity.
#[derive(Debug, Clone)]
pub struct Verdict {
    pub trace: Trace,
    pub goal_time: Option<u32>,
    pub call_count: u32,
    pub violations: Vec<Violation>,
}

impl Verdict {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

fn violation(time: u32, message: String) -> Violation {
    Violation { time, message }
}

fn semantics_violation(err: &SemanticsError) -> Violation {
    let time = match err {
        SemanticsError::AgentOutOfRange { time, .. }
        | SemanticsError::SelfCall { time }
        | SemanticsError::MatchingViolation { time, .. }
        | SemanticsError::MultipleCallsSequential { time }
        | SemanticsError::MissingShares { time }
        | SemanticsError::UnknownSharedAtom { time }
        | SemanticsError::SharedAtomNotKnown { time, .. }
        | SemanticsError::ShareWindow { time, .. }
        | SemanticsError::CallBeyondHorizon { time } => *time,
        SemanticsError::Initial(_) => 0,
    };
    violation(time, format!("{err}"))
}

/// Simulates `plan` on `problem` and reports the verdict. Structural and
/// semantic problems become violations; only an invalid problem instance
/// itself is an error.
pub fn verify(plan: &Plan, problem: &GossipProblem) -> Result<Verdict, ProblemError> {
    problem.validate()?;
    let universe = problem.universe()?;
    let initial = problem.initial_state(&universe)?;
    let m = problem.horizon;
    let mut violations: Vec<Violation> = Vec::new();

    for round in plan.rounds() {
        if round.step >= m {
            violations.push(violation(
                round.step,
                format!("round at time {} lies beyond horizon {}", round.step, m),
            ));
        }
        if let Err(err) = check_round_shape(round, problem.mode, problem.agents) {
            violations.push(semantics_violation(&err));
        }
        for call in &round.calls {
            let in_range = |a: AgentId| a.0 >= 1 && a.0 <= problem.agents;
            if in_range(call.caller)
                && in_range(call.callee)
                && call.caller != call.callee
                && !problem.graph.has_edge(call.caller, call.callee)
            {
                violations.push(violation(
                    round.step,
                    format!("no connection {}->{}", call.caller, call.callee),
                ));
            }
        }
    }

    // Simulate with per-flow tolerance so one bad call cannot hide the rest.
    let mut states: Vec<KnowledgeState> = Vec::with_capacity(m as usize + 1);
    states.push(initial);
    for t in 0..m {
        let pre = states.last().expect("nonempty").clone();
        let mut next = pre.clone();
        if let Some(round) = plan.round_at(t) {
            for call in &round.calls {
                let in_range = |a: AgentId| a.0 >= 1 && a.0 <= problem.agents;
                if !in_range(call.caller) || !in_range(call.callee) || call.caller == call.callee {
                    continue; // already flagged structurally
                }
                let directions = [
                    (
                        call.caller,
                        call.callee,
                        call.shares.as_ref().map(|s| s.forward.as_slice()),
                    ),
                    (
                        call.callee,
                        call.caller,
                        call.shares.as_ref().map(|s| s.reverse.as_slice()),
                    ),
                ];
                for (sender, receiver, shares) in directions {
                    if let Err(err) = flow(
                        &mut next,
                        &pre,
                        sender,
                        receiver,
                        shares,
                        t,
                        &problem.policy,
                        &problem.graph,
                        &universe,
                    ) {
                        violations.push(semantics_violation(&err));
                    }
                }
            }
        }
        states.push(next);
    }

    let goal_time =
        (0..=m).find(|&t| goal_satisfied(&states[t as usize], &problem.goal, &universe));

    // Strict mode: negative literals must hold over the whole trace, not
    // only at goal time. Knowledge is monotone, so flag first occurrences.
    if problem.strict_negatives && problem.goal.has_negatives() {
        for agent_goal in &problem.goal.per_agent {
            for atom in &agent_goal.negative {
                if let Some(idx) = universe.index_of(atom) {
                    if let Some(t) =
                        (0..=m).find(|&t| states[t as usize].knows(agent_goal.agent, idx))
                    {
                        violations.push(violation(
                            t,
                            format!(
                                "agent {} learns forbidden atom {} at time {}",
                                agent_goal.agent, atom, t
                            ),
                        ));
                    }
                }
            }
        }
    }

    violations.dedup();
    Ok(Verdict {
        trace: Trace { states },
        goal_time,
        call_count: plan.total_calls(),
        violations,
    })
}

/// Size limits for the exhaustive search.
#[derive(Debug, Clone, Copy)]
pub struct BruteForceLimits {
    pub max_makespan: u32,
    pub max_calls: u32,
    /// Guard: `round_choices ^ makespan` must stay below this.
    pub choice_ceiling: u64,
}

impl Default for BruteForceLimits {
    fn default() -> Self {
        BruteForceLimits {
            max_makespan: 5,
            max_calls: 64,
            choice_ceiling: 50_000_000,
        }
    }
}

/// Errors from the brute-force optimizer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleError {
    Problem(ProblemError),
    /// The instance exceeds the configured enumeration ceiling.
    TooLarge { choices: u64, makespan: u32 },
    /// Exhausting explicit share selections is out of scope.
    UnsupportedPolicy,
}

impl fmt::Display for OracleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleError::Problem(err) => write!(f, "{err}"),
            OracleError::TooLarge { choices, makespan } => write!(
                f,
                "instance too large for brute force: {choices} round choices over {makespan} steps"
            ),
            OracleError::UnsupportedPolicy => {
                write!(f, "brute force supports share-all policies only")
            }
        }
    }
}

impl core::error::Error for OracleError {}

impl From<ProblemError> for OracleError {
    fn from(err: ProblemError) -> Self {
        OracleError::Problem(err)
    }
}

/// Exhaustively enumerates round sequences within the limits and returns
/// the lexicographically minimal (goal time, calls) over goal-reaching
/// sequences, or `None` when the goal is unreachable within the limits.
pub fn brute_force_optimal(
    problem: &GossipProblem,
    limits: &BruteForceLimits,
) -> Result<Option<PlanCost>, OracleError> {
    problem.validate()?;
    if !matches!(problem.policy, SharePolicy::ShareAll { .. }) {
        return Err(OracleError::UnsupportedPolicy);
    }
    let universe = problem.universe()?;
    let initial = problem.initial_state(&universe)?;
    let makespan = limits.max_makespan.min(problem.horizon);

    let rounds = enumerate_directed_rounds(problem);
    let choices = rounds.len() as u64;
    let mut space = 1u64;
    for _ in 0..makespan {
        space = space.saturating_mul(choices.max(1));
        if space > limits.choice_ceiling {
            return Err(OracleError::TooLarge { choices, makespan });
        }
    }

    let mut best: Option<PlanCost> = None;
    search(
        problem, &universe, &rounds, &initial, 0, 0, makespan, limits, &mut best,
    );
    Ok(best)
}

#[allow(clippy::too_many_arguments)]
fn search(
    problem: &GossipProblem,
    universe: &InfoUniverse,
    rounds: &[Vec<(u32, u32)>],
    state: &KnowledgeState,
    t: u32,
    calls_used: u32,
    makespan: u32,
    limits: &BruteForceLimits,
    best: &mut Option<PlanCost>,
) {
    if naive_goal_holds(state, problem, universe) {
        let cost = PlanCost::new(t, calls_used);
        if best.map_or(true, |b| cost < b) {
            *best = Some(cost);
        }
        return;
    }
    if t == makespan {
        return;
    }
    for round in rounds {
        let calls = round.len() as u32;
        if calls_used + calls > limits.max_calls {
            continue;
        }
        let round = Round {
            step: t,
            calls: round.iter().map(|&(i, j)| Call::new(i, j, t)).collect(),
        };
        let next = apply_round(
            state,
            &round,
            &problem.policy,
            &problem.graph,
            universe,
            problem.mode,
        )
        .expect("enumerated rounds are well-formed");
        search(
            problem,
            universe,
            rounds,
            &next,
            t + 1,
            calls_used + calls,
            makespan,
            limits,
            best,
        );
    }
}

/// All directed candidate rounds, independent of the planner's generator:
/// every nonempty set of agent-disjoint calls along existing edges, both
/// call directions included, in lexicographic order.
fn enumerate_directed_rounds(problem: &GossipProblem) -> Vec<Vec<(u32, u32)>> {
    let n = problem.agents;
    let mut calls: Vec<(u32, u32)> = Vec::new();
    for i in 1..=n {
        for j in 1..=n {
            if i != j && problem.graph.has_edge(AgentId(i), AgentId(j)) {
                calls.push((i, j));
            }
        }
    }
    calls.sort_unstable();
    match problem.mode {
        Mode::Sequential => calls.into_iter().map(|c| alloc::vec![c]).collect(),
        Mode::Parallel => {
            let mut out = Vec::new();
            let mut current: Vec<(u32, u32)> = Vec::new();
            let mut busy = alloc::vec![false; n as usize + 1];
            subsets(&calls, 0, &mut busy, &mut current, &mut out);
            out
        }
    }
}

fn subsets(
    calls: &[(u32, u32)],
    from: usize,
    busy: &mut [bool],
    current: &mut Vec<(u32, u32)>,
    out: &mut Vec<Vec<(u32, u32)>>,
) {
    for (offset, &(i, j)) in calls[from..].iter().enumerate() {
        if busy[i as usize] || busy[j as usize] {
            continue;
        }
        busy[i as usize] = true;
        busy[j as usize] = true;
        current.push((i, j));
        out.push(current.clone());
        subsets(calls, from + offset + 1, busy, current, out);
        current.pop();
        busy[i as usize] = false;
        busy[j as usize] = false;
    }
}

/// Straight-line goal check used by the brute-force search, written
/// independently of `problem::goal_satisfied`.
fn naive_goal_holds(
    state: &KnowledgeState,
    problem: &GossipProblem,
    universe: &InfoUniverse,
) -> bool {
    for agent_goal in &problem.goal.per_agent {
        for atom in &agent_goal.positive {
            let holds = universe
                .index_of(atom)
                .map(|idx| state.knows(agent_goal.agent, idx))
                .unwrap_or(false);
            if !holds {
                return false;
            }
        }
        for atom in &agent_goal.negative {
            let holds = universe
                .index_of(atom)
                .map(|idx| state.knows(agent_goal.agent, idx))
                .unwrap_or(false);
            if holds {
                return false;
            }
        }
    }
    if let Some(source) = problem.goal.global_count {
        let threshold = crate::problem::resolve_count(source, universe);
        let mut pairs = 0u64;
        for agent in 1..=universe.agent_count() {
            for idx in 0..universe.len() as u32 {
                if state.knows(AgentId(agent), idx) {
                    pairs += 1;
                }
            }
        }
        if pairs < threshold {
            return false;
        }
    }
    if let Some(depth) = problem.goal.full_depth {
        for agent in 1..=universe.agent_count() {
            for idx in 0..universe.len() as u32 {
                if universe.atom(idx).depth() <= depth && !state.knows(AgentId(agent), idx) {
                    return false;
                }
            }
        }
    }
    true
}
