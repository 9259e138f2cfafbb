//! Optimizing search for plans.
//!
//! The solver runs an outer loop over the target goal time (makespan) and,
//! inside each level, a depth-first branch-and-bound on the call count, so
//! the returned plan minimizes (goal time, calls) lexicographically. Search
//! is kept tractable by:
//!
//! - collapsing call directions: both directions of a call produce the same
//!   effects, so each connectable pair gets one canonical representative;
//! - a dominance cache keyed by knowledge profile with a (time, calls)
//!   Pareto frontier, cleared per level;
//! - admissible reachability envelopes (knowledge at most doubles per
//!   round) that cut branches which cannot reach the goal in time;
//! - a deficiency lower bound on remaining calls (a call helps at most two
//!   agents);
//! - a first-round symmetry reduction on fully symmetric instances.
//!
//! Budgets make the search anytime: the best incumbent found is returned,
//! flagged optimal only when the search space was exhausted.

use alloc::boxed::Box;
use alloc::vec::Vec;
use core::fmt;
use core::time::Duration;

use hashbrown::HashMap;

use crate::atoms::{AgentId, InfoUniverse};
use crate::calls::{flow, Call, CallShares, KnowledgeState, Plan, Round, SharePolicy};
use crate::problem::{
    goal_satisfied, resolve_count, GossipProblem, Mode, Objective, PlanCost, ProblemError,
};

/// Search budget. Node limits are exact and deterministic; wall-clock
/// limits require the `std` feature and are ignored without it.
#[derive(Debug, Clone, Copy, Default)]
pub struct Budget {
    pub max_nodes: Option<u64>,
    pub wall: Option<Duration>,
}

impl Budget {
    pub fn unlimited() -> Self {
        Budget::default()
    }

    pub fn nodes(max_nodes: u64) -> Self {
        Budget {
            max_nodes: Some(max_nodes),
            wall: None,
        }
    }

    pub fn wall(duration: Duration) -> Self {
        Budget {
            max_nodes: None,
            wall: Some(duration),
        }
    }
}

/// How a solve run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveOutcome {
    /// A plan was found and proven optimal for the objective.
    Optimal,
    /// A plan was found but the budget ran out before the proof finished.
    BestFound,
    /// The whole space was exhausted: no plan exists within the horizon.
    InfeasibleWithinHorizon,
    /// The budget ran out before any plan was found.
    BudgetExhausted,
}

/// Result of a solve run.
#[derive(Debug, Clone)]
pub struct SearchResult {
    pub plan: Option<Plan>,
    pub cost: Option<PlanCost>,
    pub proven_optimal: bool,
    pub outcome: SolveOutcome,
    pub nodes_expanded: u64,
    /// Wall time of the run; `None` without the `std` feature.
    pub elapsed: Option<Duration>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlannerError {
    Problem(ProblemError),
}

impl fmt::Display for PlannerError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlannerError::Problem(err) => write!(f, "{err}"),
        }
    }
}

impl core::error::Error for PlannerError {}

impl From<ProblemError> for PlannerError {
    fn from(err: ProblemError) -> Self {
        PlannerError::Problem(err)
    }
}

/// One node of the search: a knowledge profile reached at a time with a
/// number of calls spent, along with the rounds that led here.
#[derive(Debug, Clone)]
pub struct SearchNode {
    pub state: KnowledgeState,
    pub time: u32,
    pub calls: u32,
    pub path: Vec<Round>,
}

const SUPERSET_SCAN_LIMIT: usize = 2048;
const CACHE_CAP: usize = 1 << 20;
const SHARE_BRANCH_CAP: usize = 4096;

/// Dominance cache: knowledge profiles mapped to the Pareto frontier of
/// (time, calls) pairs at which they were reached. A node is dominated by
/// an entry with the same (or, while the cache is small and the goal is
/// monotone, a superset) profile reached no later and no more expensively.
pub struct DominanceCache {
    map: HashMap<Box<[u64]>, Vec<(u32, u32)>>,
    cap: usize,
    superset_scan: bool,
}

impl DominanceCache {
    pub fn new(cap: usize, superset_scan: bool) -> Self {
        DominanceCache {
            map: HashMap::new(),
            cap,
            superset_scan,
        }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn dominated(&self, words: &[u64], time: u32, calls: u32) -> bool {
        if let Some(frontier) = self.map.get(words) {
            if frontier.iter().any(|&(t, c)| t <= time && c <= calls) {
                return true;
            }
        }
        if self.superset_scan && self.map.len() <= SUPERSET_SCAN_LIMIT {
            for (key, frontier) in &self.map {
                if key.len() == words.len()
                    && words.iter().zip(key.iter()).all(|(w, k)| w & !k == 0)
                    && frontier.iter().any(|&(t, c)| t <= time && c <= calls)
                {
                    return true;
                }
            }
        }
        false
    }

    pub fn record(&mut self, words: &[u64], time: u32, calls: u32) {
        if let Some(frontier) = self.map.get_mut(words) {
            frontier.retain(|&(t, c)| !(time <= t && calls <= c));
            frontier.push((time, calls));
            return;
        }
        if self.map.len() < self.cap {
            self.map
                .insert(words.into(), alloc::vec![(time, calls)]);
        }
    }

    /// Returns whether the node is dominated; records it otherwise.
    pub fn check_and_record(&mut self, state: &KnowledgeState, time: u32, calls: u32) -> bool {
        let words = state.raw_words();
        if self.dominated(words, time, calls) {
            return true;
        }
        self.record(words, time, calls);
        false
    }
}

/// Decides whether a node can be discarded: its calls already reach the
/// incumbent's at this goal-time level, or a cached profile dominates it.
pub fn prune(node: &SearchNode, incumbent: Option<PlanCost>, cache: &DominanceCache) -> bool {
    if let Some(inc) = incumbent {
        if node.calls >= inc.calls {
            return true;
        }
    }
    cache.dominated(node.state.raw_words(), node.time, node.calls)
}

/// Candidate rounds available from a state: in parallel mode all nonempty
/// partial matchings of the connectivity graph, in sequential mode single
/// calls; canonical order, no duplicates. Both call directions are listed
/// when both edges exist (the solver itself collapses them).
pub fn enumerate_rounds(_profile: &KnowledgeState, problem: &GossipProblem) -> Vec<Round> {
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
    let sets: Vec<Vec<(u32, u32)>> = match problem.mode {
        Mode::Sequential => calls.iter().map(|&c| alloc::vec![c]).collect(),
        Mode::Parallel => {
            let mut out = Vec::new();
            let mut busy = alloc::vec![false; n as usize + 1];
            let mut current = Vec::new();
            directed_subsets(&calls, 0, &mut busy, &mut current, &mut out);
            out.sort();
            out
        }
    };
    sets.into_iter()
        .map(|set| Round {
            step: 0,
            calls: set.into_iter().map(|(i, j)| Call::new(i, j, 0)).collect(),
        })
        .collect()
}

fn directed_subsets(
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
        directed_subsets(calls, from + offset + 1, busy, current, out);
        current.pop();
        busy[i as usize] = false;
        busy[j as usize] = false;
    }
}

/// Solves the problem within the budget.
pub fn solve(problem: &GossipProblem, budget: &Budget) -> Result<SearchResult, PlannerError> {
    let mut sink = |_: &Plan, _: PlanCost| {};
    solve_with_observer(problem, budget, &mut sink)
}

/// Like [`solve`], reporting each strictly improving incumbent.
pub fn solve_with_observer(
    problem: &GossipProblem,
    budget: &Budget,
    observer: &mut dyn FnMut(&Plan, PlanCost),
) -> Result<SearchResult, PlannerError> {
    problem.validate()?;
    let full_universe = problem.universe()?;
    let full_initial = problem.initial_state(&full_universe)?;

    // Under share-all policies the goal decides how deep the searched
    // states must track knowledge: transfers preserve depth and lifts only
    // deepen it, so atoms above the goal-relevant depth never influence
    // the ones below.
    let scope_depth = match problem.policy {
        SharePolicy::ShareAll { .. } => problem.goal.relevant_depth(problem.depth),
        SharePolicy::Bounded { .. } => problem.depth,
    };
    let universe = if scope_depth < problem.depth {
        full_universe.truncated(scope_depth).map_err(ProblemError::Universe)?
    } else {
        full_universe
    };
    let initial = project_state(&full_initial, &universe);

    let mut searcher = Searcher::new(problem, &universe, initial, budget, observer);
    searcher.run();
    Ok(searcher.into_result())
}

fn project_state(state: &KnowledgeState, universe: &InfoUniverse) -> KnowledgeState {
    let mut projected = KnowledgeState::for_universe(universe);
    let len = universe.len() as u32;
    for agent in 1..=universe.agent_count() {
        for idx in state.known_atoms(AgentId(agent)) {
            if idx < len {
                projected.insert(AgentId(agent), idx);
            }
        }
    }
    projected
}

#[derive(Clone)]
struct PlannedCall {
    caller: u32,
    callee: u32,
    shares: Option<CallShares>,
}

struct CandidateRound {
    calls: Vec<PlannedCall>,
    gain: u64,
}

#[derive(PartialEq, Eq)]
enum LevelOutcome {
    Exhausted,
    Cut,
}

struct Searcher<'a> {
    problem: &'a GossipProblem,
    universe: &'a InfoUniverse,
    initial: KnowledgeState,
    observer: &'a mut dyn FnMut(&Plan, PlanCost),
    // Canonical pair representatives: (caller, callee) per connectable pair.
    pairs: Vec<(u32, u32)>,
    pair_index: Vec<Vec<Option<usize>>>,
    secret_prefix: usize,
    goal_prefix: Option<usize>,
    count_goal: Option<u64>,
    negative_literals: Vec<(AgentId, u32)>,
    positive_literals: Vec<(AgentId, u32)>,
    required_secrets: Vec<Vec<u32>>,
    root_symmetric: bool,
    nr_atoms: Vec<u32>,
    heuristic_shares: bool,
    objective: Objective,
    satisfice: bool,
    // Budget accounting.
    nodes: u64,
    node_cap_global: Option<u64>,
    node_cap_level: Option<u64>,
    #[cfg(feature = "std")]
    started: std::time::Instant,
    #[cfg(feature = "std")]
    wall_global: Option<std::time::Instant>,
    #[cfg(feature = "std")]
    wall_level: Option<std::time::Instant>,
    cut: bool,
    halt: bool,
    target: u32,
    incumbent: Option<(PlanCost, Plan)>,
    cache: DominanceCache,
    proven: bool,
}

impl<'a> Searcher<'a> {
    fn new(
        problem: &'a GossipProblem,
        universe: &'a InfoUniverse,
        initial: KnowledgeState,
        budget: &Budget,
        observer: &'a mut dyn FnMut(&Plan, PlanCost),
    ) -> Self {
        let n = problem.agents;
        let mut pairs = Vec::new();
        let mut pair_index = alloc::vec![alloc::vec![None; n as usize + 1]; n as usize + 1];
        for a in 1..=n {
            for b in a + 1..=n {
                let rep = if problem.graph.has_edge(AgentId(a), AgentId(b)) {
                    Some((a, b))
                } else if problem.graph.has_edge(AgentId(b), AgentId(a)) {
                    Some((b, a))
                } else {
                    None
                };
                if let Some(rep) = rep {
                    pair_index[a as usize][b as usize] = Some(pairs.len());
                    pair_index[b as usize][a as usize] = Some(pairs.len());
                    pairs.push(rep);
                }
            }
        }

        let goal = &problem.goal;
        let mut negative_literals = Vec::new();
        let mut positive_literals = Vec::new();
        let mut required_secrets = alloc::vec![Vec::new(); n as usize + 1];
        for agent_goal in &goal.per_agent {
            for atom in &agent_goal.negative {
                if let Some(idx) = universe.index_of(atom) {
                    negative_literals.push((agent_goal.agent, idx));
                }
            }
            for atom in &agent_goal.positive {
                if let Some(idx) = universe.index_of(atom) {
                    positive_literals.push((agent_goal.agent, idx));
                    if atom.depth() == 0 {
                        required_secrets[agent_goal.agent.0 as usize].push(idx);
                    }
                }
            }
        }
        let mut nr_atoms: Vec<u32> = negative_literals.iter().map(|&(_, idx)| idx).collect();
        nr_atoms.sort_unstable();
        nr_atoms.dedup();

        let share_all_unblocked =
            matches!(&problem.policy, SharePolicy::ShareAll { blocked } if blocked.is_empty());
        let root_symmetric = problem.graph.is_complete()
            && problem.initial.is_canonical()
            && goal.is_agent_symmetric()
            && share_all_unblocked;

        Searcher {
            problem,
            universe,
            initial,
            observer,
            pairs,
            pair_index,
            secret_prefix: universe.prefix_len(0),
            goal_prefix: goal.full_depth.map(|g| universe.prefix_len(g)),
            count_goal: goal.global_count.map(|src| resolve_count(src, universe)),
            negative_literals,
            positive_literals,
            required_secrets,
            root_symmetric,
            nr_atoms,
            heuristic_shares: false,
            objective: problem.objective.objective,
            satisfice: matches!(
                problem.objective.objective,
                Objective::MinMakespan | Objective::Satisficing
            ),
            nodes: 0,
            node_cap_global: budget.max_nodes,
            node_cap_level: None,
            #[cfg(feature = "std")]
            started: std::time::Instant::now(),
            #[cfg(feature = "std")]
            wall_global: budget.wall.map(|w| std::time::Instant::now() + w),
            #[cfg(feature = "std")]
            wall_level: None,
            cut: false,
            halt: false,
            target: 0,
            incumbent: None,
            cache: DominanceCache::new(CACHE_CAP, false),
            proven: true,
        }
    }

    fn run(&mut self) {
        match self.objective {
            Objective::MinCalls => {
                self.start_level(self.problem.horizon, true);
                let outcome = self.run_level();
                if outcome == LevelOutcome::Cut {
                    self.proven = false;
                }
            }
            _ => self.run_levels(),
        }
        if self.heuristic_shares {
            self.proven = false;
        }
    }

    fn run_levels(&mut self) {
        let horizon = self.problem.horizon;
        for target in 0..=horizon {
            if self.global_budget_exceeded() {
                self.proven = false;
                return;
            }
            self.start_level(target, target == horizon);
            let outcome = self.run_level();
            if self.incumbent.is_some() {
                if outcome == LevelOutcome::Cut {
                    self.proven = false;
                }
                return;
            }
            if outcome == LevelOutcome::Cut {
                self.proven = false;
            }
        }
    }

    /// Sets level budgets: half of what remains, everything on the last level.
    fn start_level(&mut self, target: u32, last: bool) {
        self.target = target;
        self.cut = false;
        self.halt = false;
        self.cache = DominanceCache::new(
            CACHE_CAP,
            self.negative_literals.is_empty()
                && matches!(self.problem.policy, SharePolicy::ShareAll { .. }),
        );
        self.node_cap_level = self.node_cap_global.map(|cap| {
            let remaining = cap.saturating_sub(self.nodes);
            self.nodes + if last { remaining } else { remaining / 2 }
        });
        #[cfg(feature = "std")]
        {
            self.wall_level = self.wall_global.map(|deadline| {
                let now = std::time::Instant::now();
                let remaining = deadline.saturating_duration_since(now);
                if last {
                    deadline
                } else {
                    now + remaining / 2
                }
            });
        }
    }

    fn run_level(&mut self) -> LevelOutcome {
        let initial = self.initial.clone();
        let mut path = Vec::new();
        self.dfs(&initial, 0, 0, &mut path);
        if self.cut {
            LevelOutcome::Cut
        } else {
            LevelOutcome::Exhausted
        }
    }

    fn global_budget_exceeded(&self) -> bool {
        if let Some(cap) = self.node_cap_global {
            if self.nodes >= cap {
                return true;
            }
        }
        #[cfg(feature = "std")]
        if let Some(deadline) = self.wall_global {
            if std::time::Instant::now() >= deadline {
                return true;
            }
        }
        false
    }

    fn budget_exceeded(&self) -> bool {
        if let Some(cap) = self.node_cap_level {
            if self.nodes >= cap {
                return true;
            }
        } else if let Some(cap) = self.node_cap_global {
            if self.nodes >= cap {
                return true;
            }
        }
        #[cfg(feature = "std")]
        if self.nodes % 1024 == 0 {
            let now = std::time::Instant::now();
            if let Some(deadline) = self.wall_level {
                if now >= deadline {
                    return true;
                }
            }
            if let Some(deadline) = self.wall_global {
                if now >= deadline {
                    return true;
                }
            }
        }
        false
    }

    fn dfs(&mut self, state: &KnowledgeState, t: u32, calls: u32, path: &mut Vec<Vec<PlannedCall>>) {
        if self.cut || self.halt {
            return;
        }
        self.nodes += 1;
        if self.budget_exceeded() {
            self.cut = true;
            return;
        }
        if goal_satisfied(state, &self.problem.goal, self.universe) {
            self.record_incumbent(t, calls, path);
            return;
        }
        if t >= self.target {
            return;
        }
        if self.negative_dead(state) {
            return;
        }
        let lb = self.lb_calls(state, t);
        if !self.envelope_ok(state, t, lb) {
            return;
        }
        if self.incumbent_prunes(t, calls, lb) {
            return;
        }
        if self.cache.check_and_record(state, t, calls) {
            return;
        }
        let candidates = self.generate(state, t);
        for candidate in candidates {
            if self.cut || self.halt {
                return;
            }
            let size = candidate.calls.len() as u32;
            let next = self.apply(state, t, &candidate);
            path.push(candidate.calls);
            self.dfs(&next, t + 1, calls + size, path);
            path.pop();
        }
    }

    fn record_incumbent(&mut self, t: u32, calls: u32, path: &[Vec<PlannedCall>]) {
        let cost = PlanCost::new(t, calls);
        let better = match &self.incumbent {
            None => true,
            Some((current, _)) => self.objective.better(cost, *current),
        };
        if !better {
            return;
        }
        let plan = materialize(path);
        (self.observer)(&plan, cost);
        self.incumbent = Some((cost, plan));
        if self.satisfice {
            self.halt = true;
        }
    }

    /// Incumbent-based pruning. From a non-goal node at time `t`, any
    /// completion reaches the goal at `t + 1` or later.
    fn incumbent_prunes(&self, t: u32, calls: u32, lb: u32) -> bool {
        let Some((inc, _)) = &self.incumbent else {
            return false;
        };
        match self.objective {
            Objective::LexMakespanThenCalls => {
                if t + 1 > inc.goal_time {
                    true
                } else if t + 1 == inc.goal_time {
                    calls + lb >= inc.calls
                } else {
                    false
                }
            }
            Objective::MinCalls => {
                if calls + lb > inc.calls {
                    true
                } else if calls + lb == inc.calls {
                    t + 1 >= inc.goal_time
                } else {
                    false
                }
            }
            Objective::MinMakespan | Objective::Satisficing => false,
        }
    }

    fn negative_dead(&self, state: &KnowledgeState) -> bool {
        self.negative_literals
            .iter()
            .any(|&(agent, idx)| state.knows(agent, idx))
    }

    /// Lower bound on the calls still needed. Each call serves at most two
    /// agents. For full-coverage goals an agent in a call gains at most
    /// the current global maximum, which at most doubles per round, so an
    /// agent far behind needs several calls. A call adds at most two
    /// universes worth of pairs toward a count goal.
    fn lb_calls(&self, state: &KnowledgeState, t: u32) -> u32 {
        let n = self.problem.agents;
        let remaining = self.target.saturating_sub(t);
        let mut needs_sum: u32 = 0;
        if let Some(prefix) = self.goal_prefix {
            let s = self.secret_prefix as u32;
            let counts: Vec<u32> = (1..=n)
                .map(|a| state.count_prefix(AgentId(a), self.secret_prefix))
                .collect();
            let max_now = counts.iter().copied().max().unwrap_or(0);
            // Largest possible partner knowledge per remaining round,
            // latest rounds first.
            let gains: Vec<u32> = (0..remaining)
                .rev()
                .map(|r| max_now.checked_shl(r).unwrap_or(s).min(s))
                .collect();
            for agent in 1..=n {
                let count = counts[(agent - 1) as usize];
                let mut need = 0u32;
                if count < s {
                    let deficit = s - count;
                    let mut covered = 0u32;
                    for &g in &gains {
                        need += 1;
                        covered = covered.saturating_add(g);
                        if covered >= deficit {
                            break;
                        }
                    }
                    if covered < deficit {
                        need = remaining + 1; // unreachable; forces a prune
                    }
                } else if !state.has_all_prefix(AgentId(agent), prefix) {
                    need = 1;
                }
                if need == 0
                    && self
                        .positive_literals
                        .iter()
                        .any(|&(a, idx)| a.0 == agent && !state.knows(a, idx))
                {
                    need = 1;
                }
                needs_sum += need;
            }
        } else {
            for agent in 1..=n {
                if self
                    .positive_literals
                    .iter()
                    .any(|&(a, idx)| a.0 == agent && !state.knows(a, idx))
                {
                    needs_sum += 1;
                }
            }
        }
        let mut lb = needs_sum.div_ceil(2);
        if let Some(threshold) = self.count_goal {
            let have = state.total_known();
            if have < threshold {
                let missing = threshold - have;
                let per_call = 2 * self.universe.len() as u64;
                lb = lb.max(missing.div_ceil(per_call) as u32);
            }
        }
        lb
    }

    /// Admissible reachability check: per-agent secret counts at most
    /// double per round, a secret's holder set at most doubles per round
    /// (secrets are never created, only passed on), atom counts at most
    /// triple (transfer plus lift), and remaining rounds bound the
    /// remaining call capacity.
    fn envelope_ok(&self, state: &KnowledgeState, t: u32, lb: u32) -> bool {
        let n = self.problem.agents;
        let remaining = self.target - t;
        let per_round = match self.problem.mode {
            Mode::Parallel => n / 2,
            Mode::Sequential => 1,
        };
        if lb as u64 > remaining as u64 * per_round as u64 {
            return false;
        }

        let s = self.secret_prefix as u32;
        let needs_all_secrets = self.goal_prefix.is_some();
        let needs_secret_counts = needs_all_secrets || !self.positive_literals.is_empty();
        if needs_secret_counts {
            let counts: Vec<u32> = (1..=n)
                .map(|a| state.count_prefix(AgentId(a), self.secret_prefix))
                .collect();
            let mut max = counts.iter().copied().max().unwrap_or(0);
            let mut reach = counts.clone();
            for _ in 0..remaining {
                for r in reach.iter_mut() {
                    *r = (*r + max).min(s);
                }
                max = (max * 2).min(s);
            }
            for (i, &r) in reach.iter().enumerate() {
                let agent = i as u32 + 1;
                if needs_all_secrets && r < s {
                    return false;
                }
                let missing_required = self.required_secrets[agent as usize]
                    .iter()
                    .filter(|&&idx| !state.knows(AgentId(agent), idx))
                    .count() as u32;
                if counts[i] + missing_required > r {
                    return false;
                }
            }

            let spread = |holders: u64| {
                if remaining >= 32 {
                    u64::MAX
                } else {
                    let per_round = match self.problem.mode {
                        Mode::Parallel => holders << remaining,
                        // One call per round reaches one new agent.
                        Mode::Sequential => holders + remaining as u64,
                    };
                    per_round
                }
            };
            for idx in 0..self.secret_prefix as u32 {
                let holders = (1..=n)
                    .filter(|&a| state.knows(AgentId(a), idx))
                    .count() as u64;
                if needs_all_secrets {
                    if holders == 0 || spread(holders) < n as u64 {
                        return false;
                    }
                } else if holders == 0
                    && self
                        .positive_literals
                        .iter()
                        .any(|&(a, i)| i == idx && !state.knows(a, idx))
                {
                    // A required secret nobody holds can never be learned.
                    return false;
                }
            }
        }

        if let Some(threshold) = self.count_goal {
            let u = self.universe.len() as u64;
            let mut counts: Vec<u64> = (1..=n)
                .map(|a| state.count_for(AgentId(a)) as u64)
                .collect();
            let mut max = counts.iter().copied().max().unwrap_or(0);
            for _ in 0..remaining {
                for c in counts.iter_mut() {
                    *c = (*c + 2 * max).min(u);
                }
                max = (max * 3).min(u);
            }
            if counts.iter().sum::<u64>() < threshold {
                return false;
            }
        }
        true
    }

    /// Agents that cannot sit this round out: idling would leave too few
    /// doubling rounds to collect every secret, and in the final round an
    /// agent still missing goal atoms must be in a call. Applies to goals
    /// that need full secret coverage.
    fn must_mask(&self, state: &KnowledgeState, t: u32) -> Vec<bool> {
        let n = self.problem.agents as usize;
        let mut must = alloc::vec![false; n + 1];
        let Some(goal_prefix) = self.goal_prefix else {
            return must;
        };
        let remaining = self.target - t;
        if remaining == 0 {
            return must;
        }
        if remaining == 1 {
            for agent in 1..=n {
                must[agent] = !state.has_all_prefix(AgentId(agent as u32), goal_prefix);
            }
            return must;
        }
        if self.problem.mode == Mode::Sequential {
            return must;
        }
        let s = self.secret_prefix as u32;
        let counts: Vec<u32> = (1..=n as u32)
            .map(|a| state.count_prefix(AgentId(a), self.secret_prefix))
            .collect();
        let start_max = counts.iter().copied().max().unwrap_or(0);
        for agent in 1..=n {
            let mut reach = counts[agent - 1];
            let mut max = (start_max * 2).min(s); // others still exchange this round
            for _ in 1..remaining {
                reach = (reach + max).min(s);
                max = (max * 2).min(s);
            }
            if reach < s {
                must[agent] = true;
            }
        }
        must
    }

    /// In the final round of a level, a pair can only help a full-coverage
    /// goal if the two secret sets united cover every secret: each party
    /// receives at most the union.
    fn final_round_pair_filter(&self, state: &KnowledgeState, t: u32) -> Option<Vec<bool>> {
        if self.goal_prefix.is_none() || self.target - t != 1 {
            return None;
        }
        let words = self.secret_prefix / 64;
        let rem_bits = self.secret_prefix % 64;
        let full = |a: u32, b: u32| {
            let wa = state.agent_words(AgentId(a));
            let wb = state.agent_words(AgentId(b));
            for w in 0..words {
                if (wa[w] | wb[w]) != u64::MAX {
                    return false;
                }
            }
            if rem_bits > 0 {
                let mask = (1u64 << rem_bits) - 1;
                if (wa[words] | wb[words]) & mask != mask {
                    return false;
                }
            }
            true
        };
        Some(self.pairs.iter().map(|&(a, b)| full(a, b)).collect())
    }

    fn generate(&mut self, state: &KnowledgeState, t: u32) -> Vec<CandidateRound> {
        let n = self.problem.agents;
        let matchings: Vec<Vec<(u32, u32)>> = if self.root_symmetric && t == 0 {
            // All size-k matchings are equivalent under relabeling agents
            // together with their secrets; keep one representative each,
            // largest first.
            let mut reps = Vec::new();
            let max_k = match self.problem.mode {
                Mode::Parallel => n / 2,
                Mode::Sequential => 1.min(n / 2),
            };
            for k in (1..=max_k).rev() {
                reps.push((1..=k).map(|i| (2 * i - 1, 2 * i)).collect());
            }
            reps
        } else {
            let must = self.must_mask(state, t);
            let allowed = self.final_round_pair_filter(state, t);
            match self.problem.mode {
                Mode::Sequential => {
                    let must_count = must.iter().filter(|&&m| m).count();
                    self.pairs
                        .iter()
                        .enumerate()
                        .filter(|(idx, (a, b))| {
                            let covered = usize::from(must[*a as usize])
                                + usize::from(must[*b as usize]);
                            covered == must_count
                                && allowed.as_ref().is_none_or(|ok| ok[*idx])
                        })
                        .map(|(_, &p)| alloc::vec![p])
                        .collect()
                }
                Mode::Parallel => {
                    let mut partners: Vec<Vec<u32>> = alloc::vec![Vec::new(); n as usize + 1];
                    for &(a, b) in &self.pairs {
                        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                        partners[lo as usize].push(hi);
                    }
                    let mut out = Vec::new();
                    let mut used = alloc::vec![false; n as usize + 1];
                    let mut current = Vec::new();
                    matchings_rec(
                        1,
                        n,
                        &partners,
                        &self.pairs,
                        &self.pair_index,
                        allowed.as_deref(),
                        &must,
                        &mut used,
                        &mut current,
                        &mut out,
                    );
                    out
                }
            }
        };

        // Score by total fresh atoms both ends would gain, ignoring lifts
        // and caps; ordering only.
        let mut pair_gain: HashMap<(u32, u32), u64> = HashMap::new();
        let mut candidates: Vec<CandidateRound> = Vec::new();
        for matching in matchings {
            let mut gain = 0u64;
            for &(a, b) in &matching {
                let key = if a < b { (a, b) } else { (b, a) };
                let g = *pair_gain.entry(key).or_insert_with(|| {
                    let wa = state.agent_words(AgentId(a));
                    let wb = state.agent_words(AgentId(b));
                    let mut union = 0u64;
                    let mut ca = 0u64;
                    let mut cb = 0u64;
                    for (x, y) in wa.iter().zip(wb.iter()) {
                        union += (x | y).count_ones() as u64;
                        ca += x.count_ones() as u64;
                        cb += y.count_ones() as u64;
                    }
                    2 * union - ca - cb
                });
                gain += g;
            }
            for calls in self.realize_shares(state, t, &matching) {
                candidates.push(CandidateRound { calls, gain });
            }
        }
        candidates.sort_by(|x, y| {
            y.gain
                .cmp(&x.gain)
                .then_with(|| x.calls.len().cmp(&y.calls.len()))
                .then_with(|| {
                    let xs: Vec<(u32, u32)> = x.calls.iter().map(|c| (c.caller, c.callee)).collect();
                    let ys: Vec<(u32, u32)> = y.calls.iter().map(|c| (c.caller, c.callee)).collect();
                    xs.cmp(&ys)
                })
        });
        candidates
    }

    /// Expands a matching into planned calls. Share-all rounds carry no
    /// explicit shares. Under a bounded policy every direction gets a
    /// shared set: all known atoms, branched over withholding atoms that
    /// appear in negative goal literals, trimmed to the size window.
    fn realize_shares(
        &mut self,
        state: &KnowledgeState,
        t: u32,
        matching: &[(u32, u32)],
    ) -> Vec<Vec<PlannedCall>> {
        let SharePolicy::Bounded { ll, uu } = self.problem.policy else {
            return alloc::vec![matching
                .iter()
                .map(|&(caller, callee)| PlannedCall {
                    caller,
                    callee,
                    shares: None,
                })
                .collect()];
        };
        let _ = t;
        let mut rounds: Vec<Vec<PlannedCall>> = alloc::vec![Vec::new()];
        for &(caller, callee) in matching {
            let forward = self.direction_choices(state, AgentId(caller), ll, uu);
            let reverse = self.direction_choices(state, AgentId(callee), ll, uu);
            let mut extended = Vec::new();
            for prefix in &rounds {
                for f in &forward {
                    for r in &reverse {
                        if extended.len() >= SHARE_BRANCH_CAP {
                            self.heuristic_shares = true;
                            break;
                        }
                        let mut next = prefix.clone();
                        next.push(PlannedCall {
                            caller,
                            callee,
                            shares: Some(CallShares {
                                forward: f.iter().map(|&i| self.universe.atom(i).clone()).collect(),
                                reverse: r.iter().map(|&i| self.universe.atom(i).clone()).collect(),
                            }),
                        });
                        extended.push(next);
                    }
                }
            }
            rounds = extended;
        }
        rounds
    }

    /// Candidate shared sets for one direction, as sorted index sets.
    fn direction_choices(
        &mut self,
        state: &KnowledgeState,
        sender: AgentId,
        ll: u32,
        uu: u32,
    ) -> Vec<Vec<u32>> {
        let known = state.known_atoms(sender);
        let k = known.len() as u32;
        let lo = ll.min(k);
        let hi = uu.min(k);
        let nr_present: Vec<u32> = self
            .nr_atoms
            .iter()
            .copied()
            .filter(|idx| known.binary_search(idx).is_ok())
            .collect();
        let exclusion_masks: u32 = if nr_present.len() <= 10 {
            1u32 << nr_present.len()
        } else {
            self.heuristic_shares = true;
            1
        };
        let mut out: Vec<Vec<u32>> = Vec::new();
        for mask in 0..exclusion_masks {
            let mut set: Vec<u32> = known
                .iter()
                .copied()
                .filter(|idx| {
                    nr_present
                        .iter()
                        .position(|n| n == idx)
                        .map_or(true, |pos| mask & (1 << pos) == 0)
                })
                .collect();
            if set.len() as u32 > hi {
                // Drop the deepest atoms to fit the cap; this is a
                // deterministic heuristic, so optimality is no longer
                // guaranteed and the result is not flagged proven.
                set.truncate(hi as usize);
                self.heuristic_shares = true;
            }
            if (set.len() as u32) < lo {
                continue;
            }
            if !out.contains(&set) {
                out.push(set);
            }
        }
        out
    }

    fn apply(&self, state: &KnowledgeState, t: u32, candidate: &CandidateRound) -> KnowledgeState {
        let mut next = state.clone();
        for call in &candidate.calls {
            let forward = call.shares.as_ref().map(|s| s.forward.as_slice());
            let reverse = call.shares.as_ref().map(|s| s.reverse.as_slice());
            flow(
                &mut next,
                state,
                AgentId(call.caller),
                AgentId(call.callee),
                forward,
                t,
                &self.problem.policy,
                &self.problem.graph,
                self.universe,
            )
            .expect("generated calls are well-formed");
            flow(
                &mut next,
                state,
                AgentId(call.callee),
                AgentId(call.caller),
                reverse,
                t,
                &self.problem.policy,
                &self.problem.graph,
                self.universe,
            )
            .expect("generated calls are well-formed");
        }
        next
    }

    fn into_result(self) -> SearchResult {
        #[cfg(feature = "std")]
        let elapsed = Some(self.started.elapsed());
        #[cfg(not(feature = "std"))]
        let elapsed = None;
        let proven = self.proven && !matches!(self.objective, Objective::Satisficing);
        let (outcome, proven_optimal) = match (&self.incumbent, proven) {
            (Some(_), true) => (SolveOutcome::Optimal, true),
            (Some(_), false) => (SolveOutcome::BestFound, false),
            (None, true) => (SolveOutcome::InfeasibleWithinHorizon, false),
            (None, false) => (SolveOutcome::BudgetExhausted, false),
        };
        let (cost, plan) = match self.incumbent {
            Some((cost, plan)) => (Some(cost), Some(plan)),
            None => (None, None),
        };
        SearchResult {
            plan,
            cost,
            proven_optimal,
            outcome,
            nodes_expanded: self.nodes,
            elapsed,
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn matchings_rec(
    agent: u32,
    n: u32,
    partners: &[Vec<u32>],
    pairs: &[(u32, u32)],
    pair_index: &[Vec<Option<usize>>],
    allowed: Option<&[bool]>,
    must: &[bool],
    used: &mut [bool],
    current: &mut Vec<(u32, u32)>,
    out: &mut Vec<Vec<(u32, u32)>>,
) {
    let mut a = agent;
    while a <= n && used[a as usize] {
        a += 1;
    }
    if a > n {
        if !current.is_empty() {
            out.push(current.clone());
        }
        return;
    }
    // Pair `a` with an unused partner.
    used[a as usize] = true;
    for &b in &partners[a as usize] {
        if used[b as usize] {
            continue;
        }
        let idx = pair_index[a as usize][b as usize].expect("partner implies pair");
        if let Some(ok) = allowed {
            if !ok[idx] {
                continue;
            }
        }
        used[b as usize] = true;
        current.push(pairs[idx]);
        matchings_rec(
            a + 1, n, partners, pairs, pair_index, allowed, must, used, current, out,
        );
        current.pop();
        used[b as usize] = false;
    }
    used[a as usize] = false;
    // Leave `a` idle unless it must participate.
    if !must[a as usize] {
        used[a as usize] = true;
        matchings_rec(
            a + 1, n, partners, pairs, pair_index, allowed, must, used, current, out,
        );
        used[a as usize] = false;
    }
}

fn materialize(path: &[Vec<PlannedCall>]) -> Plan {
    let rounds: Vec<Round> = path
        .iter()
        .enumerate()
        .map(|(t, calls)| Round {
            step: t as u32,
            calls: calls
                .iter()
                .map(|c| Call {
                    caller: AgentId(c.caller),
                    callee: AgentId(c.callee),
                    time: t as u32,
                    shares: c.shares.clone(),
                })
                .collect(),
        })
        .collect();
    Plan::new(rounds).expect("contiguous rounds are well-formed")
}
