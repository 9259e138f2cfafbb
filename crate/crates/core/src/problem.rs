//! Problem instances: connectivity, initial and goal specifications, the
//! optimization objective, and goal evaluation.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::fmt;

use crate::atoms::{count_atoms_paper, AgentId, InfoAtom, InfoUniverse, UniverseError};
use crate::calls::{KnowledgeState, Plan, SharePolicy};
use crate::oracle::Verdict;

/// Whether rounds may hold several disjoint calls or exactly one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Parallel,
    Sequential,
}

/// Directed communication topology over agents `1..=n`, without self-loops.
/// The complete graph is kept symbolic so encodings can use the generic
/// connectivity rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectivityGraph {
    n: u32,
    complete: bool,
    edges: BTreeSet<(u32, u32)>,
}

impl ConnectivityGraph {
    /// Every ordered pair of distinct agents is connected.
    pub fn complete(n: u32) -> Self {
        ConnectivityGraph {
            n,
            complete: true,
            edges: BTreeSet::new(),
        }
    }

    /// An explicit directed edge set.
    pub fn from_edges(
        n: u32,
        edges: impl IntoIterator<Item = (u32, u32)>,
    ) -> Result<Self, ProblemError> {
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b {
                return Err(ProblemError::SelfLoop { agent: a });
            }
            if a < 1 || a > n || b < 1 || b > n {
                return Err(ProblemError::GraphAgent {
                    agent: if a < 1 || a > n { a } else { b },
                });
            }
            set.insert((a, b));
        }
        Ok(ConnectivityGraph {
            n,
            complete: false,
            edges: set,
        })
    }

    pub fn agent_count(&self) -> u32 {
        self.n
    }

    pub fn has_edge(&self, from: AgentId, to: AgentId) -> bool {
        if from == to || from.0 < 1 || from.0 > self.n || to.0 < 1 || to.0 > self.n {
            return false;
        }
        self.complete || self.edges.contains(&(from.0, to.0))
    }

    /// Whether agents `a` and `b` can hold a call in either role.
    pub fn connectable(&self, a: AgentId, b: AgentId) -> bool {
        self.has_edge(a, b) || self.has_edge(b, a)
    }

    /// Whether this graph was constructed as the symbolic complete graph.
    pub fn is_complete(&self) -> bool {
        self.complete
    }

    /// Explicit edges in sorted order (empty for the symbolic complete graph).
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.edges.iter().copied()
    }
}

/// Initial knowledge specification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InitialSpec {
    /// Every agent knows exactly its own secret and nothing else.
    Canonical,
    /// The state is pinned down by constraints; it must be unique.
    ///
    /// Depth-0 knowledge per agent is any secret set containing the
    /// required atoms, avoiding the forbidden ones, and sized within
    /// `secret_bounds`. Atoms of positive depth are closed-world: an agent
    /// knows exactly the ones required of it.
    Constrained {
        required: Vec<(AgentId, InfoAtom)>,
        forbidden: Vec<(AgentId, InfoAtom)>,
        /// Per-agent bounds `[l, u]` on the number of depth-0 atoms known.
        secret_bounds: Option<(u32, u32)>,
        /// No two agents know the same piece of information.
        unique: bool,
    },
}

impl InitialSpec {
    pub fn is_canonical(&self) -> bool {
        matches!(self, InitialSpec::Canonical)
    }
}

/// Positive and negative atom requirements for one agent at goal time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentGoal {
    pub agent: AgentId,
    pub positive: Vec<InfoAtom>,
    pub negative: Vec<InfoAtom>,
}

/// Where the global-count threshold comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountSource {
    Constant(u64),
    /// The counting recursion over introspective agents.
    PaperRecursion,
    /// The exact size of the well-formed universe.
    UniverseSize,
}

/// Resolves a count source against a universe.
pub fn resolve_count(source: CountSource, universe: &InfoUniverse) -> u64 {
    match source {
        CountSource::Constant(c) => c,
        CountSource::PaperRecursion => count_atoms_paper(
            universe.agent_count(),
            universe.secret_count(),
            universe.depth_bound(),
        ),
        CountSource::UniverseSize => universe.len() as u64,
    }
}

/// A conjunction of goal forms evaluated at goal time.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GoalSpec {
    /// Per-agent positive and negative literals.
    pub per_agent: Vec<AgentGoal>,
    /// Total number of true (agent, atom) pairs must reach the threshold.
    pub global_count: Option<CountSource>,
    /// Every agent knows every atom of depth at most this value.
    pub full_depth: Option<u32>,
}

impl GoalSpec {
    pub fn trivial() -> Self {
        GoalSpec::default()
    }

    pub fn full_depth(depth: u32) -> Self {
        GoalSpec {
            full_depth: Some(depth),
            ..GoalSpec::default()
        }
    }

    pub fn global_count(source: CountSource) -> Self {
        GoalSpec {
            global_count: Some(source),
            ..GoalSpec::default()
        }
    }

    pub fn agent_literals(per_agent: Vec<AgentGoal>) -> Self {
        GoalSpec {
            per_agent,
            ..GoalSpec::default()
        }
    }

    pub fn has_negatives(&self) -> bool {
        self.per_agent.iter().any(|g| !g.negative.is_empty())
    }

    /// Whether the goal is invariant under permuting agents together with
    /// their secrets. Per-agent literals name specific agents and break
    /// the symmetry.
    pub fn is_agent_symmetric(&self) -> bool {
        self.per_agent.is_empty()
    }

    /// The largest atom depth the goal can observe, capped at `d`. States
    /// projected to this depth decide the goal.
    pub fn relevant_depth(&self, d: u32) -> u32 {
        if self.global_count.is_some() {
            return d;
        }
        let mut depth = self.full_depth.unwrap_or(0);
        for goal in &self.per_agent {
            for atom in goal.positive.iter().chain(&goal.negative) {
                depth = depth.max(atom.depth());
            }
        }
        depth.min(d)
    }
}

/// Objective for the planner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Objective {
    /// Minimize makespan, then the number of calls.
    #[default]
    LexMakespanThenCalls,
    MinCalls,
    MinMakespan,
    Satisficing,
}

impl Objective {
    /// Whether cost `a` is strictly better than `b` under this objective.
    pub fn better(self, a: PlanCost, b: PlanCost) -> bool {
        match self {
            Objective::LexMakespanThenCalls => {
                (a.goal_time, a.calls) < (b.goal_time, b.calls)
            }
            Objective::MinCalls => (a.calls, a.goal_time) < (b.calls, b.goal_time),
            Objective::MinMakespan => a.goal_time < b.goal_time,
            Objective::Satisficing => false,
        }
    }
}

/// Objective plus the weak-constraint weights exposed for encoding parity:
/// each call costs `call_weight` at `call_priority`, each step before the
/// goal costs `step_weight` at `step_priority`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OptimizationSpec {
    pub objective: Objective,
    pub call_weight: u32,
    pub step_weight: u32,
    pub call_priority: u32,
    pub step_priority: u32,
}

impl Default for OptimizationSpec {
    fn default() -> Self {
        OptimizationSpec {
            objective: Objective::LexMakespanThenCalls,
            call_weight: 3,
            step_weight: 3,
            call_priority: 1,
            step_priority: 2,
        }
    }
}

/// Lexicographic plan cost: makespan first, then call count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct PlanCost {
    pub goal_time: u32,
    pub calls: u32,
}

impl PlanCost {
    pub fn new(goal_time: u32, calls: u32) -> Self {
        PlanCost { goal_time, calls }
    }

    /// The weak-constraint view: cost accrued at the step priority level
    /// and at the call priority level.
    pub fn weighted(&self, spec: &OptimizationSpec) -> WeightedCost {
        WeightedCost {
            step_level: self.goal_time as u64 * spec.step_weight as u64,
            call_level: self.calls as u64 * spec.call_weight as u64,
        }
    }
}

impl fmt::Display for PlanCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.goal_time, self.calls)
    }
}

/// Weighted cost at the two priority levels, higher level first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct WeightedCost {
    pub step_level: u64,
    pub call_level: u64,
}

/// A gossip problem instance.
#[derive(Debug, Clone)]
pub struct GossipProblem {
    pub agents: u32,
    pub secrets: u32,
    pub depth: u32,
    pub horizon: u32,
    pub graph: ConnectivityGraph,
    pub initial: InitialSpec,
    pub goal: GoalSpec,
    pub policy: SharePolicy,
    pub mode: Mode,
    pub objective: OptimizationSpec,
    /// Enforce negative goal literals over the whole trace rather than at
    /// goal time only.
    pub strict_negatives: bool,
}

impl GossipProblem {
    /// A complete-graph instance with canonical initial state, share-all
    /// policy, and the default lexicographic objective.
    pub fn standard(n: u32, depth: u32, horizon: u32, mode: Mode, goal: GoalSpec) -> Self {
        GossipProblem {
            agents: n,
            secrets: n,
            depth,
            horizon,
            graph: ConnectivityGraph::complete(n),
            initial: InitialSpec::Canonical,
            goal,
            policy: SharePolicy::share_all(),
            mode,
            objective: OptimizationSpec::default(),
            strict_negatives: false,
        }
    }

    pub fn universe(&self) -> Result<InfoUniverse, ProblemError> {
        InfoUniverse::new(self.agents, self.secrets, self.depth).map_err(ProblemError::Universe)
    }

    pub fn initial_state(&self, universe: &InfoUniverse) -> Result<KnowledgeState, ProblemError> {
        initial_state(&self.initial, universe)
    }

    /// Validates the instance; every other operation assumes this passed.
    pub fn validate(&self) -> Result<(), ProblemError> {
        if self.agents == 0 || self.secrets == 0 {
            return Err(ProblemError::Universe(UniverseError::EmptyDomain));
        }
        if self.graph.agent_count() != self.agents {
            return Err(ProblemError::GraphMismatch {
                graph: self.graph.agent_count(),
                agents: self.agents,
            });
        }
        match &self.initial {
            InitialSpec::Canonical => {
                if self.agents > self.secrets {
                    return Err(ProblemError::CanonicalNeedsSecrets {
                        agents: self.agents,
                        secrets: self.secrets,
                    });
                }
            }
            InitialSpec::Constrained {
                required,
                forbidden,
                secret_bounds,
                ..
            } => {
                for (agent, atom) in required.iter().chain(forbidden) {
                    if agent.0 < 1 || agent.0 > self.agents {
                        return Err(ProblemError::GraphAgent { agent: agent.0 });
                    }
                    if !atom.is_well_formed(self.agents, self.secrets, self.depth) {
                        return Err(ProblemError::IllFormedAtom {
                            context: "initial specification",
                        });
                    }
                }
                for (agent, atom) in required {
                    if forbidden.iter().any(|(a, f)| a == agent && f == atom) {
                        return Err(ProblemError::RequiredForbiddenOverlap { agent: agent.0 });
                    }
                }
                if let Some((lo, hi)) = secret_bounds {
                    if lo > hi {
                        return Err(ProblemError::BadSecretBounds { lo: *lo, hi: *hi });
                    }
                }
            }
        }
        for goal in &self.goal.per_agent {
            if goal.agent.0 < 1 || goal.agent.0 > self.agents {
                return Err(ProblemError::GraphAgent {
                    agent: goal.agent.0,
                });
            }
            for atom in goal.positive.iter().chain(&goal.negative) {
                if !atom.is_well_formed(self.agents, self.secrets, self.depth) {
                    return Err(ProblemError::IllFormedAtom {
                        context: "goal specification",
                    });
                }
            }
        }
        if let Some(depth) = self.goal.full_depth {
            if depth > self.depth {
                return Err(ProblemError::FullDepthExceedsBound {
                    depth,
                    bound: self.depth,
                });
            }
        }
        match &self.policy {
            SharePolicy::ShareAll { blocked } => {
                for entry in blocked {
                    if entry.sender.0 < 1
                        || entry.sender.0 > self.agents
                        || entry.receiver.0 < 1
                        || entry.receiver.0 > self.agents
                    {
                        return Err(ProblemError::GraphAgent {
                            agent: entry.sender.0,
                        });
                    }
                    if !entry.atom.is_well_formed(self.agents, self.secrets, self.depth) {
                        return Err(ProblemError::IllFormedAtom {
                            context: "blocked share",
                        });
                    }
                }
            }
            SharePolicy::Bounded { ll, uu } => {
                if ll > uu {
                    return Err(ProblemError::BadShareBounds { ll: *ll, uu: *uu });
                }
            }
        }
        if self.objective.call_weight == 0 || self.objective.step_weight == 0 {
            return Err(ProblemError::ZeroWeight);
        }
        Ok(())
    }
}

/// Errors from problem validation and initial-state construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProblemError {
    Universe(UniverseError),
    GraphMismatch { graph: u32, agents: u32 },
    GraphAgent { agent: u32 },
    SelfLoop { agent: u32 },
    CanonicalNeedsSecrets { agents: u32, secrets: u32 },
    IllFormedAtom { context: &'static str },
    RequiredForbiddenOverlap { agent: u32 },
    BadSecretBounds { lo: u32, hi: u32 },
    BadShareBounds { ll: u32, uu: u32 },
    FullDepthExceedsBound { depth: u32, bound: u32 },
    ZeroWeight,
    InitialUnsatisfiable,
    InitialAmbiguous,
    InitialTooLarge,
}

impl fmt::Display for ProblemError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProblemError::Universe(err) => write!(f, "{err}"),
            ProblemError::GraphMismatch { graph, agents } => {
                write!(f, "graph covers {graph} agents, problem has {agents}")
            }
            ProblemError::GraphAgent { agent } => write!(f, "agent {agent} out of range"),
            ProblemError::SelfLoop { agent } => write!(f, "self-loop on agent {agent}"),
            ProblemError::CanonicalNeedsSecrets { agents, secrets } => write!(
                f,
                "canonical initial state needs one secret per agent ({agents} agents, {secrets} secrets)"
            ),
            ProblemError::IllFormedAtom { context } => {
                write!(f, "ill-formed atom in {context}")
            }
            ProblemError::RequiredForbiddenOverlap { agent } => {
                write!(f, "atom both required and forbidden for agent {agent}")
            }
            ProblemError::BadSecretBounds { lo, hi } => {
                write!(f, "initial secret bounds [{lo},{hi}] are inverted")
            }
            ProblemError::BadShareBounds { ll, uu } => {
                write!(f, "share bounds [{ll},{uu}] are inverted")
            }
            ProblemError::FullDepthExceedsBound { depth, bound } => {
                write!(f, "full-depth goal at depth {depth} exceeds bound {bound}")
            }
            ProblemError::ZeroWeight => write!(f, "objective weights must be positive"),
            ProblemError::InitialUnsatisfiable => {
                write!(f, "initial-state constraints are unsatisfiable")
            }
            ProblemError::InitialAmbiguous => {
                write!(f, "initial-state constraints admit more than one state")
            }
            ProblemError::InitialTooLarge => {
                write!(f, "initial-state constraint space too large to enumerate")
            }
        }
    }
}

impl core::error::Error for ProblemError {}

/// Builds the initial state from its specification. A constrained
/// specification must pin down exactly one state; the enumeration is
/// guarded for small instances.
pub fn initial_state(
    spec: &InitialSpec,
    universe: &InfoUniverse,
) -> Result<KnowledgeState, ProblemError> {
    let n = universe.agent_count();
    let s = universe.secret_count();
    match spec {
        InitialSpec::Canonical => {
            if n > s {
                return Err(ProblemError::CanonicalNeedsSecrets {
                    agents: n,
                    secrets: s,
                });
            }
            let mut state = KnowledgeState::for_universe(universe);
            for i in 1..=n {
                let idx = universe
                    .index_of(&InfoAtom::secret(i))
                    .expect("own secret in universe");
                state.insert(AgentId(i), idx);
            }
            Ok(state)
        }
        InitialSpec::Constrained {
            required,
            forbidden,
            secret_bounds,
            unique,
        } => constrained_state(universe, required, forbidden, *secret_bounds, *unique),
    }
}

const MAX_INITIAL_COMBINATIONS: u64 = 1 << 20;

fn constrained_state(
    universe: &InfoUniverse,
    required: &[(AgentId, InfoAtom)],
    forbidden: &[(AgentId, InfoAtom)],
    secret_bounds: Option<(u32, u32)>,
    unique: bool,
) -> Result<KnowledgeState, ProblemError> {
    let n = universe.agent_count() as usize;
    let s = universe.secret_count();
    if s > 32 {
        return Err(ProblemError::InitialTooLarge);
    }
    for (agent, atom) in required {
        if forbidden.iter().any(|(a, f)| a == agent && f == atom) {
            return Err(ProblemError::RequiredForbiddenOverlap { agent: agent.0 });
        }
        if universe.index_of(atom).is_none() {
            return Err(ProblemError::IllFormedAtom {
                context: "initial specification",
            });
        }
    }

    // Split requirements by depth; positive-depth knowledge is closed-world.
    let mut required_secrets = alloc::vec![0u32; n]; // bitmasks over secrets
    let mut forbidden_secrets = alloc::vec![0u32; n];
    let mut deep_required: Vec<Vec<u32>> = alloc::vec![Vec::new(); n];
    for (agent, atom) in required {
        let a = (agent.0 - 1) as usize;
        match atom {
            InfoAtom::Secret(k) => required_secrets[a] |= 1 << (k.0 - 1),
            _ => deep_required[a].push(universe.index_of(atom).expect("validated")),
        }
    }
    for (agent, atom) in forbidden {
        let a = (agent.0 - 1) as usize;
        if let InfoAtom::Secret(k) = atom {
            forbidden_secrets[a] |= 1 << (k.0 - 1);
        }
        // Positive-depth forbidden atoms conflict only with requirements,
        // which the overlap check above already rejects.
    }

    let (lo, hi) = secret_bounds.unwrap_or((0, s));
    if lo > hi {
        return Err(ProblemError::BadSecretBounds { lo, hi });
    }
    let full: u32 = if s == 32 { u32::MAX } else { (1u32 << s) - 1 };

    // Candidate depth-0 sets per agent.
    let mut candidates: Vec<Vec<u32>> = Vec::with_capacity(n);
    let mut total: u64 = 1;
    for a in 0..n {
        if required_secrets[a] & forbidden_secrets[a] != 0 {
            return Err(ProblemError::RequiredForbiddenOverlap {
                agent: a as u32 + 1,
            });
        }
        let free = full & !required_secrets[a] & !forbidden_secrets[a];
        let mut sets = Vec::new();
        // Iterate all submasks of `free`, including the empty one.
        let mut sub = free;
        loop {
            let candidate = required_secrets[a] | sub;
            let size = candidate.count_ones();
            if size >= lo && size <= hi {
                sets.push(candidate);
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & free;
        }
        if sets.is_empty() {
            return Err(ProblemError::InitialUnsatisfiable);
        }
        sets.sort_unstable();
        total = total.saturating_mul(sets.len() as u64);
        if total > MAX_INITIAL_COMBINATIONS {
            return Err(ProblemError::InitialTooLarge);
        }
        candidates.push(sets);
    }

    // Uniqueness also covers positive-depth atoms.
    if unique {
        let mut seen: BTreeSet<u32> = BTreeSet::new();
        for atoms in &deep_required {
            for idx in atoms {
                if !seen.insert(*idx) {
                    return Err(ProblemError::InitialUnsatisfiable);
                }
            }
        }
    }

    // Count satisfying assignments, stopping at two.
    let mut found: Option<Vec<u32>> = None;
    let mut chosen = alloc::vec![0u32; n];
    let mut count = 0u32;
    search_assignments(
        &candidates,
        unique,
        0,
        0,
        &mut chosen,
        &mut count,
        &mut found,
    );
    match (count, found) {
        (0, _) => Err(ProblemError::InitialUnsatisfiable),
        (1, Some(masks)) => {
            let mut state = KnowledgeState::for_universe(universe);
            for (a, mask) in masks.iter().enumerate() {
                let agent = AgentId(a as u32 + 1);
                let mut m = *mask;
                while m != 0 {
                    let k = m.trailing_zeros();
                    let idx = universe
                        .index_of(&InfoAtom::secret(k + 1))
                        .expect("secret in universe");
                    state.insert(agent, idx);
                    m &= m - 1;
                }
                for idx in &deep_required[a] {
                    state.insert(agent, *idx);
                }
            }
            Ok(state)
        }
        _ => Err(ProblemError::InitialAmbiguous),
    }
}

fn search_assignments(
    candidates: &[Vec<u32>],
    unique: bool,
    agent: usize,
    used: u32,
    chosen: &mut [u32],
    count: &mut u32,
    found: &mut Option<Vec<u32>>,
) {
    if *count >= 2 {
        return;
    }
    if agent == candidates.len() {
        *count += 1;
        if found.is_none() {
            *found = Some(chosen.to_vec());
        }
        return;
    }
    for &mask in &candidates[agent] {
        if unique && used & mask != 0 {
            continue;
        }
        chosen[agent] = mask;
        search_assignments(
            candidates,
            unique,
            agent + 1,
            used | mask,
            chosen,
            count,
            found,
        );
        if *count >= 2 {
            return;
        }
    }
}

/// Whether every conjunct of the goal holds in `state`.
pub fn goal_satisfied(state: &KnowledgeState, goal: &GoalSpec, universe: &InfoUniverse) -> bool {
    for agent_goal in &goal.per_agent {
        for atom in &agent_goal.positive {
            match universe.index_of(atom) {
                Some(idx) if state.knows(agent_goal.agent, idx) => {}
                _ => return false,
            }
        }
        for atom in &agent_goal.negative {
            if let Some(idx) = universe.index_of(atom) {
                if state.knows(agent_goal.agent, idx) {
                    return false;
                }
            }
        }
    }
    if let Some(source) = goal.global_count {
        if state.total_known() < resolve_count(source, universe) {
            return false;
        }
    }
    if let Some(depth) = goal.full_depth {
        let prefix = universe.prefix_len(depth);
        for agent in 1..=universe.agent_count() {
            if !state.has_all_prefix(AgentId(agent), prefix) {
                return false;
            }
        }
    }
    true
}

/// The cost vector of a verified plan: goal time and total call count,
/// compared lexicographically under the default objective. A plan that
/// never reaches the goal has no cost.
pub fn plan_cost(plan: &Plan, verdict: &Verdict, _spec: &OptimizationSpec) -> Option<PlanCost> {
    verdict.goal_time.map(|goal_time| PlanCost {
        goal_time,
        calls: plan.total_calls(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn complete_graph_edges() {
        let g = ConnectivityGraph::complete(3);
        assert!(g.has_edge(AgentId(1), AgentId(2)));
        assert!(g.has_edge(AgentId(3), AgentId(1)));
        assert!(!g.has_edge(AgentId(2), AgentId(2)));
        assert!(!g.has_edge(AgentId(2), AgentId(4)));
        assert!(g.is_complete());

        let sparse = ConnectivityGraph::from_edges(3, [(1, 2), (2, 3)]).unwrap();
        assert!(sparse.has_edge(AgentId(1), AgentId(2)));
        assert!(!sparse.has_edge(AgentId(2), AgentId(1)));
        assert!(sparse.connectable(AgentId(2), AgentId(1)));
        assert!(!sparse.is_complete());
        assert!(matches!(
            ConnectivityGraph::from_edges(3, [(1, 1)]),
            Err(ProblemError::SelfLoop { agent: 1 })
        ));
    }

    #[test]
    fn canonical_initial_state() {
        let u = InfoUniverse::new(3, 3, 1).unwrap();
        let state = initial_state(&InitialSpec::Canonical, &u).unwrap();
        for i in 1..=3u32 {
            assert_eq!(
                state.known_atoms(AgentId(i)),
                vec![u.index_of(&InfoAtom::secret(i)).unwrap()]
            );
        }
        // Idempotent and deterministic.
        let again = initial_state(&InitialSpec::Canonical, &u).unwrap();
        assert_eq!(state, again);
    }

    /// Canonical depth-0 knowledge expressed through constraints.
    fn canonical_constraints(n: u32) -> (Vec<(AgentId, InfoAtom)>, Option<(u32, u32)>) {
        let required = (1..=n)
            .map(|i| (AgentId(i), InfoAtom::secret(i)))
            .collect();
        (required, Some((1, 1)))
    }

    #[test]
    fn constrained_state_with_higher_order_requirement() {
        let u = InfoUniverse::new(3, 3, 1).unwrap();
        let (mut required, bounds) = canonical_constraints(3);
        required.push((AgentId(1), InfoAtom::kw(2, InfoAtom::secret(2))));
        let spec = InitialSpec::Constrained {
            required,
            forbidden: vec![],
            secret_bounds: bounds,
            unique: false,
        };
        let state = initial_state(&spec, &u).unwrap();
        let atoms_of_1: Vec<_> = state
            .known_atoms(AgentId(1))
            .into_iter()
            .map(|i| u.atom(i).clone())
            .collect();
        assert_eq!(
            atoms_of_1,
            vec![InfoAtom::secret(1), InfoAtom::kw(2, InfoAtom::secret(2))]
        );
        assert_eq!(state.count_for(AgentId(2)), 1);
    }

    #[test]
    fn contradictory_constraints_fail() {
        let u = InfoUniverse::new(2, 2, 0).unwrap();
        let spec = InitialSpec::Constrained {
            required: vec![(AgentId(1), InfoAtom::secret(1))],
            forbidden: vec![(AgentId(1), InfoAtom::secret(1))],
            secret_bounds: None,
            unique: false,
        };
        assert!(matches!(
            initial_state(&spec, &u),
            Err(ProblemError::RequiredForbiddenOverlap { agent: 1 })
        ));
    }

    #[test]
    fn ambiguity_is_detected_and_uniqueness_resolves_it() {
        let u = InfoUniverse::new(2, 2, 0).unwrap();
        // Each agent knows exactly one secret, nothing pins down which.
        let open = InitialSpec::Constrained {
            required: vec![],
            forbidden: vec![],
            secret_bounds: Some((1, 1)),
            unique: false,
        };
        assert!(matches!(
            initial_state(&open, &u),
            Err(ProblemError::InitialAmbiguous)
        ));
        // Requiring agent 1's secret plus uniqueness forces agent 2's.
        let pinned = InitialSpec::Constrained {
            required: vec![(AgentId(1), InfoAtom::secret(1))],
            forbidden: vec![],
            secret_bounds: Some((1, 1)),
            unique: true,
        };
        let state = initial_state(&pinned, &u).unwrap();
        assert!(state.knows(AgentId(2), u.index_of(&InfoAtom::secret(2)).unwrap()));
        assert!(!state.knows(AgentId(2), u.index_of(&InfoAtom::secret(1)).unwrap()));
    }

    #[test]
    fn goal_evaluation() {
        let u = InfoUniverse::new(3, 3, 0).unwrap();
        let mut state = KnowledgeState::for_universe(&u);
        for agent in 1..=3 {
            for secret in 1..=3 {
                state.insert(AgentId(agent), u.index_of(&InfoAtom::secret(secret)).unwrap());
            }
        }
        assert!(goal_satisfied(&state, &GoalSpec::full_depth(0), &u));
        assert!(goal_satisfied(
            &state,
            &GoalSpec::global_count(CountSource::Constant(9)),
            &u
        ));
        assert!(!goal_satisfied(
            &state,
            &GoalSpec::global_count(CountSource::Constant(10)),
            &u
        ));

        // Negative literal: agent 1 must not know secret 2.
        let variant_n = GoalSpec::agent_literals(vec![AgentGoal {
            agent: AgentId(1),
            positive: vec![InfoAtom::secret(1), InfoAtom::secret(3)],
            negative: vec![InfoAtom::secret(2)],
        }]);
        assert!(!goal_satisfied(&state, &variant_n, &u));
        let mut partial = KnowledgeState::for_universe(&u);
        partial.insert(AgentId(1), u.index_of(&InfoAtom::secret(1)).unwrap());
        partial.insert(AgentId(1), u.index_of(&InfoAtom::secret(3)).unwrap());
        assert!(goal_satisfied(&partial, &variant_n, &u));
    }

    #[test]
    fn cost_ordering_and_weighting() {
        let spec = OptimizationSpec::default();
        let a = PlanCost::new(2, 4);
        let b = PlanCost::new(2, 3);
        let c = PlanCost::new(1, 9);
        assert!(c < b && b < a);
        assert!(Objective::LexMakespanThenCalls.better(c, a));
        // Under call-count priority the orderings disagree.
        assert!(Objective::MinCalls.better(b, c));
        assert!(!Objective::MinCalls.better(c, a));
        let w = a.weighted(&spec);
        assert_eq!(w.step_level, 6);
        assert_eq!(w.call_level, 12);
    }

    #[test]
    fn validation_catches_bad_instances() {
        let mut p = GossipProblem::standard(3, 1, 5, Mode::Parallel, GoalSpec::full_depth(0));
        assert!(p.validate().is_ok());
        p.goal = GoalSpec::full_depth(2);
        assert!(matches!(
            p.validate(),
            Err(ProblemError::FullDepthExceedsBound { depth: 2, bound: 1 })
        ));
        let mut q = GossipProblem::standard(4, 0, 5, Mode::Parallel, GoalSpec::full_depth(0));
        q.secrets = 3;
        assert!(matches!(
            q.validate(),
            Err(ProblemError::CanonicalNeedsSecrets { .. })
        ));
        let mut r = GossipProblem::standard(3, 0, 5, Mode::Parallel, GoalSpec::full_depth(0));
        r.policy = SharePolicy::Bounded { ll: 3, uu: 1 };
        assert!(matches!(
            r.validate(),
            Err(ProblemError::BadShareBounds { ll: 3, uu: 1 })
        ));
    }
}
