//! Call semantics: knowledge states, calls, rounds, and plan simulation.
//!
//! A call between two agents exchanges, in both directions at once, every
//! piece of information the permitted-message policy lets through. Each
//! transferred atom `a` additionally teaches the receiver `kw(sender, a)`
//! when that lifted atom exists within the depth bound. All effects of a
//! round read the pre-round state, and no information is ever lost.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::fmt::Write as _;

use crate::atoms::{AgentId, AtomParseError, InfoAtom, InfoUniverse};
use crate::problem::{ConnectivityGraph, GossipProblem, Mode, ProblemError};

/// Per-agent sets of atom indices relative to a fixed [`InfoUniverse`],
/// packed into one flat word vector for cheap cloning and comparison.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct KnowledgeState {
    agents: u32,
    atom_count: u32,
    words_per_agent: u32,
    words: Vec<u64>,
}

impl KnowledgeState {
    /// An empty state for `agents` agents over `atom_count` atoms.
    pub fn empty(agents: u32, atom_count: usize) -> Self {
        let words_per_agent = atom_count.div_ceil(64) as u32;
        KnowledgeState {
            agents,
            atom_count: atom_count as u32,
            words_per_agent,
            words: alloc::vec![0u64; (agents * words_per_agent) as usize],
        }
    }

    /// An empty state sized for `universe`.
    pub fn for_universe(universe: &InfoUniverse) -> Self {
        Self::empty(universe.agent_count(), universe.len())
    }

    pub fn agent_count(&self) -> u32 {
        self.agents
    }

    pub fn atom_capacity(&self) -> u32 {
        self.atom_count
    }

    fn range(&self, agent: AgentId) -> core::ops::Range<usize> {
        debug_assert!(agent.0 >= 1 && agent.0 <= self.agents);
        let start = ((agent.0 - 1) * self.words_per_agent) as usize;
        start..start + self.words_per_agent as usize
    }

    /// The bit words backing one agent's atom set.
    pub fn agent_words(&self, agent: AgentId) -> &[u64] {
        &self.words[self.range(agent)]
    }

    fn agent_words_mut(&mut self, agent: AgentId) -> &mut [u64] {
        let range = self.range(agent);
        &mut self.words[range]
    }

    pub fn knows(&self, agent: AgentId, atom: u32) -> bool {
        debug_assert!(atom < self.atom_count);
        self.agent_words(agent)[(atom / 64) as usize] & (1u64 << (atom % 64)) != 0
    }

    /// Inserts an atom; returns whether it was new.
    pub fn insert(&mut self, agent: AgentId, atom: u32) -> bool {
        assert!(atom < self.atom_count, "atom index out of range");
        let word = &mut self.agent_words_mut(agent)[(atom / 64) as usize];
        let bit = 1u64 << (atom % 64);
        let fresh = *word & bit == 0;
        *word |= bit;
        fresh
    }

    /// Ors `source` into `agent`'s set; word layouts must match.
    pub fn union_into(&mut self, agent: AgentId, source: &[u64]) {
        for (dst, src) in self.agent_words_mut(agent).iter_mut().zip(source) {
            *dst |= src;
        }
    }

    /// Number of atoms `agent` knows.
    pub fn count_for(&self, agent: AgentId) -> u32 {
        self.agent_words(agent)
            .iter()
            .map(|w| w.count_ones())
            .sum()
    }

    /// Number of atoms `agent` knows among indices `0..prefix`.
    pub fn count_prefix(&self, agent: AgentId, prefix: usize) -> u32 {
        let words = self.agent_words(agent);
        let full = prefix / 64;
        let mut count: u32 = words[..full].iter().map(|w| w.count_ones()).sum();
        let rem = prefix % 64;
        if rem > 0 {
            count += (words[full] & ((1u64 << rem) - 1)).count_ones();
        }
        count
    }

    /// Whether `agent` knows every atom with index below `prefix`.
    pub fn has_all_prefix(&self, agent: AgentId, prefix: usize) -> bool {
        self.count_prefix(agent, prefix) as usize == prefix
    }

    /// Total number of true (agent, atom) pairs.
    pub fn total_known(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    /// Indices of the atoms `agent` knows, ascending.
    pub fn known_atoms(&self, agent: AgentId) -> Vec<u32> {
        let mut out = Vec::new();
        for_each_set_bit(self.agent_words(agent), |idx| out.push(idx));
        out
    }

    /// Pointwise set inclusion over all agents.
    pub fn is_subset_of(&self, other: &KnowledgeState) -> bool {
        debug_assert_eq!(self.words.len(), other.words.len());
        self.words
            .iter()
            .zip(&other.words)
            .all(|(a, b)| a & !b == 0)
    }

    /// The flat word vector, agent-major. Used as a dominance key.
    pub fn raw_words(&self) -> &[u64] {
        &self.words
    }
}

pub(crate) fn for_each_set_bit(words: &[u64], mut f: impl FnMut(u32)) {
    for (wi, &word) in words.iter().enumerate() {
        let mut w = word;
        while w != 0 {
            let bit = w.trailing_zeros();
            f(wi as u32 * 64 + bit);
            w &= w - 1;
        }
    }
}

/// A share blocked for one sender, receiver, atom, and time step.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct BlockedShare {
    pub sender: AgentId,
    pub receiver: AgentId,
    pub atom: InfoAtom,
    pub time: u32,
}

/// Permitted-message policy for call directions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SharePolicy {
    /// Everything a sender knows flows, except listed exceptions.
    ShareAll { blocked: Vec<BlockedShare> },
    /// Each call direction carries an explicitly selected atom set whose
    /// size lies within `[ll, uu]`, clamped to the sender's known count.
    Bounded { ll: u32, uu: u32 },
}

impl SharePolicy {
    pub fn share_all() -> Self {
        SharePolicy::ShareAll {
            blocked: Vec::new(),
        }
    }
}

impl Default for SharePolicy {
    fn default() -> Self {
        SharePolicy::share_all()
    }
}

/// Explicit atom selections for the two directions of one call.
/// `forward` flows caller to callee.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CallShares {
    pub forward: Vec<InfoAtom>,
    pub reverse: Vec<InfoAtom>,
}

/// One call: the caller dials the callee at a time step. Under a bounded
/// policy the call carries its per-direction shared sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Call {
    pub caller: AgentId,
    pub callee: AgentId,
    pub time: u32,
    pub shares: Option<CallShares>,
}

impl Call {
    pub fn new(caller: u32, callee: u32, time: u32) -> Self {
        Call {
            caller: AgentId(caller),
            callee: AgentId(callee),
            time,
            shares: None,
        }
    }
}

/// The calls happening simultaneously at one time step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Round {
    pub step: u32,
    pub calls: Vec<Call>,
}

/// A timed call sequence grouped into rounds with strictly increasing
/// steps. Time steps without a round are legal gaps.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Plan {
    rounds: Vec<Round>,
}

/// Structural plan defects caught at construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanStructureError {
    NonIncreasingSteps { step: u32 },
    TimeMismatch { step: u32, call_time: u32 },
}

impl fmt::Display for PlanStructureError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanStructureError::NonIncreasingSteps { step } => {
                write!(f, "round steps not strictly increasing at {step}")
            }
            PlanStructureError::TimeMismatch { step, call_time } => {
                write!(f, "call at time {call_time} listed under round {step}")
            }
        }
    }
}

impl core::error::Error for PlanStructureError {}

impl Plan {
    pub fn empty() -> Self {
        Plan { rounds: Vec::new() }
    }

    pub fn new(rounds: Vec<Round>) -> Result<Self, PlanStructureError> {
        let mut prev: Option<u32> = None;
        for round in &rounds {
            if let Some(p) = prev {
                if round.step <= p {
                    return Err(PlanStructureError::NonIncreasingSteps { step: round.step });
                }
            }
            prev = Some(round.step);
            for call in &round.calls {
                if call.time != round.step {
                    return Err(PlanStructureError::TimeMismatch {
                        step: round.step,
                        call_time: call.time,
                    });
                }
            }
        }
        Ok(Plan { rounds })
    }

    /// Groups `(caller, callee, time)` triples into rounds, preserving the
    /// given order within each round.
    pub fn from_triples(triples: &[(u32, u32, u32)]) -> Result<Self, PlanStructureError> {
        let mut by_time: BTreeMap<u32, Vec<Call>> = BTreeMap::new();
        for &(i, j, t) in triples {
            by_time.entry(t).or_default().push(Call::new(i, j, t));
        }
        Plan::new(
            by_time
                .into_iter()
                .map(|(step, calls)| Round { step, calls })
                .collect(),
        )
    }

    pub fn rounds(&self) -> &[Round] {
        &self.rounds
    }

    pub fn round_at(&self, step: u32) -> Option<&Round> {
        self.rounds
            .binary_search_by_key(&step, |r| r.step)
            .ok()
            .map(|i| &self.rounds[i])
    }

    pub fn total_calls(&self) -> u32 {
        self.rounds.iter().map(|r| r.calls.len() as u32).sum()
    }

    pub fn max_step(&self) -> Option<u32> {
        self.rounds.last().map(|r| r.step)
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }
}

/// Knowledge states for times `0..=m`; pointwise monotone by construction.
#[derive(Debug, Clone)]
pub struct Trace {
    pub states: Vec<KnowledgeState>,
}

impl Trace {
    pub fn state(&self, t: u32) -> &KnowledgeState {
        &self.states[t as usize]
    }

    /// Number of time points, horizon plus one.
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Errors from applying call semantics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SemanticsError {
    AgentOutOfRange { agent: u32, time: u32 },
    SelfCall { time: u32 },
    MatchingViolation { agent: u32, time: u32 },
    MultipleCallsSequential { time: u32 },
    MissingShares { time: u32 },
    UnknownSharedAtom { time: u32 },
    SharedAtomNotKnown { agent: u32, time: u32 },
    ShareWindow { size: u32, lo: u32, hi: u32, time: u32 },
    CallBeyondHorizon { time: u32 },
    Initial(ProblemError),
}

impl fmt::Display for SemanticsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SemanticsError::AgentOutOfRange { agent, time } => {
                write!(f, "agent {agent} out of range at time {time}")
            }
            SemanticsError::SelfCall { time } => write!(f, "agent calls itself at time {time}"),
            SemanticsError::MatchingViolation { agent, time } => {
                write!(f, "agent {agent} takes part in two calls at time {time}")
            }
            SemanticsError::MultipleCallsSequential { time } => {
                write!(f, "more than one call at time {time} in sequential mode")
            }
            SemanticsError::MissingShares { time } => {
                write!(f, "bounded policy requires explicit shared sets at time {time}")
            }
            SemanticsError::UnknownSharedAtom { time } => {
                write!(f, "shared atom outside the universe at time {time}")
            }
            SemanticsError::SharedAtomNotKnown { agent, time } => {
                write!(f, "agent {agent} shares an atom it does not know at time {time}")
            }
            SemanticsError::ShareWindow { size, lo, hi, time } => {
                write!(f, "shared set of size {size} outside [{lo},{hi}] at time {time}")
            }
            SemanticsError::CallBeyondHorizon { time } => {
                write!(f, "call at time {time} lies beyond the horizon")
            }
            SemanticsError::Initial(err) => write!(f, "initial state: {err}"),
        }
    }
}

impl core::error::Error for SemanticsError {}

fn check_agent(agent: AgentId, n: u32, time: u32) -> Result<(), SemanticsError> {
    if agent.0 < 1 || agent.0 > n {
        return Err(SemanticsError::AgentOutOfRange {
            agent: agent.0,
            time,
        });
    }
    Ok(())
}

/// Whether `sender` may pass `atom` to `receiver` at `time`: the edge must
/// exist, the sender must know the atom, and the policy must let it
/// through. For a bounded policy `shares` is the call's explicit shared
/// set for this direction.
pub fn permitted(
    universe: &InfoUniverse,
    graph: &ConnectivityGraph,
    policy: &SharePolicy,
    sender: AgentId,
    receiver: AgentId,
    atom: u32,
    state: &KnowledgeState,
    time: u32,
    shares: Option<&[InfoAtom]>,
) -> Result<bool, SemanticsError> {
    check_agent(sender, universe.agent_count(), time)?;
    check_agent(receiver, universe.agent_count(), time)?;
    if !graph.has_edge(sender, receiver) {
        return Ok(false);
    }
    if !state.knows(sender, atom) {
        return Ok(false);
    }
    match policy {
        SharePolicy::ShareAll { blocked } => Ok(!blocked.iter().any(|b| {
            b.sender == sender
                && b.receiver == receiver
                && b.time == time
                && universe.index_of(&b.atom) == Some(atom)
        })),
        SharePolicy::Bounded { ll, uu } => {
            let shares = shares.ok_or(SemanticsError::MissingShares { time })?;
            let indices = validate_share_set(universe, state, sender, shares, *ll, *uu, time)?;
            Ok(indices.contains(&atom))
        }
    }
}

/// Resolves and validates an explicit shared set: every atom must be in
/// the universe and known by the sender, and the (deduplicated) set size
/// must lie within `[ll, uu]` clamped to the sender's known count.
fn validate_share_set(
    universe: &InfoUniverse,
    state: &KnowledgeState,
    sender: AgentId,
    shares: &[InfoAtom],
    ll: u32,
    uu: u32,
    time: u32,
) -> Result<Vec<u32>, SemanticsError> {
    let mut indices = Vec::with_capacity(shares.len());
    for atom in shares {
        let idx = universe
            .index_of(atom)
            .ok_or(SemanticsError::UnknownSharedAtom { time })?;
        if !state.knows(sender, idx) {
            return Err(SemanticsError::SharedAtomNotKnown {
                agent: sender.0,
                time,
            });
        }
        indices.push(idx);
    }
    indices.sort_unstable();
    indices.dedup();
    let known = state.count_for(sender);
    let lo = ll.min(known);
    let hi = uu.min(known);
    let size = indices.len() as u32;
    if size < lo || size > hi {
        return Err(SemanticsError::ShareWindow { size, lo, hi, time });
    }
    Ok(indices)
}

/// Applies one flow direction of a call, reading `pre` and writing `next`.
/// A missing sender-to-receiver edge silently yields no flow.
#[allow(clippy::too_many_arguments)]
pub(crate) fn flow(
    next: &mut KnowledgeState,
    pre: &KnowledgeState,
    sender: AgentId,
    receiver: AgentId,
    shares: Option<&[InfoAtom]>,
    time: u32,
    policy: &SharePolicy,
    graph: &ConnectivityGraph,
    universe: &InfoUniverse,
) -> Result<(), SemanticsError> {
    if !graph.has_edge(sender, receiver) {
        return Ok(());
    }
    match policy {
        SharePolicy::ShareAll { blocked } => {
            let relevant: Vec<u32> = blocked
                .iter()
                .filter(|b| b.sender == sender && b.receiver == receiver && b.time == time)
                .filter_map(|b| universe.index_of(&b.atom))
                .collect();
            if relevant.is_empty() {
                let sent: Vec<u64> = pre.agent_words(sender).into();
                next.union_into(receiver, &sent);
                for_each_set_bit(&sent, |idx| {
                    if let Some(lifted) = universe.lift(sender, idx) {
                        next.insert(receiver, lifted);
                    }
                });
            } else {
                for_each_set_bit(pre.agent_words(sender), |idx| {
                    if relevant.contains(&idx) {
                        return;
                    }
                    next.insert(receiver, idx);
                    if let Some(lifted) = universe.lift(sender, idx) {
                        next.insert(receiver, lifted);
                    }
                });
            }
        }
        SharePolicy::Bounded { ll, uu } => {
            let shares = shares.ok_or(SemanticsError::MissingShares { time })?;
            let indices = validate_share_set(universe, pre, sender, shares, *ll, *uu, time)?;
            for idx in indices {
                next.insert(receiver, idx);
                if let Some(lifted) = universe.lift(sender, idx) {
                    next.insert(receiver, lifted);
                }
            }
        }
    }
    Ok(())
}

/// Applies both directions of one call to `state`, reading the pre-call
/// state for all effects.
pub fn apply_call(
    state: &KnowledgeState,
    call: &Call,
    policy: &SharePolicy,
    graph: &ConnectivityGraph,
    universe: &InfoUniverse,
) -> Result<KnowledgeState, SemanticsError> {
    let n = universe.agent_count();
    check_agent(call.caller, n, call.time)?;
    check_agent(call.callee, n, call.time)?;
    if call.caller == call.callee {
        return Err(SemanticsError::SelfCall { time: call.time });
    }
    let mut next = state.clone();
    let forward = call.shares.as_ref().map(|s| s.forward.as_slice());
    let reverse = call.shares.as_ref().map(|s| s.reverse.as_slice());
    flow(
        &mut next,
        state,
        call.caller,
        call.callee,
        forward,
        call.time,
        policy,
        graph,
        universe,
    )?;
    flow(
        &mut next,
        state,
        call.callee,
        call.caller,
        reverse,
        call.time,
        policy,
        graph,
        universe,
    )?;
    Ok(next)
}

/// Checks the concurrency constraint: in parallel mode no agent appears in
/// two calls of the round in any role; in sequential mode a round holds at
/// most one call.
pub fn check_round_shape(round: &Round, mode: Mode, n: u32) -> Result<(), SemanticsError> {
    if mode == Mode::Sequential && round.calls.len() > 1 {
        return Err(SemanticsError::MultipleCallsSequential { time: round.step });
    }
    let mut busy = alloc::vec![false; n as usize + 1];
    for call in &round.calls {
        check_agent(call.caller, n, round.step)?;
        check_agent(call.callee, n, round.step)?;
        if call.caller == call.callee {
            return Err(SemanticsError::SelfCall { time: round.step });
        }
        for agent in [call.caller, call.callee] {
            if busy[agent.0 as usize] {
                return Err(SemanticsError::MatchingViolation {
                    agent: agent.0,
                    time: round.step,
                });
            }
            busy[agent.0 as usize] = true;
        }
    }
    Ok(())
}

/// Applies all calls of a round simultaneously: every effect reads the
/// pre-round state, results are unioned, and nothing is lost.
pub fn apply_round(
    state: &KnowledgeState,
    round: &Round,
    policy: &SharePolicy,
    graph: &ConnectivityGraph,
    universe: &InfoUniverse,
    mode: Mode,
) -> Result<KnowledgeState, SemanticsError> {
    check_round_shape(round, mode, universe.agent_count())?;
    let mut next = state.clone();
    for call in &round.calls {
        let forward = call.shares.as_ref().map(|s| s.forward.as_slice());
        let reverse = call.shares.as_ref().map(|s| s.reverse.as_slice());
        flow(
            &mut next,
            state,
            call.caller,
            call.callee,
            forward,
            round.step,
            policy,
            graph,
            universe,
        )?;
        flow(
            &mut next,
            state,
            call.callee,
            call.caller,
            reverse,
            round.step,
            policy,
            graph,
            universe,
        )?;
    }
    Ok(next)
}

/// Simulates a plan from the problem's initial state, producing states for
/// times `0..=horizon`. Errors carry the failing time step.
pub fn simulate(
    plan: &Plan,
    problem: &GossipProblem,
    universe: &InfoUniverse,
) -> Result<Trace, SemanticsError> {
    let initial = problem
        .initial_state(universe)
        .map_err(SemanticsError::Initial)?;
    if let Some(last) = plan.max_step() {
        if last >= problem.horizon {
            return Err(SemanticsError::CallBeyondHorizon { time: last });
        }
    }
    let mut states = Vec::with_capacity(problem.horizon as usize + 1);
    states.push(initial);
    for t in 0..problem.horizon {
        let current = states.last().expect("nonempty");
        let next = match plan.round_at(t) {
            Some(round) => apply_round(current, round, &problem.policy, &problem.graph, universe, problem.mode)?,
            None => current.clone(),
        };
        states.push(next);
    }
    Ok(Trace { states })
}

/// Renders a plan in the textual format: one `call(I,J,T)` per line, with
/// `share I->J: {atoms}` suffixes when the call carries explicit shares.
pub fn render_plan(plan: &Plan) -> String {
    let mut out = String::new();
    for round in plan.rounds() {
        for call in &round.calls {
            let _ = write!(out, "call({},{},{})", call.caller, call.callee, call.time);
            if let Some(shares) = &call.shares {
                let _ = write!(
                    out,
                    " share {}->{}: {{{}}}",
                    call.caller,
                    call.callee,
                    join_atoms(&shares.forward)
                );
                let _ = write!(
                    out,
                    " share {}->{}: {{{}}}",
                    call.callee,
                    call.caller,
                    join_atoms(&shares.reverse)
                );
            }
            out.push('\n');
        }
    }
    out
}

fn join_atoms(atoms: &[InfoAtom]) -> String {
    let mut out = String::new();
    for (i, atom) in atoms.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{atom}");
    }
    out
}

/// Errors from [`parse_plan`], with 1-based source line numbers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanParseError {
    ExpectedCall { line: usize },
    Malformed { line: usize },
    BadAtom { line: usize, inner: AtomParseError },
    ShareEndpoints { line: usize },
    DuplicateShare { line: usize },
    Structure(PlanStructureError),
}

impl fmt::Display for PlanParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanParseError::ExpectedCall { line } => write!(f, "line {line}: expected call(I,J,T)"),
            PlanParseError::Malformed { line } => write!(f, "line {line}: malformed plan line"),
            PlanParseError::BadAtom { line, inner } => write!(f, "line {line}: {inner}"),
            PlanParseError::ShareEndpoints { line } => {
                write!(f, "line {line}: share endpoints do not match the call")
            }
            PlanParseError::DuplicateShare { line } => {
                write!(f, "line {line}: duplicate share direction")
            }
            PlanParseError::Structure(err) => write!(f, "{err}"),
        }
    }
}

impl core::error::Error for PlanParseError {}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str) -> Self {
        Cursor {
            bytes: text.as_bytes(),
            pos: 0,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn eat(&mut self, token: &str) -> bool {
        self.skip_ws();
        if self.bytes[self.pos..].starts_with(token.as_bytes()) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn number(&mut self) -> Option<u32> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return None;
        }
        core::str::from_utf8(&self.bytes[start..self.pos])
            .ok()?
            .parse()
            .ok()
    }

    fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.pos >= self.bytes.len()
    }

    fn rest(&self) -> &'a str {
        core::str::from_utf8(&self.bytes[self.pos..]).unwrap_or("")
    }

    /// Consumes a `{...}` group and returns its inside.
    fn braced(&mut self) -> Option<&'a str> {
        self.skip_ws();
        if self.pos >= self.bytes.len() || self.bytes[self.pos] != b'{' {
            return None;
        }
        let start = self.pos + 1;
        let mut depth = 0usize;
        for i in start..self.bytes.len() {
            match self.bytes[i] {
                b'(' => depth += 1,
                b')' => depth = depth.saturating_sub(1),
                b'}' if depth == 0 => {
                    let inner = core::str::from_utf8(&self.bytes[start..i]).ok()?;
                    self.pos = i + 1;
                    return Some(inner);
                }
                _ => {}
            }
        }
        None
    }
}

/// Splits a comma-separated atom list, respecting parentheses.
fn split_atoms(text: &str, line: usize) -> Result<Vec<InfoAtom>, PlanParseError> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    let bytes = text.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        match b {
            b'(' => depth += 1,
            b')' => depth = depth.saturating_sub(1),
            b',' if depth == 0 => {
                let piece = text[start..i].trim();
                if !piece.is_empty() {
                    out.push(
                        crate::atoms::parse_atom(piece)
                            .map_err(|inner| PlanParseError::BadAtom { line, inner })?,
                    );
                }
                start = i + 1;
            }
            _ => {}
        }
    }
    let piece = text[start..].trim();
    if !piece.is_empty() {
        out.push(
            crate::atoms::parse_atom(piece)
                .map_err(|inner| PlanParseError::BadAtom { line, inner })?,
        );
    }
    Ok(out)
}

/// Parses the plan text format produced by [`render_plan`]. Blank lines and
/// `#` comments are ignored; calls may appear in any time order and are
/// grouped into rounds by time step.
pub fn parse_plan(text: &str) -> Result<Plan, PlanParseError> {
    let mut by_time: BTreeMap<u32, Vec<Call>> = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let stripped = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        };
        if stripped.trim().is_empty() {
            continue;
        }
        let mut cur = Cursor::new(stripped);
        if !cur.eat("call") || !cur.eat("(") {
            return Err(PlanParseError::ExpectedCall { line });
        }
        let caller = cur.number().ok_or(PlanParseError::Malformed { line })?;
        if !cur.eat(",") {
            return Err(PlanParseError::Malformed { line });
        }
        let callee = cur.number().ok_or(PlanParseError::Malformed { line })?;
        if !cur.eat(",") {
            return Err(PlanParseError::Malformed { line });
        }
        let time = cur.number().ok_or(PlanParseError::Malformed { line })?;
        if !cur.eat(")") {
            return Err(PlanParseError::Malformed { line });
        }

        let mut call = Call::new(caller, callee, time);
        let mut seen_forward = false;
        let mut seen_reverse = false;
        while !cur.at_end() {
            if !cur.eat("share") {
                return Err(PlanParseError::Malformed { line });
            }
            let from = cur.number().ok_or(PlanParseError::Malformed { line })?;
            if !cur.eat("->") {
                return Err(PlanParseError::Malformed { line });
            }
            let to = cur.number().ok_or(PlanParseError::Malformed { line })?;
            if !cur.eat(":") {
                return Err(PlanParseError::Malformed { line });
            }
            let inner = {
                let _ = cur.rest();
                cur.braced().ok_or(PlanParseError::Malformed { line })?
            };
            let atoms = split_atoms(inner, line)?;
            let shares = call.shares.get_or_insert_with(CallShares::default);
            if (from, to) == (caller, callee) {
                if seen_forward {
                    return Err(PlanParseError::DuplicateShare { line });
                }
                shares.forward = atoms;
                seen_forward = true;
            } else if (from, to) == (callee, caller) {
                if seen_reverse {
                    return Err(PlanParseError::DuplicateShare { line });
                }
                shares.reverse = atoms;
                seen_reverse = true;
            } else {
                return Err(PlanParseError::ShareEndpoints { line });
            }
        }
        by_time.entry(time).or_default().push(call);
    }
    Plan::new(
        by_time
            .into_iter()
            .map(|(step, calls)| Round { step, calls })
            .collect(),
    )
    .map_err(PlanParseError::Structure)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atoms::InfoAtom;
    use crate::problem::{GoalSpec, InitialSpec, Mode, OptimizationSpec};
    use alloc::vec;

    fn universe(n: u32, s: u32, d: u32) -> InfoUniverse {
        InfoUniverse::new(n, s, d).unwrap()
    }

    fn canonical_state(universe: &InfoUniverse) -> KnowledgeState {
        let mut state = KnowledgeState::for_universe(universe);
        for i in 1..=universe.agent_count() {
            let idx = universe.index_of(&InfoAtom::secret(i)).unwrap();
            state.insert(AgentId(i), idx);
        }
        state
    }

    fn known(state: &KnowledgeState, universe: &InfoUniverse, agent: u32) -> Vec<InfoAtom> {
        state
            .known_atoms(AgentId(agent))
            .into_iter()
            .map(|idx| universe.atom(idx).clone())
            .collect()
    }

    #[test]
    fn symmetric_exchange_depth_zero() {
        let u = universe(2, 2, 0);
        let g = ConnectivityGraph::complete(2);
        let state = canonical_state(&u);
        let next = apply_call(
            &state,
            &Call::new(1, 2, 0),
            &SharePolicy::share_all(),
            &g,
            &u,
        )
        .unwrap();
        for agent in 1..=2 {
            assert_eq!(
                known(&next, &u, agent),
                vec![InfoAtom::secret(1), InfoAtom::secret(2)]
            );
        }
    }

    #[test]
    fn call_effects_include_higher_order_learning() {
        let u = universe(4, 4, 1);
        let g = ConnectivityGraph::complete(4);
        let state = canonical_state(&u);
        let next = apply_call(
            &state,
            &Call::new(1, 2, 0),
            &SharePolicy::share_all(),
            &g,
            &u,
        )
        .unwrap();
        assert_eq!(
            known(&next, &u, 1),
            vec![
                InfoAtom::secret(1),
                InfoAtom::secret(2),
                InfoAtom::kw(2, InfoAtom::secret(2)),
            ]
        );
        assert_eq!(
            known(&next, &u, 2),
            vec![
                InfoAtom::secret(1),
                InfoAtom::secret(2),
                InfoAtom::kw(1, InfoAtom::secret(1)),
            ]
        );
    }

    #[test]
    fn reverse_flow_requires_reverse_edge() {
        let u = universe(2, 2, 0);
        let g = ConnectivityGraph::from_edges(2, [(1, 2)]).unwrap();
        let state = canonical_state(&u);
        let next = apply_call(
            &state,
            &Call::new(1, 2, 0),
            &SharePolicy::share_all(),
            &g,
            &u,
        )
        .unwrap();
        assert_eq!(
            known(&next, &u, 2),
            vec![InfoAtom::secret(1), InfoAtom::secret(2)]
        );
        assert_eq!(known(&next, &u, 1), vec![InfoAtom::secret(1)]);
    }

    #[test]
    fn permitted_gating() {
        let u = universe(2, 2, 0);
        let state = canonical_state(&u);
        let s2 = u.index_of(&InfoAtom::secret(2)).unwrap();
        let complete = ConnectivityGraph::complete(2);
        // Default policy permits everything the sender knows.
        assert!(permitted(
            &u,
            &complete,
            &SharePolicy::share_all(),
            AgentId(2),
            AgentId(1),
            s2,
            &state,
            0,
            None
        )
        .unwrap());
        // Missing edge 2->1 blocks every atom.
        let one_way = ConnectivityGraph::from_edges(2, [(1, 2)]).unwrap();
        for atom in 0..u.len() as u32 {
            assert!(!permitted(
                &u,
                &one_way,
                &SharePolicy::share_all(),
                AgentId(2),
                AgentId(1),
                atom,
                &state,
                0,
                None
            )
            .unwrap());
        }
        // A bounded call sharing exactly {secret 1} does not permit secret 2.
        let mut both = canonical_state(&u);
        both.insert(AgentId(1), s2);
        let shares = vec![InfoAtom::secret(1)];
        assert!(!permitted(
            &u,
            &complete,
            &SharePolicy::Bounded { ll: 0, uu: 1 },
            AgentId(1),
            AgentId(2),
            s2,
            &both,
            0,
            Some(&shares)
        )
        .unwrap());
    }

    #[test]
    fn blocked_share_is_withheld() {
        let u = universe(2, 2, 0);
        let g = ConnectivityGraph::complete(2);
        let state = canonical_state(&u);
        let policy = SharePolicy::ShareAll {
            blocked: vec![BlockedShare {
                sender: AgentId(1),
                receiver: AgentId(2),
                atom: InfoAtom::secret(1),
                time: 0,
            }],
        };
        let next = apply_call(&state, &Call::new(1, 2, 0), &policy, &g, &u).unwrap();
        assert_eq!(known(&next, &u, 2), vec![InfoAtom::secret(2)]);
        assert_eq!(
            known(&next, &u, 1),
            vec![InfoAtom::secret(1), InfoAtom::secret(2)]
        );
    }

    #[test]
    fn round_applies_disjoint_calls_simultaneously() {
        let u = universe(4, 4, 0);
        let g = ConnectivityGraph::complete(4);
        let state = canonical_state(&u);
        let round = Round {
            step: 0,
            calls: vec![Call::new(1, 2, 0), Call::new(4, 3, 0)],
        };
        let next = apply_round(
            &state,
            &round,
            &SharePolicy::share_all(),
            &g,
            &u,
            Mode::Parallel,
        )
        .unwrap();
        assert_eq!(
            known(&next, &u, 1),
            vec![InfoAtom::secret(1), InfoAtom::secret(2)]
        );
        assert_eq!(
            known(&next, &u, 3),
            vec![InfoAtom::secret(3), InfoAtom::secret(4)]
        );
        // Empty round is the identity.
        let empty = Round {
            step: 1,
            calls: vec![],
        };
        let same = apply_round(
            &next,
            &empty,
            &SharePolicy::share_all(),
            &g,
            &u,
            Mode::Parallel,
        )
        .unwrap();
        assert_eq!(same, next);
    }

    #[test]
    fn matching_violation_reports_agent() {
        let u = universe(3, 3, 0);
        let g = ConnectivityGraph::complete(3);
        let state = canonical_state(&u);
        let round = Round {
            step: 0,
            calls: vec![Call::new(1, 2, 0), Call::new(3, 2, 0)],
        };
        let err = apply_round(
            &state,
            &round,
            &SharePolicy::share_all(),
            &g,
            &u,
            Mode::Parallel,
        )
        .unwrap_err();
        assert_eq!(err, SemanticsError::MatchingViolation { agent: 2, time: 0 });
    }

    fn default_problem(n: u32, d: u32, m: u32, mode: Mode) -> GossipProblem {
        GossipProblem {
            agents: n,
            secrets: n,
            depth: d,
            horizon: m,
            graph: ConnectivityGraph::complete(n),
            initial: InitialSpec::Canonical,
            goal: GoalSpec::full_depth(0),
            policy: SharePolicy::share_all(),
            mode,
            objective: OptimizationSpec::default(),
            strict_negatives: false,
        }
    }

    #[test]
    fn simulate_empty_plan_is_constant() {
        let problem = default_problem(3, 0, 2, Mode::Parallel);
        let u = problem.universe().unwrap();
        let trace = simulate(&Plan::empty(), &problem, &u).unwrap();
        assert_eq!(trace.len(), 3);
        assert_eq!(trace.state(0), trace.state(2));
    }

    #[test]
    fn simulate_reference_depth1_plan() {
        let problem = default_problem(4, 1, 2, Mode::Parallel);
        let u = problem.universe().unwrap();
        let plan =
            Plan::from_triples(&[(1, 2, 0), (4, 3, 0), (2, 3, 1), (1, 4, 1)]).unwrap();
        let trace = simulate(&plan, &problem, &u).unwrap();
        let end = trace.state(2);
        // Every agent knows all four secrets at time 2.
        for agent in 1..=4 {
            for secret in 1..=4 {
                let idx = u.index_of(&InfoAtom::secret(secret)).unwrap();
                assert!(end.knows(AgentId(agent), idx));
            }
        }
        // Regression: the exact number of true (agent, atom) pairs at t=2,
        // frozen from simulation.
        assert_eq!(end.total_known(), 32);
        assert_eq!(trace.state(1).total_known(), 12);
    }

    #[test]
    fn plan_text_round_trip() {
        let plan = Plan::from_triples(&[(1, 2, 0), (4, 3, 0), (2, 3, 1), (1, 4, 1)]).unwrap();
        let text = render_plan(&plan);
        assert_eq!(parse_plan(&text).unwrap(), plan);
        // The answer-set style single line parses to the same plan.
        let inline = "call(1,2,0) # leading round\ncall(4,3,0)\ncall(2,3,1)\ncall(1,4,1)";
        assert_eq!(parse_plan(inline).unwrap(), plan);
    }

    #[test]
    fn plan_text_with_shares_round_trips() {
        let mut call = Call::new(1, 2, 0);
        call.shares = Some(CallShares {
            forward: vec![InfoAtom::secret(1), InfoAtom::kw(2, InfoAtom::secret(2))],
            reverse: vec![InfoAtom::secret(2)],
        });
        let plan = Plan::new(vec![Round {
            step: 0,
            calls: vec![call],
        }])
        .unwrap();
        let text = render_plan(&plan);
        assert_eq!(parse_plan(&text).unwrap(), plan);
    }

    #[test]
    fn parse_rejects_malformed_lines() {
        assert!(matches!(
            parse_plan("call(1,2)"),
            Err(PlanParseError::Malformed { line: 1 })
        ));
        assert!(matches!(
            parse_plan("dial(1,2,0)"),
            Err(PlanParseError::ExpectedCall { line: 1 })
        ));
        assert!(matches!(
            parse_plan("call(1,2,0) share 3->4: {1}"),
            Err(PlanParseError::ShareEndpoints { line: 1 })
        ));
    }

    #[test]
    fn bounded_flow_validates_share_sets() {
        let u = universe(2, 2, 0);
        let g = ConnectivityGraph::complete(2);
        let state = canonical_state(&u);
        let policy = SharePolicy::Bounded { ll: 1, uu: 1 };
        // Missing shares is an error.
        let bare = Call::new(1, 2, 0);
        assert!(matches!(
            apply_call(&state, &bare, &policy, &g, &u),
            Err(SemanticsError::MissingShares { time: 0 })
        ));
        // Sharing an unknown atom is an error.
        let mut call = Call::new(1, 2, 0);
        call.shares = Some(CallShares {
            forward: vec![InfoAtom::secret(2)],
            reverse: vec![InfoAtom::secret(2)],
        });
        assert!(matches!(
            apply_call(&state, &call, &policy, &g, &u),
            Err(SemanticsError::SharedAtomNotKnown { agent: 1, time: 0 })
        ));
        // A valid exchange of the two known secrets.
        let mut ok = Call::new(1, 2, 0);
        ok.shares = Some(CallShares {
            forward: vec![InfoAtom::secret(1)],
            reverse: vec![InfoAtom::secret(2)],
        });
        let next = apply_call(&state, &ok, &policy, &g, &u).unwrap();
        assert_eq!(next.count_for(AgentId(1)), 2);
        assert_eq!(next.count_for(AgentId(2)), 2);
    }
}
