//! Epistemic gossip planning.
//!
//! A group of agents each starts out knowing whether its own secret holds.
//! Agents exchange everything they are permitted to share over pairwise
//! calls, and we ask for call sequences that reach an information goal —
//! classically "everybody knows every secret", more generally goals over
//! nested knows-whether statements ("1 knows whether 2 knows whether x").
//!
//! The crate provides:
//!
//! - [`atoms`]: the universe of well-formed knows-whether atoms up to a
//!   depth bound, with canonical ordering and the two atom-counting schemes.
//! - [`calls`]: knowledge states, calls, rounds, permitted-message gating,
//!   the call effects, and plan simulation.
//! - [`problem`]: problem instances (connectivity, initial and goal
//!   specifications, share policies, objectives) and goal evaluation.
//! - [`planner`]: an optimizing search minimizing (makespan, call count)
//!   lexicographically, with anytime budgets.
//! - [`oracle`]: a ground-truth plan verifier and a deliberately naive
//!   brute-force optimizer for cross-checking the planner.
//! - [`asp`]: an ASP-Core-2 encoding generator and answer-set parser for
//!   cross-validation against an external solver.
//!
//! The crate is `no_std`-compatible (requires `alloc`); the `std` feature
//! (on by default) enables wall-clock search budgets.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod asp;
pub mod atoms;
pub mod calls;
pub mod oracle;
pub mod planner;
pub mod problem;

pub use atoms::{AgentId, InfoAtom, InfoUniverse, SecretId};
pub use calls::{Call, KnowledgeState, Plan, Round, SharePolicy, Trace};
pub use oracle::{brute_force_optimal, verify, Verdict};
pub use planner::{solve, Budget, SearchResult, SolveOutcome};
pub use problem::{
    ConnectivityGraph, CountSource, GoalSpec, GossipProblem, InitialSpec, Mode, Objective,
    OptimizationSpec, PlanCost,
};
