//! Shared generators for randomized suites.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use kwgossip_core::atoms::{AgentId, InfoAtom};
use kwgossip_core::calls::{Call, Plan, Round, SharePolicy};
use kwgossip_core::problem::{
    AgentGoal, ConnectivityGraph, GoalSpec, GossipProblem, InitialSpec, Mode, OptimizationSpec,
};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A weakly connected random digraph: a random spanning tree whose edges
/// get one or both directions, plus extra random arcs.
pub fn random_connected_graph(rng: &mut ChaCha8Rng, n: u32) -> ConnectivityGraph {
    let mut order: Vec<u32> = (1..=n).collect();
    order.shuffle(rng);
    let mut edges = Vec::new();
    for i in 1..n as usize {
        let a = order[i];
        let b = order[rng.gen_range(0..i)];
        match rng.gen_range(0..3) {
            0 => edges.push((a, b)),
            1 => edges.push((b, a)),
            _ => {
                edges.push((a, b));
                edges.push((b, a));
            }
        }
    }
    for a in 1..=n {
        for b in 1..=n {
            if a != b && rng.gen_bool(0.2) {
                edges.push((a, b));
            }
        }
    }
    ConnectivityGraph::from_edges(n, edges).expect("generated edges are valid")
}

/// Random small instance: share-all policy, canonical initial state, and
/// either a full-coverage goal or per-agent literals with an optional
/// negative.
pub fn random_problem(rng: &mut ChaCha8Rng, with_negatives: bool) -> GossipProblem {
    let n = rng.gen_range(2..=4);
    let d = rng.gen_range(0..=1);
    let m = rng.gen_range(1..=3);
    let mode = if rng.gen_bool(0.5) {
        Mode::Parallel
    } else {
        Mode::Sequential
    };
    let graph = random_connected_graph(rng, n);
    let goal = if with_negatives {
        let forbidden_agent = rng.gen_range(1..=n);
        let mut others: Vec<u32> = (1..=n).filter(|&x| x != forbidden_agent).collect();
        others.shuffle(rng);
        let forbidden_secret = others[0];
        let mut per_agent = vec![AgentGoal {
            agent: AgentId(forbidden_agent),
            positive: vec![],
            negative: vec![InfoAtom::secret(forbidden_secret)],
        }];
        for agent in 1..=n {
            if agent == forbidden_agent || rng.gen_bool(0.5) {
                continue;
            }
            let secret = rng.gen_range(1..=n);
            per_agent.push(AgentGoal {
                agent: AgentId(agent),
                positive: vec![InfoAtom::secret(secret)],
                negative: vec![],
            });
        }
        GoalSpec::agent_literals(per_agent)
    } else {
        GoalSpec::full_depth(0)
    };
    GossipProblem {
        agents: n,
        secrets: n,
        depth: d,
        horizon: m,
        graph,
        initial: InitialSpec::Canonical,
        goal,
        policy: SharePolicy::share_all(),
        mode,
        objective: OptimizationSpec::default(),
        strict_negatives: false,
    }
}

/// A random structurally valid plan for the problem: each step gets a
/// round with probability 0.8, built as a random matching along existing
/// edges (or one call in sequential mode).
pub fn random_valid_plan(rng: &mut ChaCha8Rng, problem: &GossipProblem) -> Plan {
    let n = problem.agents;
    let mut rounds = Vec::new();
    for t in 0..problem.horizon {
        if rng.gen_bool(0.2) {
            continue;
        }
        let mut agents: Vec<u32> = (1..=n).collect();
        agents.shuffle(rng);
        let mut calls = Vec::new();
        let mut used = vec![false; n as usize + 1];
        'outer: for i in 0..agents.len() {
            let a = agents[i];
            if used[a as usize] {
                continue;
            }
            for &b in agents.iter().skip(i + 1) {
                if used[b as usize] {
                    continue;
                }
                let caller_callee = if problem.graph.has_edge(AgentId(a), AgentId(b)) {
                    Some((a, b))
                } else if problem.graph.has_edge(AgentId(b), AgentId(a)) {
                    Some((b, a))
                } else {
                    None
                };
                if let Some((x, y)) = caller_callee {
                    if rng.gen_bool(0.7) {
                        used[x as usize] = true;
                        used[y as usize] = true;
                        calls.push(Call::new(x, y, t));
                        if problem.mode == Mode::Sequential {
                            break 'outer;
                        }
                        break;
                    }
                }
            }
        }
        if !calls.is_empty() {
            rounds.push(Round { step: t, calls });
        }
    }
    Plan::new(rounds).expect("constructed rounds are valid")
}
