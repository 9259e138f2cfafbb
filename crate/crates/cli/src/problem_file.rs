//! The line-oriented problem file format.
//!
//! ```text
//! # gossip among four agents, nested knowledge tracked one level deep
//! agents 4
//! secrets 4
//! depth 1
//! horizon 5
//! mode parallel
//! init canonical
//! goal full-depth 0
//! share all
//! objective lex
//! ```
//!
//! Omitting every `edge I J` line means the complete graph. `init` lines
//! other than `canonical` constrain the initial state (`require`/`forbid`/
//! `bounds L U`/`unique`); combining them with `init canonical` keeps the
//! canonical depth-0 baseline and adds the constraints. Goal lines combine
//! conjunctively: `goal full-depth [D]`, `goal count N|paper|exact`, and
//! per-agent literals `goal agent A + ATOM` / `goal agent A - ATOM`.

use anyhow::{anyhow, bail, Context, Result};
use kwgossip_core::atoms::{parse_atom, AgentId, InfoAtom};
use kwgossip_core::calls::{BlockedShare, SharePolicy};
use kwgossip_core::problem::{
    AgentGoal, ConnectivityGraph, CountSource, GoalSpec, GossipProblem, InitialSpec, Mode,
    Objective, OptimizationSpec,
};

#[derive(Default)]
struct Builder {
    agents: Option<u32>,
    secrets: Option<u32>,
    depth: Option<u32>,
    horizon: Option<u32>,
    mode: Option<Mode>,
    edges: Vec<(u32, u32)>,
    canonical: bool,
    required: Vec<(AgentId, InfoAtom)>,
    forbidden: Vec<(AgentId, InfoAtom)>,
    bounds: Option<(u32, u32)>,
    unique: bool,
    full_depth: Option<Option<u32>>,
    count: Option<CountSource>,
    agent_goals: Vec<(u32, bool, InfoAtom)>,
    policy: Option<SharePolicy>,
    blocked: Vec<BlockedShare>,
    objective: Option<Objective>,
    strict: bool,
}

/// Parses problem text into a validated instance.
pub fn parse_problem(text: &str) -> Result<GossipProblem> {
    let mut b = Builder::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        parse_line(&mut b, line).with_context(|| format!("line {}: {raw}", lineno + 1))?;
    }
    build(b)
}

fn parse_line(b: &mut Builder, line: &str) -> Result<()> {
    let mut tokens = line.split_whitespace();
    let keyword = tokens.next().unwrap_or("");
    let rest: Vec<&str> = tokens.collect();
    match keyword {
        "agents" => b.agents = Some(number(&rest, 0)?),
        "secrets" => b.secrets = Some(number(&rest, 0)?),
        "depth" => b.depth = Some(number(&rest, 0)?),
        "horizon" => b.horizon = Some(number(&rest, 0)?),
        "mode" => {
            b.mode = Some(match rest.first().copied() {
                Some("parallel") => Mode::Parallel,
                Some("sequential") => Mode::Sequential,
                other => bail!("unknown mode {other:?}"),
            })
        }
        "edge" => b.edges.push((number(&rest, 0)?, number(&rest, 1)?)),
        "init" => match rest.first().copied() {
            Some("canonical") => b.canonical = true,
            Some("require") | Some("forbid") => {
                let agent = number(&rest, 1)?;
                let sep = rest.get(2).copied().unwrap_or("");
                if !sep.eq_ignore_ascii_case("knows") {
                    bail!("expected `init {} A KNOWS atom`", rest[0]);
                }
                let atom_text = rest[3..].join("");
                let atom = parse_atom(&atom_text).map_err(|e| anyhow!("{e}"))?;
                if rest[0] == "require" {
                    b.required.push((AgentId(agent), atom));
                } else {
                    b.forbidden.push((AgentId(agent), atom));
                }
            }
            Some("bounds") => b.bounds = Some((number(&rest, 1)?, number(&rest, 2)?)),
            Some("unique") => b.unique = true,
            other => bail!("unknown init form {other:?}"),
        },
        "goal" => match rest.first().copied() {
            Some("full-depth") => {
                let depth = match rest.get(1) {
                    Some(v) => Some(v.parse::<u32>().context("full-depth value")?),
                    None => None,
                };
                b.full_depth = Some(depth);
            }
            Some("count") => {
                b.count = Some(match rest.get(1).copied() {
                    Some("paper") => CountSource::PaperRecursion,
                    Some("exact") => CountSource::UniverseSize,
                    Some(v) => CountSource::Constant(v.parse().context("count value")?),
                    None => bail!("goal count needs a value"),
                })
            }
            Some("agent") => {
                let agent = number(&rest, 1)?;
                let sign = rest.get(2).copied().unwrap_or("");
                let positive = match sign {
                    "+" => true,
                    "-" => false,
                    other => bail!("expected + or -, got {other:?}"),
                };
                let atom_text = rest[3..].join("");
                let atom = parse_atom(&atom_text).map_err(|e| anyhow!("{e}"))?;
                b.agent_goals.push((agent, positive, atom));
            }
            other => bail!("unknown goal form {other:?}"),
        },
        "share" => match rest.first().copied() {
            Some("all") => b.policy = Some(SharePolicy::share_all()),
            Some("bounds") => {
                b.policy = Some(SharePolicy::Bounded {
                    ll: number(&rest, 1)?,
                    uu: number(&rest, 2)?,
                })
            }
            Some("block") => {
                let atom_text = rest.get(3).copied().unwrap_or("");
                b.blocked.push(BlockedShare {
                    sender: AgentId(number(&rest, 1)?),
                    receiver: AgentId(number(&rest, 2)?),
                    atom: parse_atom(atom_text).map_err(|e| anyhow!("{e}"))?,
                    time: number(&rest, 4)?,
                });
            }
            other => bail!("unknown share form {other:?}"),
        },
        "objective" => {
            b.objective = Some(match rest.first().copied() {
                Some("lex") => Objective::LexMakespanThenCalls,
                Some("calls") => Objective::MinCalls,
                Some("makespan") => Objective::MinMakespan,
                Some("none") => Objective::Satisficing,
                other => bail!("unknown objective {other:?}"),
            })
        }
        "strict" => b.strict = true,
        other => bail!("unknown directive {other:?}"),
    }
    Ok(())
}

fn number(tokens: &[&str], index: usize) -> Result<u32> {
    tokens
        .get(index)
        .ok_or_else(|| anyhow!("missing argument"))?
        .parse()
        .context("expected a number")
}

fn build(b: Builder) -> Result<GossipProblem> {
    let agents = b.agents.ok_or_else(|| anyhow!("missing `agents N` line"))?;
    let secrets = b.secrets.unwrap_or(agents);
    let depth = b.depth.unwrap_or(1);
    let horizon = b.horizon.unwrap_or(5);
    let mode = b.mode.unwrap_or(Mode::Parallel);

    let graph = if b.edges.is_empty() {
        ConnectivityGraph::complete(agents)
    } else {
        ConnectivityGraph::from_edges(agents, b.edges).map_err(|e| anyhow!("{e}"))?
    };

    let constrained =
        !b.required.is_empty() || !b.forbidden.is_empty() || b.bounds.is_some() || b.unique;
    let initial = if constrained {
        let mut required = b.required;
        let mut bounds = b.bounds;
        if b.canonical {
            for i in 1..=agents {
                let own = (AgentId(i), InfoAtom::secret(i));
                if !required.contains(&own) {
                    required.push(own);
                }
            }
            bounds = bounds.or(Some((1, 1)));
        }
        InitialSpec::Constrained {
            required,
            forbidden: b.forbidden,
            secret_bounds: bounds,
            unique: b.unique,
        }
    } else {
        InitialSpec::Canonical
    };

    let mut goal = GoalSpec::trivial();
    if let Some(fd) = b.full_depth {
        goal.full_depth = Some(fd.unwrap_or(depth));
    }
    goal.global_count = b.count;
    for (agent, positive, atom) in b.agent_goals {
        let entry = goal
            .per_agent
            .iter_mut()
            .find(|g| g.agent.0 == agent);
        let entry = match entry {
            Some(e) => e,
            None => {
                goal.per_agent.push(AgentGoal {
                    agent: AgentId(agent),
                    positive: Vec::new(),
                    negative: Vec::new(),
                });
                goal.per_agent.last_mut().expect("just pushed")
            }
        };
        if positive {
            entry.positive.push(atom);
        } else {
            entry.negative.push(atom);
        }
    }
    if goal.per_agent.is_empty() && goal.global_count.is_none() && goal.full_depth.is_none() {
        goal.full_depth = Some(0);
    }

    let mut policy = b.policy.unwrap_or_else(SharePolicy::share_all);
    if !b.blocked.is_empty() {
        match &mut policy {
            SharePolicy::ShareAll { blocked } => blocked.extend(b.blocked),
            SharePolicy::Bounded { .. } => {
                bail!("share block lines require the share-all policy")
            }
        }
    }

    let problem = GossipProblem {
        agents,
        secrets,
        depth,
        horizon,
        graph,
        initial,
        goal,
        policy,
        mode,
        objective: OptimizationSpec {
            objective: b.objective.unwrap_or_default(),
            ..OptimizationSpec::default()
        },
        strict_negatives: b.strict,
    };
    problem.validate().map_err(|e| anyhow!("{e}"))?;
    Ok(problem)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_uses_defaults() {
        let p = parse_problem("agents 4\n").unwrap();
        assert_eq!(p.secrets, 4);
        assert_eq!(p.depth, 1);
        assert_eq!(p.horizon, 5);
        assert_eq!(p.mode, Mode::Parallel);
        assert!(p.graph.is_complete());
        assert_eq!(p.goal, GoalSpec::full_depth(0));
    }

    #[test]
    fn full_file_round_trip() {
        let text = "\
# a directed variant-N instance
agents 3
secrets 3
depth 0
horizon 3
mode sequential
edge 1 2
edge 2 1
edge 2 3
init canonical
goal agent 1 + 1
goal agent 1 + 3
goal agent 1 - 2
share all
objective lex
strict
";
        let p = parse_problem(text).unwrap();
        assert_eq!(p.mode, Mode::Sequential);
        assert!(!p.graph.is_complete());
        assert!(p.strict_negatives);
        assert_eq!(p.goal.per_agent.len(), 1);
        assert_eq!(p.goal.per_agent[0].negative, vec![InfoAtom::secret(2)]);
    }

    #[test]
    fn canonical_with_extra_requirement() {
        let text = "\
agents 3
depth 1
init canonical
init require 1 KNOWS kw(2,2)
";
        let p = parse_problem(text).unwrap();
        let InitialSpec::Constrained {
            required,
            secret_bounds,
            ..
        } = &p.initial
        else {
            panic!("expected constrained initial");
        };
        assert_eq!(*secret_bounds, Some((1, 1)));
        assert!(required.contains(&(AgentId(1), InfoAtom::kw(2, InfoAtom::secret(2)))));
        assert!(required.contains(&(AgentId(2), InfoAtom::secret(2))));
    }

    #[test]
    fn goal_count_forms() {
        let p = parse_problem("agents 4\ngoal count paper\n").unwrap();
        assert_eq!(p.goal.global_count, Some(CountSource::PaperRecursion));
        let p = parse_problem("agents 4\ngoal count exact\n").unwrap();
        assert_eq!(p.goal.global_count, Some(CountSource::UniverseSize));
        let p = parse_problem("agents 4\ngoal count 20\n").unwrap();
        assert_eq!(p.goal.global_count, Some(CountSource::Constant(20)));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse_problem("agents 4\nmode festive\n").is_err());
        assert!(parse_problem("secrets 4\n").is_err());
        assert!(parse_problem("agents 4\ngoal agent 1 * 2\n").is_err());
        // Validation runs: share bounds inverted.
        assert!(parse_problem("agents 4\nshare bounds 3 1\n").is_err());
    }
}
