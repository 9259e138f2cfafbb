//! ASP-Core-2 encoding generation and answer-set parsing.
//!
//! [`emit`] renders a problem instance as the logic-program encoding, rule
//! for rule in a fixed presentation order with constants substituted, so
//! output is byte-stable and can be fed to an external solver for
//! cross-validation. [`parse_answer_set`] extracts a plan back out of
//! solver output.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::fmt::Write as _;

use crate::atoms::count_atoms;
use crate::calls::{Plan, PlanStructureError, SharePolicy};
use crate::problem::{
    CountSource, GoalSpec, GossipProblem, InitialSpec, Mode, Objective, OptimizationSpec,
};

/// Which counting recursion a count goal threshold uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountScheme {
    /// The recursion multiplying by `n` at every depth.
    Paper,
    /// The corrected recursion excluding introspective nesting.
    Corrected,
}

/// Everything the emitter needs, decoupled from the problem type so
/// configurations can be tweaked for experiments.
#[derive(Debug, Clone)]
pub struct EncodingConfig {
    pub n: u32,
    pub s: u32,
    pub d: u32,
    pub m: u32,
    pub complete_graph: bool,
    pub edges: Vec<(u32, u32)>,
    pub initial: Option<InitialSpec>,
    pub goal: Option<GoalSpec>,
    pub policy: SharePolicy,
    pub concurrency: Option<Mode>,
    pub weak_calls: bool,
    pub weak_steps: bool,
    pub weights: OptimizationSpec,
}

/// Errors from encoding generation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EmitError {
    /// The goal combines forms the encoding does not support together.
    UnsupportedGoal {
        first: &'static str,
        second: &'static str,
    },
}

impl fmt::Display for EmitError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EmitError::UnsupportedGoal { first, second } => {
                write!(f, "cannot encode goal combining {first} with {second}")
            }
        }
    }
}

impl core::error::Error for EmitError {}

impl EncodingConfig {
    pub fn from_problem(problem: &GossipProblem) -> Self {
        let (weak_calls, weak_steps) = match problem.objective.objective {
            Objective::LexMakespanThenCalls => (true, true),
            Objective::MinCalls => (true, false),
            Objective::MinMakespan => (false, true),
            Objective::Satisficing => (false, false),
        };
        EncodingConfig {
            n: problem.agents,
            s: problem.secrets,
            d: problem.depth,
            m: problem.horizon,
            complete_graph: problem.graph.is_complete(),
            edges: problem.graph.edges().collect(),
            initial: Some(problem.initial.clone()),
            goal: Some(problem.goal.clone()),
            policy: problem.policy.clone(),
            concurrency: Some(problem.mode),
            weak_calls,
            weak_steps,
            weights: problem.objective.clone(),
        }
    }

    /// Renders the encoding. Output is deterministic: identical
    /// configurations produce byte-identical text.
    pub fn render(&self) -> Result<String, EmitError> {
        let mut out = String::new();
        let (n, s, d, m) = (self.n, self.s, self.d, self.m);

        let _ = writeln!(out, "agent(1..{n}).");
        let _ = writeln!(out, "secret(1..{s}).");
        if self.complete_graph {
            let _ = writeln!(out, "connected(I,J) :- agent(I), agent(J), I!=J.");
        } else {
            for (i, j) in &self.edges {
                let _ = writeln!(out, "connected({i},{j}).");
            }
        }
        out.push('\n');

        let _ = writeln!(out, "depth(0..{d}).");
        let _ = writeln!(out, "info(K,0) :- secret(K).");
        let _ = writeln!(out, "info(kw(I,K),1) :- agent(I), info(K,0).");
        let _ = writeln!(
            out,
            "info(kw(I,kw(J,K)),D) :- agent(I;J), I!=J, info(kw(J,K),D-1), depth(D), D>1."
        );
        out.push('\n');

        let _ = writeln!(out, "time(0..{m}).");
        let _ = writeln!(out, "{{kww(I,info(K,0),0)}} :- agent(I), info(K,0).");
        let _ = writeln!(
            out,
            "{{kww(I,info(kw(J,K),D),0)}} :- agent(I), I!=J, info(kw(J,K),D)."
        );
        if let Some(initial) = &self.initial {
            self.render_initial(&mut out, initial);
        }
        out.push('\n');

        if let Some(goal) = &self.goal {
            self.render_goal(&mut out, goal)?;
            let _ = writeln!(out, "goal :- goal(T).");
            let _ = writeln!(out, ":- not goal.");
            out.push('\n');
        }

        let _ = writeln!(
            out,
            "kww(I,info(K,D),T+1) :- kww(I,info(K,D),T), agent(I), info(K,D), time(T), T<{m}."
        );
        out.push('\n');

        let _ = writeln!(
            out,
            "{{call(I,J,T)}} :- agent(I), agent(J), time(T), I!=J, connected(I,J), T<{m}."
        );
        let _ = writeln!(out, "kww(J,info(K,D),T+1) :- call(I,J,T), agent(I), agent(J),");
        let _ = writeln!(
            out,
            "  kww(I,info(K,D),T), info(K,D), permitted(I,J,K,T), time(T), T<{m}."
        );
        let _ = writeln!(
            out,
            "kww(J,info(kw(I,K),D+1),T+1) :- call(I,J,T), agent(I), agent(J), info(K,D),"
        );
        let _ = writeln!(
            out,
            "  kww(I,info(K,D),T), info(kw(I,K),D+1), permitted(I,J,K,T), time(T), T<{m}."
        );
        let _ = writeln!(out, "kww(I,info(K,D),T+1) :- call(I,J,T), agent(I), agent(J),");
        let _ = writeln!(
            out,
            "  kww(J,info(K,D),T), info(K,D), permitted(J,I,K,T), time(T), T<{m}."
        );
        let _ = writeln!(
            out,
            "kww(I,info(kw(J,K),D+1),T+1) :- call(I,J,T), agent(I), agent(J), info(K,D),"
        );
        let _ = writeln!(
            out,
            "  kww(J,info(K,D),T), info(kw(J,K),D+1), permitted(J,I,K,T), time(T), T<{m}."
        );
        out.push('\n');

        match &self.policy {
            SharePolicy::ShareAll { blocked } => {
                let _ = writeln!(
                    out,
                    "permitted(I,J,K,T) :- connected(I,J), agent(I), agent(J), info(K,_),"
                );
                let _ = writeln!(
                    out,
                    "  kww(I,info(K,_),T), not -permitted(I,J,K,T), time(T), T<{m}."
                );
                for entry in blocked {
                    let _ = writeln!(
                        out,
                        "-permitted({},{},{},{}).",
                        entry.sender, entry.receiver, entry.atom, entry.time
                    );
                }
            }
            SharePolicy::Bounded { ll, uu } => {
                let _ = writeln!(
                    out,
                    "{ll} {{permitted(I,J,K,T) : info(K,_), kww(I,info(K,_),T)}} {uu} :-"
                );
                let _ = writeln!(out, "  agent(I), agent(J), connected(I,J), time(T), T<{m}.");
            }
        }
        out.push('\n');

        match self.concurrency {
            Some(Mode::Parallel) => {
                let _ = writeln!(out, ":- 2 {{call(I,J,T): agent(J), connected(I,J);");
                let _ = writeln!(
                    out,
                    "  call(J1,I,T): agent(J1), connected(J1,I)}}, agent(I), time(T), T<{m}."
                );
                out.push('\n');
            }
            Some(Mode::Sequential) => {
                let _ = writeln!(
                    out,
                    ":- 2 {{call(I,J,T): agent(I), agent(J), connected(I,J)}}, time(T), T<{m}."
                );
                out.push('\n');
            }
            None => {}
        }

        if self.weak_calls {
            let _ = writeln!(
                out,
                ":~ call(I,J,T), connected(I,J), agent(I;J), time(T), T<{m}. [{}@{},I,J,T]",
                self.weights.call_weight, self.weights.call_priority
            );
        }
        if self.weak_steps {
            let _ = writeln!(
                out,
                ":~ not goal(T), time(T). [{}@{},T]",
                self.weights.step_weight, self.weights.step_priority
            );
        }
        Ok(out)
    }

    fn render_initial(&self, out: &mut String, initial: &InitialSpec) {
        match initial {
            InitialSpec::Canonical => {
                let _ = writeln!(out, ":- not kww(I,info(I,0),0), agent(I), info(I,0).");
                let _ = writeln!(out, ":- kww(I,info(K,0),0), agent(I), info(K,0), I!=K.");
                let _ = writeln!(out, ":- kww(I,info(K,D),0), agent(I), info(K,D), D>0.");
            }
            InitialSpec::Constrained {
                required,
                forbidden,
                secret_bounds,
                unique,
            } => {
                for (agent, atom) in required {
                    let _ = writeln!(
                        out,
                        ":- not kww({},info({},{}),0).",
                        agent,
                        atom,
                        atom.depth()
                    );
                }
                for (agent, atom) in forbidden {
                    let _ = writeln!(out, ":- kww({},info({},{}),0).", agent, atom, atom.depth());
                }
                if let Some((lo, hi)) = secret_bounds {
                    let _ = writeln!(
                        out,
                        ":- not {lo} {{kww(I,info(K,0),0) : info(K,0)}}, agent(I)."
                    );
                    let _ = writeln!(out, ":- {{kww(I,info(K,0),0) : info(K,0)}} {hi}, agent(I).");
                }
                if *unique {
                    let _ = writeln!(out, ":- 2 {{kww(I,info(K,_),0): agent(I)}}, info(K,_).");
                }
            }
        }
    }

    fn render_goal(&self, out: &mut String, goal: &GoalSpec) -> Result<(), EmitError> {
        let forms: Vec<&'static str> = [
            (!goal.per_agent.is_empty()).then_some("per-agent literals"),
            goal.global_count.map(|_| "global count"),
            goal.full_depth.map(|_| "full depth"),
        ]
        .into_iter()
        .flatten()
        .collect();
        if forms.len() > 1 {
            return Err(EmitError::UnsupportedGoal {
                first: forms[0],
                second: forms[1],
            });
        }

        let n = self.n;
        if let Some(source) = goal.global_count {
            let _ = writeln!(out, "goal(T) :-");
            let _ = writeln!(out, "  N {{kww(I,info(K,0),T): agent(I), info(K,0) ;");
            let _ = writeln!(
                out,
                "     kww(I,info(K,D),T): agent(I), info(K,D), depth(D), D>0}},"
            );
            let _ = writeln!(out, "  infoNo(N), time(T).");
            match source {
                CountSource::Constant(c) => {
                    let _ = writeln!(out, "infoNo({c}).");
                }
                CountSource::PaperRecursion => {
                    let _ = writeln!(out, "infoNo(N) :- infoNoAux(N,_,{}).", self.d);
                    let _ = writeln!(out, "infoNoAux({},{},0).", self.s, self.s);
                    let _ = writeln!(
                        out,
                        "infoNoAux({n}*N+N1,{n}*N,D+1) :- infoNoAux(N1,N,D), depth(D), depth(D+1)."
                    );
                }
                CountSource::UniverseSize => {
                    let _ = writeln!(out, "infoNo(N) :- infoNoAux(N,_,{}).", self.d);
                    let _ = writeln!(out, "infoNoAux({},{},0).", self.s, self.s);
                    let _ = writeln!(
                        out,
                        "infoNoAux({n}*N+N1,{n}*N,1) :- infoNoAux(N1,N,0), depth(1)."
                    );
                    let less = n.saturating_sub(1);
                    let _ = writeln!(
                        out,
                        "infoNoAux({less}*N+N1,{less}*N,D+1) :- infoNoAux(N1,N,D), depth(D), depth(D+1), D>0."
                    );
                }
            }
        } else if let Some(depth) = goal.full_depth {
            if depth == 0 {
                let _ = writeln!(
                    out,
                    "goal(I,T) :- agent(I), {} {{kww(I,info(K,0),T): info(K,0)}}, time(T).",
                    self.s
                );
            } else {
                let threshold = count_atoms(self.n, self.s, depth);
                let guard = if depth == self.d {
                    String::new()
                } else {
                    format!(", D<={depth}")
                };
                let _ = writeln!(
                    out,
                    "goal(I,T) :- agent(I), {threshold} {{kww(I,info(K,0),T): info(K,0) ;"
                );
                let _ = writeln!(
                    out,
                    "  kww(I,info(K,D),T): info(K,D), depth(D), D>0{guard}}}, time(T)."
                );
            }
            let _ = writeln!(out, "goal(T) :- {n} {{goal(I,T): agent(I)}}, time(T).");
        } else if !goal.per_agent.is_empty() {
            let mut agents: Vec<u32> = goal.per_agent.iter().map(|g| g.agent.0).collect();
            agents.sort_unstable();
            agents.dedup();
            for goal_spec in &goal.per_agent {
                let mut body = String::new();
                for atom in &goal_spec.positive {
                    let _ = write!(
                        body,
                        "kww({},info({},{}),T), info({},{}), ",
                        goal_spec.agent,
                        atom,
                        atom.depth(),
                        atom,
                        atom.depth()
                    );
                }
                for atom in &goal_spec.negative {
                    let _ = write!(
                        body,
                        "not kww({},info({},{}),T), info({},{}), ",
                        goal_spec.agent,
                        atom,
                        atom.depth(),
                        atom,
                        atom.depth()
                    );
                }
                let _ = writeln!(out, "goal({},T) :- {}time(T).", goal_spec.agent, body);
            }
            let _ = writeln!(
                out,
                "goal(T) :- {} {{goal(I,T): agent(I)}}, time(T).",
                agents.len()
            );
        } else {
            // Trivial goal: satisfied at every time step.
            let _ = writeln!(out, "goal(T) :- time(T).");
        }
        Ok(())
    }
}

/// Convenience wrapper: encode a problem with its own configuration.
pub fn emit(problem: &GossipProblem) -> Result<String, EmitError> {
    EncodingConfig::from_problem(problem).render()
}

/// A plan extracted from answer-set text, with the optimization values of
/// the answer when the solver printed them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedAnswer {
    pub plan: Plan,
    pub optimization: Option<Vec<i64>>,
}

/// Errors from [`parse_answer_set`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnswerParseError {
    /// A `call(...)` atom did not have the `call(i,j,t)` shape.
    MalformedCall { token: String },
    Structure(PlanStructureError),
}

impl fmt::Display for AnswerParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnswerParseError::MalformedCall { token } => {
                write!(f, "malformed call atom: {token}")
            }
            AnswerParseError::Structure(err) => write!(f, "{err}"),
        }
    }
}

impl core::error::Error for AnswerParseError {}

/// Extracts every `call(i,j,t)` atom from answer-set text, grouping calls
/// by time step into a plan; all other atoms are ignored. The last
/// `Optimization:` line, if any, is parsed as the answer's cost values.
pub fn parse_answer_set(text: &str) -> Result<ParsedAnswer, AnswerParseError> {
    let bytes = text.as_bytes();
    let mut triples: Vec<(u32, u32, u32)> = Vec::new();
    let mut i = 0;
    while let Some(offset) = text[i..].find("call(") {
        let start = i + offset;
        let boundary_ok = start == 0 || {
            let prev = bytes[start - 1];
            !prev.is_ascii_alphanumeric() && prev != b'_' && prev != b'-'
        };
        if !boundary_ok {
            i = start + 5;
            continue;
        }
        match parse_call_atom(&text[start..]) {
            Some((triple, len)) => {
                triples.push(triple);
                i = start + len;
            }
            None => {
                let token: String = text[start..]
                    .chars()
                    .take_while(|c| !c.is_whitespace())
                    .take(32)
                    .collect();
                return Err(AnswerParseError::MalformedCall { token });
            }
        }
    }

    let mut optimization = None;
    for line in text.lines() {
        let trimmed = line.trim();
        if let Some(rest) = trimmed.strip_prefix("Optimization:") {
            let values: Result<Vec<i64>, _> =
                rest.split_whitespace().map(|v| v.parse::<i64>()).collect();
            if let Ok(values) = values {
                if !values.is_empty() {
                    optimization = Some(values);
                }
            }
        }
    }

    let plan = Plan::from_triples(&triples).map_err(AnswerParseError::Structure)?;
    Ok(ParsedAnswer { plan, optimization })
}

/// Parses `call(i,j,t)` at the start of `text`, returning the triple and
/// the number of bytes consumed.
fn parse_call_atom(text: &str) -> Option<((u32, u32, u32), usize)> {
    let bytes = text.as_bytes();
    let mut pos = 5; // past "call("
    let mut numbers = [0u32; 3];
    for (slot, number) in numbers.iter_mut().enumerate() {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        *number = text[start..pos].parse().ok()?;
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let expected = if slot < 2 { b',' } else { b')' };
        if pos >= bytes.len() || bytes[pos] != expected {
            return None;
        }
        pos += 1;
    }
    Some(((numbers[0], numbers[1], numbers[2]), pos))
}
