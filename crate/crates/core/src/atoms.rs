//! The universe of well-formed knows-whether atoms.
//!
//! An information atom is either a secret or a nested knows-whether term
//! `kw(i, a)` ("agent i knows whether a"). Nesting two knows-whether
//! operators for the same agent is excluded: introspective statements do
//! not matter for gossip planning. Atoms are bounded by an epistemic depth
//! `d` and carry a canonical total order (by depth, then outermost-to-
//! innermost agent ids, then secret id) so that knowledge states can be
//! stored as index sets over a fixed [`InfoUniverse`].

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

/// 1-based agent identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgentId(pub u32);

/// 1-based secret identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SecretId(pub u32);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for SecretId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A piece of information: a secret, or a knows-whether statement about
/// another piece of information.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum InfoAtom {
    /// Depth-0 atom: the secret itself.
    Secret(SecretId),
    /// `kw(i, a)`: agent `i` knows whether `a` holds.
    KnowsWhether(AgentId, Box<InfoAtom>),
}

impl InfoAtom {
    /// Convenience constructor for `kw(agent, inner)`.
    pub fn kw(agent: u32, inner: InfoAtom) -> Self {
        InfoAtom::KnowsWhether(AgentId(agent), Box::new(inner))
    }

    /// Convenience constructor for a bare secret.
    pub fn secret(id: u32) -> Self {
        InfoAtom::Secret(SecretId(id))
    }

    /// Nesting level: 0 for a secret, 1 + depth(inner) otherwise.
    pub fn depth(&self) -> u32 {
        match self {
            InfoAtom::Secret(_) => 0,
            InfoAtom::KnowsWhether(_, inner) => 1 + inner.depth(),
        }
    }

    /// The agent of the outermost knows-whether operator, if any.
    pub fn outer_agent(&self) -> Option<AgentId> {
        match self {
            InfoAtom::Secret(_) => None,
            InfoAtom::KnowsWhether(agent, _) => Some(*agent),
        }
    }

    /// The secret at the core of the atom.
    pub fn base_secret(&self) -> SecretId {
        match self {
            InfoAtom::Secret(k) => *k,
            InfoAtom::KnowsWhether(_, inner) => inner.base_secret(),
        }
    }

    /// Whether the atom is well-formed for `n` agents, `s` secrets, and
    /// depth bound `d`: all ids in range, depth within the bound, and no
    /// two adjacent knows-whether operators for the same agent.
    pub fn is_well_formed(&self, n: u32, s: u32, d: u32) -> bool {
        if self.depth() > d {
            return false;
        }
        self.ids_and_nesting_ok(n, s)
    }

    fn ids_and_nesting_ok(&self, n: u32, s: u32) -> bool {
        match self {
            InfoAtom::Secret(k) => k.0 >= 1 && k.0 <= s,
            InfoAtom::KnowsWhether(agent, inner) => {
                if agent.0 < 1 || agent.0 > n {
                    return false;
                }
                if inner.outer_agent() == Some(*agent) {
                    return false;
                }
                inner.ids_and_nesting_ok(n, s)
            }
        }
    }

    fn cmp_same_depth(&self, other: &Self) -> Ordering {
        match (self, other) {
            (InfoAtom::Secret(a), InfoAtom::Secret(b)) => a.cmp(b),
            (InfoAtom::KnowsWhether(i, x), InfoAtom::KnowsWhether(j, y)) => {
                i.cmp(j).then_with(|| x.cmp_same_depth(y))
            }
            (InfoAtom::Secret(_), InfoAtom::KnowsWhether(..)) => Ordering::Less,
            (InfoAtom::KnowsWhether(..), InfoAtom::Secret(_)) => Ordering::Greater,
        }
    }
}

impl Ord for InfoAtom {
    fn cmp(&self, other: &Self) -> Ordering {
        self.depth()
            .cmp(&other.depth())
            .then_with(|| self.cmp_same_depth(other))
    }
}

impl PartialOrd for InfoAtom {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for InfoAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InfoAtom::Secret(k) => write!(f, "{}", k),
            InfoAtom::KnowsWhether(agent, inner) => write!(f, "kw({},{})", agent, inner),
        }
    }
}

/// Error from [`parse_atom`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AtomParseError {
    /// Unexpected character at byte offset.
    Unexpected(usize),
    /// Input ended before the atom was complete.
    Truncated,
    /// Trailing characters after a complete atom.
    Trailing(usize),
}

impl fmt::Display for AtomParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AtomParseError::Unexpected(pos) => write!(f, "unexpected character at offset {pos}"),
            AtomParseError::Truncated => write!(f, "atom text ends prematurely"),
            AtomParseError::Trailing(pos) => write!(f, "trailing input at offset {pos}"),
        }
    }
}

impl core::error::Error for AtomParseError {}

/// Parses atom text in the same grammar atoms render to: a bare secret id,
/// or `kw(I,A)` with `A` again an atom. Whitespace around tokens is allowed.
pub fn parse_atom(text: &str) -> Result<InfoAtom, AtomParseError> {
    let bytes = text.as_bytes();
    let mut pos = 0usize;
    let atom = parse_atom_at(bytes, &mut pos)?;
    skip_ws(bytes, &mut pos);
    if pos != bytes.len() {
        return Err(AtomParseError::Trailing(pos));
    }
    Ok(atom)
}

fn skip_ws(bytes: &[u8], pos: &mut usize) {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
}

fn parse_number(bytes: &[u8], pos: &mut usize) -> Result<u32, AtomParseError> {
    skip_ws(bytes, pos);
    let start = *pos;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    if start == *pos {
        return if *pos >= bytes.len() {
            Err(AtomParseError::Truncated)
        } else {
            Err(AtomParseError::Unexpected(*pos))
        };
    }
    let mut value: u32 = 0;
    for &b in &bytes[start..*pos] {
        value = value
            .checked_mul(10)
            .and_then(|v| v.checked_add((b - b'0') as u32))
            .ok_or(AtomParseError::Unexpected(start))?;
    }
    Ok(value)
}

fn expect(bytes: &[u8], pos: &mut usize, ch: u8) -> Result<(), AtomParseError> {
    skip_ws(bytes, pos);
    if *pos >= bytes.len() {
        return Err(AtomParseError::Truncated);
    }
    if bytes[*pos] != ch {
        return Err(AtomParseError::Unexpected(*pos));
    }
    *pos += 1;
    Ok(())
}

fn parse_atom_at(bytes: &[u8], pos: &mut usize) -> Result<InfoAtom, AtomParseError> {
    skip_ws(bytes, pos);
    if bytes[*pos..].starts_with(b"kw") {
        *pos += 2;
        expect(bytes, pos, b'(')?;
        let agent = parse_number(bytes, pos)?;
        expect(bytes, pos, b',')?;
        let inner = parse_atom_at(bytes, pos)?;
        expect(bytes, pos, b')')?;
        Ok(InfoAtom::KnowsWhether(AgentId(agent), Box::new(inner)))
    } else {
        let id = parse_number(bytes, pos)?;
        Ok(InfoAtom::Secret(SecretId(id)))
    }
}

/// Closed form for the size of the well-formed universe:
/// `s` secrets plus `n*s*(n-1)^(j)` atoms at depth `j+1`.
pub fn count_atoms(n: u32, s: u32, d: u32) -> u64 {
    let (n, s) = (n as u64, s as u64);
    let mut total = s;
    let mut level = n * s;
    for _ in 0..d {
        total += level;
        level *= n.saturating_sub(1);
    }
    total
}

/// The counting recursion as used for goal thresholds over "introspective"
/// agents: `N(0) = s`, `N(D+1) = n*N(D)`, totals accumulated across depths.
/// From depth 2 on this exceeds [`count_atoms`] by the introspectively
/// nested terms the universe excludes.
pub fn count_atoms_paper(n: u32, s: u32, d: u32) -> u64 {
    let (n, s) = (n as u64, s as u64);
    let mut total = s;
    let mut level = s;
    for _ in 0..d {
        level *= n;
        total += level;
    }
    total
}

/// Errors constructing an [`InfoUniverse`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UniverseError {
    /// `n` or `s` was zero.
    EmptyDomain,
    /// The atom universe would exceed the supported size.
    TooLarge { atoms: u64 },
}

impl fmt::Display for UniverseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UniverseError::EmptyDomain => write!(f, "need at least one agent and one secret"),
            UniverseError::TooLarge { atoms } => {
                write!(f, "universe of {atoms} atoms exceeds the supported size")
            }
        }
    }
}

impl core::error::Error for UniverseError {}

/// Largest universe we are willing to materialize.
const MAX_UNIVERSE: u64 = 1 << 22;

/// All well-formed atoms for `n` agents, `s` secrets, and depth bound `d`,
/// interned in canonical order. Knowledge states index into this table.
///
/// Canonical order is depth-major, so the first [`prefix_len`](Self::prefix_len)
/// indices are exactly the atoms of depth at most `g`; a universe truncated
/// to a smaller depth bound assigns identical indices to the shared atoms.
#[derive(Debug, Clone)]
pub struct InfoUniverse {
    n: u32,
    s: u32,
    d: u32,
    atoms: Vec<InfoAtom>,
    index: BTreeMap<InfoAtom, u32>,
    depth_starts: Vec<usize>,
    /// `lift[agent-1][atom]` is the index of `kw(agent, atom)` when that
    /// atom exists in the universe.
    lift: Vec<Vec<Option<u32>>>,
}

impl InfoUniverse {
    /// Enumerates exactly the well-formed atoms, canonically ordered.
    pub fn new(n: u32, s: u32, d: u32) -> Result<Self, UniverseError> {
        if n == 0 || s == 0 {
            return Err(UniverseError::EmptyDomain);
        }
        let expected = count_atoms(n, s, d);
        if expected > MAX_UNIVERSE {
            return Err(UniverseError::TooLarge { atoms: expected });
        }

        let mut atoms: Vec<InfoAtom> = Vec::with_capacity(expected as usize);
        let mut depth_starts = Vec::with_capacity(d as usize + 2);
        depth_starts.push(0);
        for k in 1..=s {
            atoms.push(InfoAtom::secret(k));
        }
        let mut prev = 0..atoms.len();
        for _ in 1..=d {
            depth_starts.push(atoms.len());
            let start = atoms.len();
            for agent in 1..=n {
                for idx in prev.clone() {
                    let inner = &atoms[idx];
                    if inner.outer_agent() != Some(AgentId(agent)) {
                        atoms.push(InfoAtom::KnowsWhether(
                            AgentId(agent),
                            Box::new(inner.clone()),
                        ));
                    }
                }
            }
            prev = start..atoms.len();
        }
        depth_starts.push(atoms.len());
        debug_assert_eq!(atoms.len() as u64, expected);

        let index: BTreeMap<InfoAtom, u32> = atoms
            .iter()
            .enumerate()
            .map(|(i, a)| (a.clone(), i as u32))
            .collect();

        let mut lift = Vec::with_capacity(n as usize);
        for agent in 1..=n {
            let mut per_atom = Vec::with_capacity(atoms.len());
            for atom in &atoms {
                let target = if atom.depth() + 1 <= d && atom.outer_agent() != Some(AgentId(agent))
                {
                    index
                        .get(&InfoAtom::KnowsWhether(
                            AgentId(agent),
                            Box::new(atom.clone()),
                        ))
                        .copied()
                } else {
                    None
                };
                per_atom.push(target);
            }
            lift.push(per_atom);
        }

        Ok(InfoUniverse {
            n,
            s,
            d,
            atoms,
            index,
            depth_starts,
            lift,
        })
    }

    pub fn agent_count(&self) -> u32 {
        self.n
    }

    pub fn secret_count(&self) -> u32 {
        self.s
    }

    pub fn depth_bound(&self) -> u32 {
        self.d
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atom(&self, idx: u32) -> &InfoAtom {
        &self.atoms[idx as usize]
    }

    pub fn atoms(&self) -> impl Iterator<Item = &InfoAtom> {
        self.atoms.iter()
    }

    /// Index of `atom` in canonical order, if it is in this universe.
    pub fn index_of(&self, atom: &InfoAtom) -> Option<u32> {
        self.index.get(atom).copied()
    }

    /// Number of atoms of depth at most `g`; those occupy indices
    /// `0..prefix_len(g)`.
    pub fn prefix_len(&self, g: u32) -> usize {
        let g = g.min(self.d) as usize;
        self.depth_starts[g + 1]
    }

    /// Index of `kw(agent, atom(idx))` when that lift stays inside the
    /// universe (depth within bound, not introspective).
    pub fn lift(&self, agent: AgentId, idx: u32) -> Option<u32> {
        self.lift[(agent.0 - 1) as usize][idx as usize]
    }

    /// Renders the atom at `idx`.
    pub fn render(&self, idx: u32) -> String {
        use alloc::string::ToString;
        self.atoms[idx as usize].to_string()
    }

    /// The same universe truncated to depth bound `g`. Indices of shared
    /// atoms are identical to this universe's.
    pub fn truncated(&self, g: u32) -> Result<Self, UniverseError> {
        Self::new(self.n, self.s, g.min(self.d))
    }
}
