//! Query AST, DSL parser, Chandra-Merlin normalization, structural shape
//! analysis, and self-join factorization.
//!
//! The DSL is a plain text form of unions of conjunctive queries over
//! binary atoms:
//!
//! ```text
//! ucq  := cq ('|' cq)*
//! cq   := atom ('&' atom)*
//! atom := SYMBOL '(' var ',' var ')'
//! ```
//!
//! Relation symbols start with an uppercase letter, variables with a
//! lowercase one; every variable is existentially quantified.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::structure::{
    hom_exists, isomorphic, FiniteStructure, Signature, StructureError,
};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum QueryError {
    Parse { line: usize, col: usize, msg: String },
    Input(String),
}

impl fmt::Display for QueryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QueryError::Parse { line, col, msg } => {
                write!(f, "parse error at {line}:{col}: {msg}")
            }
            QueryError::Input(m) => write!(f, "input error: {m}"),
        }
    }
}

impl From<StructureError> for QueryError {
    fn from(e: StructureError) -> QueryError {
        QueryError::Input(format!("{e}"))
    }
}

/// A binary atom `symbol(from, to)`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Atom {
    pub symbol: String,
    pub from: usize,
    pub to: usize,
}

/// An existentially quantified conjunction of binary atoms.
///
/// Variables are interned; `vars` lists their names in first-occurrence
/// order and atoms refer to them by index.  The atom set is deduplicated
/// by construction.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct ConjunctiveQuery {
    vars: Vec<String>,
    atoms: BTreeSet<Atom>,
}

impl ConjunctiveQuery {
    /// Build from named atoms; variables are interned in first-occurrence
    /// order (scanning atoms in the given order).
    pub fn from_atoms(atoms: &[(&str, &str, &str)]) -> Result<ConjunctiveQuery, QueryError> {
        if atoms.is_empty() {
            return Err(QueryError::Input("conjunctive query needs at least one atom".into()));
        }
        let mut vars: Vec<String> = Vec::new();
        let mut index = BTreeMap::new();
        let intern = |name: &str, vars: &mut Vec<String>, index: &mut BTreeMap<String, usize>| {
            *index.entry(name.to_string()).or_insert_with(|| {
                vars.push(name.to_string());
                vars.len() - 1
            })
        };
        let mut set = BTreeSet::new();
        for (sym, x, y) in atoms {
            let from = intern(x, &mut vars, &mut index);
            let to = intern(y, &mut vars, &mut index);
            set.insert(Atom {
                symbol: sym.to_string(),
                from,
                to,
            });
        }
        Ok(ConjunctiveQuery { vars, atoms: set })
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn atoms(&self) -> impl Iterator<Item = &Atom> {
        self.atoms.iter()
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    /// Distinct relation symbols, sorted.
    pub fn symbols(&self) -> Vec<String> {
        let mut s: Vec<String> = self
            .atoms
            .iter()
            .map(|a| a.symbol.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        s.sort();
        s
    }

    pub fn signature(&self) -> Signature {
        Signature::new(self.symbols().into_iter().map(|s| (s, 2)).collect()).unwrap()
    }

    /// The structure whose elements are this query's variables and whose
    /// tuples are its atoms.
    pub fn canonical_database(&self) -> FiniteStructure {
        let mut s = FiniteStructure::with_labels(self.signature(), self.vars.clone());
        for a in &self.atoms {
            s.add_tuple(&a.symbol, vec![a.from, a.to]).unwrap();
        }
        s
    }

    pub fn is_connected(&self) -> bool {
        self.canonical_database().is_connected()
    }

    /// Rebuild from a sub-set of atoms, dropping orphaned variables and
    /// re-interning the remainder in first-occurrence order.
    fn restrict_to_atoms(&self, keep: &[&Atom]) -> ConjunctiveQuery {
        let named: Vec<(String, String, String)> = keep
            .iter()
            .map(|a| {
                (
                    a.symbol.clone(),
                    self.vars[a.from].clone(),
                    self.vars[a.to].clone(),
                )
            })
            .collect();
        let refs: Vec<(&str, &str, &str)> = named
            .iter()
            .map(|(s, x, y)| (s.as_str(), x.as_str(), y.as_str()))
            .collect();
        ConjunctiveQuery::from_atoms(&refs).unwrap()
    }

    /// Pretty form with the original variable names.
    pub fn display(&self) -> String {
        let parts: Vec<String> = self
            .atoms
            .iter()
            .map(|a| format!("{}({},{})", a.symbol, self.vars[a.from], self.vars[a.to]))
            .collect();
        parts.join(" & ")
    }

    /// Normalized pretty form: atoms in sorted order, variables renamed
    /// v1, v2, ... in first-occurrence order of that listing.
    pub fn display_normalized(&self) -> String {
        let mut rename: BTreeMap<usize, usize> = BTreeMap::new();
        for a in &self.atoms {
            for v in [a.from, a.to] {
                let next = rename.len() + 1;
                rename.entry(v).or_insert(next);
            }
        }
        let parts: Vec<String> = self
            .atoms
            .iter()
            .map(|a| format!("{}(v{},v{})", a.symbol, rename[&a.from], rename[&a.to]))
            .collect();
        parts.join(" & ")
    }
}

/// A non-empty disjunction of conjunctive queries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ucq {
    pub disjuncts: Vec<ConjunctiveQuery>,
}

impl Ucq {
    pub fn new(disjuncts: Vec<ConjunctiveQuery>) -> Result<Ucq, QueryError> {
        if disjuncts.is_empty() {
            return Err(QueryError::Input("union of queries must be non-empty".into()));
        }
        Ok(Ucq { disjuncts })
    }

    pub fn single(cq: ConjunctiveQuery) -> Ucq {
        Ucq { disjuncts: vec![cq] }
    }

    /// Distinct symbols across all disjuncts, sorted.
    pub fn symbols(&self) -> Vec<String> {
        let mut s = BTreeSet::new();
        for d in &self.disjuncts {
            s.extend(d.symbols());
        }
        s.into_iter().collect()
    }

    pub fn display(&self) -> String {
        let parts: Vec<String> = self.disjuncts.iter().map(|d| d.display()).collect();
        parts.join(" | ")
    }

    pub fn display_normalized(&self) -> String {
        let parts: Vec<String> = self
            .disjuncts
            .iter()
            .map(|d| d.display_normalized())
            .collect();
        parts.join(" | ")
    }
}

// ---------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Symbol(String),
    Var(String),
    LParen,
    RParen,
    Comma,
    Amp,
    Pipe,
    Eof,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Lexer<'a> {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
            line: 1,
            col: 1,
        }
    }

    fn err(&self, msg: &str) -> QueryError {
        QueryError::Parse {
            line: self.line,
            col: self.col,
            msg: msg.to_string(),
        }
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.src.get(self.pos).copied()?;
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn skip_ws(&mut self) {
        while let Some(&c) = self.src.get(self.pos) {
            if c.is_ascii_whitespace() {
                self.bump();
            } else if c == b'#' {
                while let Some(&c) = self.src.get(self.pos) {
                    if c == b'\n' {
                        break;
                    }
                    self.bump();
                }
            } else {
                break;
            }
        }
    }

    fn next(&mut self) -> Result<Tok, QueryError> {
        self.skip_ws();
        let Some(&c) = self.src.get(self.pos) else {
            return Ok(Tok::Eof);
        };
        match c {
            b'(' => {
                self.bump();
                Ok(Tok::LParen)
            }
            b')' => {
                self.bump();
                Ok(Tok::RParen)
            }
            b',' => {
                self.bump();
                Ok(Tok::Comma)
            }
            b'&' => {
                self.bump();
                Ok(Tok::Amp)
            }
            b'|' => {
                self.bump();
                Ok(Tok::Pipe)
            }
            c if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while let Some(&c) = self.src.get(self.pos) {
                    if c.is_ascii_alphanumeric() || c == b'_' {
                        self.bump();
                    } else {
                        break;
                    }
                }
                let word = core::str::from_utf8(&self.src[start..self.pos])
                    .unwrap()
                    .to_string();
                if c.is_ascii_uppercase() {
                    Ok(Tok::Symbol(word))
                } else {
                    Ok(Tok::Var(word))
                }
            }
            other => Err(self.err(&format!("unexpected character {:?}", other as char))),
        }
    }
}

/// Parse the UCQ DSL.  Duplicate atoms collapse; every variable is
/// existential.
pub fn parse_ucq(text: &str) -> Result<Ucq, QueryError> {
    let mut lex = Lexer::new(text);
    let mut disjuncts = Vec::new();
    let mut atoms: Vec<(String, String, String)> = Vec::new();
    let mut tok = lex.next()?;
    loop {
        // One atom.
        let sym = match tok {
            Tok::Symbol(s) => s,
            _ => return Err(lex.err("expected a relation symbol (uppercase)")),
        };
        if lex.next()? != Tok::LParen {
            return Err(lex.err("expected '('"));
        }
        let x = match lex.next()? {
            Tok::Var(v) => v,
            _ => return Err(lex.err("expected a variable (lowercase)")),
        };
        if lex.next()? != Tok::Comma {
            return Err(lex.err("expected ','"));
        }
        let y = match lex.next()? {
            Tok::Var(v) => v,
            _ => return Err(lex.err("expected a variable (lowercase)")),
        };
        if lex.next()? != Tok::RParen {
            return Err(lex.err("expected ')'"));
        }
        atoms.push((sym, x, y));
        tok = lex.next()?;
        match tok {
            Tok::Amp => {
                tok = lex.next()?;
            }
            Tok::Pipe | Tok::Eof => {
                let refs: Vec<(&str, &str, &str)> = atoms
                    .iter()
                    .map(|(s, a, b)| (s.as_str(), a.as_str(), b.as_str()))
                    .collect();
                disjuncts.push(ConjunctiveQuery::from_atoms(&refs)?);
                atoms.clear();
                if tok == Tok::Eof {
                    break;
                }
                tok = lex.next()?;
            }
            _ => return Err(lex.err("expected '&', '|', or end of input")),
        }
    }
    Ucq::new(disjuncts)
}

// ---------------------------------------------------------------------
// Semantics
// ---------------------------------------------------------------------

/// Does `μ` hold on `d`?  True iff some disjunct's canonical database
/// maps homomorphically into `d`.  Symbols of `μ` missing from `d` are
/// treated as empty relations.
pub fn holds(mu: &Ucq, d: &FiniteStructure) -> Result<bool, QueryError> {
    for cq in &mu.disjuncts {
        if holds_cq(cq, d)? {
            return Ok(true);
        }
    }
    Ok(false)
}

pub fn holds_cq(cq: &ConjunctiveQuery, d: &FiniteStructure) -> Result<bool, QueryError> {
    // Align signatures: the join signature is the union.
    let mut symbols: Vec<(String, usize)> =
        d.signature().symbols().map(|(n, a)| (n.to_string(), a)).collect();
    for s in cq.symbols() {
        match d.signature().index_of(&s) {
            Some(i) => {
                if d.signature().arity(i) != 2 {
                    return Err(QueryError::Input(format!(
                        "symbol {s} is not binary in the database"
                    )));
                }
            }
            None => symbols.push((s, 2)),
        }
    }
    let sig = Signature::new(symbols).map_err(QueryError::from)?;
    let canon = cq.canonical_database().align_to(&sig)?;
    let target = d.align_to(&sig)?;
    Ok(hom_exists(&canon, &target)?)
}

/// `q` implies `q2` iff the canonical database of `q2` maps into the
/// canonical database of `q`.
pub fn implies(q: &ConjunctiveQuery, q2: &ConjunctiveQuery) -> Result<bool, QueryError> {
    holds_cq(q2, &q.canonical_database())
}

pub fn equivalent(q: &ConjunctiveQuery, q2: &ConjunctiveQuery) -> Result<bool, QueryError> {
    Ok(implies(q, q2)? && implies(q2, q)?)
}

/// Greedy Chandra-Merlin minimization: attempt atom removals in
/// deterministic order, keeping a removal iff the reduced query is
/// equivalent; repeat to a fixpoint.
pub fn minimize(q: &ConjunctiveQuery) -> Result<ConjunctiveQuery, QueryError> {
    let mut current = q.clone();
    loop {
        let atoms: Vec<Atom> = current.atoms.iter().cloned().collect();
        if atoms.len() == 1 {
            return Ok(current);
        }
        let mut removed = false;
        for victim in &atoms {
            let keep: Vec<&Atom> = current.atoms.iter().filter(|a| *a != victim).collect();
            if keep.is_empty() {
                continue;
            }
            let candidate = current.restrict_to_atoms(&keep);
            if equivalent(&current, &candidate)? {
                current = candidate;
                removed = true;
                break;
            }
        }
        if !removed {
            return Ok(current);
        }
    }
}

pub fn is_minimal(q: &ConjunctiveQuery) -> Result<bool, QueryError> {
    Ok(minimize(q)?.atom_count() == q.atom_count())
}

/// One step of the normalization trace.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TraceStep {
    Minimized { from: String, to: String },
    SplitComponents { from: String, components: Vec<String> },
    DroppedImpliedComponent { kept: String, dropped: String },
    DroppedImpliedDisjunct { kept: String, dropped: String },
    DedupedIsomorphic { kept: String, dropped: String },
}

impl fmt::Display for TraceStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceStep::Minimized { from, to } => write!(f, "minimized [{from}] to [{to}]"),
            TraceStep::SplitComponents { from, components } => {
                write!(f, "split disconnected [{from}] into {}", components.join("; "))
            }
            TraceStep::DroppedImpliedComponent { kept, dropped } => {
                write!(f, "dropped component [{dropped}] implied within the conjunction by [{kept}]")
            }
            TraceStep::DroppedImpliedDisjunct { kept, dropped } => {
                write!(f, "dropped disjunct [{dropped}]: it implies [{kept}]")
            }
            TraceStep::DedupedIsomorphic { kept, dropped } => {
                write!(f, "deduplicated [{dropped}] (isomorphic to [{kept}])")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Normalized {
    /// Minimal, connected, pairwise non-equivalent queries.
    pub queries: Vec<ConjunctiveQuery>,
    pub trace: Vec<TraceStep>,
}

/// Normalize a union of conjunctive queries:
/// minimize every disjunct, split disconnected disjuncts into connected
/// components (classification distributes over components), drop
/// disjuncts that imply another remaining disjunct, and deduplicate up
/// to isomorphism of canonical databases.
pub fn normalize(mu: &Ucq) -> Result<Normalized, QueryError> {
    let mut trace = Vec::new();
    let mut pool: Vec<ConjunctiveQuery> = Vec::new();

    for d in &mu.disjuncts {
        let m = minimize(d)?;
        if m.atom_count() != d.atom_count() {
            trace.push(TraceStep::Minimized {
                from: d.display(),
                to: m.display(),
            });
        }
        let canon = m.canonical_database();
        let comps = canon.components();
        if comps.len() <= 1 {
            pool.push(m);
            continue;
        }
        // Split into component queries.
        let mut parts: Vec<ConjunctiveQuery> = Vec::new();
        for comp in &comps {
            let members: BTreeSet<usize> = comp.iter().copied().collect();
            let keep: Vec<&Atom> = m
                .atoms
                .iter()
                .filter(|a| members.contains(&a.from))
                .collect();
            if !keep.is_empty() {
                parts.push(m.restrict_to_atoms(&keep));
            }
        }
        trace.push(TraceStep::SplitComponents {
            from: m.display(),
            components: parts.iter().map(|p| p.display()).collect(),
        });
        // Within a conjunction, a component implied by another is
        // redundant: if component i implies component j, drop j.
        let mut kept: Vec<ConjunctiveQuery> = Vec::new();
        'parts: for (i, p) in parts.iter().enumerate() {
            for (j, q) in parts.iter().enumerate() {
                if i == j {
                    continue;
                }
                let implied = implies(q, p)?;
                let tie_break = !(implies(p, q)?) || j < i;
                if implied && tie_break {
                    trace.push(TraceStep::DroppedImpliedComponent {
                        kept: q.display(),
                        dropped: p.display(),
                    });
                    continue 'parts;
                }
            }
            kept.push(p.clone());
        }
        pool.extend(kept);
    }

    // Drop disjuncts that imply another remaining disjunct.  For mutual
    // implication keep the earlier one.
    let mut alive: Vec<bool> = vec![true; pool.len()];
    for i in 0..pool.len() {
        if !alive[i] {
            continue;
        }
        for j in 0..pool.len() {
            if i == j || !alive[j] || !alive[i] {
                continue;
            }
            if implies(&pool[i], &pool[j])? {
                // pool[i] implies pool[j]; i is redundant unless mutual
                // implication with an earlier index.
                if implies(&pool[j], &pool[i])? && i < j {
                    continue;
                }
                alive[i] = false;
                trace.push(TraceStep::DroppedImpliedDisjunct {
                    kept: pool[j].display(),
                    dropped: pool[i].display(),
                });
            }
        }
    }
    let mut queries: Vec<ConjunctiveQuery> = pool
        .into_iter()
        .zip(alive)
        .filter_map(|(q, a)| a.then_some(q))
        .collect();

    // Deduplicate up to isomorphism of canonical databases.
    let mut uniq: Vec<ConjunctiveQuery> = Vec::new();
    for q in queries.drain(..) {
        if let Some(prev) = uniq
            .iter()
            .find(|p| isomorphic(&p.canonical_database(), &q.canonical_database()))
        {
            trace.push(TraceStep::DedupedIsomorphic {
                kept: prev.display(),
                dropped: q.display(),
            });
        } else {
            uniq.push(q);
        }
    }
    Ok(Normalized {
        queries: uniq,
        trace,
    })
}

// ---------------------------------------------------------------------
// Shape analysis
// ---------------------------------------------------------------------

/// Structural classification of a minimized connected query.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryShape {
    pub connected: bool,
    pub is_loop_query: bool,
    pub is_edge_query: bool,
    pub is_twocycle_query: bool,
    /// The undirected multigraph of the canonical database contains a
    /// cycle of length >= 3, equivalently the underlying simple graph
    /// (loops removed, parallel classes collapsed) has a cycle.
    pub multigraph_cycle_ge3: bool,
    /// Witness for a cycle >= 3 (variable names), when present.
    pub cycle_witness: Option<Vec<String>>,
    /// Loop-free, no antiparallel/parallel pair, simple underlying graph
    /// connected and acyclic.
    pub is_tree: bool,
}

pub fn loop_query() -> ConjunctiveQuery {
    ConjunctiveQuery::from_atoms(&[("R", "x", "x")]).unwrap()
}

pub fn edge_query() -> ConjunctiveQuery {
    ConjunctiveQuery::from_atoms(&[("R", "x", "y")]).unwrap()
}

pub fn twocycle_query() -> ConjunctiveQuery {
    ConjunctiveQuery::from_atoms(&[("R", "x", "y"), ("R", "y", "x")]).unwrap()
}

/// Shape of a minimized connected query.
pub fn shape(q: &ConjunctiveQuery) -> Result<QueryShape, QueryError> {
    if !q.is_connected() {
        return Err(QueryError::Input("shape requires a connected query".into()));
    }
    if !is_minimal(q)? {
        return Err(QueryError::Input("shape requires a minimized query".into()));
    }
    let canon = q.canonical_database();
    let is_loop_query = isomorphic(&canon, &loop_query().canonical_database());
    let is_edge_query = isomorphic(&canon, &edge_query().canonical_database());
    let is_twocycle_query = isomorphic(&canon, &twocycle_query().canonical_database());

    // Underlying simple undirected graph: loops removed, parallel edge
    // classes (same unordered pair, any symbols/directions) collapsed.
    let n = canon.size();
    let mut simple: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut has_loop = false;
    let mut has_parallel_pair = false;
    let mut directed_pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut pair_multiplicity: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for a in q.atoms() {
        if a.from == a.to {
            has_loop = true;
            continue;
        }
        let key = (a.from.min(a.to), a.from.max(a.to));
        simple.insert(key);
        *pair_multiplicity.entry(key).or_insert(0) += 1;
        directed_pairs.insert((a.from, a.to));
    }
    has_parallel_pair |= pair_multiplicity.values().any(|&m| m >= 2);

    let cycle_witness = simple_cycle(n, &simple).map(|cyc| {
        cyc.into_iter().map(|v| q.vars[v].clone()).collect::<Vec<String>>()
    });
    let multigraph_cycle_ge3 = cycle_witness.is_some();

    let simple_connected = {
        let mut s = FiniteStructure::new(Signature::single_binary(), n);
        for &(u, v) in &simple {
            s.add_tuple_idx(0, vec![u, v]).unwrap();
        }
        s.is_connected()
    };
    let is_tree =
        !has_loop && !has_parallel_pair && simple_connected && !multigraph_cycle_ge3;
    Ok(QueryShape {
        connected: true,
        is_loop_query,
        is_edge_query,
        is_twocycle_query,
        multigraph_cycle_ge3,
        cycle_witness,
        is_tree,
    })
}

/// Find a cycle in a simple undirected graph, returned as a closed vertex
/// sequence without the repeated endpoint.  Deterministic (DFS from the
/// least vertex, sorted adjacency).  Vertices are marked at discovery,
/// so an edge to an in-progress non-parent vertex is always a back edge
/// to an ancestor on the current path.
fn simple_cycle(n: usize, edges: &BTreeSet<(usize, usize)>) -> Option<Vec<usize>> {
    const WHITE: u8 = 0;
    const GRAY: u8 = 1;
    const BLACK: u8 = 2;
    let mut adj = vec![Vec::new(); n];
    for &(u, v) in edges {
        adj[u].push(v);
        adj[v].push(u);
    }
    for a in &mut adj {
        a.sort_unstable();
    }
    let mut parent: Vec<usize> = vec![usize::MAX; n];
    let mut state = vec![WHITE; n];
    for start in 0..n {
        if state[start] != WHITE {
            continue;
        }
        state[start] = GRAY;
        let mut stack: Vec<(usize, usize)> = vec![(start, 0)];
        while let Some(&mut (v, ref mut i)) = stack.last_mut() {
            if *i < adj[v].len() {
                let w = adj[v][*i];
                *i += 1;
                match state[w] {
                    WHITE => {
                        parent[w] = v;
                        state[w] = GRAY;
                        stack.push((w, 0));
                    }
                    GRAY if w != parent[v] => {
                        // Back edge: w is an ancestor on the current
                        // path.
                        let mut path = vec![v];
                        let mut cur = v;
                        while cur != w {
                            cur = parent[cur];
                            path.push(cur);
                        }
                        path.reverse();
                        return Some(path);
                    }
                    _ => {}
                }
            } else {
                state[v] = BLACK;
                stack.pop();
            }
        }
    }
    None
}

// ---------------------------------------------------------------------
// Self-join factorization
// ---------------------------------------------------------------------

/// An arity-preserving symbol renaming.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymbolMap {
    pub map: BTreeMap<String, String>,
}

impl SymbolMap {
    pub fn identity(symbols: &[String]) -> SymbolMap {
        SymbolMap {
            map: symbols.iter().map(|s| (s.clone(), s.clone())).collect(),
        }
    }

    pub fn apply(&self, symbol: &str) -> Option<&str> {
        self.map.get(symbol).map(|s| s.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Factorization {
    /// Self-join-free union: every symbol appears at most once in the
    /// whole union.
    pub nu: Ucq,
    pub symbol_map: SymbolMap,
}

/// Write `μ` as `f(ν)` with ν self-join-free and f ν-injective.  Every
/// occurrence of a symbol with `k >= 2` occurrences across the union is
/// renamed to fresh symbols `R_0, ..., R_{k-1}` in deterministic atom
/// order; single-occurrence symbols keep their names.
pub fn factorize_self_joins(mu: &Ucq) -> Result<Factorization, QueryError> {
    for d in &mu.disjuncts {
        if !is_minimal(d)? {
            return Err(QueryError::Input(format!(
                "factorization requires minimal disjuncts; [{}] is not minimal",
                d.display()
            )));
        }
    }
    let mut occurrences: BTreeMap<String, usize> = BTreeMap::new();
    for d in &mu.disjuncts {
        for a in d.atoms() {
            *occurrences.entry(a.symbol.clone()).or_insert(0) += 1;
        }
    }
    let mut counters: BTreeMap<String, usize> = BTreeMap::new();
    let mut map = BTreeMap::new();
    let mut new_disjuncts = Vec::new();
    for d in &mu.disjuncts {
        let mut atoms: Vec<(String, String, String)> = Vec::new();
        for a in d.atoms() {
            let fresh = if occurrences[&a.symbol] >= 2 {
                let c = counters.entry(a.symbol.clone()).or_insert(0);
                let name = format!("{}_{}", a.symbol, *c);
                *c += 1;
                name
            } else {
                a.symbol.clone()
            };
            map.insert(fresh.clone(), a.symbol.clone());
            atoms.push((fresh, d.vars[a.from].clone(), d.vars[a.to].clone()));
        }
        let refs: Vec<(&str, &str, &str)> = atoms
            .iter()
            .map(|(s, x, y)| (s.as_str(), x.as_str(), y.as_str()))
            .collect();
        new_disjuncts.push(ConjunctiveQuery::from_atoms(&refs)?);
    }
    let nu = Ucq::new(new_disjuncts)?;
    let f = SymbolMap { map };
    debug_assert!(is_self_join_free(&nu));
    debug_assert!(is_nu_injective(&f, &nu));
    Ok(Factorization { nu, symbol_map: f })
}

/// Every relation symbol appears at most once in the whole union.
pub fn is_self_join_free(nu: &Ucq) -> bool {
    let mut seen = BTreeSet::new();
    for d in &nu.disjuncts {
        for a in d.atoms() {
            if !seen.insert(a.symbol.clone()) {
                return false;
            }
        }
    }
    true
}

/// ν-injectivity: whenever some query of ν contains atoms `R(x̄)` and
/// `S(x̄)` on the same variable tuple, `f(R) != f(S)`.
pub fn is_nu_injective(f: &SymbolMap, nu: &Ucq) -> bool {
    for d in &nu.disjuncts {
        let atoms: Vec<&Atom> = d.atoms().collect();
        for i in 0..atoms.len() {
            for j in (i + 1)..atoms.len() {
                let (a, b) = (atoms[i], atoms[j]);
                if a.from == b.from && a.to == b.to && a.symbol != b.symbol {
                    match (f.apply(&a.symbol), f.apply(&b.symbol)) {
                        (Some(fa), Some(fb)) if fa == fb => return false,
                        _ => {}
                    }
                }
            }
        }
    }
    true
}

/// Apply a symbol map to a union of queries; atom sets re-deduplicate.
pub fn apply_map(f: &SymbolMap, nu: &Ucq) -> Result<Ucq, QueryError> {
    let mut disjuncts = Vec::new();
    for d in &nu.disjuncts {
        let mut atoms: Vec<(String, String, String)> = Vec::new();
        for a in d.atoms() {
            let target = f.apply(&a.symbol).ok_or_else(|| {
                QueryError::Input(format!("symbol {} missing from the map", a.symbol))
            })?;
            atoms.push((
                target.to_string(),
                d.vars[a.from].clone(),
                d.vars[a.to].clone(),
            ));
        }
        let refs: Vec<(&str, &str, &str)> = atoms
            .iter()
            .map(|(s, x, y)| (s.as_str(), x.as_str(), y.as_str()))
            .collect();
        disjuncts.push(ConjunctiveQuery::from_atoms(&refs)?);
    }
    Ucq::new(disjuncts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::hom_equivalent;

    fn parse1(s: &str) -> ConjunctiveQuery {
        parse_ucq(s).unwrap().disjuncts.remove(0)
    }

    #[test]
    fn parse_named_queries() {
        let lq = parse_ucq("R(x,x)").unwrap();
        assert_eq!(lq.disjuncts.len(), 1);
        assert!(isomorphic(
            &lq.disjuncts[0].canonical_database(),
            &loop_query().canonical_database()
        ));

        let mc = parse_ucq("R(x,y) & R(y,x)").unwrap();
        assert!(isomorphic(
            &mc.disjuncts[0].canonical_database(),
            &twocycle_query().canonical_database()
        ));

        let two = parse_ucq("R(x,y) & R(y,z) | R(x,x)").unwrap();
        assert_eq!(two.disjuncts.len(), 2);
    }

    #[test]
    fn parse_errors_have_positions() {
        match parse_ucq("R(x,") {
            Err(QueryError::Parse { line: 1, .. }) => {}
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(parse_ucq("r(x,y)").is_err());
        assert!(parse_ucq("").is_err());
    }

    #[test]
    fn parser_round_trips_through_printer() {
        for src in [
            "R(x,x)",
            "R(x,y) & R(y,x)",
            "R(x,y) & S(y,z) & T(z,x)",
            "R(x,y) & R(y,z) | R(x,x)",
        ] {
            let q = parse_ucq(src).unwrap();
            let printed = q.display_normalized();
            let q2 = parse_ucq(&printed).unwrap();
            assert_eq!(q2.display_normalized(), printed);
        }
    }

    #[test]
    fn canonical_database_examples() {
        let mc = twocycle_query().canonical_database();
        assert_eq!(mc.size(), 2);
        assert_eq!(mc.relation(0).len(), 2);

        let lq = loop_query().canonical_database();
        assert_eq!(lq.size(), 1);
        assert!(lq.has_tuple(0, &[0, 0]));

        let tri = parse1("R(x,y) & R(y,z) & R(z,x)").canonical_database();
        assert!(isomorphic(&tri, &FiniteStructure::directed_cycle(3)));
    }

    #[test]
    fn holds_examples() {
        let lp = FiniteStructure::digraph(1, &[(0, 0)]);
        assert!(holds(&Ucq::single(twocycle_query()), &lp).unwrap());

        let t3 = FiniteStructure::transitive_tournament(3);
        let tri = parse_ucq("R(x,y) & R(y,z) & R(z,x)").unwrap();
        assert!(!holds(&tri, &t3).unwrap());

        let empty = FiniteStructure::new(Signature::single_binary(), 2);
        assert!(!holds(&Ucq::single(edge_query()), &empty).unwrap());
    }

    #[test]
    fn minimize_examples() {
        // Loop absorbs the pendant atom.
        let q = parse1("R(x,x) & R(x,y)");
        let m = minimize(&q).unwrap();
        assert!(isomorphic(&m.canonical_database(), &loop_query().canonical_database()));

        // Out-star collapses to a single edge.
        let q = parse1("R(x,y) & R(x,z)");
        let m = minimize(&q).unwrap();
        assert!(isomorphic(&m.canonical_database(), &edge_query().canonical_database()));

        // The triangle is already minimal (oracle: try removing each atom).
        let q = parse1("R(x,y) & R(y,z) & R(z,x)");
        assert_eq!(minimize(&q).unwrap().atom_count(), 3);
        let atoms: Vec<Atom> = q.atoms().cloned().collect();
        for victim in &atoms {
            let keep: Vec<&Atom> = q.atoms().filter(|a| *a != victim).collect();
            let candidate = q.restrict_to_atoms(&keep);
            assert!(!equivalent(&q, &candidate).unwrap());
        }
    }

    #[test]
    fn minimize_preserves_equivalence() {
        for src in [
            "R(x,x) & R(x,y)",
            "R(x,y) & R(x,z)",
            "R(x,y) & R(y,z) & R(z,x)",
            "R(x,y) & R(y,z) & R(x,z)",
            "R(x,y) & R(y,x) & R(x,z)",
        ] {
            let q = parse1(src);
            let m = minimize(&q).unwrap();
            assert!(hom_equivalent(&q.canonical_database(), &m.canonical_database()).unwrap());
        }
    }

    #[test]
    fn normalize_examples() {
        // Triangle implies the edge query, so it is dropped.
        let mu = parse_ucq("R(x,y) | R(x,y) & R(y,z) & R(z,x)").unwrap();
        let n = normalize(&mu).unwrap();
        assert_eq!(n.queries.len(), 1);
        assert!(isomorphic(
            &n.queries[0].canonical_database(),
            &edge_query().canonical_database()
        ));

        // The 2-cycle maps onto a loop, so the loop disjunct implies it.
        let mu = parse_ucq("R(x,x) | R(x,y) & R(y,x)").unwrap();
        let n = normalize(&mu).unwrap();
        assert_eq!(n.queries.len(), 1);
        assert!(isomorphic(
            &n.queries[0].canonical_database(),
            &twocycle_query().canonical_database()
        ));

        // Disconnected query splits into components, both edge queries.
        let mu = parse_ucq("R(x,y) & R(z,w)").unwrap();
        let n = normalize(&mu).unwrap();
        assert!(n
            .trace
            .iter()
            .any(|s| matches!(s, TraceStep::Minimized { .. })
                || matches!(s, TraceStep::SplitComponents { .. })));
        assert_eq!(n.queries.len(), 1);
        assert!(isomorphic(
            &n.queries[0].canonical_database(),
            &edge_query().canonical_database()
        ));
    }

    #[test]
    fn normalize_splits_incomparable_components() {
        // Directed 3-cycle and directed 4-cycle are homomorphically
        // incomparable, so the conjunction stays minimal and splits.
        let mu = parse_ucq(
            "R(a,b) & R(b,c) & R(c,a) & R(p,q) & R(q,r) & R(r,s) & R(s,p)",
        )
        .unwrap();
        let n = normalize(&mu).unwrap();
        assert_eq!(n.queries.len(), 2);
        assert!(n
            .trace
            .iter()
            .any(|s| matches!(s, TraceStep::SplitComponents { .. })));
        for q in &n.queries {
            assert!(q.is_connected());
        }
    }

    #[test]
    fn normalized_queries_are_pairwise_incomparable() {
        for src in [
            "R(x,y) | R(x,y) & R(y,z) & R(z,x) | R(x,x)",
            "R(x,y) & R(y,z) | R(a,b) & R(b,c) & R(c,a)",
            "R(x,y) & R(z,w)",
            "R(x,x) | R(x,y) & R(y,x)",
        ] {
            let n = normalize(&parse_ucq(src).unwrap()).unwrap();
            for i in 0..n.queries.len() {
                for j in 0..n.queries.len() {
                    if i != j {
                        assert!(!implies(&n.queries[i], &n.queries[j]).unwrap());
                    }
                }
            }
        }
    }

    #[test]
    fn shape_examples() {
        let tri = parse1("R(x,y) & R(y,z) & R(z,x)");
        let s = shape(&tri).unwrap();
        assert!(s.multigraph_cycle_ge3);
        assert!(!s.is_tree);
        assert_eq!(s.cycle_witness.as_ref().unwrap().len(), 3);

        let p2 = parse1("R(x,y) & R(y,z)");
        let s = shape(&p2).unwrap();
        assert!(s.is_tree);
        assert!(!s.multigraph_cycle_ge3);

        let mc = twocycle_query();
        let s = shape(&mc).unwrap();
        assert!(s.is_twocycle_query);
        assert!(!s.is_tree);

        assert!(shape(&parse1("R(x,y) & R(z,w)")).is_err());
    }

    #[test]
    fn shape_buckets_are_exclusive_and_exhaustive() {
        // For minimized connected queries over {R}: named flags take
        // precedence; otherwise tree xor multigraph cycle >= 3.
        for src in [
            "R(x,x)",
            "R(x,y)",
            "R(x,y) & R(y,x)",
            "R(x,y) & R(y,z)",
            "R(x,y) & R(y,z) & R(z,w)",
            "R(x,y) & R(y,z) & R(z,x)",
            "R(x,y) & R(y,z) & R(z,w) & R(w,x)",
            "R(x,y) & R(y,z) & R(z,w) & R(x,w)",
            "R(x,y) & R(z,y) & R(z,w)",
        ] {
            let q = minimize(&parse1(src)).unwrap();
            if !q.is_connected() {
                continue;
            }
            let s = shape(&q).unwrap();
            let named = s.is_loop_query || s.is_edge_query || s.is_twocycle_query;
            if named {
                assert_eq!(
                    [s.is_loop_query, s.is_edge_query, s.is_twocycle_query]
                        .iter()
                        .filter(|&&b| b)
                        .count(),
                    1
                );
            } else {
                assert!(s.is_tree ^ s.multigraph_cycle_ge3, "query {src}");
            }
        }
    }

    #[test]
    fn simple_cycle_agrees_with_union_find_on_all_small_graphs() {
        // Oracle: a simple undirected graph is acyclic iff union-find
        // never joins two already-connected vertices.
        for n in 1..=5usize {
            let pairs: Vec<(usize, usize)> = (0..n)
                .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
                .collect();
            for mask in 0u32..(1 << pairs.len()) {
                let edges: BTreeSet<(usize, usize)> = pairs
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| mask & (1 << *k) != 0)
                    .map(|(_, &e)| e)
                    .collect();
                let mut root: Vec<usize> = (0..n).collect();
                fn find(root: &mut Vec<usize>, x: usize) -> usize {
                    if root[x] != x {
                        let r = find(root, root[x]);
                        root[x] = r;
                    }
                    root[x]
                }
                let mut cyclic = false;
                for &(u, v) in &edges {
                    let (ru, rv) = (find(&mut root, u), find(&mut root, v));
                    if ru == rv {
                        cyclic = true;
                    } else {
                        root[ru] = rv;
                    }
                }
                let found = simple_cycle(n, &edges);
                assert_eq!(found.is_some(), cyclic, "n={n} edges={edges:?}");
                if let Some(cycle) = found {
                    // The witness is a genuine cycle: length >= 3,
                    // distinct vertices, consecutive pairs are edges.
                    assert!(cycle.len() >= 3);
                    let distinct: BTreeSet<usize> = cycle.iter().copied().collect();
                    assert_eq!(distinct.len(), cycle.len());
                    for k in 0..cycle.len() {
                        let a = cycle[k];
                        let b = cycle[(k + 1) % cycle.len()];
                        assert!(edges.contains(&(a.min(b), a.max(b))));
                    }
                }
            }
        }
    }

    #[test]
    fn factorize_twocycle() {
        let mu = Ucq::single(twocycle_query());
        let f = factorize_self_joins(&mu).unwrap();
        assert!(is_self_join_free(&f.nu));
        assert!(is_nu_injective(&f.symbol_map, &f.nu));
        let symbols = f.nu.symbols();
        assert_eq!(symbols, vec!["R_0".to_string(), "R_1".to_string()]);
        let back = apply_map(&f.symbol_map, &f.nu).unwrap();
        assert_eq!(back.display_normalized(), mu.display_normalized());
    }

    #[test]
    fn factorize_triangle_and_identity() {
        let tri = parse_ucq("R(x,y) & R(y,z) & R(z,x)").unwrap();
        let f = factorize_self_joins(&tri).unwrap();
        assert_eq!(f.nu.symbols().len(), 3);
        let back = apply_map(&f.symbol_map, &f.nu).unwrap();
        assert_eq!(back.display_normalized(), tri.display_normalized());

        let sjf = parse_ucq("R(x,y) & S(y,z)").unwrap();
        let f = factorize_self_joins(&sjf).unwrap();
        assert_eq!(f.nu.display_normalized(), sjf.display_normalized());
        for (k, v) in &f.symbol_map.map {
            assert_eq!(k, v);
        }
    }

    #[test]
    fn factorize_requires_minimal_disjuncts() {
        let mu = parse_ucq("R(x,y) & R(x,z)").unwrap();
        assert!(factorize_self_joins(&mu).is_err());
    }

    #[test]
    fn apply_map_collapses_to_twocycle() {
        let nu = parse_ucq("R_0(x,y) & R_1(y,x)").unwrap();
        let mut map = BTreeMap::new();
        map.insert("R_0".to_string(), "R".to_string());
        map.insert("R_1".to_string(), "R".to_string());
        let f = SymbolMap { map };
        let mu = apply_map(&f, &nu).unwrap();
        assert!(isomorphic(
            &mu.disjuncts[0].canonical_database(),
            &twocycle_query().canonical_database()
        ));
    }
}
