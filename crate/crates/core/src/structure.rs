//! Finite relational structures over small signatures, bag databases,
//! and the homomorphism / core engine the rest of the crate builds on.
//!
//! Domain elements are interned to dense indices `0..n`; optional labels
//! are kept for reporting only.  All search procedures are complete and
//! deterministic: variables are branched in ascending index order and
//! values are tried in ascending order.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// Errors raised by structure-level operations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StructureError {
    SignatureMismatch(String),
    BadTuple(String),
    BadSymbol(String),
}

impl fmt::Display for StructureError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StructureError::SignatureMismatch(m) => write!(f, "signature mismatch: {m}"),
            StructureError::BadTuple(m) => write!(f, "bad tuple: {m}"),
            StructureError::BadSymbol(m) => write!(f, "bad symbol: {m}"),
        }
    }
}

/// An ordered list of relation symbols with arities.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Signature {
    symbols: Vec<(String, usize)>,
}

impl Signature {
    pub fn new(symbols: Vec<(String, usize)>) -> Result<Signature, StructureError> {
        let mut seen = BTreeSet::new();
        for (name, arity) in &symbols {
            if *arity == 0 {
                return Err(StructureError::BadSymbol(format!(
                    "symbol {name} has arity 0"
                )));
            }
            if !seen.insert(name.clone()) {
                return Err(StructureError::BadSymbol(format!(
                    "duplicate symbol {name}"
                )));
            }
        }
        Ok(Signature { symbols })
    }

    /// The all-binary signature with the given symbol names.
    pub fn binary(names: &[&str]) -> Signature {
        Signature::new(names.iter().map(|n| (n.to_string(), 2)).collect()).unwrap()
    }

    pub fn single_binary() -> Signature {
        Signature::binary(&["R"])
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> impl Iterator<Item = (&str, usize)> {
        self.symbols.iter().map(|(n, a)| (n.as_str(), *a))
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.symbols[idx].0
    }

    pub fn arity(&self, idx: usize) -> usize {
        self.symbols[idx].1
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.symbols.iter().position(|(n, _)| n == name)
    }
}

/// A finite relational structure: dense domain `0..size` plus one tuple
/// set per symbol.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteStructure {
    sig: Signature,
    size: usize,
    labels: Vec<String>,
    relations: Vec<BTreeSet<Vec<usize>>>,
}

impl FiniteStructure {
    pub fn new(sig: Signature, size: usize) -> FiniteStructure {
        let labels = (0..size).map(|i| i.to_string()).collect();
        let relations = vec![BTreeSet::new(); sig.len()];
        FiniteStructure {
            sig,
            size,
            labels,
            relations,
        }
    }

    pub fn with_labels(
        sig: Signature,
        labels: Vec<String>,
    ) -> FiniteStructure {
        let size = labels.len();
        let relations = vec![BTreeSet::new(); sig.len()];
        FiniteStructure {
            sig,
            size,
            labels,
            relations,
        }
    }

    /// A digraph over the single symbol `R`.
    pub fn digraph(size: usize, edges: &[(usize, usize)]) -> FiniteStructure {
        let mut s = FiniteStructure::new(Signature::single_binary(), size);
        for &(u, v) in edges {
            s.add_tuple_idx(0, vec![u, v]).unwrap();
        }
        s
    }

    /// The transitive tournament on `n` vertices: edge `i -> j` iff `i < j`.
    pub fn transitive_tournament(n: usize) -> FiniteStructure {
        let mut s = FiniteStructure::new(Signature::single_binary(), n);
        for i in 0..n {
            for j in (i + 1)..n {
                s.add_tuple_idx(0, vec![i, j]).unwrap();
            }
        }
        s
    }

    /// The directed cycle `0 -> 1 -> ... -> n-1 -> 0`.
    pub fn directed_cycle(n: usize) -> FiniteStructure {
        let mut s = FiniteStructure::new(Signature::single_binary(), n);
        for i in 0..n {
            s.add_tuple_idx(0, vec![i, (i + 1) % n]).unwrap();
        }
        s
    }

    pub fn signature(&self) -> &Signature {
        &self.sig
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, v: usize) -> &str {
        &self.labels[v]
    }

    pub fn set_labels(&mut self, labels: Vec<String>) {
        assert_eq!(labels.len(), self.size);
        self.labels = labels;
    }

    pub fn add_tuple_idx(&mut self, sym: usize, tuple: Vec<usize>) -> Result<(), StructureError> {
        if tuple.len() != self.sig.arity(sym) {
            return Err(StructureError::BadTuple(format!(
                "arity mismatch for {}: got {}",
                self.sig.name(sym),
                tuple.len()
            )));
        }
        if tuple.iter().any(|&x| x >= self.size) {
            return Err(StructureError::BadTuple(format!(
                "tuple {:?} out of domain 0..{}",
                tuple, self.size
            )));
        }
        self.relations[sym].insert(tuple);
        Ok(())
    }

    pub fn add_tuple(&mut self, symbol: &str, tuple: Vec<usize>) -> Result<(), StructureError> {
        let sym = self
            .sig
            .index_of(symbol)
            .ok_or_else(|| StructureError::BadSymbol(symbol.to_string()))?;
        self.add_tuple_idx(sym, tuple)
    }

    pub fn relation(&self, sym: usize) -> &BTreeSet<Vec<usize>> {
        &self.relations[sym]
    }

    pub fn relation_named(&self, symbol: &str) -> Option<&BTreeSet<Vec<usize>>> {
        self.sig.index_of(symbol).map(|i| &self.relations[i])
    }

    pub fn has_tuple(&self, sym: usize, tuple: &[usize]) -> bool {
        self.relations[sym].contains(tuple)
    }

    pub fn total_tuples(&self) -> usize {
        self.relations.iter().map(|r| r.len()).sum()
    }

    /// Re-express this structure over `sig`, which must contain every
    /// symbol of `self` at the same arity; missing symbols get empty
    /// relations.
    pub fn align_to(&self, sig: &Signature) -> Result<FiniteStructure, StructureError> {
        let mut out = FiniteStructure::with_labels(sig.clone(), self.labels.clone());
        for (i, (name, arity)) in self.sig.symbols.iter().enumerate() {
            match sig.index_of(name) {
                Some(j) if sig.arity(j) == *arity => {
                    out.relations[j] = self.relations[i].clone();
                }
                Some(_) => {
                    return Err(StructureError::SignatureMismatch(format!(
                        "symbol {name} has conflicting arities"
                    )))
                }
                None => {
                    return Err(StructureError::SignatureMismatch(format!(
                        "symbol {name} missing from target signature"
                    )))
                }
            }
        }
        Ok(out)
    }

    /// The substructure induced on `keep` (indices must be distinct).
    pub fn restrict(&self, keep: &[usize]) -> FiniteStructure {
        let mut index = BTreeMap::new();
        for (new, &old) in keep.iter().enumerate() {
            index.insert(old, new);
        }
        let labels = keep.iter().map(|&v| self.labels[v].clone()).collect();
        let mut out = FiniteStructure::with_labels(self.sig.clone(), labels);
        for (sym, rel) in self.relations.iter().enumerate() {
            for t in rel {
                if let Some(mapped) = t
                    .iter()
                    .map(|x| index.get(x).copied())
                    .collect::<Option<Vec<_>>>()
                {
                    out.relations[sym].insert(mapped);
                }
            }
        }
        out
    }

    /// Connected components of the Gaifman graph, as sorted vertex lists.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![BTreeSet::new(); self.size];
        for rel in &self.relations {
            for t in rel {
                for i in 0..t.len() {
                    for j in (i + 1)..t.len() {
                        if t[i] != t[j] {
                            adj[t[i]].insert(t[j]);
                            adj[t[j]].insert(t[i]);
                        }
                    }
                }
            }
        }
        let mut seen = vec![false; self.size];
        let mut comps = Vec::new();
        for start in 0..self.size {
            if seen[start] {
                continue;
            }
            let mut stack = vec![start];
            let mut comp = Vec::new();
            seen[start] = true;
            while let Some(v) = stack.pop() {
                comp.push(v);
                for &w in &adj[v] {
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
            comp.sort_unstable();
            comps.push(comp);
        }
        comps
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() <= 1
    }
}

/// A map witnessing `for every tuple t of A, h(t) is a tuple of B`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Homomorphism {
    pub map: Vec<usize>,
}

impl Homomorphism {
    /// Check validity against concrete source and target structures.
    pub fn is_valid(&self, a: &FiniteStructure, b: &FiniteStructure) -> bool {
        if self.map.len() != a.size() || a.signature() != b.signature() {
            return false;
        }
        for (sym, rel) in a.relations.iter().enumerate() {
            for t in rel {
                let image: Vec<usize> = t.iter().map(|&x| self.map[x]).collect();
                if !b.has_tuple(sym, &image) {
                    return false;
                }
            }
        }
        true
    }
}

/// A constraint of the homomorphism CSP: one source tuple whose image
/// must land in the target relation.
struct Constraint<'a> {
    scope: &'a [usize],
    target: &'a BTreeSet<Vec<usize>>,
}

impl Constraint<'_> {
    /// Does some target tuple agree with the given domains (and with the
    /// repeats in the scope), taking value `v` at scope position `pos`?
    fn supported(&self, domains: &[BTreeSet<usize>], pos: usize, v: usize) -> bool {
        'tuples: for t in self.target {
            if t[pos] != v {
                continue;
            }
            let mut chosen: BTreeMap<usize, usize> = BTreeMap::new();
            for (i, &var) in self.scope.iter().enumerate() {
                match chosen.get(&var) {
                    Some(&val) if val != t[i] => continue 'tuples,
                    Some(_) => {}
                    None => {
                        if !domains[var].contains(&t[i]) {
                            continue 'tuples;
                        }
                        chosen.insert(var, t[i]);
                    }
                }
            }
            return true;
        }
        false
    }
}

fn make_constraints<'a>(a: &'a FiniteStructure, b: &'a FiniteStructure) -> Vec<Constraint<'a>> {
    let mut cs = Vec::new();
    for (sym, rel) in a.relations.iter().enumerate() {
        for t in rel {
            cs.push(Constraint {
                scope: t,
                target: &b.relations[sym],
            });
        }
    }
    cs
}

/// Generalized arc consistency: prune unsupported values until fixpoint.
/// Returns false when some domain wipes out.
fn enforce_gac(constraints: &[Constraint<'_>], domains: &mut [BTreeSet<usize>]) -> bool {
    let mut changed = true;
    while changed {
        changed = false;
        for c in constraints {
            for (pos, &var) in c.scope.iter().enumerate() {
                let dead: Vec<usize> = domains[var]
                    .iter()
                    .copied()
                    .filter(|&v| !c.supported(domains, pos, v))
                    .collect();
                if !dead.is_empty() {
                    for v in dead {
                        domains[var].remove(&v);
                    }
                    if domains[var].is_empty() {
                        return false;
                    }
                    changed = true;
                }
            }
        }
    }
    true
}

fn search(
    constraints: &[Constraint<'_>],
    domains: &[BTreeSet<usize>],
    next: usize,
) -> Option<Vec<usize>> {
    let n = domains.len();
    if next == n {
        return Some(domains.iter().map(|d| *d.iter().next().unwrap()).collect());
    }
    let values: Vec<usize> = domains[next].iter().copied().collect();
    for v in values {
        let mut local: Vec<BTreeSet<usize>> = domains.to_vec();
        local[next] = BTreeSet::from([v]);
        if enforce_gac(constraints, &mut local) {
            if let Some(sol) = search(constraints, &local, next + 1) {
                return Some(sol);
            }
        }
    }
    None
}

/// Complete backtracking search for a homomorphism from `a` to `b`, with
/// arc-consistency pruning.  Returns the first solution in the
/// deterministic order (variables ascending, values ascending), or `None`
/// when no homomorphism exists.
pub fn find_homomorphism(
    a: &FiniteStructure,
    b: &FiniteStructure,
) -> Result<Option<Homomorphism>, StructureError> {
    find_homomorphism_forced(a, b, &[])
}

/// Same search with some variables pre-assigned.
pub fn find_homomorphism_forced(
    a: &FiniteStructure,
    b: &FiniteStructure,
    forced: &[(usize, usize)],
) -> Result<Option<Homomorphism>, StructureError> {
    if a.signature() != b.signature() {
        return Err(StructureError::SignatureMismatch(
            "source and target must share a signature".to_string(),
        ));
    }
    if a.size() == 0 {
        return Ok(Some(Homomorphism { map: Vec::new() }));
    }
    if b.size() == 0 {
        return Ok(None);
    }
    let full: BTreeSet<usize> = (0..b.size()).collect();
    let mut domains = vec![full; a.size()];
    for &(var, val) in forced {
        if var >= a.size() || val >= b.size() {
            return Err(StructureError::BadTuple(format!(
                "forced assignment {var} -> {val} out of range"
            )));
        }
        domains[var] = BTreeSet::from([val]);
    }
    let constraints = make_constraints(a, b);
    if !enforce_gac(&constraints, &mut domains) {
        return Ok(None);
    }
    Ok(search(&constraints, &domains, 0).map(|map| {
        let h = Homomorphism { map };
        debug_assert!(h.is_valid(a, b));
        h
    }))
}

/// Is there a homomorphism from `a` to `b`?
pub fn hom_exists(a: &FiniteStructure, b: &FiniteStructure) -> Result<bool, StructureError> {
    Ok(find_homomorphism(a, b)?.is_some())
}

/// Structures are homomorphically equivalent when maps exist both ways.
pub fn hom_equivalent(a: &FiniteStructure, b: &FiniteStructure) -> Result<bool, StructureError> {
    Ok(hom_exists(a, b)? && hom_exists(b, a)?)
}

fn iso_search(
    a: &FiniteStructure,
    b: &FiniteStructure,
    map: &mut Vec<usize>,
    used: &mut Vec<bool>,
) -> bool {
    let next = map.len();
    if next == a.size() {
        // Bijective; check both directions tuple-for-tuple.
        for (sym, rel) in a.relations.iter().enumerate() {
            if rel.len() != b.relations[sym].len() {
                return false;
            }
            for t in rel {
                let image: Vec<usize> = t.iter().map(|&x| map[x]).collect();
                if !b.has_tuple(sym, &image) {
                    return false;
                }
            }
        }
        return true;
    }
    'values: for v in 0..b.size() {
        if used[v] {
            continue;
        }
        map.push(v);
        used[v] = true;
        // Check constraints fully determined by the prefix.
        for (sym, rel) in a.relations.iter().enumerate() {
            for t in rel {
                if t.iter().all(|&x| x < map.len()) && t.contains(&next) {
                    let image: Vec<usize> = t.iter().map(|&x| map[x]).collect();
                    if !b.has_tuple(sym, &image) {
                        map.pop();
                        used[v] = false;
                        continue 'values;
                    }
                }
            }
        }
        if iso_search(a, b, map, used) {
            return true;
        }
        map.pop();
        used[v] = false;
    }
    false
}

/// Isomorphism test (exact, by backtracking over bijections).
pub fn isomorphic(a: &FiniteStructure, b: &FiniteStructure) -> bool {
    if a.signature() != b.signature() || a.size() != b.size() {
        return false;
    }
    for sym in 0..a.signature().len() {
        if a.relations[sym].len() != b.relations[sym].len() {
            return false;
        }
    }
    iso_search(a, b, &mut Vec::new(), &mut vec![false; b.size()])
}

/// The core of `a`: a minimum-size retract, computed by repeatedly
/// collapsing along non-injective endomorphisms.  Unique up to
/// isomorphism.
pub fn core(a: &FiniteStructure) -> FiniteStructure {
    let mut current = a.clone();
    'outer: loop {
        if current.size() <= 1 {
            return current;
        }
        // Look for an endomorphism identifying some pair (u, v).  Working
        // pair-by-pair keeps the search deterministic.
        for u in 0..current.size() {
            for v in (u + 1)..current.size() {
                let quotient = quotient_pair(&current, u, v);
                if let Ok(Some(h)) = find_homomorphism(&quotient.structure, &current) {
                    // Endomorphism of `current`: factor through the quotient.
                    let endo: Vec<usize> = (0..current.size())
                        .map(|x| h.map[quotient.class[x]])
                        .collect();
                    let mut image: Vec<usize> = endo.clone();
                    image.sort_unstable();
                    image.dedup();
                    debug_assert!(image.len() < current.size());
                    current = current.restrict(&image);
                    continue 'outer;
                }
            }
        }
        return current;
    }
}

struct Quotient {
    structure: FiniteStructure,
    /// Old vertex -> quotient vertex.
    class: Vec<usize>,
}

/// Identify `u` and `v`, keeping all other vertices distinct.
fn quotient_pair(a: &FiniteStructure, u: usize, v: usize) -> Quotient {
    let mut class = Vec::with_capacity(a.size());
    let mut next = 0;
    for x in 0..a.size() {
        if x == v {
            class.push(class[u]);
        } else {
            class.push(next);
            next += 1;
        }
    }
    let labels = (0..a.size())
        .filter(|&x| x != v)
        .map(|x| a.label(x).to_string())
        .collect();
    let mut q = FiniteStructure::with_labels(a.signature().clone(), labels);
    for (sym, rel) in a.relations.iter().enumerate() {
        for t in rel {
            let mapped: Vec<usize> = t.iter().map(|&x| class[x]).collect();
            q.relations[sym].insert(mapped);
        }
    }
    Quotient {
        structure: q,
        class,
    }
}

/// Result of `path_profile`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathProfile {
    pub has_directed_cycle: bool,
    /// Length (in edges) of the longest directed path; `None` when the
    /// graph has a directed cycle.
    pub longest_path: Option<usize>,
}

/// Cycle detection and longest-path analysis of one binary relation.
/// A loop counts as a directed cycle of length 1.
pub fn path_profile(g: &FiniteStructure, symbol: &str) -> Result<PathProfile, StructureError> {
    let sym = g
        .signature()
        .index_of(symbol)
        .ok_or_else(|| StructureError::BadSymbol(symbol.to_string()))?;
    if g.signature().arity(sym) != 2 {
        return Err(StructureError::BadSymbol(format!(
            "{symbol} is not binary"
        )));
    }
    let adj = binary_adjacency(g, &[sym]);
    if digraph_has_cycle(g.size(), &adj) {
        return Ok(PathProfile {
            has_directed_cycle: true,
            longest_path: None,
        });
    }
    // Acyclic: longest path by DP over a topological order.
    let order = topological_order(g.size(), &adj);
    let mut longest = vec![0usize; g.size()];
    let mut best = 0;
    for &v in order.iter().rev() {
        for &w in &adj[v] {
            longest[v] = longest[v].max(longest[w] + 1);
        }
        best = best.max(longest[v]);
    }
    Ok(PathProfile {
        has_directed_cycle: false,
        longest_path: Some(best),
    })
}

/// Vertices from which a longest path starts (used by the max-cut maps).
pub fn longest_path_starts(
    g: &FiniteStructure,
    symbol: &str,
) -> Result<(usize, Vec<usize>), StructureError> {
    let sym = g
        .signature()
        .index_of(symbol)
        .ok_or_else(|| StructureError::BadSymbol(symbol.to_string()))?;
    let adj = binary_adjacency(g, &[sym]);
    if digraph_has_cycle(g.size(), &adj) {
        return Err(StructureError::BadTuple("graph has a directed cycle".to_string()));
    }
    let order = topological_order(g.size(), &adj);
    let mut longest = vec![0usize; g.size()];
    let mut best = 0;
    for &v in order.iter().rev() {
        for &w in &adj[v] {
            longest[v] = longest[v].max(longest[w] + 1);
        }
        best = best.max(longest[v]);
    }
    let starts = (0..g.size()).filter(|&v| longest[v] == best).collect();
    Ok((best, starts))
}

/// True iff the union of the listed binary relations contains a directed
/// cycle, equivalently a closed directed walk of positive length.
pub fn has_closed_directed_walk(
    g: &FiniteStructure,
    symbols: &[&str],
) -> Result<bool, StructureError> {
    let mut syms = Vec::new();
    for name in symbols {
        let sym = g
            .signature()
            .index_of(name)
            .ok_or_else(|| StructureError::BadSymbol(name.to_string()))?;
        if g.signature().arity(sym) != 2 {
            return Err(StructureError::BadSymbol(format!("{name} is not binary")));
        }
        syms.push(sym);
    }
    let adj = binary_adjacency(g, &syms);
    Ok(digraph_has_cycle(g.size(), &adj))
}

/// A directed cycle in the union of the listed binary relations, as a
/// vertex sequence (closed, endpoint not repeated), when one exists.
pub fn directed_cycle_witness(
    g: &FiniteStructure,
    symbols: &[&str],
) -> Result<Option<Vec<usize>>, StructureError> {
    let mut syms = Vec::new();
    for name in symbols {
        let sym = g
            .signature()
            .index_of(name)
            .ok_or_else(|| StructureError::BadSymbol(name.to_string()))?;
        syms.push(sym);
    }
    let adj = binary_adjacency(g, &syms);
    // DFS with an explicit path stack.
    let mut color = vec![0u8; g.size()];
    let mut parent = vec![usize::MAX; g.size()];
    for start in 0..g.size() {
        if color[start] != 0 {
            continue;
        }
        let mut stack: Vec<(usize, usize)> = vec![(start, 0)];
        color[start] = 1;
        while let Some(&mut (v, ref mut i)) = stack.last_mut() {
            if *i < adj[v].len() {
                let w = adj[v][*i];
                *i += 1;
                match color[w] {
                    1 => {
                        let mut cyc = vec![v];
                        let mut cur = v;
                        while cur != w {
                            cur = parent[cur];
                            cyc.push(cur);
                        }
                        cyc.reverse();
                        return Ok(Some(cyc));
                    }
                    0 => {
                        color[w] = 1;
                        parent[w] = v;
                        stack.push((w, 0));
                    }
                    _ => {}
                }
            } else {
                color[v] = 2;
                stack.pop();
            }
        }
    }
    Ok(None)
}

fn binary_adjacency(g: &FiniteStructure, syms: &[usize]) -> Vec<Vec<usize>> {
    let mut adj = vec![BTreeSet::new(); g.size()];
    for &sym in syms {
        for t in &g.relations[sym] {
            adj[t[0]].insert(t[1]);
        }
    }
    adj.into_iter().map(|s| s.into_iter().collect()).collect()
}

fn digraph_has_cycle(n: usize, adj: &[Vec<usize>]) -> bool {
    // Iterative DFS with colors; a back edge (including a loop) is a cycle.
    const WHITE: u8 = 0;
    const GRAY: u8 = 1;
    const BLACK: u8 = 2;
    let mut color = vec![WHITE; n];
    for start in 0..n {
        if color[start] != WHITE {
            continue;
        }
        let mut stack: Vec<(usize, usize)> = vec![(start, 0)];
        color[start] = GRAY;
        while let Some(&mut (v, ref mut i)) = stack.last_mut() {
            if *i < adj[v].len() {
                let w = adj[v][*i];
                *i += 1;
                match color[w] {
                    GRAY => return true,
                    WHITE => {
                        color[w] = GRAY;
                        stack.push((w, 0));
                    }
                    _ => {}
                }
            } else {
                color[v] = BLACK;
                stack.pop();
            }
        }
    }
    false
}

fn topological_order(n: usize, adj: &[Vec<usize>]) -> Vec<usize> {
    let mut indeg = vec![0usize; n];
    for v in 0..n {
        for &w in &adj[v] {
            indeg[w] += 1;
        }
    }
    let mut queue: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut order = Vec::with_capacity(n);
    let mut head = 0;
    while head < queue.len() {
        let v = queue[head];
        head += 1;
        order.push(v);
        for &w in &adj[v] {
            indeg[w] -= 1;
            if indeg[w] == 0 {
                queue.push(w);
            }
        }
    }
    order
}

/// A finite bag database: per symbol, a map tuple -> multiplicity >= 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BagDatabase {
    sig: Signature,
    size: usize,
    labels: Vec<String>,
    relations: Vec<BTreeMap<Vec<usize>, u64>>,
}

impl BagDatabase {
    pub fn new(sig: Signature, size: usize) -> BagDatabase {
        let labels = (0..size).map(|i| i.to_string()).collect();
        let relations = vec![BTreeMap::new(); sig.len()];
        BagDatabase {
            sig,
            size,
            labels,
            relations,
        }
    }

    pub fn with_labels(sig: Signature, labels: Vec<String>) -> BagDatabase {
        let size = labels.len();
        let relations = vec![BTreeMap::new(); sig.len()];
        BagDatabase {
            sig,
            size,
            labels,
            relations,
        }
    }

    pub fn signature(&self) -> &Signature {
        &self.sig
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, v: usize) -> &str {
        &self.labels[v]
    }

    /// Add `copies` copies of a tuple.
    pub fn add_copies(
        &mut self,
        symbol: &str,
        tuple: Vec<usize>,
        copies: u64,
    ) -> Result<(), StructureError> {
        if copies == 0 {
            return Ok(());
        }
        let sym = self
            .sig
            .index_of(symbol)
            .ok_or_else(|| StructureError::BadSymbol(symbol.to_string()))?;
        if tuple.len() != self.sig.arity(sym) {
            return Err(StructureError::BadTuple(format!(
                "arity mismatch for {symbol}"
            )));
        }
        if tuple.iter().any(|&x| x >= self.size) {
            return Err(StructureError::BadTuple(format!(
                "tuple {:?} out of domain 0..{}",
                tuple, self.size
            )));
        }
        *self.relations[sym].entry(tuple).or_insert(0) += copies;
        Ok(())
    }

    pub fn multiplicity(&self, symbol: &str, tuple: &[usize]) -> u64 {
        self.sig
            .index_of(symbol)
            .and_then(|sym| self.relations[sym].get(tuple).copied())
            .unwrap_or(0)
    }

    pub fn relation(&self, sym: usize) -> &BTreeMap<Vec<usize>, u64> {
        &self.relations[sym]
    }

    /// Distinct tuples, in deterministic (symbol, tuple) order.
    pub fn distinct_tuples(&self) -> Vec<(usize, Vec<usize>, u64)> {
        let mut out = Vec::new();
        for (sym, rel) in self.relations.iter().enumerate() {
            for (t, &m) in rel {
                out.push((sym, t.clone(), m));
            }
        }
        out
    }

    pub fn total_multiplicity(&self) -> u64 {
        self.relations
            .iter()
            .map(|r| r.values().sum::<u64>())
            .sum()
    }

    /// Forget multiplicities.
    pub fn support(&self) -> FiniteStructure {
        let mut s = FiniteStructure::with_labels(self.sig.clone(), self.labels.clone());
        for (sym, rel) in self.relations.iter().enumerate() {
            for t in rel.keys() {
                s.relations[sym].insert(t.clone());
            }
        }
        s
    }

    /// Remove all copies of the given distinct tuples (by index into
    /// `distinct_tuples` order is *not* assumed; tuples are named).
    pub fn delete_all_copies(&self, doomed: &[(usize, Vec<usize>)]) -> BagDatabase {
        let mut out = self.clone();
        for (sym, t) in doomed {
            out.relations[*sym].remove(t);
        }
        out
    }
}
