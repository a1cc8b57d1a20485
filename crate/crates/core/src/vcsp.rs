//! Finite-domain valued structures, expressions, exact minimization,
//! clone operators, the 0/1 dual construction, the resilience <-> VCSP
//! instance translations, and the generic pp-power reduction engine.
//!
//! All arithmetic is exact (ℚ ∪ {∞}); see [`crate::value`].

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use num_traits::{Signed, Zero};

use crate::structure::{BagDatabase, FiniteStructure, Signature, StructureError};
use crate::value::{Rational, Value};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum VcspError {
    UnboundVariable(String),
    UnknownSymbol(String),
    ArityMismatch(String),
    NegativeScale,
    BottomAtom(String),
    NonIntegerWeight(String),
    Guard(String),
    MalformedSpec(String),
}

impl fmt::Display for VcspError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VcspError::UnboundVariable(m) => write!(f, "unbound variable: {m}"),
            VcspError::UnknownSymbol(m) => write!(f, "unknown symbol: {m}"),
            VcspError::ArityMismatch(m) => write!(f, "arity mismatch: {m}"),
            VcspError::NegativeScale => write!(f, "negative scaling factor"),
            VcspError::BottomAtom(m) => write!(f, "bottom atom not allowed: {m}"),
            VcspError::NonIntegerWeight(m) => write!(f, "non-integer weight: {m}"),
            VcspError::Guard(m) => write!(f, "guard exceeded: {m}"),
            VcspError::MalformedSpec(m) => write!(f, "malformed pp-power spec: {m}"),
        }
    }
}

impl From<StructureError> for VcspError {
    fn from(e: StructureError) -> VcspError {
        VcspError::ArityMismatch(format!("{e}"))
    }
}

/// A valued relation: a total map `domain^k -> ℚ ∪ {∞}`, stored sparsely
/// as a default value plus exceptions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValuedRelation {
    pub arity: usize,
    pub domain_size: usize,
    pub default: Value,
    pub entries: BTreeMap<Vec<usize>, Value>,
}

impl ValuedRelation {
    pub fn constant(arity: usize, domain_size: usize, value: Value) -> ValuedRelation {
        ValuedRelation {
            arity,
            domain_size,
            default: value,
            entries: BTreeMap::new(),
        }
    }

    /// The crisp relation of a tuple set: 0 on members, ∞ elsewhere.
    pub fn crisp(arity: usize, domain_size: usize, tuples: &BTreeSet<Vec<usize>>) -> ValuedRelation {
        ValuedRelation {
            arity,
            domain_size,
            default: Value::Inf,
            entries: tuples.iter().map(|t| (t.clone(), Value::ZERO)).collect(),
        }
    }

    pub fn get(&self, tuple: &[usize]) -> Value {
        debug_assert_eq!(tuple.len(), self.arity);
        self.entries.get(tuple).copied().unwrap_or(self.default)
    }

    pub fn set(&mut self, tuple: Vec<usize>, value: Value) {
        debug_assert_eq!(tuple.len(), self.arity);
        if value == self.default {
            self.entries.remove(&tuple);
        } else {
            self.entries.insert(tuple, value);
        }
    }

    fn tuples(&self) -> TupleIter {
        TupleIter::new(self.domain_size, self.arity)
    }

    /// Minimum value over all tuples.
    pub fn min_value(&self) -> Value {
        let covered = self.entries.len() as u128;
        let total = (self.domain_size as u128).pow(self.arity as u32);
        let mut m = if covered < total { self.default } else { Value::Inf };
        for v in self.entries.values() {
            m = m.min(*v);
        }
        if covered == total {
            // All tuples explicit.
            self.entries.values().copied().min().unwrap_or(Value::Inf)
        } else {
            m
        }
    }

    /// Crisp feasibility relation: tuples with finite value.
    pub fn feas(&self) -> ValuedRelation {
        let mut out = ValuedRelation::constant(
            self.arity,
            self.domain_size,
            if self.default.is_finite() { Value::ZERO } else { Value::Inf },
        );
        for (t, v) in &self.entries {
            out.set(t.clone(), if v.is_finite() { Value::ZERO } else { Value::Inf });
        }
        out
    }

    /// Crisp relation of minimal-value tuples (full table scan).
    pub fn opt(&self) -> ValuedRelation {
        let m = self.min_value();
        let mut out = ValuedRelation::constant(self.arity, self.domain_size, Value::Inf);
        if m == Value::Inf {
            // Feas is empty; so is Opt.
            return out;
        }
        if self.default == m {
            out.default = Value::ZERO;
            for (t, v) in &self.entries {
                if *v != m {
                    out.set(t.clone(), Value::Inf);
                }
            }
        } else {
            for (t, v) in &self.entries {
                if *v == m {
                    out.set(t.clone(), Value::ZERO);
                }
            }
        }
        out
    }

    /// Keep the first `k` coordinates, taking the infimum over the rest.
    /// The infimum is attained (finite domains).
    pub fn project(&self, k: usize) -> Result<ValuedRelation, VcspError> {
        if k > self.arity {
            return Err(VcspError::ArityMismatch(format!(
                "cannot project arity {} onto {} coordinates",
                self.arity, k
            )));
        }
        let mut out = ValuedRelation::constant(k, self.domain_size, Value::Inf);
        let mut best: BTreeMap<Vec<usize>, Value> = BTreeMap::new();
        for t in self.tuples() {
            let v = self.get(&t);
            let key = t[..k].to_vec();
            let e = best.entry(key).or_insert(Value::Inf);
            *e = (*e).min(v);
        }
        for (t, v) in best {
            out.set(t, v);
        }
        Ok(out)
    }

    pub fn shift(&self, a: Rational) -> ValuedRelation {
        let add = Value::Fin(a);
        let mut out = ValuedRelation::constant(self.arity, self.domain_size, self.default + add);
        for (t, v) in &self.entries {
            out.set(t.clone(), *v + add);
        }
        out
    }

    pub fn scale(&self, a: Rational) -> Result<ValuedRelation, VcspError> {
        if a.is_negative() {
            return Err(VcspError::NegativeScale);
        }
        let mut out =
            ValuedRelation::constant(self.arity, self.domain_size, self.default.scale(a));
        for (t, v) in &self.entries {
            out.set(t.clone(), v.scale(a));
        }
        Ok(out)
    }
}

struct TupleIter {
    domain: usize,
    current: Option<Vec<usize>>,
}

impl TupleIter {
    fn new(domain: usize, arity: usize) -> TupleIter {
        let current = if domain == 0 && arity > 0 {
            None
        } else {
            Some(vec![0; arity])
        };
        TupleIter { domain, current }
    }
}

impl Iterator for TupleIter {
    type Item = Vec<usize>;
    fn next(&mut self) -> Option<Vec<usize>> {
        let cur = self.current.clone()?;
        // Advance (odometer, last coordinate fastest).
        let mut next = cur.clone();
        let mut i = next.len();
        loop {
            if i == 0 {
                self.current = None;
                break;
            }
            i -= 1;
            next[i] += 1;
            if next[i] < self.domain {
                self.current = Some(next);
                break;
            }
            next[i] = 0;
        }
        Some(cur)
    }
}

/// A finite valued structure.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValuedStructure {
    pub domain_size: usize,
    pub labels: Vec<String>,
    symbols: Vec<(String, usize)>,
    relations: Vec<ValuedRelation>,
}

impl ValuedStructure {
    pub fn new(domain_size: usize) -> ValuedStructure {
        ValuedStructure {
            domain_size,
            labels: (0..domain_size).map(|i| i.to_string()).collect(),
            symbols: Vec::new(),
            relations: Vec::new(),
        }
    }

    pub fn add_relation(&mut self, name: &str, rel: ValuedRelation) {
        assert_eq!(rel.domain_size, self.domain_size);
        assert!(self.index_of(name).is_none(), "duplicate symbol {name}");
        self.symbols.push((name.to_string(), rel.arity));
        self.relations.push(rel);
    }

    pub fn symbols(&self) -> impl Iterator<Item = (&str, usize)> {
        self.symbols.iter().map(|(n, a)| (n.as_str(), *a))
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.symbols.iter().position(|(n, _)| n == name)
    }

    pub fn relation(&self, idx: usize) -> &ValuedRelation {
        &self.relations[idx]
    }

    pub fn relation_named(&self, name: &str) -> Option<&ValuedRelation> {
        self.index_of(name).map(|i| &self.relations[i])
    }

    /// The directed max-cut structure: domain {0,1}, `R(x,y) = 0` iff
    /// `x = 0` and `y = 1`, else 1.
    pub fn max_cut() -> ValuedStructure {
        let mut rel = ValuedRelation::constant(2, 2, Value::from_int(1));
        rel.set(vec![0, 1], Value::ZERO);
        let mut s = ValuedStructure::new(2);
        s.add_relation("R", rel);
        s
    }

    /// The crisp 1-in-3 structure on {0,1}: `OIT = {(0,0,1),(0,1,0),(1,0,0)}`.
    pub fn oit() -> ValuedStructure {
        let tuples: BTreeSet<Vec<usize>> = [vec![0, 0, 1], vec![0, 1, 0], vec![1, 0, 0]]
            .into_iter()
            .collect();
        let mut s = ValuedStructure::new(2);
        s.add_relation("OIT", ValuedRelation::crisp(3, 2, &tuples));
        s
    }
}

/// The 0/1 valued structure of a relational structure: tuples present in
/// `b` cost 0, absent tuples cost 1.
pub fn valued_dual(b: &FiniteStructure) -> ValuedStructure {
    let mut out = ValuedStructure::new(b.size());
    out.labels = b.labels().to_vec();
    for (idx, (name, arity)) in b.signature().symbols().enumerate() {
        let mut rel = ValuedRelation::constant(arity, b.size(), Value::from_int(1));
        for t in b.relation(idx) {
            rel.set(t.clone(), Value::ZERO);
        }
        out.add_relation(name, rel);
    }
    out
}

/// The crisp structure of a relational structure: tuples present cost 0,
/// absent tuples cost ∞.  This is how starred atoms bind to a finite
/// target.
pub fn crisp_of(b: &FiniteStructure) -> ValuedStructure {
    let mut out = ValuedStructure::new(b.size());
    out.labels = b.labels().to_vec();
    for (idx, (name, arity)) in b.signature().symbols().enumerate() {
        out.add_relation(name, ValuedRelation::crisp(arity, b.size(), b.relation(idx)));
    }
    out
}

// ---------------------------------------------------------------------
// Expressions
// ---------------------------------------------------------------------

/// An atom of an expression: a named relation, crisp equality, or ⊥.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ExprAtom {
    Rel(String),
    Eq,
    Bot,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Occurrence {
    pub atom: ExprAtom,
    pub args: Vec<usize>,
    /// Non-negative weight; an integer weight `m` is an `m`-fold multiset
    /// occurrence.
    pub weight: Rational,
}

/// A sum of weighted atom occurrences over named variables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Expression {
    pub vars: Vec<String>,
    pub occurrences: Vec<Occurrence>,
    pub shift: Rational,
}

impl Expression {
    pub fn new(vars: Vec<String>) -> Expression {
        Expression {
            vars,
            occurrences: Vec::new(),
            shift: Rational::zero(),
        }
    }

    pub fn var(&mut self, name: &str) -> usize {
        if let Some(i) = self.vars.iter().position(|v| v == name) {
            i
        } else {
            self.vars.push(name.to_string());
            self.vars.len() - 1
        }
    }

    pub fn push(&mut self, atom: ExprAtom, args: Vec<usize>, weight: u64) {
        self.push_weighted(atom, args, Rational::from_integer(weight as i64));
    }

    pub fn push_weighted(&mut self, atom: ExprAtom, args: Vec<usize>, weight: Rational) {
        assert!(!weight.is_negative());
        debug_assert!(args.iter().all(|&a| a < self.vars.len()));
        self.occurrences.push(Occurrence { atom, args, weight });
    }

    /// Every variable must occur in some atom for the expression to be
    /// well-formed in the strict sense; unused variables are still
    /// handled (they simply range freely).
    pub fn used_vars(&self) -> BTreeSet<usize> {
        self.occurrences
            .iter()
            .flat_map(|o| o.args.iter().copied())
            .collect()
    }

    pub fn display(&self) -> String {
        let parts: Vec<String> = self
            .occurrences
            .iter()
            .map(|o| {
                let args: Vec<&str> = o.args.iter().map(|&a| self.vars[a].as_str()).collect();
                let head = match &o.atom {
                    ExprAtom::Rel(r) => r.clone(),
                    ExprAtom::Eq => "=".to_string(),
                    ExprAtom::Bot => "bot".to_string(),
                };
                if o.weight == Rational::from_integer(1) {
                    format!("{head}({})", args.join(","))
                } else {
                    format!("{}*{head}({})", crate::value::rational_to_string(&o.weight), args.join(","))
                }
            })
            .collect();
        parts.join(" + ")
    }
}

struct ResolvedAtom<'a> {
    rel: Option<&'a ValuedRelation>, // None for Eq/Bot
    atom: ExprAtom,
    args: Vec<usize>,
    weight: Rational,
}

fn resolve<'a>(
    e: &'a Expression,
    gamma: &'a ValuedStructure,
) -> Result<Vec<ResolvedAtom<'a>>, VcspError> {
    let mut out = Vec::with_capacity(e.occurrences.len());
    for o in &e.occurrences {
        let rel = match &o.atom {
            ExprAtom::Rel(name) => {
                let idx = gamma
                    .index_of(name)
                    .ok_or_else(|| VcspError::UnknownSymbol(name.clone()))?;
                let rel = gamma.relation(idx);
                if rel.arity != o.args.len() {
                    return Err(VcspError::ArityMismatch(format!(
                        "atom {name} used with {} arguments, arity is {}",
                        o.args.len(),
                        rel.arity
                    )));
                }
                Some(rel)
            }
            ExprAtom::Eq => {
                if o.args.len() != 2 {
                    return Err(VcspError::ArityMismatch("equality needs 2 arguments".into()));
                }
                None
            }
            ExprAtom::Bot => {
                if o.args.len() != 1 {
                    return Err(VcspError::ArityMismatch("bottom needs 1 argument".into()));
                }
                None
            }
        };
        out.push(ResolvedAtom {
            rel,
            atom: o.atom.clone(),
            args: o.args.clone(),
            weight: o.weight,
        });
    }
    Ok(out)
}

fn atom_value(r: &ResolvedAtom<'_>, assignment: &[usize]) -> Value {
    let raw = match &r.atom {
        ExprAtom::Rel(_) => {
            let tuple: Vec<usize> = r.args.iter().map(|&a| assignment[a]).collect();
            r.rel.unwrap().get(&tuple)
        }
        ExprAtom::Eq => {
            if assignment[r.args[0]] == assignment[r.args[1]] {
                Value::ZERO
            } else {
                Value::Inf
            }
        }
        ExprAtom::Bot => Value::Inf,
    };
    raw.scale(r.weight)
}

/// Evaluate an expression under a total assignment.
pub fn evaluate(e: &Expression, gamma: &ValuedStructure, assignment: &[usize]) -> Result<Value, VcspError> {
    if assignment.len() < e.vars.len() {
        return Err(VcspError::UnboundVariable(format!(
            "assignment covers {} of {} variables",
            assignment.len(),
            e.vars.len()
        )));
    }
    let resolved = resolve(e, gamma)?;
    let mut total = Value::Fin(e.shift);
    for r in &resolved {
        total = total + atom_value(r, assignment);
        if total == Value::Inf {
            return Ok(Value::Inf);
        }
    }
    Ok(total)
}

/// Result of exact minimization.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MinCost {
    pub value: Value,
    /// Lexicographically least optimal assignment (w.r.t. the
    /// expression's variable order); `None` when the instance is
    /// infeasible.
    pub argmin: Option<Vec<usize>>,
}

/// Exact minimum of an expression over a finite valued structure, by
/// branch-and-bound with crisp-support propagation.  Deterministic: the
/// reported argmin is the lexicographically least optimum.
pub fn min_cost(e: &Expression, gamma: &ValuedStructure) -> Result<MinCost, VcspError> {
    min_cost_with_pins(e, gamma, &[])
}

/// Same, with some variables pinned.
pub fn min_cost_with_pins(
    e: &Expression,
    gamma: &ValuedStructure,
    pins: &[(usize, usize)],
) -> Result<MinCost, VcspError> {
    let resolved = resolve(e, gamma)?;
    let mut solver = Solver::new(e, gamma, &resolved, pins)?;
    // Pass 1: find the optimum value.
    solver.run(Value::Inf, &mut |_, _| {});
    let best = solver.best;
    if best == Value::Inf {
        return Ok(MinCost {
            value: Value::Inf,
            argmin: None,
        });
    }
    // Pass 2: first complete assignment attaining `best` in lexicographic
    // DFS order is the lexicographically least argmin.
    let mut argmin: Option<Vec<usize>> = None;
    let mut solver2 = Solver::new(e, gamma, &resolved, pins)?;
    solver2.target = Some(best);
    solver2.run(best, &mut |a, _| {
        if argmin.is_none() {
            argmin = Some(a.to_vec());
        }
    });
    Ok(MinCost {
        value: best,
        argmin,
    })
}

/// Visit every optimal assignment (cost equal to the global minimum).
/// The callback receives the assignment and its cost.  Returns the
/// optimum value.
pub fn for_each_optimum(
    e: &Expression,
    gamma: &ValuedStructure,
    visit: &mut dyn FnMut(&[usize]),
) -> Result<Value, VcspError> {
    let resolved = resolve(e, gamma)?;
    let mut solver = Solver::new(e, gamma, &resolved, &[])?;
    solver.run(Value::Inf, &mut |_, _| {});
    let best = solver.best;
    if best == Value::Inf {
        return Ok(Value::Inf);
    }
    let mut solver2 = Solver::new(e, gamma, &resolved, &[])?;
    solver2.target = Some(best);
    solver2.run(best, &mut |a, _| visit(a));
    Ok(best)
}

struct Solver<'a> {
    vars: usize,
    domain: usize,
    resolved: &'a [ResolvedAtom<'a>],
    pins: Vec<Option<usize>>,
    /// Occurrences become fully assigned exactly when their max arg is
    /// assigned (variables are assigned in index order).
    complete_at: Vec<Vec<usize>>,
    /// Occurrences still only partially assigned at a given depth.
    best: Value,
    /// When set, enumerate assignments with cost == target instead of
    /// improving.
    target: Option<Value>,
    shift: Value,
}

impl<'a> Solver<'a> {
    fn new(
        e: &Expression,
        gamma: &ValuedStructure,
        resolved: &'a [ResolvedAtom<'a>],
        pins: &[(usize, usize)],
    ) -> Result<Solver<'a>, VcspError> {
        let vars = e.vars.len();
        let mut pinvec = vec![None; vars];
        for &(var, val) in pins {
            if var >= vars {
                return Err(VcspError::UnboundVariable(format!("pin on variable {var}")));
            }
            if val >= gamma.domain_size {
                return Err(VcspError::UnboundVariable(format!(
                    "pin value {val} outside the domain"
                )));
            }
            pinvec[var] = Some(val);
        }
        let mut complete_at = vec![Vec::new(); vars.max(1)];
        for (i, r) in resolved.iter().enumerate() {
            let maxarg = r.args.iter().copied().max().unwrap_or(0);
            if vars > 0 {
                complete_at[maxarg].push(i);
            }
        }
        Ok(Solver {
            vars,
            domain: gamma.domain_size,
            resolved,
            pins: pinvec,
            complete_at,
            best: Value::Inf,
            target: None,
            shift: Value::Fin(e.shift),
        })
    }

    /// Admissible lower bound for occurrences not yet fully assigned:
    /// minimum possible atom value consistent with the fixed prefix.
    fn optimistic(&self, r: &ResolvedAtom<'_>, assignment: &[usize], depth: usize) -> Value {
        if r.weight.is_zero() {
            return Value::ZERO;
        }
        match &r.atom {
            ExprAtom::Bot => Value::Inf,
            ExprAtom::Eq => {
                let (a, b) = (r.args[0], r.args[1]);
                if a < depth && b < depth && assignment[a] != assignment[b] {
                    Value::Inf
                } else {
                    Value::ZERO
                }
            }
            ExprAtom::Rel(_) => {
                let rel = r.rel.unwrap();
                if rel.default <= Value::ZERO {
                    return rel.default.scale(r.weight);
                }
                // min(default, best matching entry); `default` is
                // reachable unless the entries cover every completion,
                // which we do not track -- this stays admissible.
                let mut m = rel.default;
                'entries: for (t, v) in &rel.entries {
                    if *v >= m {
                        continue;
                    }
                    for (pos, &arg) in r.args.iter().enumerate() {
                        if arg < depth && assignment[arg] != t[pos] {
                            continue 'entries;
                        }
                    }
                    // Repeated variables must agree inside the tuple.
                    for i in 0..r.args.len() {
                        for j in (i + 1)..r.args.len() {
                            if r.args[i] == r.args[j] && t[i] != t[j] {
                                continue 'entries;
                            }
                        }
                    }
                    m = *v;
                    if m <= Value::ZERO {
                        break;
                    }
                }
                m.scale(r.weight)
            }
        }
    }

    fn bound(&self, assignment: &[usize], depth: usize, exact: Value) -> Value {
        let mut b = exact;
        for r in self.resolved {
            let maxarg = r.args.iter().copied().max().unwrap_or(0);
            if self.vars > 0 && maxarg >= depth {
                b = b + self.optimistic(r, assignment, depth);
                if b == Value::Inf {
                    return b;
                }
            }
        }
        b
    }

    fn run(&mut self, prune_at: Value, emit: &mut dyn FnMut(&[usize], Value)) {
        let mut assignment = vec![0usize; self.vars];
        let shift = self.shift;
        self.dfs(&mut assignment, 0, shift, prune_at, emit);
    }

    fn dfs(
        &mut self,
        assignment: &mut Vec<usize>,
        depth: usize,
        exact: Value,
        prune_at: Value,
        emit: &mut dyn FnMut(&[usize], Value),
    ) {
        if depth == self.vars {
            match self.target {
                Some(t) => {
                    if exact == t {
                        emit(assignment, exact);
                    }
                }
                None => {
                    if exact < self.best {
                        self.best = exact;
                        emit(assignment, exact);
                    }
                }
            }
            return;
        }
        let values: Vec<usize> = match self.pins[depth] {
            Some(v) => vec![v],
            None => (0..self.domain).collect(),
        };
        for v in values {
            assignment[depth] = v;
            // Exact cost of occurrences completed at this depth.
            let mut next_exact = exact;
            for &i in &self.complete_at[depth] {
                next_exact = next_exact + atom_value(&self.resolved[i], assignment);
                if next_exact == Value::Inf {
                    break;
                }
            }
            if next_exact == Value::Inf {
                continue;
            }
            let b = self.bound(assignment, depth + 1, next_exact);
            let cutoff = match self.target {
                Some(t) => {
                    if b > t {
                        continue;
                    }
                    t
                }
                None => {
                    if b >= self.best.min(prune_at) {
                        continue;
                    }
                    prune_at
                }
            };
            self.dfs(assignment, depth + 1, next_exact, cutoff, emit);
        }
    }
}

// ---------------------------------------------------------------------
// Resilience <-> VCSP translations
// ---------------------------------------------------------------------

/// One variable per database element, one atom occurrence (weight =
/// multiplicity) per distinct tuple.  Minimizing the result over the 0/1
/// dual of a finite dual of `μ` computes the resilience of `db`.
pub fn resilience_to_vcsp(db: &BagDatabase) -> Expression {
    let vars: Vec<String> = db.labels().iter().map(|l| format!("x_{l}")).collect();
    let mut e = Expression::new(vars);
    for (sym, tuple, mult) in db.distinct_tuples() {
        let name = db.signature().name(sym).to_string();
        e.push(ExprAtom::Rel(name), tuple, mult);
    }
    e
}

/// Inverse translation: variables become elements (equality atoms merge
/// them), atom weights become tuple multiplicities.  ⊥ atoms and
/// non-integer weights are rejected.
pub fn vcsp_to_resilience(
    e: &Expression,
    sig: &Signature,
) -> Result<BagDatabase, VcspError> {
    // Union-find over variables, driven by equality atoms.
    let n = e.vars.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        if parent[x] != x {
            let r = find(parent, parent[x]);
            parent[x] = r;
        }
        parent[x]
    }
    for o in &e.occurrences {
        match o.atom {
            ExprAtom::Bot => {
                return Err(VcspError::BottomAtom(
                    "expression contains ⊥ and has no database form".into(),
                ))
            }
            ExprAtom::Eq => {
                let a = find(&mut parent, o.args[0]);
                let b = find(&mut parent, o.args[1]);
                parent[a.max(b)] = a.min(b);
            }
            ExprAtom::Rel(_) => {}
        }
    }
    let mut rep_index: BTreeMap<usize, usize> = BTreeMap::new();
    let mut labels: Vec<String> = Vec::new();
    for x in 0..n {
        let r = find(&mut parent, x);
        if r == x {
            rep_index.insert(x, labels.len());
            labels.push(e.vars[x].clone());
        }
    }
    let mut db = BagDatabase::with_labels(sig.clone(), labels);
    for o in &e.occurrences {
        if let ExprAtom::Rel(name) = &o.atom {
            if !o.weight.is_integer() || o.weight.is_negative() {
                return Err(VcspError::NonIntegerWeight(format!(
                    "weight {} on {}",
                    crate::value::rational_to_string(&o.weight),
                    name
                )));
            }
            let mult = *o.weight.numer() as u64;
            if mult == 0 {
                continue;
            }
            let tuple: Vec<usize> = o
                .args
                .iter()
                .map(|&a| rep_index[&find(&mut parent, a)])
                .collect();
            db.add_copies(name, tuple, mult)?;
        }
    }
    Ok(db)
}

// ---------------------------------------------------------------------
// Pp-powers
// ---------------------------------------------------------------------

/// A variable reference inside a gadget definition: a free slot or a
/// projected-away local.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GadgetVar {
    Slot(usize),
    Local(usize),
}

/// Atoms of a gadget definition tree.  `Opt`/`Feas` nodes stay symbolic
/// until materialized against a concrete structure.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GadgetAtom {
    Rel(String),
    Eq,
    Bot,
    Opt(Box<GadgetExpr>),
    Feas(Box<GadgetExpr>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GadgetTerm {
    pub atom: GadgetAtom,
    pub args: Vec<GadgetVar>,
    pub weight: Rational,
}

/// A definition tree over source atoms built from sum, projection
/// (implicit infimum over locals), shift, non-negative scaling, Feas and
/// Opt.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GadgetExpr {
    pub slots: usize,
    pub locals: usize,
    pub terms: Vec<GadgetTerm>,
    pub shift: Rational,
}

impl GadgetExpr {
    pub fn new(slots: usize, locals: usize) -> GadgetExpr {
        GadgetExpr {
            slots,
            locals,
            terms: Vec::new(),
            shift: Rational::zero(),
        }
    }

    pub fn push(&mut self, atom: GadgetAtom, args: Vec<GadgetVar>, weight: u64) {
        self.terms.push(GadgetTerm {
            atom,
            args,
            weight: Rational::from_integer(weight as i64),
        });
    }

    fn check_vars(&self) -> Result<(), VcspError> {
        for t in &self.terms {
            for v in &t.args {
                let ok = match v {
                    GadgetVar::Slot(i) => *i < self.slots,
                    GadgetVar::Local(i) => *i < self.locals,
                };
                if !ok {
                    return Err(VcspError::MalformedSpec("variable index out of range".into()));
                }
            }
            if let GadgetAtom::Opt(inner) | GadgetAtom::Feas(inner) = &t.atom {
                if t.args.len() != inner.slots {
                    return Err(VcspError::MalformedSpec(
                        "Opt/Feas node arity does not match its definition".into(),
                    ));
                }
                inner.check_vars()?;
            }
        }
        Ok(())
    }

    /// Lower to a flat [`Expression`], materializing nested `Opt`/`Feas`
    /// nodes as crisp relations over `gamma` (added to `extended` under
    /// synthetic names).  Slot `i` maps to expression variable `slot_of[i]`.
    fn lower_into(
        &self,
        expr: &mut Expression,
        slot_of: &[usize],
        gamma: &ValuedStructure,
        extended: &mut ValuedStructure,
        gadget_counter: &mut usize,
    ) -> Result<(), VcspError> {
        let local_base = expr.vars.len();
        for i in 0..self.locals {
            expr.vars.push(format!("_l{}_{}", local_base, i));
        }
        let resolve_var = |v: &GadgetVar| match v {
            GadgetVar::Slot(i) => slot_of[*i],
            GadgetVar::Local(i) => local_base + i,
        };
        for t in &self.terms {
            let args: Vec<usize> = t.args.iter().map(&resolve_var).collect();
            match &t.atom {
                GadgetAtom::Rel(name) => {
                    expr.push_weighted(ExprAtom::Rel(name.clone()), args, t.weight)
                }
                GadgetAtom::Eq => expr.push_weighted(ExprAtom::Eq, args, t.weight),
                GadgetAtom::Bot => expr.push_weighted(ExprAtom::Bot, args, t.weight),
                GadgetAtom::Opt(inner) => {
                    let rel = materialize_opt(inner, gamma, extended, gadget_counter)?;
                    let name = format!("#opt{}", *gadget_counter);
                    *gadget_counter += 1;
                    extended.add_relation(&name, rel);
                    expr.push_weighted(ExprAtom::Rel(name), args, t.weight);
                }
                GadgetAtom::Feas(inner) => {
                    let rel = materialize_feas(inner, gamma, extended, gadget_counter)?;
                    let name = format!("#feas{}", *gadget_counter);
                    *gadget_counter += 1;
                    extended.add_relation(&name, rel);
                    expr.push_weighted(ExprAtom::Rel(name), args, t.weight);
                }
            }
        }
        expr.shift += self.shift;
        Ok(())
    }
}

/// Materialize `Opt` of a gadget expression over `gamma` as a sparse
/// crisp relation: the set of slot tuples extendable to a global optimum.
fn materialize_opt(
    g: &GadgetExpr,
    gamma: &ValuedStructure,
    extended: &mut ValuedStructure,
    gadget_counter: &mut usize,
) -> Result<ValuedRelation, VcspError> {
    let (expr, eval_structure) = lower_gadget(g, gamma, extended, gadget_counter)?;
    let mut tuples: BTreeSet<Vec<usize>> = BTreeSet::new();
    let min = for_each_optimum(&expr, &eval_structure, &mut |a| {
        tuples.insert(a[..g.slots].to_vec());
    })?;
    if min == Value::Inf {
        return Ok(ValuedRelation::constant(g.slots, gamma.domain_size, Value::Inf));
    }
    Ok(ValuedRelation::crisp(g.slots, gamma.domain_size, &tuples))
}

fn materialize_feas(
    g: &GadgetExpr,
    gamma: &ValuedStructure,
    extended: &mut ValuedStructure,
    gadget_counter: &mut usize,
) -> Result<ValuedRelation, VcspError> {
    let (expr, eval_structure) = lower_gadget(g, gamma, extended, gadget_counter)?;
    let total: u128 = (gamma.domain_size as u128).checked_pow(g.slots as u32).unwrap_or(u128::MAX);
    if total > 1_000_000 {
        return Err(VcspError::Guard(format!(
            "Feas materialization over {total} slot tuples"
        )));
    }
    let mut tuples: BTreeSet<Vec<usize>> = BTreeSet::new();
    for t in TupleIter::new(gamma.domain_size, g.slots) {
        let pins: Vec<(usize, usize)> = t.iter().copied().enumerate().collect();
        let m = min_cost_with_pins(&expr, &eval_structure, &pins)?;
        if m.value.is_finite() {
            tuples.insert(t);
        }
    }
    Ok(ValuedRelation::crisp(g.slots, gamma.domain_size, &tuples))
}

/// Lower a gadget to a plain expression (slots first, then locals) and
/// the structure to evaluate it over.
fn lower_gadget(
    g: &GadgetExpr,
    gamma: &ValuedStructure,
    extended: &mut ValuedStructure,
    gadget_counter: &mut usize,
) -> Result<(Expression, ValuedStructure), VcspError> {
    let mut expr = Expression::new((0..g.slots).map(|i| format!("s{i}")).collect());
    let slot_of: Vec<usize> = (0..g.slots).collect();
    g.lower_into(&mut expr, &slot_of, gamma, extended, gadget_counter)?;
    Ok((expr, extended.clone()))
}

/// A `d`-th pp-power specification: how each target symbol is defined
/// over the source structure.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PpPowerSpec {
    pub dimension: usize,
    /// target symbol -> (target arity, definition with arity * d slots)
    pub defs: BTreeMap<String, (usize, GadgetExpr)>,
}

impl PpPowerSpec {
    pub fn identity(gamma: &ValuedStructure) -> PpPowerSpec {
        let mut defs = BTreeMap::new();
        for (name, arity) in gamma.symbols() {
            let mut g = GadgetExpr::new(arity, 0);
            g.push(
                GadgetAtom::Rel(name.to_string()),
                (0..arity).map(GadgetVar::Slot).collect(),
                1,
            );
            defs.insert(name.to_string(), (arity, g));
        }
        PpPowerSpec {
            dimension: 1,
            defs,
        }
    }

    pub fn validate(&self) -> Result<(), VcspError> {
        if self.dimension == 0 {
            return Err(VcspError::MalformedSpec("dimension must be positive".into()));
        }
        for (name, (arity, g)) in &self.defs {
            if g.slots != arity * self.dimension {
                return Err(VcspError::MalformedSpec(format!(
                    "{name}: {} slots, expected arity {arity} x dimension {}",
                    g.slots, self.dimension
                )));
            }
            g.check_vars()?;
        }
        Ok(())
    }
}

/// Output of [`pp_reduce`]: an expression over the source structure's
/// signature extended with materialized crisp gadget relations.
#[derive(Clone, Debug)]
pub struct ReducedInstance {
    pub expr: Expression,
    /// Source structure plus `#opt*` / `#feas*` crisp relations.
    pub structure: ValuedStructure,
}

/// Translate an instance over a pp-power's signature into an instance
/// over the source structure: every power variable becomes `d` source
/// variables, and every atom occurrence is replaced by its definition
/// tree with fresh locals.  `Opt`/`Feas` nodes are materialized as crisp
/// relations so that cost semantics are preserved exactly.
pub fn pp_reduce(
    e: &Expression,
    spec: &PpPowerSpec,
    gamma: &ValuedStructure,
) -> Result<ReducedInstance, VcspError> {
    spec.validate()?;
    let d = spec.dimension;
    let mut out = Expression::new(Vec::new());
    for v in &e.vars {
        for j in 0..d {
            out.vars.push(format!("{v}:{j}"));
        }
    }
    let mut extended = gamma.clone();
    let mut counter = 0usize;
    for o in &e.occurrences {
        let name = match &o.atom {
            ExprAtom::Rel(n) => n,
            ExprAtom::Eq | ExprAtom::Bot => {
                return Err(VcspError::MalformedSpec(
                    "builtin atoms have no pp-power definition".into(),
                ))
            }
        };
        let (arity, def) = spec
            .defs
            .get(name)
            .ok_or_else(|| VcspError::UnknownSymbol(name.clone()))?;
        if *arity != o.args.len() {
            return Err(VcspError::ArityMismatch(format!("atom {name}")));
        }
        if !o.weight.is_integer() || o.weight.is_negative() {
            return Err(VcspError::NonIntegerWeight(format!("atom {name}")));
        }
        let copies = *o.weight.numer() as u64;
        let slot_of: Vec<usize> = o
            .args
            .iter()
            .flat_map(|&a| (0..d).map(move |j| a * d + j))
            .collect();
        for _ in 0..copies {
            def.lower_into(&mut out, &slot_of, gamma, &mut extended, &mut counter)?;
        }
    }
    Ok(ReducedInstance {
        expr: out,
        structure: extended,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::FiniteStructure;

    fn gamma_mc() -> ValuedStructure {
        ValuedStructure::max_cut()
    }

    fn expr(vars: &[&str]) -> Expression {
        Expression::new(vars.iter().map(|v| v.to_string()).collect())
    }

    #[test]
    fn evaluate_on_max_cut() {
        // R(x,y) + R(y,x) at (0,1): 0 + 1 (from the published table).
        let mut e = expr(&["x", "y"]);
        e.push(ExprAtom::Rel("R".into()), vec![0, 1], 1);
        e.push(ExprAtom::Rel("R".into()), vec![1, 0], 1);
        assert_eq!(evaluate(&e, &gamma_mc(), &[0, 1]).unwrap(), Value::from_int(1));

        // A ⊥ atom forces ∞.
        let mut e2 = expr(&["x"]);
        e2.push(ExprAtom::Bot, vec![0], 1);
        assert_eq!(evaluate(&e2, &gamma_mc(), &[0]).unwrap(), Value::Inf);

        // The empty sum is constant 0.
        let e3 = expr(&[]);
        assert_eq!(evaluate(&e3, &gamma_mc(), &[]).unwrap(), Value::ZERO);
    }

    #[test]
    fn evaluate_is_linear_in_multiplicity() {
        let mut once = expr(&["x", "y"]);
        once.push(ExprAtom::Rel("R".into()), vec![0, 1], 1);
        let mut twice = expr(&["x", "y"]);
        twice.push(ExprAtom::Rel("R".into()), vec![0, 1], 2);
        for a in 0..2 {
            for b in 0..2 {
                let v1 = evaluate(&once, &gamma_mc(), &[a, b]).unwrap();
                let v2 = evaluate(&twice, &gamma_mc(), &[a, b]).unwrap();
                assert_eq!(v1 + v1, v2);
            }
        }
    }

    #[test]
    fn min_cost_examples() {
        // The 2-cycle over the max-cut structure costs 1 (oracle: all 4
        // assignments).
        let mut e = expr(&["x", "y"]);
        e.push(ExprAtom::Rel("R".into()), vec![0, 1], 1);
        e.push(ExprAtom::Rel("R".into()), vec![1, 0], 1);
        let mut best = Value::Inf;
        for a in 0..2 {
            for b in 0..2 {
                best = best.min(evaluate(&e, &gamma_mc(), &[a, b]).unwrap());
            }
        }
        assert_eq!(best, Value::from_int(1));
        let m = min_cost(&e, &gamma_mc()).unwrap();
        assert_eq!(m.value, Value::from_int(1));
        assert_eq!(m.argmin, Some(vec![0, 1])); // lexicographically least

        // A single atom reaches 0 at (0,1).
        let mut e1 = expr(&["x", "y"]);
        e1.push(ExprAtom::Rel("R".into()), vec![0, 1], 1);
        let m1 = min_cost(&e1, &gamma_mc()).unwrap();
        assert_eq!(m1.value, Value::ZERO);
        assert_eq!(m1.argmin, Some(vec![0, 1]));

        // OIT(x,x,x) is infeasible: no constant tuple is in OIT.
        let mut e2 = expr(&["x"]);
        e2.push(ExprAtom::Rel("OIT".into()), vec![0, 0, 0], 1);
        let m2 = min_cost(&e2, &ValuedStructure::oit()).unwrap();
        assert_eq!(m2.value, Value::Inf);
        assert_eq!(m2.argmin, None);
    }

    #[test]
    fn min_cost_agrees_with_enumeration() {
        // Random-ish small instances over the max-cut structure and a
        // 3-element 0/1 dual.
        let t3 = FiniteStructure::transitive_tournament(3);
        let duals = [gamma_mc(), valued_dual(&t3)];
        let mut seed = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            seed
        };
        for gamma in &duals {
            for _case in 0..40 {
                let nvars = 1 + (next() % 4) as usize;
                let mut e = Expression::new((0..nvars).map(|i| format!("v{i}")).collect());
                let natoms = 1 + (next() % 5) as usize;
                for _ in 0..natoms {
                    let a = (next() % nvars as u64) as usize;
                    let b = (next() % nvars as u64) as usize;
                    let w = 1 + (next() % 3);
                    e.push(ExprAtom::Rel("R".into()), vec![a, b], w);
                }
                if next() % 3 == 0 {
                    let a = (next() % nvars as u64) as usize;
                    let b = (next() % nvars as u64) as usize;
                    e.push(ExprAtom::Eq, vec![a, b], 1);
                }
                // Exhaustive oracle.
                let mut best = Value::Inf;
                let mut best_assign = None;
                for t in TupleIter::new(gamma.domain_size, nvars) {
                    let v = evaluate(&e, gamma, &t).unwrap();
                    if v < best || (v == best && Some(&t) < best_assign.as_ref()) {
                        best = v;
                        best_assign = Some(t);
                    }
                }
                let m = min_cost(&e, gamma).unwrap();
                assert_eq!(m.value, best);
                if best != Value::Inf {
                    assert_eq!(m.argmin, best_assign);
                }
            }
        }
    }

    #[test]
    fn clone_op_examples() {
        let mc = gamma_mc();
        let r = mc.relation_named("R").unwrap();

        // Opt of the max-cut relation is the crisp {(0,1)}.
        let opt = r.opt();
        assert_eq!(opt.get(&[0, 1]), Value::ZERO);
        for t in [[0, 0], [1, 0], [1, 1]] {
            assert_eq!(opt.get(&t), Value::Inf);
        }
        // Oracle: (0,1) is the unique minimal-value tuple.
        let mut mins = 0;
        for t in TupleIter::new(2, 2) {
            if r.get(&t) == r.min_value() {
                mins += 1;
            }
        }
        assert_eq!(mins, 1);

        // Identity shift.
        assert_eq!(r.shift(Rational::zero()), *r);

        // Projection keeps the first coordinate: inf over the second
        // argument of the table gives 0 at x=0 and 1 at x=1.
        let p = r.project(1).unwrap();
        let expected0 = r.get(&[0, 0]).min(r.get(&[0, 1]));
        let expected1 = r.get(&[1, 0]).min(r.get(&[1, 1]));
        assert_eq!(p.get(&[0]), expected0);
        assert_eq!(p.get(&[1]), expected1);
        assert_eq!(p.get(&[0]), Value::ZERO);
        assert_eq!(p.get(&[1]), Value::from_int(1));

        // Negative scaling is rejected; Feas of a finite-valued relation
        // is everything.
        assert!(r.scale(Rational::from_integer(-1)).is_err());
        let f = r.feas();
        for t in TupleIter::new(2, 2) {
            assert_eq!(f.get(&t), Value::ZERO);
        }
    }

    #[test]
    fn valued_dual_examples() {
        // A single edge: R(a,b) = 0, the other three pairs 1.
        let b = FiniteStructure::digraph(2, &[(0, 1)]);
        let d = valued_dual(&b);
        let r = d.relation_named("R").unwrap();
        assert_eq!(r.get(&[0, 1]), Value::ZERO);
        for t in [[0, 0], [1, 0], [1, 1]] {
            assert_eq!(r.get(&t), Value::from_int(1));
        }
        // T_2 gives exactly the max-cut structure's table.
        let t2 = FiniteStructure::transitive_tournament(2);
        let d2 = valued_dual(&t2);
        let mc = gamma_mc();
        for t in TupleIter::new(2, 2) {
            assert_eq!(
                d2.relation_named("R").unwrap().get(&t),
                mc.relation_named("R").unwrap().get(&t)
            );
        }
        // Empty relation: all 1.
        let e = FiniteStructure::new(crate::structure::Signature::single_binary(), 2);
        let de = valued_dual(&e);
        for t in TupleIter::new(2, 2) {
            assert_eq!(de.relation_named("R").unwrap().get(&t), Value::from_int(1));
        }
        // Restricting the dual to its 0-set reproduces the structure;
        // Opt of the dual relation is the original relation when
        // non-empty.
        let opt = valued_dual(&b).relation_named("R").unwrap().opt();
        for t in TupleIter::new(2, 2) {
            let in_b = b.has_tuple(0, &t);
            assert_eq!(opt.get(&t) == Value::ZERO, in_b);
        }
    }

    #[test]
    fn resilience_translation_round_trip() {
        use crate::structure::Signature;
        let mut db = BagDatabase::new(Signature::single_binary(), 2);
        db.add_copies("R", vec![0, 1], 3).unwrap();
        let e = resilience_to_vcsp(&db);
        assert_eq!(e.occurrences.len(), 1);
        assert_eq!(e.occurrences[0].weight, Rational::from_integer(3));
        let back = vcsp_to_resilience(&e, db.signature()).unwrap();
        assert_eq!(back.multiplicity("R", &[0, 1]), 3);
        assert_eq!(back.size(), db.size());
    }

    #[test]
    fn vcsp_to_resilience_merges_equalities_and_rejects_bottom() {
        let mut e = expr(&["a", "b", "c"]);
        e.push(ExprAtom::Rel("R".into()), vec![0, 1], 2);
        e.push(ExprAtom::Eq, vec![1, 2], 1);
        let db = vcsp_to_resilience(&e, &Signature::single_binary()).unwrap();
        assert_eq!(db.size(), 2);
        assert_eq!(db.total_multiplicity(), 2);

        let mut bad = expr(&["a"]);
        bad.push(ExprAtom::Bot, vec![0], 1);
        assert!(vcsp_to_resilience(&bad, &Signature::single_binary()).is_err());
    }

    #[test]
    fn identity_pp_power_preserves_cost() {
        let mc = gamma_mc();
        let spec = PpPowerSpec::identity(&mc);
        let mut e = expr(&["x", "y", "z"]);
        e.push(ExprAtom::Rel("R".into()), vec![0, 1], 1);
        e.push(ExprAtom::Rel("R".into()), vec![1, 2], 2);
        let reduced = pp_reduce(&e, &spec, &mc).unwrap();
        let m0 = min_cost(&e, &mc).unwrap();
        let m1 = min_cost(&reduced.expr, &reduced.structure).unwrap();
        assert_eq!(m0.value, m1.value);
    }

    #[test]
    fn opt_gadget_materializes_as_crisp_constraint() {
        // Opt(R) over the 0/1 dual of a single edge pins the edge.
        let b = FiniteStructure::digraph(2, &[(0, 1)]);
        let gamma = valued_dual(&b);
        let mut inner = GadgetExpr::new(2, 0);
        inner.push(
            GadgetAtom::Rel("R".into()),
            vec![GadgetVar::Slot(0), GadgetVar::Slot(1)],
            1,
        );
        let mut g = GadgetExpr::new(2, 0);
        g.push(
            GadgetAtom::Opt(Box::new(inner)),
            vec![GadgetVar::Slot(0), GadgetVar::Slot(1)],
            1,
        );
        let mut spec_defs = BTreeMap::new();
        spec_defs.insert("R".to_string(), (2usize, g));
        let spec = PpPowerSpec {
            dimension: 1,
            defs: spec_defs,
        };
        let mut e = expr(&["x", "y"]);
        e.push(ExprAtom::Rel("R".into()), vec![0, 1], 1);
        let reduced = pp_reduce(&e, &spec, &gamma).unwrap();
        let m = min_cost(&reduced.expr, &reduced.structure).unwrap();
        assert_eq!(m.value, Value::ZERO);
        assert_eq!(m.argmin, Some(vec![0, 1]));
    }
}
