//! Resilience solvers: a brute-force oracle, an exact witness-hitting
//! branch-and-bound, and closed-form polynomial algorithms for the
//! three tractable queries.
//!
//! Deletions are all-or-nothing per distinct tuple during search
//! (query satisfaction ignores multiplicities, so removing some but not
//! all copies of a tuple never changes satisfaction); deletion costs
//! still count copies.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::classify::{classify, Complexity, PtimeCase, Verdict};
use crate::query::{holds, QueryError, Ucq};
use crate::structure::BagDatabase;

/// Hard cap for the brute-force oracle.
pub const BRUTE_GUARD: usize = 24;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ResilienceError {
    Guard(String),
    Query(QueryError),
    CaseMismatch(String),
}

impl fmt::Display for ResilienceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResilienceError::Guard(m) => write!(f, "guard exceeded: {m}"),
            ResilienceError::Query(e) => write!(f, "{e}"),
            ResilienceError::CaseMismatch(m) => write!(f, "case mismatch: {m}"),
        }
    }
}

impl From<QueryError> for ResilienceError {
    fn from(e: QueryError) -> ResilienceError {
        ResilienceError::Query(e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Brute,
    Exact,
    Poly,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Brute => write!(f, "brute"),
            Method::Exact => write!(f, "exact"),
            Method::Poly => write!(f, "poly"),
        }
    }
}

/// A deleted tuple with how many copies went.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Deletion {
    pub symbol: String,
    pub tuple: Vec<usize>,
    pub copies: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResilienceResult {
    pub value: u64,
    pub deleted: Vec<Deletion>,
    pub method: Method,
}

impl ResilienceResult {
    fn verified(
        self,
        db: &BagDatabase,
        mu: &Ucq,
    ) -> Result<ResilienceResult, ResilienceError> {
        let doomed: Vec<(usize, Vec<usize>)> = self
            .deleted
            .iter()
            .map(|d| {
                (
                    db.signature().index_of(&d.symbol).unwrap(),
                    d.tuple.clone(),
                )
            })
            .collect();
        let after = db.delete_all_copies(&doomed);
        if holds(mu, &after.support())? {
            return Err(ResilienceError::CaseMismatch(
                "internal error: reported deletion set does not falsify the query".into(),
            ));
        }
        let total: u64 = self.deleted.iter().map(|d| d.copies).sum();
        if total != self.value {
            return Err(ResilienceError::CaseMismatch(
                "internal error: deletion copies do not sum to the reported value".into(),
            ));
        }
        Ok(self)
    }
}

fn deletions_of(db: &BagDatabase, doomed: &[(usize, Vec<usize>)]) -> Vec<Deletion> {
    doomed
        .iter()
        .map(|(sym, t)| Deletion {
            symbol: db.signature().name(*sym).to_string(),
            tuple: t.clone(),
            copies: db.relation(*sym)[t],
        })
        .collect()
}

/// Exhaustive minimum over subsets of distinct tuples.  Exact; guarded
/// at [`BRUTE_GUARD`] distinct tuples.
pub fn resilience_brute(db: &BagDatabase, mu: &Ucq) -> Result<ResilienceResult, ResilienceError> {
    let tuples = db.distinct_tuples();
    if tuples.len() > BRUTE_GUARD {
        return Err(ResilienceError::Guard(format!(
            "{} distinct tuples exceed the brute-force cap of {BRUTE_GUARD}",
            tuples.len()
        )));
    }
    if !holds(mu, &db.support())? {
        return ResilienceResult {
            value: 0,
            deleted: Vec::new(),
            method: Method::Brute,
        }
        .verified(db, mu);
    }
    let n = tuples.len();
    let mut best_cost = u64::MAX;
    let mut best_mask: u64 = 0;
    for mask in 0u64..(1u64 << n) {
        let cost: u64 = (0..n)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| tuples[i].2)
            .sum();
        if cost >= best_cost {
            continue;
        }
        let doomed: Vec<(usize, Vec<usize>)> = (0..n)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| (tuples[i].0, tuples[i].1.clone()))
            .collect();
        let after = db.delete_all_copies(&doomed);
        if !holds(mu, &after.support())? {
            best_cost = cost;
            best_mask = mask;
        }
    }
    let doomed: Vec<(usize, Vec<usize>)> = (0..n)
        .filter(|i| best_mask & (1 << i) != 0)
        .map(|i| (tuples[i].0, tuples[i].1.clone()))
        .collect();
    ResilienceResult {
        value: best_cost,
        deleted: deletions_of(db, &doomed),
        method: Method::Brute,
    }
    .verified(db, mu)
}

/// A homomorphism witness of some disjunct, as the set of distinct
/// tuples its image uses.
fn find_witness_tuples(
    db: &BagDatabase,
    mu: &Ucq,
    banned: &BTreeSet<(usize, Vec<usize>)>,
) -> Result<Option<Vec<(usize, Vec<usize>)>>, ResilienceError> {
    let support = {
        let doomed: Vec<(usize, Vec<usize>)> = banned.iter().cloned().collect();
        db.delete_all_copies(&doomed).support()
    };
    for cq in &mu.disjuncts {
        // Align the canonical database and the support to a shared
        // signature, then search.
        let mut symbols: Vec<(String, usize)> = support
            .signature()
            .symbols()
            .map(|(n, a)| (n.to_string(), a))
            .collect();
        for s in cq.symbols() {
            if support.signature().index_of(&s).is_none() {
                symbols.push((s, 2));
            }
        }
        let sig = crate::structure::Signature::new(symbols)
            .map_err(|e| ResilienceError::Query(e.into()))?;
        let canon = cq
            .canonical_database()
            .align_to(&sig)
            .map_err(|e| ResilienceError::Query(e.into()))?;
        let target = support
            .align_to(&sig)
            .map_err(|e| ResilienceError::Query(e.into()))?;
        if let Some(h) = crate::structure::find_homomorphism(&canon, &target)
            .map_err(|e| ResilienceError::Query(e.into()))?
        {
            let mut used: BTreeSet<(usize, Vec<usize>)> = BTreeSet::new();
            for a in cq.atoms() {
                let sym_db = db.signature().index_of(&a.symbol).unwrap();
                let tuple = vec![h.map[a.from], h.map[a.to]];
                used.insert((sym_db, tuple));
            }
            return Ok(Some(used.into_iter().collect()));
        }
    }
    Ok(None)
}

/// Greedy packing of tuple-disjoint witnesses; each packed witness needs
/// at least its cheapest tuple deleted, so the sum of those minima is an
/// admissible lower bound.
fn packing_lower_bound(
    db: &BagDatabase,
    mu: &Ucq,
    banned: &BTreeSet<(usize, Vec<usize>)>,
) -> Result<u64, ResilienceError> {
    let mut blocked = banned.clone();
    let mut bound = 0u64;
    while let Some(witness) = find_witness_tuples(db, mu, &blocked)? {
        bound += witness
            .iter()
            .map(|(sym, t)| db.relation(*sym)[t])
            .min()
            .unwrap_or(1);
        for t in witness {
            blocked.insert(t);
        }
    }
    Ok(bound)
}

fn exact_search(
    db: &BagDatabase,
    mu: &Ucq,
    deleted: &mut BTreeSet<(usize, Vec<usize>)>,
    cost: u64,
    best: &mut (u64, BTreeSet<(usize, Vec<usize>)>),
) -> Result<(), ResilienceError> {
    if cost >= best.0 {
        return Ok(());
    }
    let witness = match find_witness_tuples(db, mu, deleted)? {
        None => {
            *best = (cost, deleted.clone());
            return Ok(());
        }
        Some(w) => w,
    };
    // Admissible bound: deleted so far plus a packing bound on what is
    // left.
    let lb = packing_lower_bound(db, mu, deleted)?;
    if cost + lb >= best.0 {
        return Ok(());
    }
    for (sym, tuple) in witness {
        let copies = db.relation(sym)[&tuple];
        deleted.insert((sym, tuple.clone()));
        exact_search(db, mu, deleted, cost + copies, best)?;
        deleted.remove(&(sym, tuple));
    }
    Ok(())
}

/// Exact resilience by witness-hitting branch-and-bound: repeatedly find
/// a homomorphism witness and branch on deleting each tuple in its
/// image.
pub fn resilience_exact(db: &BagDatabase, mu: &Ucq) -> Result<ResilienceResult, ResilienceError> {
    let total = db.total_multiplicity();
    // Deleting everything always works (when the query holds at all).
    if !holds(mu, &db.support())? {
        return ResilienceResult {
            value: 0,
            deleted: Vec::new(),
            method: Method::Exact,
        }
        .verified(db, mu);
    }
    let all: BTreeSet<(usize, Vec<usize>)> = db
        .distinct_tuples()
        .into_iter()
        .map(|(s, t, _)| (s, t))
        .collect();
    let mut best = (total, all);
    exact_search(db, mu, &mut BTreeSet::new(), 0, &mut best)?;
    let doomed: Vec<(usize, Vec<usize>)> = best.1.into_iter().collect();
    ResilienceResult {
        value: best.0,
        deleted: deletions_of(db, &doomed),
        method: Method::Exact,
    }
    .verified(db, mu)
}

/// Closed-form polynomial resilience for the three tractable queries.
///
/// * `Loop`: delete every loop copy.
/// * `Edge`: delete everything.
/// * `TwoCycle`: delete every loop copy, plus for each antiparallel pair
///   the direction with smaller total multiplicity (a loop alone already
///   witnesses the 2-cycle query via `x = y`).
pub fn resilience_poly(
    db: &BagDatabase,
    case: PtimeCase,
) -> Result<ResilienceResult, ResilienceError> {
    for (name, arity) in db.signature().symbols() {
        if arity != 2 {
            return Err(ResilienceError::CaseMismatch(format!(
                "polynomial cases apply to binary databases; {name} has arity {arity}"
            )));
        }
    }
    let mut deleted = Vec::new();
    match case {
        PtimeCase::Loop => {
            for (sym, t, m) in db.distinct_tuples() {
                if t[0] == t[1] {
                    deleted.push(Deletion {
                        symbol: db.signature().name(sym).to_string(),
                        tuple: t,
                        copies: m,
                    });
                }
            }
        }
        PtimeCase::Edge => {
            for (sym, t, m) in db.distinct_tuples() {
                deleted.push(Deletion {
                    symbol: db.signature().name(sym).to_string(),
                    tuple: t,
                    copies: m,
                });
            }
        }
        PtimeCase::TwoCycle => {
            for (sym, t, m) in db.distinct_tuples() {
                let name = db.signature().name(sym).to_string();
                if t[0] == t[1] {
                    deleted.push(Deletion {
                        symbol: name,
                        tuple: t,
                        copies: m,
                    });
                } else if t[0] < t[1] {
                    // Handle each unordered pair once, from its ordered
                    // representative.
                    let back = vec![t[1], t[0]];
                    let m_back = db.relation(sym).get(&back).copied().unwrap_or(0);
                    if m_back == 0 {
                        continue;
                    }
                    if m <= m_back {
                        deleted.push(Deletion {
                            symbol: name,
                            tuple: t,
                            copies: m,
                        });
                    } else {
                        deleted.push(Deletion {
                            symbol: name,
                            tuple: back,
                            copies: m_back,
                        });
                    }
                }
            }
        }
    }
    let value = deleted.iter().map(|d| d.copies).sum();
    Ok(ResilienceResult {
        value,
        deleted,
        method: Method::Poly,
    })
}

/// Classify, dispatch, and solve.  PTime verdicts use the closed form;
/// NP-complete verdicts fall back to the exact solver.
pub fn solve_auto(
    db: &BagDatabase,
    mu: &Ucq,
) -> Result<(ResilienceResult, Verdict), ResilienceError> {
    let verdict = classify(mu)?;
    let result = match (verdict.complexity, verdict.ptime_case) {
        (Complexity::PTime, Some(case)) => {
            resilience_poly(db, case)?.verified(db, mu)?
        }
        _ => resilience_exact(db, mu)?,
    };
    Ok((result, verdict))
}

/// Is the resilience of `db` with respect to `μ` at most `u`?
pub fn decide(db: &BagDatabase, u: u64, mu: &Ucq) -> Result<bool, ResilienceError> {
    let (result, _) = solve_auto(db, mu)?;
    Ok(result.value <= u)
}
