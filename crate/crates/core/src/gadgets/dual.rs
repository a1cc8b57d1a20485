//! Finite duals of queries over one binary symbol, with bounded
//! exhaustive validation.
//!
//! A dual of `μ` is a structure that finite digraphs map into exactly
//! when they do not satisfy `μ`.  For the directed-path query with `ℓ`
//! edges the transitive tournament on `ℓ` vertices is such a dual; the
//! constructor here does not assume that fact but validates it over all
//! digraphs with up to 5 vertices.  User-supplied duals get the same
//! bounded validation, which is evidence, not a proof — the report says
//! how far it looked.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::GadgetError;
use crate::query::{holds, ConjunctiveQuery, Ucq};
use crate::structure::FiniteStructure;

/// How far builtin duals are validated.
pub const BUILTIN_VALIDATION_SIZE: usize = 5;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DualProvenance {
    /// Transitive tournament dual for the directed-path query with the
    /// given number of edges.
    BuiltinPath { edges: usize },
    UserSupplied,
}

/// A candidate dual together with the query it is a dual for and the
/// exhaustive-validation bound it passed.
#[derive(Clone, Debug)]
pub struct DualCandidate {
    pub structure: FiniteStructure,
    pub query: Ucq,
    pub provenance: DualProvenance,
    pub validated_up_to: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DualReport {
    pub passes: bool,
    pub validated_up_to: usize,
    pub digraphs_checked: u64,
    /// A failing digraph, when found: (size, edge list, satisfies, maps).
    pub counterexample: Option<(usize, Vec<(usize, usize)>, bool, bool)>,
}

/// The directed-path query with `edges >= 1` edges:
/// `R(x1,x2) & R(x2,x3) & ...`.
pub fn path_query(edges: usize) -> ConjunctiveQuery {
    assert!(edges >= 1);
    let names: Vec<String> = (0..=edges).map(|i| format!("x{}", i + 1)).collect();
    let atoms: Vec<(String, String, String)> = (0..edges)
        .map(|i| ("R".to_string(), names[i].clone(), names[i + 1].clone()))
        .collect();
    let refs: Vec<(&str, &str, &str)> = atoms
        .iter()
        .map(|(s, a, b)| (s.as_str(), a.as_str(), b.as_str()))
        .collect();
    ConjunctiveQuery::from_atoms(&refs).unwrap()
}

/// Dense digraph on up to 32 vertices: `out[i]` has bit `j` set iff
/// there is an edge `i -> j`.  Used to make the exhaustive validation
/// sweep cheap; the searches stay complete.
#[derive(Clone, Copy)]
struct Dense {
    n: usize,
    out: [u32; 32],
    inn: [u32; 32],
}

impl Dense {
    fn new(n: usize) -> Dense {
        Dense {
            n,
            out: [0; 32],
            inn: [0; 32],
        }
    }

    fn add_edge(&mut self, u: usize, v: usize) {
        self.out[u] |= 1 << v;
        self.inn[v] |= 1 << u;
    }

    fn from_structure(s: &FiniteStructure) -> Result<Dense, GadgetError> {
        if s.size() > 32 {
            return Err(GadgetError::Input(
                "dense digraph supports at most 32 vertices".into(),
            ));
        }
        if s.signature().len() != 1 || s.signature().arity(0) != 2 {
            return Err(GadgetError::Input(
                "dense digraph requires one binary symbol".into(),
            ));
        }
        let mut d = Dense::new(s.size());
        for t in s.relation(0) {
            d.add_edge(t[0], t[1]);
        }
        Ok(d)
    }
}

/// Complete backtracking homomorphism test between dense digraphs, with
/// forward-checked candidate masks.
fn hom_exists_dense(src: &Dense, dst: &Dense) -> bool {
    if src.n == 0 {
        return true;
    }
    if dst.n == 0 {
        return false;
    }
    let full: u32 = if dst.n == 32 {
        u32::MAX
    } else {
        (1u32 << dst.n) - 1
    };
    let mut cand = [full; 32];
    // Vertices with loops need loop targets.
    for v in 0..src.n {
        if src.out[v] & (1 << v) != 0 {
            let mut loops = 0u32;
            for c in 0..dst.n {
                if dst.out[c] & (1 << c) != 0 {
                    loops |= 1 << c;
                }
            }
            cand[v] &= loops;
            if cand[v] == 0 {
                return false;
            }
        }
    }
    fn assign(src: &Dense, dst: &Dense, cand: &mut [u32; 32], v: usize) -> bool {
        if v == src.n {
            return true;
        }
        let options = cand[v];
        let mut bits = options;
        while bits != 0 {
            let c = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            let mut saved = *cand;
            cand[v] = 1 << c;
            let mut ok = true;
            for u in (v + 1)..src.n {
                if src.out[v] & (1 << u) != 0 {
                    cand[u] &= dst.out[c];
                }
                if src.out[u] & (1 << v) != 0 {
                    cand[u] &= dst.inn[c];
                }
                if cand[u] == 0 {
                    ok = false;
                    break;
                }
            }
            if ok && assign(src, dst, cand, v + 1) {
                return true;
            }
            core::mem::swap(cand, &mut saved);
        }
        false
    }
    assign(src, dst, &mut cand, 0)
}

/// Exhaustively check the dual property of `d` for `μ` on all digraphs
/// with at most `max_size` vertices: a digraph maps homomorphically into
/// `d` iff it does not satisfy `μ`.
pub fn validate_dual(
    d: &FiniteStructure,
    mu: &Ucq,
    max_size: usize,
) -> Result<DualReport, GadgetError> {
    let symbols = mu.symbols();
    if symbols.len() != 1 {
        return Err(GadgetError::Input(format!(
            "dual validation sweeps single-symbol digraphs; query uses {{{}}}",
            symbols.join(", ")
        )));
    }
    if max_size > 5 {
        return Err(GadgetError::Input(
            "validation beyond 5 vertices is not desk-scale".into(),
        ));
    }
    // The dual itself must not satisfy the query.
    if holds(mu, d)? {
        return Ok(DualReport {
            passes: false,
            validated_up_to: 0,
            digraphs_checked: 0,
            counterexample: Some((
                d.size(),
                d.relation(0).iter().map(|t| (t[0], t[1])).collect(),
                true,
                true,
            )),
        });
    }
    let dual_dense = Dense::from_structure(d)?;
    let canons: Vec<Dense> = mu
        .disjuncts
        .iter()
        .map(|cq| Dense::from_structure(&cq.canonical_database()))
        .collect::<Result<_, _>>()?;

    let mut checked = 0u64;
    for n in 1..=max_size {
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .collect();
        let masks = 1u64 << pairs.len();
        for mask in 0..masks {
            let mut g = Dense::new(n);
            for (k, &(i, j)) in pairs.iter().enumerate() {
                if mask & (1 << k) != 0 {
                    g.add_edge(i, j);
                }
            }
            checked += 1;
            let satisfies = canons.iter().any(|c| hom_exists_dense(c, &g));
            let maps = hom_exists_dense(&g, &dual_dense);
            if satisfies == maps {
                let edges = pairs
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| mask & (1 << *k) != 0)
                    .map(|(_, &e)| e)
                    .collect();
                return Ok(DualReport {
                    passes: false,
                    validated_up_to: n,
                    digraphs_checked: checked,
                    counterexample: Some((n, edges, satisfies, maps)),
                });
            }
        }
    }
    Ok(DualReport {
        passes: true,
        validated_up_to: max_size,
        digraphs_checked: checked,
        counterexample: None,
    })
}

/// The transitive-tournament dual for the directed-path query with
/// `edges >= 2` edges, validated exhaustively up to
/// [`BUILTIN_VALIDATION_SIZE`] vertices.
pub fn builtin_dual_for_path(edges: usize) -> Result<DualCandidate, GadgetError> {
    if edges < 2 {
        return Err(GadgetError::Input(
            "builtin path duals start at 2 edges (shorter paths are the tractable edge query)"
                .into(),
        ));
    }
    if edges > 6 {
        return Err(GadgetError::Input(
            "builtin path duals stop at 6 edges (desk scale)".into(),
        ));
    }
    let structure = FiniteStructure::transitive_tournament(edges);
    let query = Ucq::single(path_query(edges));
    let report = validate_dual(&structure, &query, BUILTIN_VALIDATION_SIZE)?;
    if !report.passes {
        return Err(GadgetError::Internal(format!(
            "transitive tournament on {edges} vertices failed dual validation: {:?}",
            report.counterexample
        )));
    }
    Ok(DualCandidate {
        structure,
        query,
        provenance: DualProvenance::BuiltinPath { edges },
        validated_up_to: report.validated_up_to,
    })
}

/// Wrap a user-supplied structure as a dual candidate for `μ`,
/// validating up to `max_size`.
pub fn user_dual(
    structure: FiniteStructure,
    mu: Ucq,
    max_size: usize,
) -> Result<DualCandidate, GadgetError> {
    let report = validate_dual(&structure, &mu, max_size)?;
    if !report.passes {
        return Err(GadgetError::Input(format!(
            "structure fails dual validation for [{}]: counterexample {:?}",
            mu.display(),
            report.counterexample
        )));
    }
    Ok(DualCandidate {
        structure,
        query: mu,
        provenance: DualProvenance::UserSupplied,
        validated_up_to: report.validated_up_to,
    })
}
