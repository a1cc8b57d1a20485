//! The dichotomy decision procedure: for a union of conjunctive queries
//! over one binary relation symbol, resilience is in P exactly when the
//! normalized union is the loop query, the edge query, or the 2-cycle
//! query; otherwise it is NP-complete, either because some normalized
//! query carries a multigraph cycle of length >= 3, or because all of
//! them are trees (and the union differs from the three tractable
//! queries), in which case a finite acyclic dual drives a max-cut
//! reduction.
//!
//! The classifier itself never computes duals: after normalization the
//! case analysis reduces to shape tests.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::query::{
    normalize, shape, ConjunctiveQuery, QueryError, QueryShape, TraceStep, Ucq,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Complexity {
    PTime,
    NPComplete,
}

impl fmt::Display for Complexity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Complexity::PTime => write!(f, "PTime"),
            Complexity::NPComplete => write!(f, "NPComplete"),
        }
    }
}

/// Which tractable query the normalized union equals.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PtimeCase {
    Loop,
    Edge,
    TwoCycle,
}

impl fmt::Display for PtimeCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PtimeCase::Loop => write!(f, "Loop"),
            PtimeCase::Edge => write!(f, "Edge"),
            PtimeCase::TwoCycle => write!(f, "TwoCycle"),
        }
    }
}

/// Certificate that a normalized query is a tree (and none of the three
/// tractable queries).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeCertificate {
    pub query: String,
    pub variables: usize,
    pub simple_edges: usize,
    pub loop_free: bool,
    pub no_antiparallel_pair: bool,
    pub connected: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum HardnessReason {
    /// The named normalized query carries a multigraph cycle of length
    /// >= 3 (witness: the cycle's variables).
    CycleGeq3 {
        query_index: usize,
        cycle: Vec<String>,
    },
    /// Every normalized query is a tree and the union is none of the
    /// three tractable queries.
    TreeFamily {
        certificates: Vec<TreeCertificate>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Verdict {
    pub complexity: Complexity,
    pub ptime_case: Option<PtimeCase>,
    pub hardness_reason: Option<HardnessReason>,
    pub normalized_queries: Vec<ConjunctiveQuery>,
    pub normalization_trace: Vec<TraceStep>,
    pub shapes: Vec<QueryShape>,
}

impl Verdict {
    pub fn reason_summary(&self) -> String {
        match (&self.ptime_case, &self.hardness_reason) {
            (Some(case), _) => format!("PTime({case})"),
            (_, Some(HardnessReason::CycleGeq3 { query_index, cycle })) => format!(
                "NPComplete(CycleGeq3 in query {} via {})",
                query_index,
                cycle.join("-")
            ),
            (_, Some(HardnessReason::TreeFamily { .. })) => {
                "NPComplete(TreeFamily)".to_string()
            }
            _ => "unknown".to_string(),
        }
    }
}

/// Classify the resilience problem of a union of conjunctive queries
/// over a single binary relation symbol.
pub fn classify(mu: &Ucq) -> Result<Verdict, QueryError> {
    let symbols = mu.symbols();
    if symbols.len() != 1 {
        return Err(QueryError::Input(format!(
            "classification is defined for queries over one binary symbol; got {{{}}}",
            symbols.join(", ")
        )));
    }
    let normalized = normalize(mu)?;
    let mut shapes = Vec::new();
    for q in &normalized.queries {
        shapes.push(shape(q)?);
    }

    // Single tractable query?
    if normalized.queries.len() == 1 {
        let s = &shapes[0];
        let case = if s.is_loop_query {
            Some(PtimeCase::Loop)
        } else if s.is_edge_query {
            Some(PtimeCase::Edge)
        } else if s.is_twocycle_query {
            Some(PtimeCase::TwoCycle)
        } else {
            None
        };
        if let Some(case) = case {
            return Ok(Verdict {
                complexity: Complexity::PTime,
                ptime_case: Some(case),
                hardness_reason: None,
                normalized_queries: normalized.queries,
                normalization_trace: normalized.trace,
                shapes,
            });
        }
    }

    // A multigraph cycle of length >= 3 in any query is hard.
    if let Some(idx) = shapes.iter().position(|s| s.multigraph_cycle_ge3) {
        let cycle = shapes[idx].cycle_witness.clone().unwrap_or_default();
        return Ok(Verdict {
            complexity: Complexity::NPComplete,
            ptime_case: None,
            hardness_reason: Some(HardnessReason::CycleGeq3 {
                query_index: idx,
                cycle,
            }),
            normalized_queries: normalized.queries,
            normalization_trace: normalized.trace,
            shapes,
        });
    }

    // Otherwise every query must be a tree: after normalization a loop
    // or 2-cycle query would have absorbed or been absorbed by any other
    // disjunct, so mixed cases cannot survive.
    let mut certificates = Vec::new();
    for (q, s) in normalized.queries.iter().zip(&shapes) {
        if !s.is_tree {
            return Err(QueryError::Input(format!(
                "internal classification error: query [{}] is neither cyclic, tree, nor a tractable query",
                q.display()
            )));
        }
        let loops = q.atoms().filter(|a| a.from == a.to).count();
        let mut antiparallel = false;
        let atoms: Vec<_> = q.atoms().collect();
        for a in &atoms {
            for b in &atoms {
                if a.from == b.to && a.to == b.from && a.from != a.to {
                    antiparallel = true;
                }
            }
        }
        let simple: alloc::collections::BTreeSet<(usize, usize)> = q
            .atoms()
            .filter(|a| a.from != a.to)
            .map(|a| (a.from.min(a.to), a.from.max(a.to)))
            .collect();
        certificates.push(TreeCertificate {
            query: q.display_normalized(),
            variables: q.vars().len(),
            simple_edges: simple.len(),
            loop_free: loops == 0,
            no_antiparallel_pair: !antiparallel,
            connected: s.connected,
        });
    }
    Ok(Verdict {
        complexity: Complexity::NPComplete,
        ptime_case: None,
        hardness_reason: Some(HardnessReason::TreeFamily { certificates }),
        normalized_queries: normalized.queries,
        normalization_trace: normalized.trace,
        shapes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::parse_ucq;

    fn verdict(src: &str) -> Verdict {
        classify(&parse_ucq(src).unwrap()).unwrap()
    }

    #[test]
    fn tractable_queries() {
        let v = verdict("R(x,x)");
        assert_eq!(v.complexity, Complexity::PTime);
        assert_eq!(v.ptime_case, Some(PtimeCase::Loop));

        let v = verdict("R(x,y)");
        assert_eq!(v.ptime_case, Some(PtimeCase::Edge));

        let v = verdict("R(x,y) & R(y,x)");
        assert_eq!(v.ptime_case, Some(PtimeCase::TwoCycle));
    }

    #[test]
    fn hard_queries() {
        let v = verdict("R(x,y) & R(y,z) & R(z,x)");
        assert_eq!(v.complexity, Complexity::NPComplete);
        assert!(matches!(
            v.hardness_reason,
            Some(HardnessReason::CycleGeq3 { .. })
        ));

        let v = verdict("R(x,y) & R(y,z)");
        assert_eq!(v.complexity, Complexity::NPComplete);
        assert!(matches!(
            v.hardness_reason,
            Some(HardnessReason::TreeFamily { .. })
        ));
    }

    #[test]
    fn unions_normalize_before_classification() {
        // The loop disjunct implies mu_c and is dropped.
        let v = verdict("R(x,x) | R(x,y) & R(y,x)");
        assert_eq!(v.ptime_case, Some(PtimeCase::TwoCycle));

        // Edge absorbs the triangle.
        let v = verdict("R(x,y) | R(a,b) & R(b,c) & R(c,a)");
        assert_eq!(v.ptime_case, Some(PtimeCase::Edge));

        // Star with two out-edges minimizes to the edge query.
        let v = verdict("R(x,y) & R(x,z)");
        assert_eq!(v.ptime_case, Some(PtimeCase::Edge));

        // mu_c | triangle: incomparable, stays a 2-query union, hard.
        let v = verdict("R(x,y) & R(y,x) | R(a,b) & R(b,c) & R(c,a)");
        assert_eq!(v.complexity, Complexity::NPComplete);
    }

    #[test]
    fn multi_symbol_queries_are_rejected() {
        assert!(classify(&parse_ucq("R(x,y) & S(y,z)").unwrap()).is_err());
    }

    #[test]
    fn verdict_fields_are_consistent() {
        for src in [
            "R(x,x)",
            "R(x,y)",
            "R(x,y) & R(y,x)",
            "R(x,y) & R(y,z)",
            "R(x,y) & R(y,z) & R(z,x)",
            "R(x,x) | R(x,y) & R(y,x)",
        ] {
            let v = verdict(src);
            assert_eq!(v.complexity == Complexity::PTime, v.ptime_case.is_some());
            assert_eq!(
                v.complexity == Complexity::NPComplete,
                v.hardness_reason.is_some()
            );
            assert!(!v.normalized_queries.is_empty());
        }
    }

    #[test]
    fn classification_is_invariant_under_presentation() {
        // Variable renaming, atom reordering, disjunct reordering, and
        // redundant removable atoms do not change the verdict.
        let cases = [
            ("R(x,y) & R(y,z) & R(z,x)", "R(c,a) & R(a,b) & R(b,c)"),
            ("R(x,y) & R(y,x)", "R(b,a) & R(a,b)"),
            ("R(x,x) | R(x,y)", "R(u,v) | R(w,w)"),
            ("R(x,y)", "R(x,y) & R(x,z)"),
            ("R(x,y) & R(y,z)", "R(p,q) & R(q,r) & R(p,s)"),
        ];
        for (a, b) in cases {
            let va = verdict(a);
            let vb = verdict(b);
            assert_eq!(va.complexity, vb.complexity, "{a} vs {b}");
            assert_eq!(va.ptime_case, vb.ptime_case, "{a} vs {b}");
        }
    }
}
