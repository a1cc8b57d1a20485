//! File formats: the shared edge-list graph format, `.ucq` query files,
//! and JSON projections of the core domain types.
//!
//! Graph files are UTF-8 text with one edge per line:
//!
//! ```text
//! src dst [multiplicity] [symbol]
//! ```
//!
//! whitespace-separated; `multiplicity` defaults to 1 and `symbol` to
//! `R`; lines starting with `#` are comments; vertex names are arbitrary
//! tokens.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use resilience_core::classify::{HardnessReason, Verdict};
use resilience_core::gadgets::{OitReduction, PolymorphismReport, ReductionArtifact};
use resilience_core::query::TraceStep;
use resilience_core::resilience::ResilienceResult;
use resilience_core::structure::{BagDatabase, Signature};
use resilience_core::value::rational_to_string;
use resilience_core::vcsp::{Expression, ValuedStructure};
use serde_json::{json, Value as Json};

#[derive(Debug)]
pub struct FormatError {
    pub line: usize,
    pub msg: String,
}

impl std::fmt::Display for FormatError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.msg)
    }
}

impl std::error::Error for FormatError {}

/// Parse the edge-list graph format into a bag database.  Vertices are
/// interned in first-occurrence order; symbols are sorted.
pub fn parse_graph(text: &str) -> Result<BagDatabase, FormatError> {
    struct Edge {
        src: String,
        dst: String,
        mult: u64,
        symbol: String,
    }
    let mut edges = Vec::new();
    let mut symbols: BTreeSet<String> = BTreeSet::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 2 || fields.len() > 4 {
            return Err(FormatError {
                line: lineno + 1,
                msg: format!("expected `src dst [multiplicity] [symbol]`, got {} fields", fields.len()),
            });
        }
        let mult = if fields.len() >= 3 {
            fields[2].parse::<u64>().map_err(|_| FormatError {
                line: lineno + 1,
                msg: format!("bad multiplicity {:?}", fields[2]),
            })?
        } else {
            1
        };
        if mult == 0 {
            return Err(FormatError {
                line: lineno + 1,
                msg: "multiplicity must be positive".into(),
            });
        }
        let symbol = if fields.len() == 4 { fields[3] } else { "R" }.to_string();
        symbols.insert(symbol.clone());
        edges.push(Edge {
            src: fields[0].to_string(),
            dst: fields[1].to_string(),
            mult,
            symbol,
        });
    }
    if symbols.is_empty() {
        symbols.insert("R".to_string());
    }
    let mut labels: Vec<String> = Vec::new();
    let mut index = std::collections::BTreeMap::new();
    for e in &edges {
        for v in [&e.src, &e.dst] {
            if !index.contains_key(v) {
                index.insert(v.clone(), labels.len());
                labels.push(v.clone());
            }
        }
    }
    let sig = Signature::new(symbols.into_iter().map(|s| (s, 2)).collect())
        .map_err(|e| FormatError {
            line: 0,
            msg: e.to_string(),
        })?;
    let mut db = BagDatabase::with_labels(sig, labels);
    for e in edges {
        db.add_copies(&e.symbol, vec![index[&e.src], index[&e.dst]], e.mult)
            .map_err(|err| FormatError {
                line: 0,
                msg: err.to_string(),
            })?;
    }
    Ok(db)
}

/// Emit the edge-list format (stable order: symbols then tuples).
pub fn emit_graph(db: &BagDatabase) -> String {
    let mut out = String::new();
    for (sym, tuple, mult) in db.distinct_tuples() {
        let _ = writeln!(
            out,
            "{} {} {} {}",
            db.label(tuple[0]),
            db.label(tuple[1]),
            mult,
            db.signature().name(sym)
        );
    }
    out
}

pub fn trace_json(trace: &[TraceStep]) -> Json {
    Json::Array(trace.iter().map(|s| json!(s.to_string())).collect())
}

pub fn verdict_json(v: &Verdict) -> Json {
    let case_or_reason = match (&v.ptime_case, &v.hardness_reason) {
        (Some(case), _) => json!({ "ptime_case": case.to_string() }),
        (_, Some(HardnessReason::CycleGeq3 { query_index, cycle })) => json!({
            "hardness_reason": "CycleGeq3",
            "query_index": query_index,
            "cycle": cycle,
        }),
        (_, Some(HardnessReason::TreeFamily { certificates })) => json!({
            "hardness_reason": "TreeFamily",
            "tree_certificates": certificates.iter().map(|c| json!({
                "query": c.query,
                "variables": c.variables,
                "simple_edges": c.simple_edges,
                "loop_free": c.loop_free,
                "no_antiparallel_pair": c.no_antiparallel_pair,
                "connected": c.connected,
            })).collect::<Vec<_>>(),
        }),
        _ => json!({}),
    };
    let mut obj = json!({
        "complexity": v.complexity.to_string(),
        "normalized_queries": v
            .normalized_queries
            .iter()
            .map(|q| q.display_normalized())
            .collect::<Vec<_>>(),
        "trace": trace_json(&v.normalization_trace),
    });
    if let Json::Object(map) = &mut obj {
        if let Json::Object(extra) = case_or_reason {
            for (k, val) in extra {
                map.insert(k, val);
            }
        }
    }
    obj
}

pub fn resilience_json(r: &ResilienceResult, db: &BagDatabase) -> Json {
    json!({
        "value": r.value,
        "method": r.method.to_string(),
        "deleted": r.deleted.iter().map(|d| json!({
            "symbol": d.symbol,
            "tuple": d.tuple.iter().map(|&v| db.label(v)).collect::<Vec<_>>(),
            "copies": d.copies,
        })).collect::<Vec<_>>(),
    })
}

pub fn artifact_provenance_json(a: &ReductionArtifact) -> Json {
    json!({
        "threshold": a.scheme.threshold,
        "source_threshold": a.scheme.source_threshold,
        "weights": { "m1": a.scheme.m1, "m2": a.scheme.m2 },
        "baseline_total": a.scheme.baseline_total,
        "total_soft_weight": a.scheme.total_soft_weight,
        "recorded_inequalities": {
            "crisp_tier_exceeds_threshold": a.scheme.crisp_tier_exceeds_threshold,
            "gadget_tier_exceeds_threshold": a.scheme.gadget_tier_exceeds_threshold,
        },
        "back_translation": {
            "subtract": a.back_translation_subtract,
            "valid_below": a.back_translation_valid_below,
        },
    })
}

pub fn polymorphism_json(r: &PolymorphismReport) -> Json {
    json!({
        "cases": r.cases.iter().map(|c| json!({
            "input": c.input.iter().map(|t| format!("{t:?}")).collect::<Vec<_>>(),
            "majority": format!("{:?}", c.majo),
            "minority": format!("{:?}", c.mino),
            "lhs": c.lhs,
            "rhs": c.rhs,
            "holds": c.holds,
        })).collect::<Vec<_>>(),
        "all_cases_hold": r.all_cases_hold,
        "cube_vertices": r.cube_vertices,
        "pairs_checked": r.pairs_checked,
        "majority_is_tournament": r.majo_is_tournament,
        "minority_is_tournament": r.mino_is_tournament,
        "passes": r.passes(),
    })
}

pub fn oit_json(r: &OitReduction) -> Json {
    json!({
        "variables": r.num_variables,
        "clauses": r.num_clauses,
        "source_threshold": r.u,
        "soundness": {
            "satisfiable": r.soundness.satisfiable,
            "threshold_achieved": r.soundness.threshold_achieved,
            "unsat_minimum_exceeds": r.soundness.unsat_minimum_exceeds,
            "anchors_valid": r.soundness.anchors_valid,
            "note": r.soundness.note,
        },
        "artifact": artifact_provenance_json(&r.artifact),
    })
}

/// JSON document for a valued structure: domain labels, signature with
/// arities, and relation tables as tuple -> value ("p/q" or "inf").
pub fn valued_structure_json(s: &ValuedStructure) -> Json {
    let relations: Vec<Json> = s
        .symbols()
        .map(|(name, arity)| {
            let rel = s.relation_named(name).unwrap();
            let entries: Vec<Json> = rel
                .entries
                .iter()
                .map(|(t, v)| {
                    json!({
                        "tuple": t.iter().map(|&x| s.labels[x].clone()).collect::<Vec<_>>(),
                        "value": v.to_string(),
                    })
                })
                .collect();
            json!({
                "symbol": name,
                "arity": arity,
                "default": rel.default.to_string(),
                "entries": entries,
            })
        })
        .collect();
    json!({
        "domain": s.labels.clone(),
        "relations": relations,
    })
}

/// JSON document for an expression: its atom-occurrence list.
pub fn expression_json(e: &Expression) -> Json {
    json!({
        "variables": e.vars.clone(),
        "shift": rational_to_string(&e.shift),
        "occurrences": e.occurrences.iter().map(|o| json!({
            "atom": match &o.atom {
                resilience_core::vcsp::ExprAtom::Rel(r) => r.clone(),
                resilience_core::vcsp::ExprAtom::Eq => "=".to_string(),
                resilience_core::vcsp::ExprAtom::Bot => "bot".to_string(),
            },
            "args": o.args.iter().map(|&a| e.vars[a].clone()).collect::<Vec<_>>(),
            "weight": rational_to_string(&o.weight),
        })).collect::<Vec<_>>(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graph_round_trip() {
        let text = "# sample\na b 2\nb c\nc a 1 S\n";
        let db = parse_graph(text).unwrap();
        assert_eq!(db.size(), 3);
        assert_eq!(db.multiplicity("R", &[0, 1]), 2);
        assert_eq!(db.multiplicity("S", &[2, 0]), 1);
        let emitted = emit_graph(&db);
        let db2 = parse_graph(&emitted).unwrap();
        assert_eq!(db.total_multiplicity(), db2.total_multiplicity());
        assert_eq!(db.size(), db2.size());
    }

    #[test]
    fn graph_errors() {
        assert!(parse_graph("a\n").is_err());
        assert!(parse_graph("a b 0\n").is_err());
        assert!(parse_graph("a b x\n").is_err());
    }
}
