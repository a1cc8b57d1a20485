//! The max-cut reduction against a finite acyclic dual.
//!
//! For a dual `D` without directed cycles and with at least one edge,
//! let `k` be the length of its longest directed path.  The expression
//!
//! `φ(x0, x1) = R(x0, x1) + Opt(R)(x1, x2) + ... + Opt(R)(x_{k-1}, x_k)`
//!
//! evaluates over the 0/1 dual of `D` to 0 when a length-`k` path starts
//! with the edge `(x0, x1)`, to 1 when it does not but a length-`(k-1)`
//! path starts at `x1`, and to ∞ otherwise — the directed max-cut table
//! up to the two maps checked by [`maxcut_maps`].  Emitting one φ gadget
//! per multigraph edge and flattening the crisp chain turns a directed
//! max-cut instance into a resilience instance for `D`'s query.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use super::dual::DualCandidate;
use super::flatten::{flatten, CrispInstance, ReductionArtifact, SubGadgetOccurrence};
use super::GadgetError;
use crate::structure::{longest_path_starts, path_profile, BagDatabase, Signature};
use crate::value::Value;
use crate::vcsp::{min_cost_with_pins, valued_dual, ExprAtom, Expression, ValuedStructure};

/// The vertex maps of the max-cut correspondence, with their pointwise
/// verification results.
#[derive(Clone, Debug)]
pub struct MaxcutMaps {
    /// Length of the longest directed path in the dual.
    pub k: usize,
    /// First edge of a longest path: the image of (0, 1).
    pub a: usize,
    pub b: usize,
    /// `g(x) = 0` iff a length-`k` path starts at `x`.
    pub g: Vec<u8>,
    /// `R^Γ(f(p), f(q)) <= R^MC(p, q)` for all four Boolean pairs.
    pub forward_ok: bool,
    /// `R^MC(g(x), g(y)) <= R^Γ(x, y)` for all pairs of dual vertices.
    pub backward_ok: bool,
    /// The φ-induced table `R^Γ` (row-major over the dual's domain).
    pub gamma_table: Vec<Vec<Value>>,
}

impl MaxcutMaps {
    pub fn passes(&self) -> bool {
        self.forward_ok && self.backward_ok
    }
}

fn phi_table(d: &DualCandidate, k: usize) -> Result<Vec<Vec<Value>>, GadgetError> {
    let gamma = valued_dual(&d.structure);
    let opt = gamma
        .relation_named("R")
        .ok_or_else(|| GadgetError::Input("dual must use symbol R".into()))?
        .opt();
    let mut extended = gamma.clone();
    extended.add_relation("OptR", opt);
    // φ's variables: x0, x1, then the chain x2..xk.
    let mut e = Expression::new(vec!["x0".to_string(), "x1".to_string()]);
    for i in 2..=k {
        e.vars.push(format!("x{i}"));
    }
    e.push(ExprAtom::Rel("R".into()), vec![0, 1], 1);
    for i in 1..k {
        e.push(ExprAtom::Rel("OptR".into()), vec![i, i + 1], 1);
    }
    let n = d.structure.size();
    let mut table = vec![vec![Value::Inf; n]; n];
    for x in 0..n {
        for y in 0..n {
            let m = min_cost_with_pins(&e, &extended, &[(0, x), (1, y)])
                .map_err(GadgetError::from)?;
            table[x][y] = m.value;
        }
    }
    Ok(table)
}

/// Compute and verify the two fractional-homomorphism maps between the
/// max-cut structure and the φ-induced valued structure of the dual.
pub fn maxcut_maps(d: &DualCandidate) -> Result<MaxcutMaps, GadgetError> {
    let profile = path_profile(&d.structure, "R").map_err(GadgetError::from)?;
    if profile.has_directed_cycle {
        return Err(GadgetError::Input("dual contains a directed cycle".into()));
    }
    let k = profile
        .longest_path
        .filter(|&k| k >= 1)
        .ok_or_else(|| GadgetError::Input("dual has no edge".into()))?;
    let table = phi_table(d, k)?;

    // (a, b): first edge of a longest path, deterministically the least
    // start vertex and then the least successor continuing a longest
    // path.
    let (_, starts) = longest_path_starts(&d.structure, "R").map_err(GadgetError::from)?;
    let a = *starts.iter().min().unwrap();
    let mut b_choice = None;
    for t in d.structure.relation(0) {
        if t[0] == a {
            // (a, t[1]) starts a longest path iff φ(a, t[1]) = 0.
            if table[a][t[1]] == Value::ZERO {
                b_choice = Some(t[1]);
                break;
            }
        }
    }
    let b = b_choice.ok_or_else(|| {
        GadgetError::Internal("no longest path continues from its start vertex".into())
    })?;

    let n = d.structure.size();
    let mut g = vec![1u8; n];
    let mut lengths = vec![0usize; n];
    {
        // Longest path starting at each vertex, from the same analysis.
        let (_, starts_k) = longest_path_starts(&d.structure, "R").map_err(GadgetError::from)?;
        for &s in &starts_k {
            g[s] = 0;
            lengths[s] = k;
        }
    }

    let mc = ValuedStructure::max_cut();
    let mc_rel = mc.relation_named("R").unwrap();
    let f = [a, b];
    let mut forward_ok = true;
    for p in 0..2usize {
        for q in 0..2usize {
            if table[f[p]][f[q]] > mc_rel.get(&[p, q]) {
                forward_ok = false;
            }
        }
    }
    let mut backward_ok = true;
    for x in 0..n {
        for y in 0..n {
            if mc_rel.get(&[g[x] as usize, g[y] as usize]) > table[x][y] {
                backward_ok = false;
            }
        }
    }
    Ok(MaxcutMaps {
        k,
        a,
        b,
        g,
        forward_ok,
        backward_ok,
        gamma_table: table,
    })
}

/// A compiled max-cut reduction.
#[derive(Clone, Debug)]
pub struct MaxcutReduction {
    pub artifact: ReductionArtifact,
    pub k: usize,
    /// The query whose resilience the artifact decides (the dual's
    /// query).
    pub query: crate::query::Ucq,
}

/// Compile a directed max-cut instance `g` (a bag database over {R};
/// multiplicities are edge weights, loops allowed) at threshold `t`
/// against the finite acyclic dual `d`: the output database's resilience
/// is at most the artifact threshold iff `g` has a 2-partition with at
/// most `t` non-cut edges.
pub fn maxcut_reduction(
    g: &BagDatabase,
    t: u64,
    d: &DualCandidate,
) -> Result<MaxcutReduction, GadgetError> {
    if g.signature().len() != 1 || g.signature().arity(0) != 2 {
        return Err(GadgetError::Input(
            "max-cut instances are digraphs over one binary symbol".into(),
        ));
    }
    let profile = path_profile(&d.structure, "R").map_err(GadgetError::from)?;
    if profile.has_directed_cycle {
        return Err(GadgetError::Input("dual contains a directed cycle".into()));
    }
    let k = profile
        .longest_path
        .filter(|&k| k >= 1)
        .ok_or_else(|| GadgetError::Input("dual has no edge".into()))?;

    let mut inst = CrispInstance::new();
    let vertex_vars: Vec<usize> = (0..g.size())
        .map(|v| inst.var(&format!("v_{}", g.label(v))))
        .collect();
    for (edge_idx, (_, tuple, mult)) in g.distinct_tuples().into_iter().enumerate() {
        let x = vertex_vars[tuple[0]];
        let y = vertex_vars[tuple[1]];
        inst.soft.push(("R".to_string(), vec![x, y], mult));
        // One crisp Opt(R) chain per distinct edge; satisfying it exactly
        // says a length-(k-1) path continues from y in the dual's image.
        if k >= 2 {
            let mut prev = y;
            for step in 2..=k {
                let c = inst.var(&format!("c_{edge_idx}_{step}"));
                inst.gadgets.push(SubGadgetOccurrence {
                    name: format!("opt_chain_{edge_idx}_{step}"),
                    args: vec![prev, c],
                    internals: vec![],
                    soft: vec![("R".to_string(), vec![0, 1], 1)],
                    crisp: vec![],
                    baseline: 0,
                });
                prev = c;
            }
        }
    }
    let artifact = flatten(&inst, t, &Signature::single_binary())?;
    Ok(MaxcutReduction {
        artifact,
        k,
        query: d.query.clone(),
    })
}

/// The φ expression as a pp-power specification of dimension 1: the
/// target symbol `R` is defined over the dual's 0/1 structure by one
/// soft edge followed by a crisp Opt(R) chain of length `k - 1`.
pub fn phi_pp_power_spec(d: &DualCandidate) -> Result<crate::vcsp::PpPowerSpec, GadgetError> {
    use crate::vcsp::{GadgetAtom, GadgetExpr, GadgetVar, PpPowerSpec};
    let profile = path_profile(&d.structure, "R").map_err(GadgetError::from)?;
    if profile.has_directed_cycle {
        return Err(GadgetError::Input("dual contains a directed cycle".into()));
    }
    let k = profile
        .longest_path
        .filter(|&k| k >= 1)
        .ok_or_else(|| GadgetError::Input("dual has no edge".into()))?;
    let mut expr = GadgetExpr::new(2, k - 1);
    expr.push(
        GadgetAtom::Rel("R".into()),
        vec![GadgetVar::Slot(0), GadgetVar::Slot(1)],
        1,
    );
    let mut single = GadgetExpr::new(2, 0);
    single.push(
        GadgetAtom::Rel("R".into()),
        vec![GadgetVar::Slot(0), GadgetVar::Slot(1)],
        1,
    );
    let mut prev = GadgetVar::Slot(1);
    for i in 0..k - 1 {
        let next = GadgetVar::Local(i);
        expr.push(
            GadgetAtom::Opt(alloc::boxed::Box::new(single.clone())),
            vec![prev, next],
            1,
        );
        prev = next;
    }
    let mut defs = alloc::collections::BTreeMap::new();
    defs.insert("R".to_string(), (2usize, expr));
    Ok(PpPowerSpec { dimension: 1, defs })
}

/// Brute-force directed max-cut: the minimum number of non-cut edges
/// (edges not going from class 0 to class 1) over all 2-partitions.
pub fn maxcut_min_uncut(g: &BagDatabase) -> u64 {
    let n = g.size();
    let edges = g.distinct_tuples();
    let mut best = u64::MAX;
    for mask in 0u64..(1u64 << n) {
        let side = |v: usize| (mask >> v) & 1;
        let mut uncut = 0u64;
        for (_, t, m) in &edges {
            if !(side(t[0]) == 0 && side(t[1]) == 1) {
                uncut += m;
            }
        }
        best = best.min(uncut);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gadgets::dual::builtin_dual_for_path;
    use crate::resilience::resilience_brute;
    use crate::structure::BagDatabase;

    fn digraph_db(n: usize, edges: &[(usize, usize, u64)]) -> BagDatabase {
        let mut db = BagDatabase::new(Signature::single_binary(), n);
        for &(u, v, m) in edges {
            db.add_copies("R", vec![u, v], m).unwrap();
        }
        db
    }

    #[test]
    fn maps_for_t2_and_t3() {
        let d2 = builtin_dual_for_path(2).unwrap();
        let m2 = maxcut_maps(&d2).unwrap();
        assert_eq!(m2.k, 1);
        assert_eq!((m2.a, m2.b), (0, 1));
        assert!(m2.passes());
        // With T_2 the φ table is exactly the max-cut table.
        let mc = ValuedStructure::max_cut();
        for x in 0..2 {
            for y in 0..2 {
                assert_eq!(
                    m2.gamma_table[x][y],
                    mc.relation_named("R").unwrap().get(&[x, y])
                );
            }
        }

        let d3 = builtin_dual_for_path(3).unwrap();
        let m3 = maxcut_maps(&d3).unwrap();
        assert_eq!(m3.k, 2);
        assert!(m3.passes());
        // g sends exactly the longest-path starts to 0.
        assert_eq!(m3.g, vec![0, 1, 1]);
    }

    #[test]
    fn isolated_vertex_goes_to_class_one() {
        // Dual: a single edge plus an isolated vertex, validated for the
        // 2-walk query fails (it is homomorphically equivalent to T_2).
        let mut d = crate::structure::FiniteStructure::new(Signature::single_binary(), 3);
        d.add_tuple("R", vec![0, 1]).unwrap();
        let cand = super::super::dual::user_dual(
            d,
            crate::query::Ucq::single(super::super::dual::path_query(2)),
            4,
        )
        .unwrap();
        let m = maxcut_maps(&cand).unwrap();
        assert_eq!(m.g[2], 1);
        assert!(m.passes());
    }

    #[test]
    fn reduction_examples_with_t2() {
        let d = builtin_dual_for_path(2).unwrap();

        // Single edge, t = 0: the edge can be cut.
        let g = digraph_db(2, &[(0, 1, 1)]);
        let red = maxcut_reduction(&g, 0, &d).unwrap();
        let r = resilience_brute(&red.artifact.db, &red.query).unwrap();
        assert_eq!(r.value, 0);
        assert!(r.value <= red.artifact.threshold());

        // 2-cycle, t = 0: one direction always stays uncut.
        let g = digraph_db(2, &[(0, 1, 1), (1, 0, 1)]);
        let red = maxcut_reduction(&g, 0, &d).unwrap();
        let r = resilience_brute(&red.artifact.db, &red.query).unwrap();
        assert!(r.value > red.artifact.threshold());
        assert_eq!(maxcut_min_uncut(&g), 1);

        // Acyclically oriented triangle: min uncut 1, so t = 1 accepts.
        let g = digraph_db(3, &[(0, 1, 1), (1, 2, 1), (0, 2, 1)]);
        assert_eq!(maxcut_min_uncut(&g), 1);
        let red = maxcut_reduction(&g, 1, &d).unwrap();
        let r = resilience_brute(&red.artifact.db, &red.query).unwrap();
        assert!(r.value <= red.artifact.threshold());

        // The directed 3-cycle has min uncut 2 and both sides agree.
        let g = digraph_db(3, &[(0, 1, 1), (1, 2, 1), (2, 0, 1)]);
        assert_eq!(maxcut_min_uncut(&g), 2);
        let red = maxcut_reduction(&g, 1, &d).unwrap();
        let r = resilience_brute(&red.artifact.db, &red.query).unwrap();
        assert!(r.value > red.artifact.threshold());
        let red = maxcut_reduction(&g, 2, &d).unwrap();
        let r = resilience_brute(&red.artifact.db, &red.query).unwrap();
        assert!(r.value <= red.artifact.threshold());
    }

    #[test]
    fn reduction_with_chains_against_t3() {
        // Small instances against the 3-edge path dual exercise the
        // crisp Opt(R) chains and the penalty weights.
        let d = builtin_dual_for_path(3).unwrap();
        let graphs = [
            digraph_db(2, &[(0, 1, 1)]),
            digraph_db(2, &[(0, 1, 1), (1, 0, 1)]),
            digraph_db(3, &[(0, 1, 1), (1, 2, 1), (0, 2, 1)]),
        ];
        for g in &graphs {
            let optimum = maxcut_min_uncut(g);
            for t in 0..=g.total_multiplicity() {
                let red = maxcut_reduction(g, t, &d).unwrap();
                // k - 1 heavy tuples per source edge.
                assert_eq!(
                    red.artifact.db.distinct_tuples().len(),
                    g.distinct_tuples().len() * red.k
                );
                let r = resilience_brute(&red.artifact.db, &red.query).unwrap();
                assert_eq!(
                    r.value <= red.artifact.threshold(),
                    optimum <= t,
                    "graph {:?} t={t}",
                    g.distinct_tuples()
                );
            }
        }
    }

    #[test]
    fn cyclic_or_edgeless_duals_are_rejected() {
        let cyc = crate::structure::FiniteStructure::directed_cycle(3);
        let cand = DualCandidate {
            structure: cyc,
            query: crate::query::Ucq::single(super::super::dual::path_query(2)),
            provenance: super::super::dual::DualProvenance::UserSupplied,
            validated_up_to: 0,
        };
        let g = digraph_db(2, &[(0, 1, 1)]);
        assert!(maxcut_reduction(&g, 0, &cand).is_err());
        assert!(maxcut_maps(&cand).is_err());
    }
}
