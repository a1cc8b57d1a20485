//! The self-join variation lift between resilience instances.
//!
//! Given a self-join-free union ν over τ, a ν-injective arity-preserving
//! f, and a bag database over τ, builds a database over f(τ) whose
//! elements are indexed copies `a_{v,ν0}` of the original elements and
//! whose tuples re-tag each τ-tuple through the unique atom its symbol
//! occupies in ν.  Satisfaction of ν and the exact resilience value
//! carry over; both facts are oracle-checked in the tests.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use super::GadgetError;
use crate::query::{
    apply_map, equivalent, is_minimal, is_nu_injective, is_self_join_free, SymbolMap, Ucq,
};
use crate::structure::{BagDatabase, Signature};

/// Lift `db` over ν's signature to a database over f(ν)'s signature,
/// preserving satisfaction of ν and exact resilience.
pub fn self_join_lift(
    db: &BagDatabase,
    nu: &Ucq,
    f: &SymbolMap,
) -> Result<BagDatabase, GadgetError> {
    if !is_self_join_free(nu) {
        return Err(GadgetError::Input("ν must be self-join-free".into()));
    }
    for d in &nu.disjuncts {
        if !d.is_connected() {
            return Err(GadgetError::Input(format!(
                "every disjunct of ν must be connected; [{}] is not",
                d.display()
            )));
        }
    }
    if !is_nu_injective(f, nu) {
        return Err(GadgetError::Input("f is not ν-injective".into()));
    }
    let mu = apply_map(f, nu)?;
    for d in &mu.disjuncts {
        if !is_minimal(d)? {
            return Err(GadgetError::Input(format!(
                "every disjunct of f(ν) must be minimal; [{}] is not",
                d.display()
            )));
        }
    }
    for i in 0..mu.disjuncts.len() {
        for j in (i + 1)..mu.disjuncts.len() {
            if equivalent(&mu.disjuncts[i], &mu.disjuncts[j])? {
                return Err(GadgetError::Input(
                    "disjuncts of f(ν) must be pairwise non-equivalent".into(),
                ));
            }
        }
    }
    // db must live over ν's symbols.
    let nu_symbol_list = nu.symbols();
    let nu_symbols: BTreeSet<&str> = nu_symbol_list.iter().map(|s| s.as_str()).collect();
    for (name, arity) in db.signature().symbols() {
        if arity != 2 {
            return Err(GadgetError::Input(format!("{name} is not binary")));
        }
        if !nu_symbols.contains(name) {
            return Err(GadgetError::Input(format!(
                "database symbol {name} does not occur in ν"
            )));
        }
    }

    // Output domain: one copy of each element per (disjunct, variable).
    let mut offsets = Vec::new();
    let mut per_element = 0usize;
    for d in &nu.disjuncts {
        offsets.push(per_element);
        per_element += d.vars().len();
    }
    let mut labels = Vec::new();
    for a in 0..db.size() {
        for (qi, d) in nu.disjuncts.iter().enumerate() {
            for v in d.vars() {
                labels.push(format!("{}_{}_q{}", db.label(a), v, qi));
            }
        }
    }
    let mu_symbol_list = mu.symbols();
    let target_symbols: BTreeSet<&str> = mu_symbol_list.iter().map(|s| s.as_str()).collect();
    let sig = Signature::new(
        target_symbols
            .into_iter()
            .map(|s| (s.to_string(), 2))
            .collect(),
    )
    .map_err(GadgetError::from)?;
    let mut out = BagDatabase::with_labels(sig, labels);

    let slot = |a: usize, qi: usize, v: usize| a * per_element + offsets[qi] + v;

    for (qi, d) in nu.disjuncts.iter().enumerate() {
        for atom in d.atoms() {
            let Some(sym_db) = db.signature().index_of(&atom.symbol) else {
                continue;
            };
            let target = f
                .apply(&atom.symbol)
                .ok_or_else(|| GadgetError::Input(format!("{} missing from f", atom.symbol)))?;
            for (t, &m) in db.relation(sym_db) {
                let lifted = vec![slot(t[0], qi, atom.from), slot(t[1], qi, atom.to)];
                out.add_copies(target, lifted, m).map_err(GadgetError::from)?;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::{factorize_self_joins, holds, parse_ucq};
    use crate::resilience::resilience_brute;
    use crate::structure::BagDatabase;

    fn twocycle_setup() -> (Ucq, SymbolMap, Ucq) {
        let mu = parse_ucq("R(x,y) & R(y,x)").unwrap();
        let fac = factorize_self_joins(&mu).unwrap();
        (fac.nu.clone(), fac.symbol_map, mu)
    }

    #[test]
    fn single_source_edge_fails_target() {
        let (nu, f, mu) = twocycle_setup();
        let mut db = BagDatabase::new(Signature::binary(&["R_0", "R_1"]), 2);
        db.add_copies("R_0", vec![0, 1], 1).unwrap();
        let out = self_join_lift(&db, &nu, &f).unwrap();
        assert_eq!(out.total_multiplicity(), 1);
        assert!(!holds(&nu, &db.support()).unwrap());
        assert!(!holds(&mu, &out.support()).unwrap());
    }

    #[test]
    fn antiparallel_pair_carries_over_with_resilience() {
        let (nu, f, mu) = twocycle_setup();
        let mut db = BagDatabase::new(Signature::binary(&["R_0", "R_1"]), 2);
        db.add_copies("R_0", vec![0, 1], 1).unwrap();
        db.add_copies("R_1", vec![1, 0], 1).unwrap();
        let out = self_join_lift(&db, &nu, &f).unwrap();
        assert!(holds(&nu, &db.support()).unwrap());
        assert!(holds(&mu, &out.support()).unwrap());
        let r_src = resilience_brute(&db, &nu).unwrap();
        let r_out = resilience_brute(&out, &mu).unwrap();
        assert_eq!(r_src.value, 1);
        assert_eq!(r_out.value, 1);
    }

    #[test]
    fn multiplicities_carry_through() {
        let (nu, f, _) = twocycle_setup();
        let mut db = BagDatabase::new(Signature::binary(&["R_0", "R_1"]), 3);
        db.add_copies("R_0", vec![0, 1], 4).unwrap();
        db.add_copies("R_1", vec![2, 0], 2).unwrap();
        let out = self_join_lift(&db, &nu, &f).unwrap();
        assert_eq!(out.total_multiplicity(), 6);
        let counts: Vec<u64> = out
            .distinct_tuples()
            .into_iter()
            .map(|(_, _, m)| m)
            .collect();
        assert!(counts.contains(&4) && counts.contains(&2));
    }

    #[test]
    fn preconditions_are_checked() {
        let (nu, f, _) = twocycle_setup();
        // Non-self-join-free ν.
        let bad_nu = parse_ucq("R_0(x,y) & R_0(y,z)").unwrap();
        let db = BagDatabase::new(Signature::binary(&["R_0"]), 1);
        assert!(self_join_lift(&db, &bad_nu, &f).is_err());

        // Database symbol outside ν.
        let db = BagDatabase::new(Signature::binary(&["Q"]), 1);
        assert!(self_join_lift(&db, &nu, &f).is_err());
    }
}
