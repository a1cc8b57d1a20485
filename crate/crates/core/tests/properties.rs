//! Cross-module property tests: randomized invariants that tie the
//! solvers, the translations, and the query machinery together.

use proptest::prelude::*;
use rand::Rng;

use resilience_core::classify::{classify, Complexity};
use resilience_core::gadgets::{builtin_dual_for_path, self_join_lift};
use resilience_core::query::{
    equivalent, factorize_self_joins, holds, implies, minimize, normalize, parse_ucq,
    ConjunctiveQuery, Ucq,
};
use resilience_core::resilience::{resilience_brute, resilience_exact, resilience_poly};
use resilience_core::structure::{hom_equivalent, BagDatabase, Signature};
use resilience_core::value::Value;
use resilience_core::vcsp::{min_cost, resilience_to_vcsp, valued_dual};

fn arb_cq(max_vars: usize, max_atoms: usize) -> impl Strategy<Value = ConjunctiveQuery> {
    prop::collection::vec((0..max_vars, 0..max_vars), 1..=max_atoms).prop_map(|pairs| {
        let names: Vec<String> = (0..8).map(|i| format!("v{i}")).collect();
        let atoms: Vec<(&str, &str, &str)> = pairs
            .iter()
            .map(|&(a, b)| ("R", names[a].as_str(), names[b].as_str()))
            .collect();
        ConjunctiveQuery::from_atoms(&atoms).unwrap()
    })
}

fn arb_db(max_vertices: usize, max_tuples: usize, max_mult: u64) -> impl Strategy<Value = BagDatabase> {
    (1..=max_vertices).prop_flat_map(move |n| {
        prop::collection::vec(((0..n, 0..n), 1..=max_mult), 0..=max_tuples).prop_map(
            move |tuples| {
                let mut db = BagDatabase::new(Signature::single_binary(), n);
                for ((a, b), m) in tuples {
                    db.add_copies("R", vec![a, b], m).unwrap();
                }
                db
            },
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn minimize_is_equivalent_and_minimal(q in arb_cq(4, 5)) {
        let m = minimize(&q).unwrap();
        prop_assert!(equivalent(&q, &m).unwrap());
        prop_assert!(hom_equivalent(&q.canonical_database(), &m.canonical_database()).unwrap());
        let again = minimize(&m).unwrap();
        prop_assert_eq!(again.atom_count(), m.atom_count());
    }

    #[test]
    fn normalized_queries_are_pairwise_incomparable(
        qs in prop::collection::vec(arb_cq(4, 4), 1..=3)
    ) {
        let mu = Ucq::new(qs).unwrap();
        let n = normalize(&mu).unwrap();
        for i in 0..n.queries.len() {
            for j in 0..n.queries.len() {
                if i != j {
                    prop_assert!(!implies(&n.queries[i], &n.queries[j]).unwrap());
                }
            }
        }
        for q in &n.queries {
            prop_assert!(q.is_connected());
        }
    }

    #[test]
    fn classify_is_invariant_under_mutation(
        q in arb_cq(4, 4),
        perm_seed in 0u64..1000,
    ) {
        let mu = Ucq::single(q.clone());
        let v1 = classify(&mu).unwrap();
        // Mutate: rename variables, reorder atoms, and append one
        // removable (duplicate-image) atom.
        let rename = |name: &str| format!("w{}", &name[1..]);
        let mut atoms: Vec<(String, String, String)> = q
            .atoms()
            .map(|a| (
                a.symbol.clone(),
                rename(&q.vars()[a.from]),
                rename(&q.vars()[a.to]),
            ))
            .collect();
        let rot = (perm_seed as usize) % atoms.len().max(1);
        atoms.rotate_left(rot);
        // Duplicate one atom under a fresh variable pair folding back:
        // R(x, y) becomes an extra R(x, fresh) when an atom R(x, y)
        // exists; the fresh copy retracts onto it.
        if let Some((s, x, _y)) = atoms.first().cloned() {
            atoms.push((s, x, "wfresh".to_string()));
        }
        let refs: Vec<(&str, &str, &str)> = atoms
            .iter()
            .map(|(s, a, b)| (s.as_str(), a.as_str(), b.as_str()))
            .collect();
        let mutated = Ucq::single(ConjunctiveQuery::from_atoms(&refs).unwrap());
        let v2 = classify(&mutated).unwrap();
        prop_assert_eq!(v1.complexity, v2.complexity);
        prop_assert_eq!(v1.ptime_case, v2.ptime_case);
    }

    #[test]
    fn exact_matches_brute(db in arb_db(4, 7, 2)) {
        let queries = [
            parse_ucq("R(x,y) & R(y,z)").unwrap(),
            parse_ucq("R(x,y) & R(y,z) & R(z,x)").unwrap(),
            parse_ucq("R(x,x) | R(x,y) & R(y,x)").unwrap(),
        ];
        for mu in &queries {
            let b = resilience_brute(&db, mu).unwrap();
            let e = resilience_exact(&db, mu).unwrap();
            prop_assert_eq!(b.value, e.value);
        }
    }

    #[test]
    fn adding_a_copy_never_decreases_resilience(db in arb_db(4, 6, 2), a in 0usize..4, b in 0usize..4) {
        let mu = parse_ucq("R(x,y) & R(y,z)").unwrap();
        let before = resilience_brute(&db, &mu).unwrap().value;
        let mut bigger = db.clone();
        if a < bigger.size() && b < bigger.size() {
            bigger.add_copies("R", vec![a, b], 1).unwrap();
            let after = resilience_brute(&bigger, &mu).unwrap().value;
            prop_assert!(after >= before);
        }
    }

    #[test]
    fn deleting_fewer_copies_does_not_falsify(db in arb_db(4, 6, 3)) {
        // The returned witness is tight: dropping any one deleted tuple
        // from the deletion set leaves the query satisfied.
        let mu = parse_ucq("R(x,y) & R(y,x) | R(x,x)").unwrap();
        let r = resilience_brute(&db, &mu).unwrap();
        if r.value > 0 {
            for skip in 0..r.deleted.len() {
                let doomed: Vec<(usize, Vec<usize>)> = r
                    .deleted
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != skip)
                    .map(|(_, d)| (db.signature().index_of(&d.symbol).unwrap(), d.tuple.clone()))
                    .collect();
                let after = db.delete_all_copies(&doomed);
                prop_assert!(holds(&mu, &after.support()).unwrap());
            }
        }
    }
}

#[test]
fn poly_cases_match_brute_on_random_suite() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
    use rand::SeedableRng;
    let cases = [
        (resilience_core::classify::PtimeCase::Loop, parse_ucq("R(x,x)").unwrap()),
        (resilience_core::classify::PtimeCase::Edge, parse_ucq("R(x,y)").unwrap()),
        (
            resilience_core::classify::PtimeCase::TwoCycle,
            parse_ucq("R(x,y) & R(y,x)").unwrap(),
        ),
    ];
    for _ in 0..80 {
        let n = rng.gen_range(1..=5);
        let mut db = BagDatabase::new(Signature::single_binary(), n);
        for _ in 0..rng.gen_range(0..=10) {
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            db.add_copies("R", vec![a, b], rng.gen_range(1..=3)).unwrap();
        }
        for (case, mu) in &cases {
            let p = resilience_poly(&db, *case).unwrap();
            let b = resilience_brute(&db, mu).unwrap();
            assert_eq!(p.value, b.value, "case {case:?} on {:?}", db.distinct_tuples());
        }
    }
}

#[test]
fn resilience_equals_vcsp_minimum_through_the_path_dual() {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let dual = builtin_dual_for_path(2).unwrap();
    let gamma = valued_dual(&dual.structure);
    for _ in 0..60 {
        let n = rng.gen_range(1..=4);
        let mut db = BagDatabase::new(Signature::single_binary(), n);
        for _ in 0..rng.gen_range(0..=8) {
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            db.add_copies("R", vec![a, b], rng.gen_range(1..=3)).unwrap();
        }
        let r = resilience_brute(&db, &dual.query).unwrap();
        let e = resilience_to_vcsp(&db);
        let m = min_cost(&e, &gamma).unwrap();
        assert_eq!(m.value, Value::from_int(r.value as i64));
    }
}

#[test]
fn lift_preserves_holds_and_resilience() {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let mu = parse_ucq("R(x,y) & R(y,x)").unwrap();
    let fac = factorize_self_joins(&mu).unwrap();
    for _ in 0..40 {
        let n = rng.gen_range(1..=4);
        let mut db = BagDatabase::new(Signature::binary(&["R_0", "R_1"]), n);
        for _ in 0..rng.gen_range(0..=6) {
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            let sym = if rng.gen_bool(0.5) { "R_0" } else { "R_1" };
            db.add_copies(sym, vec![a, b], rng.gen_range(1..=2)).unwrap();
        }
        let lifted = self_join_lift(&db, &fac.nu, &fac.symbol_map).unwrap();
        assert_eq!(
            holds(&fac.nu, &db.support()).unwrap(),
            holds(&mu, &lifted.support()).unwrap()
        );
        let r_src = resilience_brute(&db, &fac.nu).unwrap().value;
        let r_dst = resilience_brute(&lifted, &mu).unwrap().value;
        assert_eq!(r_src, r_dst);
    }
}

#[test]
fn hom_search_matches_map_enumeration_on_both_signatures() {
    use rand::SeedableRng;
    use resilience_core::structure::{find_homomorphism, FiniteStructure, Homomorphism};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    for sig_names in [vec!["R"], vec!["R", "S", "T"]] {
        let sig = Signature::binary(&sig_names);
        for _ in 0..120 {
            let na = rng.gen_range(1..=4);
            let nb = rng.gen_range(1..=4);
            let mut a = FiniteStructure::new(sig.clone(), na);
            let mut b = FiniteStructure::new(sig.clone(), nb);
            for s in 0..sig_names.len() {
                for _ in 0..rng.gen_range(0..=5) {
                    a.add_tuple_idx(s, vec![rng.gen_range(0..na), rng.gen_range(0..na)])
                        .unwrap();
                }
                for _ in 0..rng.gen_range(0..=5) {
                    b.add_tuple_idx(s, vec![rng.gen_range(0..nb), rng.gen_range(0..nb)])
                        .unwrap();
                }
            }
            // Exhaustive oracle over all |B|^|A| maps.
            let total = nb.pow(na as u32);
            let mut any = false;
            for code in 0..total {
                let mut c = code;
                let map: Vec<usize> = (0..na)
                    .map(|_| {
                        let v = c % nb;
                        c /= nb;
                        v
                    })
                    .collect();
                if (Homomorphism { map }).is_valid(&a, &b) {
                    any = true;
                    break;
                }
            }
            let found = find_homomorphism(&a, &b).unwrap();
            assert_eq!(any, found.is_some());
            if let Some(h) = found {
                assert!(h.is_valid(&a, &b));
            }
        }
    }
}

#[test]
fn tractable_trichotomy_matches_named_forms() {
    // classify(μ) = PTime iff the normalized form is exactly one of the
    // three named queries.
    for (src, expect_ptime) in [
        ("R(x,x)", true),
        ("R(x,y)", true),
        ("R(x,y) & R(y,x)", true),
        ("R(x,y) & R(y,z)", false),
        ("R(x,y) & R(y,z) & R(z,x)", false),
        ("R(x,x) | R(x,y) & R(y,x)", true),
        ("R(x,y) | R(a,b) & R(b,c) & R(c,a)", true),
        ("R(x,y) & R(y,x) | R(a,b) & R(b,c) & R(c,a)", false),
    ] {
        let v = classify(&parse_ucq(src).unwrap()).unwrap();
        assert_eq!(v.complexity == Complexity::PTime, expect_ptime, "{src}");
        if v.complexity == Complexity::PTime {
            assert_eq!(v.normalized_queries.len(), 1);
        }
    }
}
