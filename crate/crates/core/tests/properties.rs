use std::collections::BTreeSet;
use std::sync::Arc;

use proptest::prelude::*;

use audel::frames::{AgentUpdateFrame, ArrowKind, FrameLibrary};
use audel::model::{KripkeModel, Relation};
use audel::reduction::{reduce_to_el, replay};
use audel::satsolver::{sat_k4, valid_k4, Verdict};
use audel::semantics::{el_truth_set, truth_set, EvalContext};
use audel::syntax::{parse_formula, Formula, Language, PointedFrame, Signature};
use audel::testkit::{GenConfig, Generator};
use audel::update::{product_update, sum_product_update};

fn generator(seed: u64) -> Generator {
    Generator::new(GenConfig::with_seed(seed))
}

/// A model, a two-frame library and a DEL formula over it.
fn world(seed: u64, lang: Language) -> (Arc<KripkeModel>, FrameLibrary, Formula) {
    let mut g = generator(seed);
    let (lib, list) = g.gen_library(2);
    let phi = g.gen_formula(lang, &list);
    (Arc::new(g.gen_model()), lib, phi)
}

/// A frame that may violate closure safety.
fn free_frame(seed: u64) -> AgentUpdateFrame {
    Generator::new(GenConfig { closure_safe: false, ..GenConfig::with_seed(seed) }).gen_frame()
}

fn reference_transitive(r: &Relation) -> bool {
    r.pairs().all(|(s, t)| r.successors(t).all(|u| r.contains(s, u)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn printed_formulas_parse_back(seed in any::<u64>()) {
        let (_, _, phi) = world(seed, Language::Del);
        let text = phi.to_string();
        prop_assert_eq!(parse_formula(&text, &Signature::new()).unwrap(), phi);
    }

    #[test]
    fn printing_is_idempotent(seed in any::<u64>()) {
        let (_, _, phi) = world(seed, Language::Del);
        let once = parse_formula(&phi.to_string(), &Signature::new()).unwrap().to_string();
        prop_assert_eq!(once, phi.to_string());
    }

    #[test]
    fn languages_nest(seed in any::<u64>()) {
        let (_, _, phi) = world(seed, Language::Del);
        prop_assert!(phi.is_del());
        if phi.is_el() {
            prop_assert!(phi.is_del_minus());
        }
        prop_assert_eq!(phi.is_el(), phi.language() == Language::El);
    }

    #[test]
    fn closure_is_idempotent_and_extensive(pairs in proptest::collection::btree_set((0usize..6, 0usize..6), 0..20)) {
        let r: Relation = pairs.iter().copied().collect();
        let c = r.transitive_closure();
        prop_assert!(pairs.iter().all(|&(s, t)| c.contains(s, t)));
        prop_assert!(reference_transitive(&c));
        prop_assert_eq!(c.transitive_closure(), c.clone());
        prop_assert_eq!(r.is_transitive(), r == c);
    }

    #[test]
    fn closure_is_monotone(
        small in proptest::collection::btree_set((0usize..5, 0usize..5), 0..10),
        extra in proptest::collection::btree_set((0usize..5, 0usize..5), 0..10),
    ) {
        let a: Relation = small.iter().copied().collect();
        let b: Relation = small.union(&extra).copied().collect();
        let (ca, cb) = (a.transitive_closure(), b.transitive_closure());
        prop_assert!(ca.pairs().all(|(s, t)| cb.contains(s, t)));
    }

    #[test]
    fn agency_lies_within_agents(seed in any::<u64>()) {
        let m = generator(seed).gen_model();
        let agents = m.agents();
        for s in 0..m.world_count() {
            prop_assert!(m.agency(s).is_subset(&agents));
        }
    }

    #[test]
    fn generated_models_and_frames_are_valid(seed in any::<u64>()) {
        let mut g = generator(seed);
        let m = g.gen_model();
        prop_assert!(m.validate().is_empty());
        prop_assert!(m.is_transitive());
        let u = g.gen_frame();
        prop_assert!(u.validate(None).is_empty());
        prop_assert!(u.closure_safe(), "{:?}", u.closure_hazard());
        prop_assert_eq!(AgentUpdateFrame::from_json(&u.to_json(), &Signature::new()).unwrap(), u);
        prop_assert_eq!(KripkeModel::from_json(&m.to_json()).unwrap(), m);
    }

    #[test]
    fn generation_is_deterministic(seed in any::<u64>()) {
        let (m1, _, p1) = world(seed, Language::Del);
        let (m2, _, p2) = world(seed, Language::Del);
        prop_assert_eq!(m1, m2);
        prop_assert_eq!(p1, p2);
    }

    #[test]
    fn negation_complements(seed in any::<u64>()) {
        let (m, lib, phi) = world(seed, Language::Del);
        let ctx = EvalContext::new(lib);
        let pos = truth_set(&m, &phi, &ctx).unwrap();
        let neg = truth_set(&m, &Formula::not(phi), &ctx).unwrap();
        prop_assert!(pos.iter().zip(&neg).all(|(a, b)| a != b));
    }

    #[test]
    fn memo_is_transparent(seed in any::<u64>()) {
        let (m, lib, phi) = world(seed, Language::Del);
        let cached = EvalContext::new(lib.clone());
        let fresh = EvalContext::without_memo(lib);
        let first = truth_set(&m, &phi, &cached).unwrap();
        prop_assert_eq!(truth_set(&m, &phi, &cached).unwrap(), first.clone());
        prop_assert_eq!(truth_set(&m, &phi, &fresh).unwrap(), first);
    }

    #[test]
    fn union_is_disjunction_of_members(seed in any::<u64>()) {
        let mut g = generator(seed);
        let (lib, list) = g.gen_library(2);
        let body = g.gen_formula_in(Language::El, 2, &list);
        let m = Arc::new(g.gen_model());
        let pfs: Vec<PointedFrame> = list
            .iter()
            .flat_map(|(n, f)| f.event_labels().iter().map(move |e| PointedFrame::new(n.clone(), e.clone())))
            .collect();
        let ctx = EvalContext::new(lib);
        let union = truth_set(&m, &Formula::union(pfs.clone(), body.clone()), &ctx).unwrap();
        let members = Formula::disjunction(pfs.iter().map(|pf| Formula::diamond(pf.clone(), body.clone())));
        prop_assert_eq!(union, truth_set(&m, &members, &ctx).unwrap());
        let single = Formula::union(vec![pfs[0].clone()], body.clone());
        prop_assert_eq!(
            truth_set(&m, &single, &ctx).unwrap(),
            truth_set(&m, &Formula::diamond(pfs[0].clone(), body), &ctx).unwrap()
        );
    }

    #[test]
    fn updates_stay_transitive(seed in any::<u64>()) {
        let mut g = generator(seed);
        let m = g.gen_model();
        let u = free_frame(seed);
        let r = sum_product_update(&m, &u).unwrap();
        prop_assert!(r.model.validate().is_empty());
        for (_, rel) in r.model.relations() {
            prop_assert!(reference_transitive(rel));
        }
        for (k, &(s, e)) in r.origin.iter().enumerate() {
            prop_assert_eq!(r.world(s, e), Some(k));
            prop_assert!(el_truth_set(&m, u.pre(e)).unwrap()[s]);
        }
    }

    #[test]
    fn untouched_agents_follow_the_product(seed in any::<u64>()) {
        let m = generator(seed).gen_model();
        let u = free_frame(seed ^ 0x9e37);
        let r = sum_product_update(&m, &u).unwrap();
        let touched: BTreeSet<_> = u.arrows(ArrowKind::Add).keys().chain(u.arrows(ArrowKind::Del).keys()).cloned().collect();
        let n = r.model.world_count();
        for a in m.agents().iter().filter(|a| !touched.contains(*a)) {
            let mut expected = Relation::new();
            for x in 0..n {
                for y in 0..n {
                    let ((s, e), (t, f)) = (r.origin[x], r.origin[y]);
                    if m.relation(a).is_some_and(|rel| rel.contains(s, t)) && u.has_arrow(ArrowKind::Obs, a, e, f) {
                        expected.insert(x, y);
                    }
                }
            }
            let got = r.model.relation(a).cloned().unwrap_or_default();
            prop_assert_eq!(got, expected.transitive_closure(), "agent {}", a);
        }
    }

    #[test]
    fn product_agrees_when_nothing_is_added_or_deleted(seed in any::<u64>()) {
        let mut g = Generator::new(GenConfig { agent_updates: false, fresh_agents: 0, ..GenConfig::with_seed(seed) });
        let u = g.gen_frame();
        let m = g.gen_model();
        let p = product_update(&m, &u).unwrap();
        let s = sum_product_update(&m, &u).unwrap();
        prop_assert_eq!(p.model.transitively_closed(), (*s.model).clone());
    }

    #[test]
    fn deletion_takes_priority(seed in any::<u64>()) {
        let m = generator(seed).gen_model();
        let u = free_frame(seed.rotate_left(7));
        let r = sum_product_update(&m, &u).unwrap();
        for (k, &(_, e)) in r.origin.iter().enumerate() {
            for a in u.del_set_at(e) {
                // Every observation arrow of a deleted agent is itself deleted: nothing survives.
                let survives = u.targets(ArrowKind::Obs, &a, e).any(|v| !u.has_arrow(ArrowKind::Del, &a, e, v));
                if !survives {
                    prop_assert_eq!(r.model.successors(&a, k).count(), 0, "agent {} at {}", a, r.model.world_label(k));
                }
            }
        }
    }

    #[test]
    fn reduction_preserves_truth(seed in any::<u64>()) {
        let (m, lib, phi) = world(seed, Language::Del);
        let red = reduce_to_el(&phi, &lib).unwrap();
        prop_assert!(red.formula.is_el());
        let ctx = EvalContext::new(lib);
        prop_assert_eq!(truth_set(&m, &phi, &ctx).unwrap(), el_truth_set(&m, &red.formula).unwrap());
    }

    #[test]
    fn reduction_is_idempotent_and_replayable(seed in any::<u64>()) {
        let (_, lib, phi) = world(seed, Language::DelMinus);
        let red = reduce_to_el(&phi, &lib).unwrap();
        let again = reduce_to_el(&red.formula, &lib).unwrap();
        prop_assert_eq!(&again.formula, &red.formula);
        prop_assert!(again.trace.is_empty());
        prop_assert_eq!(replay(&phi, &red.trace).unwrap(), red.formula);
    }

    #[test]
    fn satisfiability_and_validity_are_dual(seed in any::<u64>()) {
        let phi = generator(seed).gen_el(2);
        let sat_neg = sat_k4(&Formula::not(phi.clone())).unwrap().verdict == Verdict::Sat;
        prop_assert_eq!(valid_k4(&phi).unwrap(), !sat_neg);
    }

    #[test]
    fn witnesses_satisfy_their_formula(seed in any::<u64>()) {
        let phi = generator(seed).gen_el(3);
        let out = sat_k4(&phi).unwrap();
        if let Some(w) = out.witness {
            prop_assert!(w.is_transitive());
            prop_assert!(el_truth_set(&w, &phi).unwrap()[0]);
        } else {
            prop_assert_eq!(out.verdict, Verdict::Unsat);
        }
    }
}
