use super::*;
use crate::graph::{apply_split, is_feasible, GraphBuilder, SybilSplit};
use crate::scenarios::{overlap_attack, overlap_graph, overlap_withholding_split};
use crate::testutil::{q, raw_graph, RawGraph};
use crate::Rational;
use proptest::prelude::*;

fn id(s: &str) -> OperatorId {
    OperatorId::from(s)
}

fn sid(s: &str) -> ServiceId {
    ServiceId::from(s)
}

#[test]
fn overlap_factors() {
    let g = overlap_graph::<Rational>();
    let a = overlap_attack(&g);
    assert_eq!(service_factor(&g, &a, &sid("s1")).unwrap(), q(14, 15));
    assert_eq!(service_factor(&g, &a, &sid("s2")).unwrap(), q(7, 10));
    assert_eq!(service_factor_at(&g, &a, &sid("s1"), &id("v2"), q(7, 5)).unwrap(), q(35, 36));
    assert!(matches!(service_factor_at(&g, &a, &sid("s1"), &id("v2"), q(2, 1)), Err(Error::StakeOutOfRange { .. })));
    assert!(matches!(service_factor(&g, &a, &sid("s9")), Err(Error::UnknownService(_))));
}

#[test]
fn factor_is_one_at_threshold() {
    let g = GraphBuilder::new()
        .service("s", q(3, 1), q(1, 2))
        .operator("a", q(1, 1))
        .operator("b", q(1, 1))
        .edge("s", "a")
        .edge("s", "b")
        .build()
        .unwrap();
    let a = AttackSpec::full_stake(&g, ["s"], ["a"]).unwrap();
    assert_eq!(service_factor(&g, &a, &sid("s")).unwrap(), q(1, 1));
}

#[test]
fn overlap_max_profile() {
    let g = overlap_graph::<Rational>();
    let out = mult_slash_max(&g, &overlap_attack(&g)).unwrap();
    assert_eq!(out.psi(&id("v1")), Some(&q(14, 15)));
    assert_eq!(out.psi(&id("v2")), Some(&q(7, 5)));
    assert_eq!(out.psi(&id("v3")), Some(&q(7, 20)));
    assert_eq!(out.total(), q(161, 60));
    assert_eq!(out.operators[&id("v2")].binding, vec![sid("s1")]);
    assert!(out.services.values().all(|s| s.conserved() && !s.residual_clamped));
}

#[test]
fn withholding_raises_total() {
    let g = overlap_graph::<Rational>();
    let split = overlap_withholding_split::<Rational>();
    let g2 = apply_split(&g, &split).unwrap();
    let a2 = split.apply_to_attack(&overlap_attack(&g));
    let out = mult_slash_max(&g2, &a2).unwrap();
    assert_eq!(out.psi(&id("v1")), Some(&q(35, 36)));
    assert_eq!(out.psi(&id("v2#1")), Some(&q(49, 36)));
    assert_eq!(out.psi(&id("v3")), Some(&q(7, 18)));
    let before = mult_slash_max(&g, &overlap_attack(&g)).unwrap().total();
    assert!(out.total() > before);
    // Same numbers through a reduced commitment on the original graph.
    let reduced = overlap_attack(&g).with_commitment(&id("v2"), q(7, 5));
    assert_eq!(mult_slash_max(&g, &reduced).unwrap().total(), out.total());
}

#[test]
fn single_service_is_proportional() {
    let g = GraphBuilder::new()
        .service("s", q(9, 1), q(1, 2))
        .operator("a", q(2, 1))
        .operator("b", q(2, 1))
        .operator("c", q(2, 1))
        .edge("s", "a")
        .edge("s", "b")
        .edge("s", "c")
        .build()
        .unwrap();
    let a = AttackSpec::full_stake(&g, ["s"], ["a", "b"]).unwrap();
    let max = mult_slash_max(&g, &a).unwrap();
    let phi = service_factor(&g, &a, &sid("s")).unwrap();
    assert_eq!(phi, q(3, 4));
    for v in ["a", "b"] {
        assert_eq!(max.psi(&id(v)), Some(&(phi.clone() * q(2, 1))));
    }
    let add = mult_slash_additive(&g, &a).unwrap();
    assert_eq!(
        add.operators.values().map(|c| c.psi.clone()).collect::<Vec<_>>(),
        max.operators.values().map(|c| c.psi.clone()).collect::<Vec<_>>()
    );
}

/// Two low-threshold services sharing `m`, plus one unique attacker each.
fn light_overlap() -> RestakingGraph<Rational> {
    GraphBuilder::new()
        .service("s1", q(5, 1), q(1, 5))
        .service("s2", q(5, 1), q(1, 4))
        .operator("u", q(1, 1))
        .operator("m", q(2, 1))
        .operator("w", q(1, 1))
        .operator("p", q(1, 1))
        .edge("s1", "u")
        .edge("s1", "m")
        .edge("s2", "m")
        .edge("s2", "w")
        .edge("s2", "p")
        .build()
        .unwrap()
}

#[test]
fn additive_charges_factor_sum() {
    let g = light_overlap();
    let a = AttackSpec::full_stake(&g, ["s1", "s2"], ["u", "m", "w"]).unwrap();
    // φ1 = (3/5)/3 = 1/5, φ2 = 1/3; the sum stays below one.
    let out = mult_slash_additive(&g, &a).unwrap();
    assert_eq!(out.psi(&id("m")), Some(&(q(8, 15) * q(2, 1))));
    assert_eq!(out.operators[&id("m")].binding_label(), "s1+s2");
    // The max rule charges the larger factor only.
    assert_eq!(mult_slash_max(&g, &a).unwrap().psi(&id("m")), Some(&q(2, 3)));
}

#[test]
fn additive_caps_at_full_stake() {
    let g = overlap_graph::<Rational>();
    let out = mult_slash_additive(&g, &overlap_attack(&g)).unwrap();
    // 14/15 + 7/10 > 1.
    assert_eq!(out.psi(&id("v2")), Some(&q(3, 2)));
    assert_eq!(out.psi(&id("v1")), Some(&q(5, 6)));
    assert_eq!(out.psi(&id("v3")), Some(&q(1, 4)));
    assert!(out.services.values().all(|s| s.conserved()));
}

#[test]
fn infeasible_attack_rejected() {
    let g = overlap_graph::<Rational>();
    let a = AttackSpec::full_stake(&g, ["s1"], ["v0"]).unwrap();
    assert!(matches!(mult_slash_max(&g, &a), Err(Error::InfeasibleAttack(_))));
}

#[test]
fn minimal_single_service_matches_lemma() {
    let g = GraphBuilder::new()
        .service("s", q(3, 1), q(1, 2))
        .operator("a", q(3, 2))
        .operator("b", q(1, 1))
        .operator("c", q(1, 1))
        .edge("s", "a")
        .edge("s", "b")
        .edge("s", "c")
        .build()
        .unwrap();
    let a = AttackSpec::full_stake(&g, ["s"], ["a", "b"]).unwrap();
    // α σ_T = 7/4, σ_B = 5/2.
    let m = minimal_slashing(&g, &a).unwrap();
    assert_eq!(m.factors[&sid("s")], q(3, 10));
    assert_eq!(m.factors[&sid("s")], q(1, 1) - service_factor(&g, &a, &sid("s")).unwrap());
    assert_eq!(m.psi[&id("a")], q(9, 20));
    assert_eq!(m.objective, q(3, 4));
    assert_eq!(m.dual_objective, q(3, 4));
    assert!(m.max_factorized);
    assert_eq!(m.slackness_gap(), q(0, 1));
}

#[test]
fn minimal_at_threshold_is_zero_and_below_is_rejected() {
    let g = GraphBuilder::new()
        .service("s", q(3, 1), q(1, 2))
        .operator("a", q(1, 1))
        .operator("b", q(1, 1))
        .edge("s", "a")
        .edge("s", "b")
        .build()
        .unwrap();
    let at = AttackSpec::full_stake(&g, ["s"], ["a"]).unwrap();
    let m = minimal_slashing(&g, &at).unwrap();
    assert_eq!(m.total(), q(0, 1));
    assert_eq!(m.factors[&sid("s")], q(0, 1));
    let below = at.with_commitment(&id("a"), q(1, 2));
    assert!(matches!(minimal_slashing(&g, &below), Err(Error::NonBindingInput(_))));
}

#[test]
fn minimal_overlap_balances_shared_attacker() {
    let g = overlap_graph::<Rational>();
    let m = minimal_slashing(&g, &overlap_attack(&g)).unwrap();
    assert_eq!(m.excess[&sid("s1")], q(1, 6));
    assert_eq!(m.excess[&sid("s2")], q(3, 4));
    assert_eq!(m.objective, q(3, 4));
    assert_eq!(m.psi[&id("v1")], q(0, 1));
    assert_eq!(m.psi[&id("v2")], q(9, 20));
    assert_eq!(m.psi[&id("v3")], q(3, 10));
    assert_eq!(m.factors[&sid("s1")], q(0, 1));
    assert_eq!(m.factors[&sid("s2")], q(3, 10));
    assert!(m.max_factorized);
    assert_eq!(m.prices[&sid("s2")], q(1, 1));
    assert_eq!(m.slackness_gap(), q(0, 1));
    let out = minimal_outcome(&g, &overlap_attack(&g)).unwrap();
    assert_eq!(out.operators[&id("v2")].binding, vec![sid("s2")]);
    // Only the priced service is charged exactly its excess.
    assert!(out.services.values().all(|c| c.charged >= c.threshold));
    assert!(out.services[&sid("s2")].conserved());
    assert!(!out.services[&sid("s1")].conserved());
}

#[test]
fn sum_aggregation_overcharges_shared_attacker() {
    let g = overlap_graph::<Rational>();
    let a = overlap_attack(&g);
    let report = check_componentwise_minimal(&g, &a, |f: &[Rational]| Aggregation::Sum.apply(f)).unwrap();
    assert!(report.dominates);
    assert_eq!(report.strict, vec![id("v2")]);
    assert_eq!(report.rows[&id("v2")], (q(7, 5), q(3, 2)));
    let same = check_componentwise_minimal(&g, &a, |f: &[Rational]| Aggregation::Max.apply(f)).unwrap();
    assert!(same.dominates && same.strict.is_empty());
    assert_eq!(same.baseline_total, same.alt_total);
    let low = check_componentwise_minimal(&g, &a, |f: &[Rational]| Aggregation::Min.apply(f));
    assert!(matches!(low, Err(Error::AltRuleInfeasible(s)) if s == "s1"));
}

#[test]
fn float_mode_agrees_with_exact() {
    let g = overlap_graph::<Rational>();
    let exact = mult_slash_max(&g, &overlap_attack(&g)).unwrap();
    let gf = g.to_f64();
    let af = overlap_attack(&gf);
    let float = mult_slash_max(&gf, &af).unwrap();
    for (v, c) in &exact.operators {
        assert!((float.operators[v].psi - c.psi.to_f64_lossy()).abs() < 1e-12);
    }
}

/// Random feasible full-stake attack on a random graph.
fn feasible_instance(max_s: usize, max_v: usize) -> impl Strategy<Value = (RawGraph, AttackSpec<Rational>)> {
    (raw_graph(max_s, max_v), any::<u64>()).prop_filter_map("infeasible", |(raw, bits)| {
        let g = raw.build();
        let (ns, nv) = (raw.services.len(), raw.stakes.len());
        let a: Vec<String> = (0..ns).filter(|i| bits >> i & 1 == 1).map(|i| format!("s{i}")).collect();
        let b: Vec<String> = (0..nv).filter(|i| bits >> (8 + i) & 1 == 1).map(|i| format!("v{i}")).collect();
        if a.is_empty() || b.is_empty() {
            return None;
        }
        let attack = AttackSpec::full_stake(&g, a, b).unwrap();
        is_feasible(&g, &attack).unwrap().then_some((raw, attack))
    })
}

fn random_split(parent: &OperatorId, stake: &Rational, weights: &[i64]) -> SybilSplit<Rational> {
    let total: i64 = weights.iter().sum();
    SybilSplit::participating(parent.clone(), weights.iter().map(|w| stake.clone() * q(*w, total)))
}

proptest! {
    #[test]
    fn split_leaves_total_unchanged(
        (raw, attack) in feasible_instance(3, 5),
        pick in any::<prop::sample::Index>(),
        weights in prop::collection::vec(1i64..6, 2..=8),
    ) {
        let g = raw.build();
        let v = attack.attackers.keys().nth(pick.index(attack.attackers.len())).unwrap().clone();
        let split = random_split(&v, g.stake(&v).unwrap(), &weights);
        let g2 = apply_split(&g, &split).unwrap();
        let a2 = split.apply_to_attack(&attack);
        let before = mult_slash_max(&g, &attack).unwrap();
        let after = mult_slash_max(&g2, &a2).unwrap();
        prop_assert_eq!(before.total(), after.total());
        let parts = split.parts.iter().fold(q(0, 1), |acc, p| acc + after.psi(&p.id).unwrap().clone());
        prop_assert_eq!(&parts, before.psi(&v).unwrap());
    }

    #[test]
    fn charges_conserve_thresholds((raw, attack) in feasible_instance(3, 5)) {
        let g = raw.build();
        let out = mult_slash_max(&g, &attack).unwrap();
        for (s, charge) in &out.services {
            if !charge.residual_clamped && !charge.no_single_attackers {
                prop_assert_eq!(&charge.charged, &g.threshold(s).unwrap());
            }
        }
        for (v, c) in &out.operators {
            prop_assert!(c.psi >= q(0, 1) && &c.psi <= g.stake(v).unwrap());
        }
    }

    #[test]
    fn minimal_program_is_consistent((raw, attack) in feasible_instance(3, 5)) {
        let g = raw.build();
        match minimal_slashing(&g, &attack) {
            Ok(m) => {
                prop_assert_eq!(&m.objective, &m.dual_objective);
                prop_assert_eq!(m.slackness_gap(), q(0, 1));
                prop_assert_eq!(m.total(), m.objective.clone());
                for s in &attack.services {
                    let nbrs = g.service_neighbors(s).unwrap();
                    let after = attack.attackers.iter().filter(|(v, _)| nbrs.contains(*v))
                        .fold(q(0, 1), |acc, (v, x)| acc + x.clone() - m.psi[v].clone());
                    prop_assert!(after <= g.threshold(s).unwrap());
                }
                let lone = attack.services.iter().next().filter(|_| attack.services.len() == 1);
                if let Some(s) = lone.filter(|s| attack.coverage(&g, s).unwrap() > q(0, 1)) {
                    let phi = service_factor(&g, &attack, s).unwrap();
                    prop_assert_eq!(&m.factors[s], &(q(1, 1) - phi));
                }
            }
            Err(e) => prop_assert!(false, "unexpected {e:?}"),
        }
    }
}
