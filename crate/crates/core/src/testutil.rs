//! Shared generators for unit and property tests.

use std::collections::BTreeSet;

use proptest::prelude::*;

use crate::graph::{is_stable, AttackSpec, GraphBuilder, RestakingGraph};
use crate::Rational;

pub fn q(n: i64, d: i64) -> Rational {
    Rational::new(n.into(), d.into())
}

/// Random small graph described by plain data so the oracles can
/// recompute everything from the raw edge list.
#[derive(Clone, Debug)]
pub struct RawGraph {
    pub services: Vec<(i64, i64, i64)>, // pi, alpha numerator, alpha denominator
    pub stakes: Vec<(i64, i64)>,
    pub edges: Vec<(usize, usize)>,
}

impl RawGraph {
    pub fn build(&self) -> RestakingGraph<Rational> {
        let mut b = GraphBuilder::new();
        for (i, (pi, an, ad)) in self.services.iter().enumerate() {
            b.add_service(format!("s{i}"), q(*pi, 1), q(*an, *ad));
        }
        for (i, (n, d)) in self.stakes.iter().enumerate() {
            b.add_operator(format!("v{i}"), q(*n, *d));
        }
        for (s, v) in &self.edges {
            b.add_edge(format!("s{s}"), format!("v{v}"));
        }
        b.build().unwrap()
    }

    pub fn stake(&self, v: usize) -> Rational {
        q(self.stakes[v].0, self.stakes[v].1)
    }

    pub fn alpha(&self, s: usize) -> Rational {
        q(self.services[s].1, self.services[s].2)
    }

    pub fn has_edge(&self, s: usize, v: usize) -> bool {
        self.edges.contains(&(s, v))
    }

    /// Brute-force feasible ∧ profitable filter over all (A, B) bitmasks.
    pub fn oracle_attacks(&self) -> BTreeSet<(Vec<usize>, Vec<usize>)> {
        let (ns, nv) = (self.services.len(), self.stakes.len());
        let mut out = BTreeSet::new();
        for am in 1..(1usize << ns) {
            for bm in 1..(1usize << nv) {
                let a: Vec<usize> = (0..ns).filter(|i| am >> i & 1 == 1).collect();
                let b: Vec<usize> = (0..nv).filter(|i| bm >> i & 1 == 1).collect();
                let profit: Rational = a.iter().map(|&s| q(self.services[s].0, 1)).sum();
                let cost: Rational = b.iter().map(|&v| self.stake(v)).sum();
                let mut feasible = true;
                for &s in &a {
                    let (mut all, mut att) = (q(0, 1), q(0, 1));
                    for &(es, ev) in &self.edges {
                        if es == s {
                            all += self.stake(ev);
                            if b.contains(&ev) {
                                att += self.stake(ev);
                            }
                        }
                    }
                    if att < self.alpha(s) * all {
                        feasible = false;
                    }
                }
                if feasible && profit > cost {
                    out.insert((a, b));
                }
            }
        }
        out
    }

    /// Every full-stake attack on the graph that is stable, ignoring profit.
    pub fn stable_attacks(&self) -> Vec<AttackSpec<Rational>> {
        let g = self.build();
        let (ns, nv) = (self.services.len(), self.stakes.len());
        let mut out = Vec::new();
        for am in 1..(1usize << ns) {
            for bm in 1..(1usize << nv) {
                let a = (0..ns).filter(|i| am >> i & 1 == 1).map(|i| format!("s{i}"));
                let b = (0..nv).filter(|i| bm >> i & 1 == 1).map(|i| format!("v{i}"));
                let attack = AttackSpec::full_stake(&g, a, b).unwrap();
                if is_stable(&g, &attack).unwrap_or(false) {
                    out.push(attack);
                }
            }
        }
        out
    }
}

pub fn raw_graph(max_s: usize, max_v: usize) -> impl Strategy<Value = RawGraph> {
    (1..=max_s, 1..=max_v).prop_flat_map(|(ns, nv)| {
        let alphas = prop::sample::select(vec![(0, 1), (1, 4), (1, 3), (1, 2), (2, 3), (3, 4), (1, 1)]);
        (
            prop::collection::vec((0i64..7, alphas), ns),
            prop::collection::vec((1i64..8, 1i64..4), nv),
            prop::collection::vec(any::<bool>(), ns * nv),
        )
            .prop_map(move |(svc, stakes, mask)| RawGraph {
                services: svc.into_iter().map(|(pi, (an, ad))| (pi, an, ad)).collect(),
                stakes,
                edges: (0..ns).flat_map(|s| (0..nv).map(move |v| (s, v))).zip(mask).filter_map(|(e, keep)| keep.then_some(e)).collect(),
            })
    })
}

/// A graph together with one of its stable attacks, when it has any.
pub fn stable_instance(max_s: usize, max_v: usize) -> impl Strategy<Value = (RawGraph, AttackSpec<Rational>)> {
    (raw_graph(max_s, max_v), any::<prop::sample::Index>()).prop_filter_map("no stable attack", |(raw, pick)| {
        let attacks = raw.stable_attacks();
        if attacks.is_empty() {
            None
        } else {
            let attack = attacks[pick.index(attacks.len())].clone();
            Some((raw, attack))
        }
    })
}
