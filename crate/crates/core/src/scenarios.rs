//! Small named instances used by tests, the CLI and the reproduction table.

use crate::graph::{AttackSpec, GraphBuilder, RestakingGraph, SybilSplit};
use crate::randnet::{SbmModel, ServiceBlock};
use crate::scalar::Scalar;

fn r<T: Scalar>(num: i64, den: i64) -> T {
    T::from_ratio(num, den)
}

/// One operator securing two services; attacking `s1` alone is profitable
/// and feasible.
pub fn single_edge_graph<T: Scalar>() -> RestakingGraph<T> {
    GraphBuilder::new()
        .service("s1", r(11, 10), r(2, 3))
        .service("s2", r(1, 1), r(1, 2))
        .operator("v1", r(1, 1))
        .operator("v2", r(11, 10))
        .edge("s1", "v1")
        .edge("s2", "v1")
        .edge("s2", "v2")
        .build()
        .expect("static graph is valid")
}

pub fn single_edge_attack<T: Scalar>(graph: &RestakingGraph<T>) -> AttackSpec<T> {
    AttackSpec::full_stake(graph, ["s1"], ["v1"]).expect("static attack is valid")
}

/// Two services sharing one attacker: `v1` only on `s1`, `v3` only on
/// `s2`, `v2` on both, plus passive `v0` and `v4`. Profits are 2 each.
pub fn overlap_graph<T: Scalar>() -> RestakingGraph<T> {
    GraphBuilder::new()
        .service("s1", r(2, 1), r(2, 3))
        .service("s2", r(2, 1), r(1, 2))
        .operator("v0", r(1, 1))
        .operator("v1", r(1, 1))
        .operator("v2", r(3, 2))
        .operator("v3", r(1, 1))
        .operator("v4", r(1, 1))
        .edge("s1", "v0")
        .edge("s1", "v1")
        .edge("s1", "v2")
        .edge("s2", "v2")
        .edge("s2", "v3")
        .edge("s2", "v4")
        .build()
        .expect("static graph is valid")
}

pub fn overlap_attack<T: Scalar>(graph: &RestakingGraph<T>) -> AttackSpec<T> {
    AttackSpec::full_stake(graph, ["s1", "s2"], ["v1", "v2", "v3"]).expect("static attack is valid")
}

/// The shared attacker `v2` split into three participating identities.
pub fn overlap_three_way_split<T: Scalar>() -> SybilSplit<T> {
    SybilSplit::participating("v2", [r(1, 2), r(3, 4), r(1, 4)])
}

/// `v2` keeps 1.4 in the attack and parks 0.1 in a passive identity.
pub fn overlap_withholding_split<T: Scalar>() -> SybilSplit<T> {
    SybilSplit::withholding("v2", [r(7, 5), r(1, 10)])
}

/// Two service blocks seen by one attacker: a well-secured block and a
/// sparsely secured one, 60 background operators of unit stake.
pub fn two_block_model() -> SbmModel {
    SbmModel::single_background(
        vec![ServiceBlock { count: 36, alpha: 2.0 / 3.0, pi: 0.0 }, ServiceBlock { count: 36, alpha: 0.5, pi: 0.0 }],
        60,
        vec![0.30, 0.02],
        1.0,
        vec![0.5, 0.5],
    )
    .expect("static model is valid")
}
