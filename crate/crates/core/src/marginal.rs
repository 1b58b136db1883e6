//! Marginal slashing.
//!
//! Attackers are grouped by the exact set of attacked services they touch.
//! Each group is charged what it adds on top of every other group to reach
//! the threshold of its most demanding service, and that charge is spread
//! over members by shaving a common amount off each committed stake.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::graph::{
    apply_split, require_feasible, require_stable, AttackSpec, OperatorId, RestakingGraph, ServiceId, SplitKind, SybilSplit,
};
use crate::scalar::{max_of, Scalar};

/// Attacked-service fingerprint `A ∩ ∂v` shared by the members of a group.
pub type Fingerprint = BTreeSet<ServiceId>;

/// Renders a fingerprint as `{s1,s2}`.
pub fn fingerprint_label(fp: &Fingerprint) -> String {
    let mut out = String::from("{");
    for (i, s) in fp.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{s}");
    }
    out.push('}');
    out
}

/// Attackers keyed by fingerprint. Empty groups are never stored.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupPartition {
    pub groups: BTreeMap<Fingerprint, BTreeSet<OperatorId>>,
}

impl GroupPartition {
    pub fn group_of(&self, operator: &OperatorId) -> Option<&Fingerprint> {
        self.groups.iter().find(|(_, members)| members.contains(operator)).map(|(fp, _)| fp)
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

/// Groups the attackers of a stable attack by fingerprint.
pub fn partition_attackers<T: Scalar>(graph: &RestakingGraph<T>, attack: &AttackSpec<T>) -> Result<GroupPartition> {
    require_stable(graph, attack)?;
    partition_unchecked(graph, attack)
}

fn partition_unchecked<T: Scalar>(graph: &RestakingGraph<T>, attack: &AttackSpec<T>) -> Result<GroupPartition> {
    let mut groups: BTreeMap<Fingerprint, BTreeSet<OperatorId>> = BTreeMap::new();
    for v in attack.attackers.keys() {
        let fp = attack.attacked_neighbors(graph, v)?;
        if !fp.is_empty() {
            groups.entry(fp).or_default().insert(v.clone());
        }
    }
    Ok(GroupPartition { groups })
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupCost<T> {
    /// `c^s` for every service in the fingerprint.
    pub per_service: BTreeMap<ServiceId, T>,
    /// Largest of the per-service costs.
    pub cost: T,
}

fn group_stake<T: Scalar>(attack: &AttackSpec<T>, members: &BTreeSet<OperatorId>) -> T {
    members.iter().fold(T::zero(), |acc, v| acc + attack.attackers[v].clone())
}

/// Marginal cost of group `group`: for each `s` in it, the threshold of `s`
/// minus the committed stake of every other group that also touches `s`.
pub fn marginal_cost<T: Scalar>(
    graph: &RestakingGraph<T>,
    attack: &AttackSpec<T>,
    partition: &GroupPartition,
    group: &Fingerprint,
) -> Result<GroupCost<T>> {
    if !partition.groups.contains_key(group) {
        return Err(Error::UnknownGroup(fingerprint_label(group)));
    }
    let mut per_service = BTreeMap::new();
    let mut cost: Option<T> = None;
    for s in group {
        let others = partition
            .groups
            .iter()
            .filter(|(fp, _)| *fp != group && fp.contains(s))
            .fold(T::zero(), |acc, (_, members)| acc + group_stake(attack, members));
        let c = graph.threshold(s)? - others;
        cost = Some(match cost {
            Some(best) => max_of(best, c.clone()),
            None => c.clone(),
        });
        per_service.insert(s.clone(), c);
    }
    Ok(GroupCost { per_service, cost: cost.expect("fingerprints are non-empty") })
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupSlash<T> {
    pub fingerprint: Fingerprint,
    pub members: BTreeSet<OperatorId>,
    /// Committed stake of the group.
    pub stake: T,
    pub cost: GroupCost<T>,
    /// Group charge from the closed group formula, clamped at zero.
    pub formula_total: T,
    /// Sum of the member charges; this is the authoritative group slash.
    pub total: T,
    /// Some member charge hit the zero clamp.
    pub member_clamped: bool,
    /// The group formula went negative and was clamped.
    pub group_clamped: bool,
}

impl<T: Scalar> GroupSlash<T> {
    /// The group formula and the member sum disagree.
    pub fn diverges(&self) -> bool {
        !self.formula_total.approx_eq(&self.total)
    }

    /// Amount each member keeps: `σ_{B_S} − c_{B_S}`.
    pub fn slack(&self) -> T {
        self.stake.clone() - self.cost.cost.clone()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarginalSlashOutcome<T> {
    pub groups: Vec<GroupSlash<T>>,
    pub psi: BTreeMap<OperatorId, T>,
}

impl<T: Scalar> MarginalSlashOutcome<T> {
    pub fn psi_of(&self, operator: &OperatorId) -> Option<&T> {
        self.psi.get(operator)
    }

    pub fn total(&self) -> T {
        self.psi.values().fold(T::zero(), |acc, x| acc + x.clone())
    }

    pub fn group_of(&self, operator: &OperatorId) -> Option<&GroupSlash<T>> {
        self.groups.iter().find(|g| g.members.contains(operator))
    }
}

/// Marginal slash of a stable attack.
pub fn marginal_slash<T: Scalar>(graph: &RestakingGraph<T>, attack: &AttackSpec<T>) -> Result<MarginalSlashOutcome<T>> {
    require_stable(graph, attack)?;
    slash_groups(graph, attack)
}

/// Same formulas with only feasibility required. Lets callers reach the
/// zero clamps, which stable attacks never trigger.
pub fn marginal_slash_unchecked<T: Scalar>(graph: &RestakingGraph<T>, attack: &AttackSpec<T>) -> Result<MarginalSlashOutcome<T>> {
    require_feasible(graph, attack)?;
    slash_groups(graph, attack)
}

fn slash_groups<T: Scalar>(graph: &RestakingGraph<T>, attack: &AttackSpec<T>) -> Result<MarginalSlashOutcome<T>> {
    let partition = partition_unchecked(graph, attack)?;
    let mut groups = Vec::with_capacity(partition.len());
    let mut psi: BTreeMap<OperatorId, T> = attack.attackers.keys().map(|v| (v.clone(), T::zero())).collect();
    for (fp, members) in &partition.groups {
        let cost = marginal_cost(graph, attack, &partition, fp)?;
        let stake = group_stake(attack, members);
        let slack = stake.clone() - cost.cost.clone();
        let size = T::from_usize(members.len()).expect("group size fits the scalar");
        let raw_group = stake.clone() - size * slack.clone();
        let mut total = T::zero();
        let mut member_clamped = false;
        for v in members {
            let raw = attack.attackers[v].clone() - slack.clone();
            member_clamped |= raw.is_negative();
            let charge = raw.positive_part();
            total = total + charge.clone();
            psi.insert(v.clone(), charge);
        }
        groups.push(GroupSlash {
            fingerprint: fp.clone(),
            members: members.clone(),
            stake,
            cost,
            group_clamped: raw_group.is_negative(),
            formula_total: raw_group.positive_part(),
            total,
            member_clamped,
        });
    }
    Ok(MarginalSlashOutcome { groups, psi })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitGain<T> {
    pub before: T,
    pub after_parts: BTreeMap<OperatorId, T>,
    pub after: T,
    /// `before − after`; positive when splitting lowers the slash.
    pub gain: T,
}

/// Slash saved by a participating split of one attacker.
///
/// The parent must commit its full stake and every part must attack with
/// the parent's edges. The split attack is evaluated with the same formulas
/// without re-checking stability, since tiny parts may be individually
/// redundant.
pub fn type2_gain<T: Scalar>(graph: &RestakingGraph<T>, attack: &AttackSpec<T>, split: &SybilSplit<T>) -> Result<SplitGain<T>> {
    if split.kind() != SplitKind::TypeII {
        return Err(Error::NotTypeTwoSplit("fewer than two parts attack".into()));
    }
    if let Some(part) = split.parts.iter().find(|p| !p.participates || !p.inherit_edges) {
        return Err(Error::NotTypeTwoSplit(format!("part `{}` does not attack with the parent's edges", part.id)));
    }
    let committed =
        attack.committed(&split.parent).ok_or_else(|| Error::NotTypeTwoSplit(format!("`{}` is not an attacker", split.parent)))?;
    if !committed.approx_eq(graph.stake(&split.parent)?) {
        return Err(Error::NotTypeTwoSplit(format!("`{}` does not commit its full stake", split.parent)));
    }
    let before = marginal_slash(graph, attack)?.psi[&split.parent].clone();
    let split_graph = apply_split(graph, split)?;
    let split_attack = split.apply_to_attack(attack);
    let outcome = marginal_slash_unchecked(&split_graph, &split_attack)?;
    let after_parts: BTreeMap<OperatorId, T> = split.parts.iter().map(|p| (p.id.clone(), outcome.psi[&p.id].clone())).collect();
    let after = after_parts.values().fold(T::zero(), |acc, x| acc + x.clone());
    Ok(SplitGain { gain: before.clone() - after.clone(), before, after_parts, after })
}

#[derive(Clone, Debug, PartialEq)]
pub struct WithholdingEffect<T> {
    pub before: T,
    pub after: T,
    /// `before − after`.
    pub gain: T,
}

/// Effect on an attacker's own slash of committing `withheld` less stake.
pub fn type1_gain_marginal<T: Scalar>(
    graph: &RestakingGraph<T>,
    attack: &AttackSpec<T>,
    operator: &OperatorId,
    withheld: T,
) -> Result<WithholdingEffect<T>> {
    let before = marginal_slash(graph, attack)?.psi.get(operator).cloned().ok_or_else(|| Error::UnknownOperator(operator.to_string()))?;
    let reduced = attack.attackers[operator].clone() - withheld.clone();
    if withheld.is_negative() || !reduced.ge_tol(&before) {
        return Err(Error::FeasibilityBroken(format!(
            "committed stake {} would fall below the slash {}",
            reduced.render(),
            before.render()
        )));
    }
    let modified = attack.with_commitment(operator, reduced);
    let outcome = marginal_slash(graph, &modified).map_err(|e| match e {
        Error::InfeasibleAttack(s) => Error::FeasibilityBroken(format!("service `{s}` drops below its threshold")),
        Error::UnstableAttack(v) => Error::FeasibilityBroken(format!("attacker `{v}` becomes redundant")),
        other => other,
    })?;
    let after = outcome.psi[operator].clone();
    Ok(WithholdingEffect { gain: before.clone() - after.clone(), before, after })
}
