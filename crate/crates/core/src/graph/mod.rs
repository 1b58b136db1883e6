//! Restaking graph model: services, operators, restaking edges and the
//! attack predicates defined over them.
//!
//! An operator restakes its full stake with every service it is connected
//! to, so `σ_{∂s}` is the plain sum of neighbour stakes. Attacks carry a
//! per-operator committed stake, which lets a withholding (type I) deviation
//! be expressed without rebuilding the graph.

mod file;

pub use file::{read_attack, read_graph, write_attack, write_graph, AttackDoc, GraphDoc, NumberDoc};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

macro_rules! id_type {
    ($name:ident) => {
        #[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl From<&str> for $name {
            fn from(id: &str) -> Self {
                Self(id.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(id: String) -> Self {
                Self(id)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }
    };
}

id_type!(ServiceId);
id_type!(OperatorId);

#[derive(Clone, Debug, PartialEq)]
pub struct Service<T> {
    /// Profit from a successful attack on the service.
    pub pi: T,
    /// Fraction of restaked stake needed to attack it.
    pub alpha: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Operator<T> {
    pub stake: T,
}

/// Bipartite services × operators graph. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct RestakingGraph<T> {
    services: BTreeMap<ServiceId, Service<T>>,
    operators: BTreeMap<OperatorId, Operator<T>>,
    service_nbrs: BTreeMap<ServiceId, BTreeSet<OperatorId>>,
    operator_nbrs: BTreeMap<OperatorId, BTreeSet<ServiceId>>,
}

/// Incremental constructor for [`RestakingGraph`]; all checks run in [`GraphBuilder::build`].
#[derive(Clone, Debug)]
pub struct GraphBuilder<T> {
    services: Vec<(ServiceId, Service<T>)>,
    operators: Vec<(OperatorId, Operator<T>)>,
    edges: Vec<(ServiceId, OperatorId)>,
}

impl<T: Scalar> Default for GraphBuilder<T> {
    fn default() -> Self {
        Self { services: Vec::new(), operators: Vec::new(), edges: Vec::new() }
    }
}

impl<T: Scalar> GraphBuilder<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn service(mut self, id: impl Into<ServiceId>, pi: T, alpha: T) -> Self {
        self.services.push((id.into(), Service { pi, alpha }));
        self
    }

    pub fn operator(mut self, id: impl Into<OperatorId>, stake: T) -> Self {
        self.operators.push((id.into(), Operator { stake }));
        self
    }

    pub fn edge(mut self, service: impl Into<ServiceId>, operator: impl Into<OperatorId>) -> Self {
        self.edges.push((service.into(), operator.into()));
        self
    }

    pub fn add_service(&mut self, id: impl Into<ServiceId>, pi: T, alpha: T) {
        self.services.push((id.into(), Service { pi, alpha }));
    }

    pub fn add_operator(&mut self, id: impl Into<OperatorId>, stake: T) {
        self.operators.push((id.into(), Operator { stake }));
    }

    pub fn add_edge(&mut self, service: impl Into<ServiceId>, operator: impl Into<OperatorId>) {
        self.edges.push((service.into(), operator.into()));
    }

    pub fn build(self) -> Result<RestakingGraph<T>> {
        let mut services = BTreeMap::new();
        for (id, service) in self.services {
            check_id(id.as_str())?;
            check_finite_nonneg(&service.pi, &format!("pi of `{id}`"))?;
            check_finite_nonneg(&service.alpha, &format!("alpha of `{id}`"))?;
            if service.alpha > T::one() {
                return Err(invalid(format!("alpha of `{id}`"), "must not exceed 1"));
            }
            if services.insert(id.clone(), service).is_some() {
                return Err(Error::DuplicateId(id.0));
            }
        }
        let mut operators = BTreeMap::new();
        for (id, operator) in self.operators {
            check_id(id.as_str())?;
            check_finite_nonneg(&operator.stake, &format!("stake of `{id}`"))?;
            if services.contains_key(&ServiceId(id.0.clone())) || operators.insert(id.clone(), operator).is_some() {
                return Err(Error::DuplicateId(id.0));
            }
        }
        let mut service_nbrs: BTreeMap<ServiceId, BTreeSet<OperatorId>> = services.keys().map(|s| (s.clone(), BTreeSet::new())).collect();
        let mut operator_nbrs: BTreeMap<OperatorId, BTreeSet<ServiceId>> = operators.keys().map(|v| (v.clone(), BTreeSet::new())).collect();
        for (s, v) in self.edges {
            let snbrs = service_nbrs.get_mut(&s).ok_or_else(|| Error::UnknownService(s.0.clone()))?;
            let vnbrs = operator_nbrs.get_mut(&v).ok_or_else(|| Error::UnknownOperator(v.0.clone()))?;
            snbrs.insert(v);
            vnbrs.insert(s);
        }
        Ok(RestakingGraph { services, operators, service_nbrs, operator_nbrs })
    }
}

fn check_id(id: &str) -> Result<()> {
    if id.is_empty() {
        Err(invalid("identifier", "must be non-empty"))
    } else {
        Ok(())
    }
}

fn check_finite_nonneg<T: Scalar>(value: &T, field: &str) -> Result<()> {
    if !value.to_f64_lossy().is_finite() {
        return Err(invalid(field, "must be finite"));
    }
    if value.is_negative() {
        return Err(invalid(field, "must be non-negative"));
    }
    Ok(())
}

fn invalid(field: impl Into<String>, reason: &str) -> Error {
    Error::InvalidValue { field: field.into(), reason: reason.to_owned() }
}

impl<T: Scalar> RestakingGraph<T> {
    pub fn builder() -> GraphBuilder<T> {
        GraphBuilder::new()
    }

    pub fn services(&self) -> impl Iterator<Item = (&ServiceId, &Service<T>)> {
        self.services.iter()
    }

    pub fn operators(&self) -> impl Iterator<Item = (&OperatorId, &Operator<T>)> {
        self.operators.iter()
    }

    pub fn service_ids(&self) -> impl Iterator<Item = &ServiceId> {
        self.services.keys()
    }

    pub fn operator_ids(&self) -> impl Iterator<Item = &OperatorId> {
        self.operators.keys()
    }

    pub fn service_count(&self) -> usize {
        self.services.len()
    }

    pub fn operator_count(&self) -> usize {
        self.operators.len()
    }

    /// All edges in (service, operator) order.
    pub fn edges(&self) -> impl Iterator<Item = (&ServiceId, &OperatorId)> {
        self.service_nbrs.iter().flat_map(|(s, vs)| vs.iter().map(move |v| (s, v)))
    }

    pub fn edge_count(&self) -> usize {
        self.service_nbrs.values().map(BTreeSet::len).sum()
    }

    pub fn has_edge(&self, service: &ServiceId, operator: &OperatorId) -> bool {
        self.service_nbrs.get(service).is_some_and(|vs| vs.contains(operator))
    }

    pub fn service(&self, id: &ServiceId) -> Result<&Service<T>> {
        self.services.get(id).ok_or_else(|| Error::UnknownService(id.0.clone()))
    }

    pub fn operator(&self, id: &OperatorId) -> Result<&Operator<T>> {
        self.operators.get(id).ok_or_else(|| Error::UnknownOperator(id.0.clone()))
    }

    pub fn stake(&self, id: &OperatorId) -> Result<&T> {
        self.operator(id).map(|o| &o.stake)
    }

    /// `∂s`
    pub fn service_neighbors(&self, id: &ServiceId) -> Result<&BTreeSet<OperatorId>> {
        self.service_nbrs.get(id).ok_or_else(|| Error::UnknownService(id.0.clone()))
    }

    /// `∂v`
    pub fn operator_neighbors(&self, id: &OperatorId) -> Result<&BTreeSet<ServiceId>> {
        self.operator_nbrs.get(id).ok_or_else(|| Error::UnknownOperator(id.0.clone()))
    }

    /// `σ_D` for a set of operators.
    pub fn stake_of<'a>(&self, operators: impl IntoIterator<Item = &'a OperatorId>) -> Result<T> {
        operators.into_iter().try_fold(T::zero(), |acc, v| Ok(acc + self.stake(v)?.clone()))
    }

    /// `π_A` for a set of services.
    pub fn profit_of<'a>(&self, services: impl IntoIterator<Item = &'a ServiceId>) -> Result<T> {
        services.into_iter().try_fold(T::zero(), |acc, s| Ok(acc + self.service(s)?.pi.clone()))
    }

    /// `α_s σ_{∂s}`, the stake an attack on `s` must muster.
    pub fn threshold(&self, service: &ServiceId) -> Result<T> {
        Ok(self.service(service)?.alpha.clone() * total_restaked_stake(self, service)?)
    }

    /// Converts every number in the graph, e.g. exact rationals to `f64`.
    pub fn map_scalar<U: Scalar>(&self, mut convert: impl FnMut(&T) -> U) -> RestakingGraph<U> {
        RestakingGraph {
            services: self.services.iter().map(|(id, s)| (id.clone(), Service { pi: convert(&s.pi), alpha: convert(&s.alpha) })).collect(),
            operators: self.operators.iter().map(|(id, o)| (id.clone(), Operator { stake: convert(&o.stake) })).collect(),
            service_nbrs: self.service_nbrs.clone(),
            operator_nbrs: self.operator_nbrs.clone(),
        }
    }

    pub fn to_f64(&self) -> RestakingGraph<f64> {
        self.map_scalar(Scalar::to_f64_lossy)
    }
}

/// `σ_{∂s} = Σ_{v ∈ ∂s} σ_v`.
pub fn total_restaked_stake<T: Scalar>(graph: &RestakingGraph<T>, service: &ServiceId) -> Result<T> {
    graph.stake_of(graph.service_neighbors(service)?)
}

/// Attacked services `A` together with attackers `B` and their committed stakes `x_v`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackSpec<T> {
    pub services: BTreeSet<ServiceId>,
    pub attackers: BTreeMap<OperatorId, T>,
}

impl<T: Scalar> AttackSpec<T> {
    pub fn new(services: BTreeSet<ServiceId>, attackers: BTreeMap<OperatorId, T>) -> Self {
        Self { services, attackers }
    }

    /// Attack in which every attacker commits its full stake.
    pub fn full_stake<S, V>(graph: &RestakingGraph<T>, services: S, attackers: V) -> Result<Self>
    where
        S: IntoIterator,
        S::Item: Into<ServiceId>,
        V: IntoIterator,
        V::Item: Into<OperatorId>,
    {
        let services: BTreeSet<ServiceId> = services.into_iter().map(Into::into).collect();
        let attackers = attackers
            .into_iter()
            .map(|v| {
                let v = v.into();
                let stake = graph.stake(&v)?.clone();
                Ok((v, stake))
            })
            .collect::<Result<_>>()?;
        let attack = Self { services, attackers };
        attack.validate(graph)?;
        Ok(attack)
    }

    /// Same attack with one attacker's commitment replaced.
    pub fn with_commitment(&self, operator: &OperatorId, x: T) -> Self {
        let mut next = self.clone();
        next.attackers.insert(operator.clone(), x);
        next
    }

    pub fn committed(&self, operator: &OperatorId) -> Option<&T> {
        self.attackers.get(operator)
    }

    /// Total committed stake `Σ_{v∈B} x_v`.
    pub fn committed_total(&self) -> T {
        self.attackers.values().fold(T::zero(), |acc, x| acc + x.clone())
    }

    /// Checks `A ⊆ S`, `B ⊆ V`, both non-empty, and `0 ≤ x_v ≤ σ_v`.
    pub fn validate(&self, graph: &RestakingGraph<T>) -> Result<()> {
        if self.services.is_empty() {
            return Err(Error::MalformedAttack("attacked service set is empty".into()));
        }
        if self.attackers.is_empty() {
            return Err(Error::MalformedAttack("attacker set is empty".into()));
        }
        for s in &self.services {
            graph.service(s)?;
        }
        for (v, x) in &self.attackers {
            let stake = graph.stake(v)?;
            if x.is_negative() || x > stake {
                return Err(Error::StakeOutOfRange { value: x.render(), bound: stake.render() });
            }
        }
        Ok(())
    }

    /// `A ∩ ∂v`
    pub fn attacked_neighbors(&self, graph: &RestakingGraph<T>, operator: &OperatorId) -> Result<BTreeSet<ServiceId>> {
        Ok(graph.operator_neighbors(operator)?.intersection(&self.services).cloned().collect())
    }

    /// Attackers adjacent to `service`, i.e. `B ∩ ∂s`.
    pub fn attackers_on<'a>(
        &'a self,
        graph: &'a RestakingGraph<T>,
        service: &ServiceId,
    ) -> Result<impl Iterator<Item = (&'a OperatorId, &'a T)> + 'a> {
        let nbrs = graph.service_neighbors(service)?;
        Ok(self.attackers.iter().filter(move |(v, _)| nbrs.contains(*v)))
    }

    /// Committed stake reaching `service`: `Σ_{v ∈ B ∩ ∂s} x_v`.
    pub fn coverage(&self, graph: &RestakingGraph<T>, service: &ServiceId) -> Result<T> {
        Ok(self.attackers_on(graph, service)?.fold(T::zero(), |acc, (_, x)| acc + x.clone()))
    }
}

/// How the profit of an attacked service set is aggregated.
pub trait ProfitAggregation<T> {
    fn profit(&self, graph: &RestakingGraph<T>, services: &BTreeSet<ServiceId>) -> Result<T>;
}

/// `f(π, A) = π_A`.
#[derive(Clone, Copy, Debug, Default)]
pub struct AdditiveProfit;

impl<T: Scalar> ProfitAggregation<T> for AdditiveProfit {
    fn profit(&self, graph: &RestakingGraph<T>, services: &BTreeSet<ServiceId>) -> Result<T> {
        graph.profit_of(services)
    }
}

/// Every attacked service gets at least `α_s σ_{∂s}` of committed stake.
pub fn is_feasible<T: Scalar>(graph: &RestakingGraph<T>, attack: &AttackSpec<T>) -> Result<bool> {
    attack.validate(graph)?;
    Ok(first_infeasible(graph, attack)?.is_none())
}

pub(crate) fn first_infeasible<T: Scalar>(graph: &RestakingGraph<T>, attack: &AttackSpec<T>) -> Result<Option<ServiceId>> {
    for s in &attack.services {
        if !attack.coverage(graph, s)?.ge_tol(&graph.threshold(s)?) {
            return Ok(Some(s.clone()));
        }
    }
    Ok(None)
}

/// Errors with [`Error::InfeasibleAttack`] unless the attack is well-formed and feasible.
pub fn require_feasible<T: Scalar>(graph: &RestakingGraph<T>, attack: &AttackSpec<T>) -> Result<()> {
    attack.validate(graph)?;
    match first_infeasible(graph, attack)? {
        Some(s) => Err(Error::InfeasibleAttack(s.0)),
        None => Ok(()),
    }
}

/// `f(π, A) > Σ_{v∈B} x_v` (strict). With full commitments this is the
/// plain stake sum `σ_B`.
pub fn is_profitable<T: Scalar>(graph: &RestakingGraph<T>, attack: &AttackSpec<T>, profit: &impl ProfitAggregation<T>) -> Result<bool> {
    attack.validate(graph)?;
    Ok(profit.profit(graph, &attack.services)?.gt_tol(&attack.committed_total()))
}

/// No attacker is redundant: each commits positive stake, touches some
/// attacked service, and its removal breaks feasibility of at least one
/// attacked service it covers.
pub fn is_stable<T: Scalar>(graph: &RestakingGraph<T>, attack: &AttackSpec<T>) -> Result<bool> {
    Ok(redundant_attacker(graph, attack)?.is_none())
}

/// First attacker (in id order) that violates stability, if any.
pub fn redundant_attacker<T: Scalar>(graph: &RestakingGraph<T>, attack: &AttackSpec<T>) -> Result<Option<OperatorId>> {
    require_feasible(graph, attack)?;
    let mut thresholds = BTreeMap::new();
    let mut coverage = BTreeMap::new();
    for s in &attack.services {
        thresholds.insert(s, graph.threshold(s)?);
        coverage.insert(s, attack.coverage(graph, s)?);
    }
    for (v, x) in &attack.attackers {
        if x.is_negligible() {
            return Ok(Some(v.clone()));
        }
        let touched = attack.attacked_neighbors(graph, v)?;
        let essential = touched.iter().any(|s| {
            let without = coverage[s].clone() - x.clone();
            !without.ge_tol(&thresholds[s])
        });
        if !essential {
            return Ok(Some(v.clone()));
        }
    }
    Ok(None)
}

pub(crate) fn require_stable<T: Scalar>(graph: &RestakingGraph<T>, attack: &AttackSpec<T>) -> Result<()> {
    match redundant_attacker(graph, attack)? {
        Some(v) => Err(Error::UnstableAttack(v.0)),
        None => Ok(()),
    }
}

/// Which kind of Sybil deviation a split encodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitKind {
    /// No part attacks.
    Passive,
    /// Exactly one part attacks; the rest withhold.
    TypeI,
    /// Two or more parts attack.
    TypeII,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitPart<T> {
    pub id: OperatorId,
    pub stake: T,
    pub inherit_edges: bool,
    pub participates: bool,
}

/// Replacement of one operator by several identities whose stakes sum to the original.
#[derive(Clone, Debug, PartialEq)]
pub struct SybilSplit<T> {
    pub parent: OperatorId,
    pub parts: Vec<SplitPart<T>>,
}

impl<T: Scalar> SybilSplit<T> {
    /// All parts inherit the parent's edges and attack.
    pub fn participating(parent: impl Into<OperatorId>, shares: impl IntoIterator<Item = T>) -> Self {
        let parent = parent.into();
        let parts = shares
            .into_iter()
            .enumerate()
            .map(|(i, stake)| SplitPart { id: OperatorId(format!("{}#{}", parent, i + 1)), stake, inherit_edges: true, participates: true })
            .collect();
        Self { parent, parts }
    }

    /// First part attacks, the others inherit edges but stay passive.
    pub fn withholding(parent: impl Into<OperatorId>, shares: impl IntoIterator<Item = T>) -> Self {
        let mut split = Self::participating(parent, shares);
        for part in split.parts.iter_mut().skip(1) {
            part.participates = false;
        }
        split
    }

    pub fn kind(&self) -> SplitKind {
        match self.parts.iter().filter(|p| p.participates).count() {
            0 => SplitKind::Passive,
            1 => SplitKind::TypeI,
            _ => SplitKind::TypeII,
        }
    }

    pub fn validate(&self, graph: &RestakingGraph<T>) -> Result<()> {
        let parent_stake = graph.stake(&self.parent)?;
        if self.parts.len() < 2 {
            return Err(Error::TooFewParts);
        }
        let mut total = T::zero();
        for part in &self.parts {
            check_id(part.id.as_str())?;
            if part.stake.is_negative() {
                return Err(invalid(format!("stake of part `{}`", part.id), "must be non-negative"));
            }
            total = total + part.stake.clone();
        }
        if !total.approx_eq(parent_stake) {
            return Err(Error::ShareSumMismatch { expected: parent_stake.render(), actual: total.render() });
        }
        Ok(())
    }

    /// Rewrites an attack on the original graph to one on the split graph:
    /// the parent leaves `B`, participating parts join with full part stake.
    pub fn apply_to_attack(&self, attack: &AttackSpec<T>) -> AttackSpec<T> {
        let mut next = attack.clone();
        next.attackers.remove(&self.parent);
        for part in self.parts.iter().filter(|p| p.participates) {
            next.attackers.insert(part.id.clone(), part.stake.clone());
        }
        next
    }
}

/// Replaces the parent operator by the split's parts.
pub fn apply_split<T: Scalar>(graph: &RestakingGraph<T>, split: &SybilSplit<T>) -> Result<RestakingGraph<T>> {
    split.validate(graph)?;
    let parent_edges = graph.operator_neighbors(&split.parent)?.clone();
    let mut next = graph.clone();
    next.operators.remove(&split.parent);
    next.operator_nbrs.remove(&split.parent);
    for nbrs in next.service_nbrs.values_mut() {
        nbrs.remove(&split.parent);
    }
    for part in &split.parts {
        if next.operators.contains_key(&part.id) || next.services.contains_key(&ServiceId(part.id.0.clone())) {
            return Err(Error::DuplicateId(part.id.0.clone()));
        }
        next.operators.insert(part.id.clone(), Operator { stake: part.stake.clone() });
        let inherited = if part.inherit_edges { parent_edges.clone() } else { BTreeSet::new() };
        for s in &inherited {
            next.service_nbrs.get_mut(s).expect("edge endpoint exists").insert(part.id.clone());
        }
        next.operator_nbrs.insert(part.id.clone(), inherited);
    }
    Ok(next)
}

/// Enumeration guard: `2^|S| · 2^|V|` must not exceed this.
pub const ENUMERATION_LIMIT: u128 = 1 << 20;

/// Every full-stake `(A, B)` that is feasible and profitable under additive
/// profits, with `|A| ≤ max_services` and `|B| ≤ max_attackers`. Ordered by
/// the bitmask of `A`, then of `B`, with bits following id order.
pub fn enumerate_attacks<T: Scalar>(graph: &RestakingGraph<T>, max_services: usize, max_attackers: usize) -> Result<Vec<AttackSpec<T>>> {
    let services: Vec<&ServiceId> = graph.service_ids().collect();
    let operators: Vec<&OperatorId> = graph.operator_ids().collect();
    let bits = services.len() + operators.len();
    let combos = if bits >= 127 { u128::MAX } else { 1u128 << bits };
    if combos > ENUMERATION_LIMIT {
        return Err(Error::InstanceTooLarge(combos));
    }
    let mut found = Vec::new();
    for a_mask in 1u32..(1u32 << services.len()) {
        if a_mask.count_ones() as usize > max_services {
            continue;
        }
        let a: BTreeSet<ServiceId> = select(&services, a_mask).cloned().collect();
        let profit = graph.profit_of(&a)?;
        for b_mask in 1u32..(1u32 << operators.len()) {
            if b_mask.count_ones() as usize > max_attackers {
                continue;
            }
            let b: BTreeMap<OperatorId, T> =
                select(&operators, b_mask).map(|v| Ok(((*v).clone(), graph.stake(v)?.clone()))).collect::<Result<_>>()?;
            let attack = AttackSpec::new(a.clone(), b);
            if profit.gt_tol(&attack.committed_total()) && first_infeasible(graph, &attack)?.is_none() {
                found.push(attack);
            }
        }
    }
    Ok(found)
}

fn select<'a, X>(items: &'a [&'a X], mask: u32) -> impl Iterator<Item = &'a X> + 'a {
    items.iter().enumerate().filter(move |(i, _)| mask & (1 << i) != 0).map(|(_, x)| *x)
}
