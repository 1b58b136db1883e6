//! Multiplicative slashing.
//!
//! Every attacked service `s` gets a factor `φ_s = α_s σ_{∂s} / (committed
//! stake on s)`. Attackers on several attacked services pay the largest of
//! their factors (or the capped sum under the additive variant); whatever is
//! left of each threshold is charged to the attackers unique to that service
//! in proportion to their stake. The minimal-slashing program is solved
//! exactly as a linear program over attacker groups.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::{require_feasible, AttackSpec, OperatorId, RestakingGraph, ServiceId};
use crate::lp::{LinearProgram, LpOutcome, Relation};
use crate::marginal::Fingerprint;
use crate::scalar::{max_of, min_of, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    Max,
    Additive,
    Minimal,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Max => "max",
            Scheme::Additive => "additive",
            Scheme::Minimal => "minimal",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Scheme::Max),
            "additive" => Ok(Scheme::Additive),
            "minimal" => Ok(Scheme::Minimal),
            other => Err(Error::InvalidValue { field: "scheme".into(), reason: format!("unknown scheme `{other}`") }),
        }
    }
}

fn require_attacked<T: Scalar>(graph: &RestakingGraph<T>, attack: &AttackSpec<T>, service: &ServiceId) -> Result<()> {
    graph.service(service)?;
    if attack.services.contains(service) {
        Ok(())
    } else {
        Err(Error::UnknownService(format!("{service} (not attacked)")))
    }
}

fn ratio<T: Scalar>(threshold: T, stake: T) -> T {
    if stake.is_zero() {
        T::zero()
    } else {
        threshold / stake
    }
}

/// `φ_s` with every attacker at its committed stake.
pub fn service_factor<T: Scalar>(graph: &RestakingGraph<T>, attack: &AttackSpec<T>, service: &ServiceId) -> Result<T> {
    attack.validate(graph)?;
    require_attacked(graph, attack, service)?;
    Ok(ratio(graph.threshold(service)?, attack.coverage(graph, service)?))
}

/// `φ_s(x) = α_s σ_{∂s} / (x + σ_{B′})` where `operator` commits `x` and
/// `σ_{B′}` is everyone else's committed stake on `service`.
pub fn service_factor_at<T: Scalar>(
    graph: &RestakingGraph<T>,
    attack: &AttackSpec<T>,
    service: &ServiceId,
    operator: &OperatorId,
    x: T,
) -> Result<T> {
    let stake = graph.stake(operator)?;
    if x.is_negative() || &x > stake {
        return Err(Error::StakeOutOfRange { value: x.render(), bound: stake.render() });
    }
    let mut modified = attack.clone();
    if graph.has_edge(service, operator) {
        modified.attackers.insert(operator.clone(), x);
    }
    service_factor(graph, &modified, service)
}

#[derive(Clone, Debug, PartialEq)]
pub struct OperatorCharge<T> {
    pub psi: T,
    /// Charged fraction of committed stake, `ψ_v / x_v`.
    pub phi: T,
    /// Services whose factor set the charge.
    pub binding: Vec<ServiceId>,
    /// Attacked services the operator touches.
    pub services: BTreeSet<ServiceId>,
}

impl<T> OperatorCharge<T> {
    pub fn is_intersection(&self) -> bool {
        self.services.len() >= 2
    }

    pub fn binding_label(&self) -> String {
        self.binding.iter().map(ServiceId::as_str).collect::<Vec<_>>().join("+")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ServiceCharge<T> {
    pub phi: T,
    pub threshold: T,
    /// Total charged to attackers on the service.
    pub charged: T,
    /// Threshold minus intersection charges, before clamping.
    pub residual: T,
    pub residual_clamped: bool,
    /// Nobody attacks only this service, so the residual has no payer.
    pub no_single_attackers: bool,
}

impl<T: Scalar> ServiceCharge<T> {
    /// Charges on the service add up to its threshold.
    pub fn conserved(&self) -> bool {
        self.charged.approx_eq(&self.threshold)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultSlashOutcome<T> {
    pub scheme: Scheme,
    pub operators: BTreeMap<OperatorId, OperatorCharge<T>>,
    pub services: BTreeMap<ServiceId, ServiceCharge<T>>,
}

impl<T: Scalar> MultSlashOutcome<T> {
    pub fn psi(&self, operator: &OperatorId) -> Option<&T> {
        self.operators.get(operator).map(|c| &c.psi)
    }

    pub fn total(&self) -> T {
        self.operators.values().fold(T::zero(), |acc, c| acc + c.psi.clone())
    }
}

/// Max-scheme slash of a feasible attack.
pub fn mult_slash_max<T: Scalar>(graph: &RestakingGraph<T>, attack: &AttackSpec<T>) -> Result<MultSlashOutcome<T>> {
    mult_slash(graph, attack, Scheme::Max)
}

/// Additive variant: intersection attackers pay `min(Σ φ_s, 1)` of their stake.
pub fn mult_slash_additive<T: Scalar>(graph: &RestakingGraph<T>, attack: &AttackSpec<T>) -> Result<MultSlashOutcome<T>> {
    mult_slash(graph, attack, Scheme::Additive)
}

fn mult_slash<T: Scalar>(graph: &RestakingGraph<T>, attack: &AttackSpec<T>, scheme: Scheme) -> Result<MultSlashOutcome<T>> {
    require_feasible(graph, attack)?;
    let mut factors = BTreeMap::new();
    for s in &attack.services {
        factors.insert(s.clone(), (graph.threshold(s)?, service_factor(graph, attack, s)?));
    }
    let mut operators = BTreeMap::new();
    for (v, x) in &attack.attackers {
        let services = attack.attacked_neighbors(graph, v)?;
        let (phi, binding) = if services.len() < 2 {
            // Single-service attackers are settled from the residual below.
            (T::zero(), services.iter().cloned().collect())
        } else {
            match scheme {
                Scheme::Max => {
                    let mut best: Option<(&ServiceId, &T)> = None;
                    for s in &services {
                        let phi = &factors[s].1;
                        if best.is_none_or(|(_, b)| phi > b) {
                            best = Some((s, phi));
                        }
                    }
                    let (s, phi) = best.expect("intersection attackers touch two services");
                    (min_of(phi.clone(), T::one()), vec![s.clone()])
                }
                _ => {
                    let sum = services.iter().fold(T::zero(), |acc, s| acc + factors[s].1.clone());
                    (min_of(sum, T::one()), services.iter().cloned().collect())
                }
            }
        };
        let psi = phi.clone() * x.clone();
        operators.insert(v.clone(), OperatorCharge { psi, phi, binding, services });
    }
    let mut services = BTreeMap::new();
    for (s, (threshold, phi)) in factors {
        let nbrs = graph.service_neighbors(&s)?;
        let on_s: Vec<&OperatorId> = attack.attackers.keys().filter(|v| nbrs.contains(*v)).collect();
        let intersection =
            on_s.iter().filter(|v| operators[**v].is_intersection()).fold(T::zero(), |acc, v| acc + operators[*v].psi.clone());
        let residual = threshold.clone() - intersection;
        let singles: Vec<&OperatorId> = on_s.iter().copied().filter(|v| !operators[*v].is_intersection()).collect();
        let single_stake = singles.iter().fold(T::zero(), |acc, v| acc + attack.attackers[*v].clone());
        let share = if single_stake.is_zero() { T::zero() } else { residual.positive_part() / single_stake };
        for v in &singles {
            let charge = operators.get_mut(*v).expect("attacker present");
            charge.phi = share.clone();
            charge.psi = share.clone() * attack.attackers[*v].clone();
        }
        let charged = on_s.iter().fold(T::zero(), |acc, v| acc + operators[*v].psi.clone());
        services.insert(
            s,
            ServiceCharge {
                phi,
                threshold,
                charged,
                residual_clamped: residual.is_negative(),
                residual,
                no_single_attackers: singles.is_empty(),
            },
        );
    }
    Ok(MultSlashOutcome { scheme, operators, services })
}

/// Solution of the minimal-slashing program, split evenly (by stake) within
/// each attacker group.
#[derive(Clone, Debug, PartialEq)]
pub struct MinimalSlash<T> {
    pub psi: BTreeMap<OperatorId, T>,
    /// Committed stake above each threshold, `e_s`.
    pub excess: BTreeMap<ServiceId, T>,
    /// Committed stake per group.
    pub group_stake: BTreeMap<Fingerprint, T>,
    /// Charged fraction per group.
    pub group_factors: BTreeMap<Fingerprint, T>,
    /// Per-service fraction `λ_s`: the smallest group fraction on the service.
    pub factors: BTreeMap<ServiceId, T>,
    /// Dual prices of the covering constraints.
    pub prices: BTreeMap<ServiceId, T>,
    /// Dual prices of the per-group caps `Ψ_G ≤ σ_G`.
    pub caps: BTreeMap<Fingerprint, T>,
    pub objective: T,
    pub dual_objective: T,
    /// Every group pays exactly the largest `λ_s` among its services.
    pub max_factorized: bool,
}

impl<T: Scalar> MinimalSlash<T> {
    /// Largest complementary-slackness violation between the primal and dual solutions.
    pub fn slackness_gap(&self) -> T {
        let mut gap = T::zero();
        let group_psi = |g: &Fingerprint| self.group_factors[g].clone() * self.group_stake[g].clone();
        for (s, e) in &self.excess {
            let cover = self.group_stake.keys().filter(|g| g.contains(s)).fold(T::zero(), |acc, g| acc + group_psi(g));
            gap = max_of(gap, (self.prices[s].clone() * (cover - e.clone())).abs());
        }
        for (g, x) in &self.group_stake {
            let reduced = T::one() - g.iter().fold(T::zero(), |acc, s| acc + self.prices[s].clone()) + self.caps[g].clone();
            gap = max_of(gap, (group_psi(g) * reduced).abs());
            gap = max_of(gap, (self.caps[g].clone() * (x.clone() - group_psi(g))).abs());
        }
        gap
    }

    pub fn total(&self) -> T {
        self.psi.values().fold(T::zero(), |acc, x| acc + x.clone())
    }
}

/// Least total slash that brings every attacked service back to its
/// threshold. Attacks below a threshold are rejected as non-binding.
///
/// Among the optimal slashes the one with the smallest largest group
/// fraction is returned, which makes the answer unique in practice and
/// reduces to `λ* = 1 − φ_s` for a single service.
pub fn minimal_slashing<T: Scalar>(graph: &RestakingGraph<T>, attack: &AttackSpec<T>) -> Result<MinimalSlash<T>> {
    attack.validate(graph)?;
    let services: Vec<ServiceId> = attack.services.iter().cloned().collect();
    let mut excess = BTreeMap::new();
    for s in &services {
        let e = attack.coverage(graph, s)? - graph.threshold(s)?;
        if !e.ge_tol(&T::zero()) {
            return Err(Error::NonBindingInput(s.to_string()));
        }
        excess.insert(s.clone(), e.positive_part());
    }
    let mut members: BTreeMap<Fingerprint, Vec<OperatorId>> = BTreeMap::new();
    for v in attack.attackers.keys() {
        let fp = attack.attacked_neighbors(graph, v)?;
        if !fp.is_empty() {
            members.entry(fp).or_default().push(v.clone());
        }
    }
    let groups: Vec<Fingerprint> = members.keys().cloned().collect();
    let stakes: Vec<T> = groups.iter().map(|g| members[g].iter().fold(T::zero(), |acc, v| acc + attack.attackers[v].clone())).collect();
    let k = groups.len();
    let cover_row = |s: &ServiceId, width: usize| -> Vec<T> {
        (0..width).map(|j| if j < k && groups[j].contains(s) { T::one() } else { T::zero() }).collect()
    };
    let unit =
        |j: usize, width: usize, value: T| -> Vec<T> { (0..width).map(|i| if i == j { value.clone() } else { T::zero() }).collect() };

    // Least total slash.
    let mut lp = LinearProgram::new(vec![T::one(); k]);
    for s in &services {
        lp.constrain(cover_row(s, k), Relation::Ge, excess[s].clone());
    }
    for (j, x) in stakes.iter().enumerate() {
        lp.constrain(unit(j, k, T::one()), Relation::Le, x.clone());
    }
    let objective = match lp.solve() {
        LpOutcome::Optimal { value, .. } => value,
        _ => return Err(Error::InfeasibleProgram),
    };

    // Among optimal slashes, the smallest largest group fraction `t`.
    let mut objective_row = vec![T::zero(); k];
    objective_row.push(T::one());
    let mut lp = LinearProgram::new(objective_row);
    for s in &services {
        lp.constrain(cover_row(s, k + 1), Relation::Ge, excess[s].clone());
    }
    for (j, x) in stakes.iter().enumerate() {
        lp.constrain(unit(j, k + 1, T::one()), Relation::Le, x.clone());
        let mut row = unit(j, k + 1, T::one());
        row[k] = -x.clone();
        lp.constrain(row, Relation::Le, T::zero());
    }
    let mut total_row = vec![T::one(); k];
    total_row.push(T::zero());
    lp.constrain(total_row, Relation::Le, objective.clone() + T::tolerance());
    let charges = match lp.solve() {
        LpOutcome::Optimal { x, .. } => x,
        _ => return Err(Error::InfeasibleProgram),
    };

    // Dual: max Σ e_s y_s − Σ σ_G z_G  s.t.  Σ_{s∈G} y_s − z_G ≤ 1.
    let m = services.len();
    let mut dual_obj: Vec<T> = services.iter().map(|s| -excess[s].clone()).collect();
    dual_obj.extend(stakes.iter().cloned());
    let mut dual = LinearProgram::new(dual_obj);
    for (j, g) in groups.iter().enumerate() {
        let mut row: Vec<T> = services.iter().map(|s| if g.contains(s) { T::one() } else { T::zero() }).collect();
        row.extend(unit(j, k, -T::one()));
        dual.constrain(row, Relation::Le, T::one());
    }
    let (y, dual_value) = match dual.solve() {
        LpOutcome::Optimal { x, value } => (x, -value),
        _ => return Err(Error::InfeasibleProgram),
    };

    let mut group_factors = BTreeMap::new();
    let mut group_stake = BTreeMap::new();
    let mut psi: BTreeMap<OperatorId, T> = attack.attackers.keys().map(|v| (v.clone(), T::zero())).collect();
    for (j, g) in groups.iter().enumerate() {
        let factor = ratio(charges[j].clone(), stakes[j].clone());
        for v in &members[g] {
            psi.insert(v.clone(), factor.clone() * attack.attackers[v].clone());
        }
        group_factors.insert(g.clone(), factor);
        group_stake.insert(g.clone(), stakes[j].clone());
    }
    let factors: BTreeMap<ServiceId, T> = services
        .iter()
        .map(|s| {
            let lambda = groups.iter().filter(|g| g.contains(s)).map(|g| group_factors[g].clone()).reduce(min_of).unwrap_or_else(T::zero);
            (s.clone(), lambda)
        })
        .collect();
    let max_factorized = groups.iter().all(|g| {
        let top = g.iter().map(|s| factors[s].clone()).reduce(max_of).expect("groups are non-empty");
        top.approx_eq(&group_factors[g])
    });
    Ok(MinimalSlash {
        psi,
        excess,
        group_stake,
        factors,
        prices: services.iter().cloned().zip(y[..m].iter().cloned()).collect(),
        caps: groups.iter().cloned().zip(y[m..].iter().cloned()).collect(),
        group_factors,
        objective,
        dual_objective: dual_value,
        max_factorized,
    })
}

/// The minimal slash in the common outcome shape. The binding service of an
/// operator is the first service whose `λ_s` equals its group fraction.
pub fn minimal_outcome<T: Scalar>(graph: &RestakingGraph<T>, attack: &AttackSpec<T>) -> Result<MultSlashOutcome<T>> {
    let solved = minimal_slashing(graph, attack)?;
    let mut operators = BTreeMap::new();
    for v in attack.attackers.keys() {
        let fp = attack.attacked_neighbors(graph, v)?;
        let phi = solved.group_factors.get(&fp).cloned().unwrap_or_else(T::zero);
        let binding = fp.iter().find(|s| solved.factors[*s].approx_eq(&phi)).cloned().into_iter().collect();
        operators.insert(v.clone(), OperatorCharge { psi: solved.psi[v].clone(), phi, binding, services: fp });
    }
    let mut services = BTreeMap::new();
    for s in &attack.services {
        let nbrs = graph.service_neighbors(s)?;
        let charged = solved.psi.iter().filter(|(v, _)| nbrs.contains(*v)).fold(T::zero(), |acc, (_, x)| acc + x.clone());
        let target = solved.excess[s].clone();
        services.insert(
            s.clone(),
            ServiceCharge {
                phi: solved.factors[s].clone(),
                threshold: target.clone(),
                charged,
                residual: target,
                residual_clamped: false,
                no_single_attackers: false,
            },
        );
    }
    Ok(MultSlashOutcome { scheme: Scheme::Minimal, operators, services })
}

/// Built-in aggregations of an attacker's per-service factors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Aggregation {
    Max,
    Sum,
    Min,
}

impl Aggregation {
    pub fn apply<T: Scalar>(self, factors: &[T]) -> T {
        let mut it = factors.iter().cloned();
        let first = it.next().unwrap_or_else(T::zero);
        match self {
            Aggregation::Max => it.fold(first, max_of),
            Aggregation::Min => it.fold(first, min_of),
            Aggregation::Sum => it.fold(first, |a, b| a + b),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComponentwiseReport<T> {
    /// `(max rule charge, alternative charge)` per attacker.
    pub rows: BTreeMap<OperatorId, (T, T)>,
    /// The alternative charges everyone at least as much.
    pub dominates: bool,
    /// Attackers charged strictly more by the alternative.
    pub strict: Vec<OperatorId>,
    pub baseline_total: T,
    pub alt_total: T,
}

/// Compares the factorized max rule `ψ_v = min(max_s φ_s, 1)·x_v` with an
/// alternative aggregation of the same factors. The alternative must still
/// charge every attacked service at least its threshold.
pub fn check_componentwise_minimal<T: Scalar>(
    graph: &RestakingGraph<T>,
    attack: &AttackSpec<T>,
    alt: impl Fn(&[T]) -> T,
) -> Result<ComponentwiseReport<T>> {
    require_feasible(graph, attack)?;
    let mut factors = BTreeMap::new();
    for s in &attack.services {
        factors.insert(s.clone(), service_factor(graph, attack, s)?);
    }
    let mut rows = BTreeMap::new();
    for (v, x) in &attack.attackers {
        let mine: Vec<T> = attack.attacked_neighbors(graph, v)?.iter().map(|s| factors[s].clone()).collect();
        let (base, other) = if mine.is_empty() { (T::zero(), T::zero()) } else { (Aggregation::Max.apply(&mine), alt(&mine)) };
        rows.insert(v.clone(), (min_of(base, T::one()) * x.clone(), min_of(other, T::one()) * x.clone()));
    }
    for s in &attack.services {
        let nbrs = graph.service_neighbors(s)?;
        let charged = rows.iter().filter(|(v, _)| nbrs.contains(*v)).fold(T::zero(), |acc, (_, (_, a))| acc + a.clone());
        if !charged.ge_tol(&graph.threshold(s)?) {
            return Err(Error::AltRuleInfeasible(s.to_string()));
        }
    }
    let dominates = rows.values().all(|(b, a)| a.ge_tol(b));
    let strict = rows.iter().filter(|(_, (b, a))| a.gt_tol(b)).map(|(v, _)| v.clone()).collect();
    let baseline_total = rows.values().fold(T::zero(), |acc, (b, _)| acc + b.clone());
    let alt_total = rows.values().fold(T::zero(), |acc, (_, a)| acc + a.clone());
    Ok(ComponentwiseReport { rows, dominates, strict, baseline_total, alt_total })
}

#[cfg(test)]
mod tests;
