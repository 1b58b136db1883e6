//! Attacker utilities and best responses under multiplicative slashing.
//!
//! A focal attacker committing `x` earns a share of the attack profit and
//! loses `x` times its slashing factor. Under proportional sharing each
//! service pays out `π_i x/(x + σ_{B_i′})`; under pooled sharing the whole
//! profit is split over the coalition, `π_A x/(x + σ_{B′})`. The factor of
//! service `i` is `α_i σ_{T_i}/(x + σ_{B_i′})`, so `x·φ_i(x)` has the same
//! shape as a proportional payout.

use std::collections::BTreeMap;
use std::fmt::Debug;

use num_traits::Float;

use crate::error::{Error, Result};
use crate::graph::{AttackSpec, OperatorId, RestakingGraph};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sharing {
    Proportional,
    Pooled,
}

impl Sharing {
    pub fn name(self) -> &'static str {
        match self {
            Sharing::Proportional => "proportional",
            Sharing::Pooled => "pooled",
        }
    }
}

/// How an attacker's per-service factors combine into one charge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SlashRule {
    Max,
    Additive,
}

impl SlashRule {
    pub fn name(self) -> &'static str {
        match self {
            SlashRule::Max => "max",
            SlashRule::Additive => "additive",
        }
    }
}

/// What the focal attacker sees on one attacked service.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ServiceTerms<F> {
    /// Committed stake of the other attackers on the service.
    pub others: F,
    /// Total restaked stake `σ_T` on the service.
    pub total: F,
    pub alpha: F,
    pub pi: F,
}

impl<F: Float> ServiceTerms<F> {
    pub fn new(others: F, total: F, alpha: F, pi: F) -> Self {
        Self { others, total, alpha, pi }
    }

    /// `α σ_T`
    pub fn threshold(&self) -> F {
        self.alpha * self.total
    }

    /// `π − α σ_T`
    pub fn margin(&self) -> F {
        self.pi - self.threshold()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UtilityContext<F> {
    pub sharing: Sharing,
    pub rule: SlashRule,
    pub services: Vec<ServiceTerms<F>>,
    /// Upper bound on the commitment, the attacker's stake.
    pub stake: F,
    /// Committed stake of the rest of the coalition, used by pooled sharing.
    pub coalition_others: F,
}

/// `x/(x + b)`, taken as 0 when both vanish.
fn frac<F: Float>(x: F, b: F) -> F {
    if x + b > F::zero() {
        x / (x + b)
    } else {
        F::zero()
    }
}

fn dfrac<F: Float>(x: F, b: F) -> F {
    if x + b > F::zero() {
        b / ((x + b) * (x + b))
    } else {
        F::zero()
    }
}

fn lit<F: Float>(v: f64) -> F {
    F::from(v).expect("literal fits the float type")
}

fn bad(field: &str, reason: impl Into<String>) -> Error {
    Error::InvalidValue { field: field.into(), reason: reason.into() }
}

impl<F: Float + Debug> UtilityContext<F> {
    pub fn new(sharing: Sharing, rule: SlashRule, services: Vec<ServiceTerms<F>>, stake: F) -> Self {
        let coalition_others = services.iter().map(|s| s.others).fold(F::zero(), F::max);
        Self { sharing, rule, services, stake, coalition_others }
    }

    pub fn with_coalition_others(mut self, others: F) -> Self {
        self.coalition_others = others;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |v: F| v.is_finite() && v >= F::zero();
        if !finite_nonneg(self.stake) {
            return Err(bad("stake", "must be finite and non-negative"));
        }
        if !finite_nonneg(self.coalition_others) {
            return Err(bad("coalition stake", "must be finite and non-negative"));
        }
        for (i, s) in self.services.iter().enumerate() {
            if !finite_nonneg(s.others) || !finite_nonneg(s.pi) || !finite_nonneg(s.alpha) || !s.total.is_finite() {
                return Err(bad(&format!("service {i}"), "terms must be finite and non-negative"));
            }
            if s.total < s.others {
                return Err(bad(&format!("service {i}"), "total stake is below the other attackers' stake"));
            }
        }
        Ok(())
    }

    fn check_x(&self, x: F) -> Result<()> {
        if !(x >= F::zero() && x <= self.stake) {
            return Err(Error::StakeOutOfRange { value: format!("{x:?}"), bound: format!("{:?}", self.stake) });
        }
        Ok(())
    }

    fn profit(&self) -> F {
        self.services.iter().fold(F::zero(), |acc, s| acc + s.pi)
    }

    /// `φ_i(x)`
    pub fn factor(&self, i: usize, x: F) -> F {
        let s = &self.services[i];
        if x + s.others > F::zero() {
            s.threshold() / (x + s.others)
        } else {
            F::zero()
        }
    }

    /// Index of the service whose factor binds at `x`; ties go to the lower index.
    pub fn binding(&self, x: F) -> Option<usize> {
        let mut best: Option<(usize, F)> = None;
        for i in 0..self.services.len() {
            let phi = self.factor(i, x);
            if best.is_none_or(|(_, b)| phi > b) {
                best = Some((i, phi));
            }
        }
        best.map(|(i, _)| i)
    }

    fn share(&self, x: F) -> F {
        match self.sharing {
            Sharing::Proportional => self.services.iter().fold(F::zero(), |acc, s| acc + s.pi * frac(x, s.others)),
            Sharing::Pooled => self.profit() * frac(x, self.coalition_others),
        }
    }

    fn share_slope(&self, x: F) -> F {
        match self.sharing {
            Sharing::Proportional => self.services.iter().fold(F::zero(), |acc, s| acc + s.pi * dfrac(x, s.others)),
            Sharing::Pooled => self.profit() * dfrac(x, self.coalition_others),
        }
    }

    fn additive_terms(&self, x: F) -> F {
        self.services.iter().fold(F::zero(), |acc, s| acc + s.threshold() * frac(x, s.others))
    }

    /// `x · (aggregated factor)`.
    pub fn slash(&self, x: F) -> F {
        match self.rule {
            SlashRule::Max => match self.binding(x) {
                Some(i) => self.services[i].threshold() * frac(x, self.services[i].others),
                None => F::zero(),
            },
            SlashRule::Additive => self.additive_terms(x).min(x),
        }
    }

    /// Utility at `x` without range checks.
    pub fn utility(&self, x: F) -> F {
        self.share(x) - self.slash(x)
    }

    /// Analytic derivative. At a regime boundary this is the derivative of
    /// the regime selected by [`UtilityContext::binding`].
    pub fn derivative(&self, x: F) -> F {
        let slope = match self.rule {
            SlashRule::Max => match self.binding(x) {
                Some(i) => self.services[i].threshold() * dfrac(x, self.services[i].others),
                None => F::zero(),
            },
            SlashRule::Additive => {
                if self.additive_terms(x) < x {
                    self.services.iter().fold(F::zero(), |acc, s| acc + s.threshold() * dfrac(x, s.others))
                } else {
                    F::one()
                }
            }
        };
        self.share_slope(x) - slope
    }

    /// Points in `(0, σ_v)` where the binding factor may change.
    pub fn regime_boundaries(&self) -> Vec<F> {
        let mut out = Vec::new();
        let n = self.services.len();
        for i in 0..n {
            for j in i + 1..n {
                if let Some(b) = crossing(&self.services[i], &self.services[j]) {
                    if b > F::zero() && b < self.stake {
                        out.push(b);
                    }
                }
            }
        }
        if self.rule == SlashRule::Additive {
            // Where the summed factor crosses one.
            let g = |x: F| self.additive_terms(x) - x;
            let steps = 512;
            let mut prev = (F::zero(), g(F::zero()));
            for k in 1..=steps {
                let x = self.stake * lit(k as f64 / steps as f64);
                let cur = (x, g(x));
                if (prev.1 > F::zero()) != (cur.1 > F::zero()) {
                    out.push(bisect(g, prev.0, cur.0));
                }
                prev = cur;
            }
        }
        out.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        out
    }
}

/// `x` where `φ_i(x) = φ_j(x)`.
fn crossing<F: Float>(si: &ServiceTerms<F>, sj: &ServiceTerms<F>) -> Option<F> {
    let (ai, aj) = (si.threshold(), sj.threshold());
    if ai == aj {
        None
    } else {
        Some((aj * si.others - ai * sj.others) / (ai - aj))
    }
}

fn bisect<F: Float>(g: impl Fn(F) -> F, mut lo: F, mut hi: F) -> F {
    let lo_pos = g(lo) > F::zero();
    for _ in 0..200 {
        let mid = (lo + hi) / lit(2.0);
        if (g(mid) > F::zero()) == lo_pos {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo + hi) / lit(2.0)
}

/// Reduced single-service utility `(π − α σ_T)·x/(x + σ_{B′})`.
pub fn utility_single<F: Float + Debug>(ctx: &UtilityContext<F>, x: F) -> Result<F> {
    if ctx.services.len() != 1 {
        return Err(bad("services", format!("expected one attacked service, got {}", ctx.services.len())));
    }
    ctx.check_x(x)?;
    let s = &ctx.services[0];
    Ok(s.margin() * frac(x, s.others))
}

/// Two-service utility under the context's sharing and slashing rules.
pub fn utility_two_services<F: Float + Debug>(ctx: &UtilityContext<F>, x: F) -> Result<F> {
    if ctx.services.len() != 2 {
        return Err(bad("services", format!("expected two attacked services, got {}", ctx.services.len())));
    }
    ctx.check_x(x)?;
    Ok(ctx.utility(x))
}

/// Commitment where the binding factor switches between the two services.
pub fn regime_boundary<F: Float + Debug>(ctx: &UtilityContext<F>) -> Result<F> {
    if ctx.services.len() != 2 {
        return Err(bad("services", "the regime boundary needs two services"));
    }
    crossing(&ctx.services[0], &ctx.services[1]).ok_or(Error::DegenerateBoundary)
}

/// View of one attacker inside an attack on a graph.
pub fn context_from_attack<T: Scalar>(
    graph: &RestakingGraph<T>,
    attack: &AttackSpec<T>,
    operator: &OperatorId,
    sharing: Sharing,
    rule: SlashRule,
) -> Result<UtilityContext<f64>> {
    attack.validate(graph)?;
    let x = attack.committed(operator).ok_or_else(|| Error::UnknownOperator(operator.to_string()))?.to_f64_lossy();
    let mut services = Vec::new();
    for s in attack.attacked_neighbors(graph, operator)? {
        let service = graph.service(&s)?;
        services.push(ServiceTerms {
            others: attack.coverage(graph, &s)?.to_f64_lossy() - x,
            total: crate::graph::total_restaked_stake(graph, &s)?.to_f64_lossy(),
            alpha: service.alpha.to_f64_lossy(),
            pi: service.pi.to_f64_lossy(),
        });
    }
    let mut ctx = UtilityContext::new(sharing, rule, services, graph.stake(operator)?.to_f64_lossy());
    ctx.coalition_others = attack.committed_total().to_f64_lossy() - x;
    // Profits of attacked services the operator does not touch still count
    // towards a pooled payout.
    if sharing == Sharing::Pooled {
        let touched: f64 = ctx.services.iter().map(|s| s.pi).sum();
        let extra = graph.profit_of(&attack.services)?.to_f64_lossy() - touched;
        if extra > 0.0 {
            ctx.services.push(ServiceTerms { others: 0.0, total: 0.0, alpha: 0.0, pi: extra });
        }
    }
    Ok(ctx)
}

/// Pooled-profit utility of `operator` at commitment `x` under the max rule.
pub fn utility_attack_level<T: Scalar>(graph: &RestakingGraph<T>, attack: &AttackSpec<T>, operator: &OperatorId, x: f64) -> Result<f64> {
    let ctx = context_from_attack(graph, attack, operator, Sharing::Pooled, SlashRule::Max)?;
    ctx.check_x(x)?;
    Ok(ctx.utility(x))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    /// Commit everything.
    Full,
    /// Stay out.
    None,
    Interior,
    /// At a switch of the binding factor.
    Boundary,
    /// Utility does not depend on `x`; full commitment reported.
    KnifeEdge,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Full => "full",
            Regime::None => "none",
            Regime::Interior => "interior",
            Regime::Boundary => "boundary",
            Regime::KnifeEdge => "knife-edge",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BestResponse<F> {
    pub x: F,
    pub regime: Regime,
    pub utility: F,
    /// Every `(x, u(x))` pair that competed for the maximum.
    pub candidates: Vec<(F, F)>,
    /// The closed form did not apply and a numeric search was used.
    pub fallback: bool,
}

fn pick<F: Float + Debug>(ctx: &UtilityContext<F>, xs: &[F], boundaries: &[F], fallback: bool) -> BestResponse<F> {
    let candidates: Vec<(F, F)> = xs.iter().map(|&x| (x, ctx.utility(x))).collect();
    let mut best = candidates[0];
    for &c in &candidates[1..] {
        if c.1 > best.1 {
            best = c;
        }
    }
    let regime = if best.0 == ctx.stake {
        Regime::Full
    } else if best.0 == F::zero() {
        Regime::None
    } else if boundaries.iter().any(|&b| (b - best.0).abs() <= lit::<F>(1e-12) * (F::one() + b.abs())) {
        Regime::Boundary
    } else {
        Regime::Interior
    };
    BestResponse { x: best.0, regime, utility: best.1, candidates, fallback }
}

/// Best commitment against one attacked service.
pub fn best_response_single<F: Float + Debug>(ctx: &UtilityContext<F>) -> Result<BestResponse<F>> {
    if ctx.services.len() != 1 {
        return Err(bad("services", format!("expected one attacked service, got {}", ctx.services.len())));
    }
    ctx.validate()?;
    let s = ctx.services[0];
    let aligned = ctx.sharing == Sharing::Proportional || ctx.coalition_others == s.others;
    if !aligned {
        return Ok(search(ctx));
    }
    let margin = s.margin();
    let (x, regime) = if margin > F::zero() {
        (ctx.stake, Regime::Full)
    } else if margin < F::zero() {
        (F::zero(), Regime::None)
    } else {
        (ctx.stake, Regime::KnifeEdge)
    };
    let utility = ctx.utility(x);
    Ok(BestResponse { x, regime, utility, candidates: vec![(x, utility)], fallback: false })
}

/// Stationary point of `p·x/(x+P) − n·x/(x+N)` for positive coefficients.
fn stationary<F: Float>(p: F, big_p: F, n: F, big_n: F) -> Option<F> {
    if !(p > F::zero() && n > F::zero() && big_p > F::zero() && big_n > F::zero()) {
        return None;
    }
    let a = (n * big_n / (p * big_p)).sqrt();
    if a == F::one() {
        return None;
    }
    Some((big_n - a * big_p) / (a - F::one()))
}

/// Best commitment against two attacked services.
///
/// Candidates are both ends, the switch of the binding factor and the
/// first-order point of each regime; the best one is returned. Falls back to
/// a numeric search under the additive rule or when a first-order point is
/// undefined.
pub fn best_response_two<F: Float + Debug>(ctx: &UtilityContext<F>) -> Result<BestResponse<F>> {
    if ctx.services.len() != 2 {
        return Err(bad("services", format!("expected two attacked services, got {}", ctx.services.len())));
    }
    ctx.validate()?;
    if ctx.rule == SlashRule::Additive {
        return Ok(search(ctx));
    }
    let mut xs = vec![ctx.stake, F::zero()];
    let boundaries = ctx.regime_boundaries();
    xs.extend(&boundaries);
    let mut singular = false;
    for j in 0..2 {
        let (bind, other) = (ctx.services[j], ctx.services[1 - j]);
        let point = match ctx.sharing {
            Sharing::Proportional => {
                if bind.margin() >= F::zero() {
                    // Increasing throughout this regime.
                    continue;
                }
                (bind.others > F::zero() && other.others > F::zero())
                    .then(|| stationary(other.pi, other.others, -bind.margin(), bind.others))
            }
            Sharing::Pooled => {
                if ctx.coalition_others == bind.others {
                    continue;
                }
                (bind.others > F::zero() && ctx.coalition_others > F::zero())
                    .then(|| stationary(ctx.profit(), ctx.coalition_others, bind.threshold(), bind.others))
            }
        };
        match point {
            Some(Some(x)) => {
                let inside = x > F::zero() && x < ctx.stake;
                if inside && (ctx.binding(x) == Some(j) || ctx.factor(0, x) == ctx.factor(1, x)) {
                    xs.push(x);
                }
            }
            _ => singular = true,
        }
    }
    if singular {
        let mut found = search(ctx);
        let exact = pick(ctx, &xs, &boundaries, false);
        if exact.utility > found.utility {
            found.x = exact.x;
            found.utility = exact.utility;
            found.regime = exact.regime;
        }
        found.candidates.extend(exact.candidates);
        return Ok(found);
    }
    Ok(tag_knife_edge(ctx, pick(ctx, &xs, &boundaries, false)))
}

fn tag_knife_edge<F: Float + Debug>(ctx: &UtilityContext<F>, mut br: BestResponse<F>) -> BestResponse<F> {
    if ctx.sharing == Sharing::Proportional && ctx.services.iter().all(|s| s.margin() == F::zero()) && br.x == ctx.stake {
        br.regime = Regime::KnifeEdge;
    }
    br
}

/// Best commitment against any number of attacked services.
pub fn best_response_n<F: Float + Debug>(ctx: &UtilityContext<F>) -> Result<BestResponse<F>> {
    ctx.validate()?;
    match ctx.services.len() {
        0 => {
            let utility = ctx.utility(ctx.stake);
            Ok(BestResponse { x: ctx.stake, regime: Regime::KnifeEdge, utility, candidates: vec![], fallback: false })
        }
        1 => best_response_single(ctx),
        _ => {
            let aligned = ctx.sharing == Sharing::Proportional || ctx.services.iter().all(|s| s.others == ctx.coalition_others);
            if ctx.rule == SlashRule::Max && aligned {
                let margins = |s: &ServiceTerms<F>| match ctx.sharing {
                    Sharing::Proportional => s.margin(),
                    Sharing::Pooled => ctx.profit() - s.threshold(),
                };
                if ctx.services.iter().all(|s| margins(s) >= F::zero()) {
                    let utility = ctx.utility(ctx.stake);
                    return Ok(tag_knife_edge(
                        ctx,
                        BestResponse {
                            x: ctx.stake,
                            regime: Regime::Full,
                            utility,
                            candidates: vec![(ctx.stake, utility)],
                            fallback: false,
                        },
                    ));
                }
            }
            Ok(tag_knife_edge(ctx, search(ctx)))
        }
    }
}

const SEARCH_POINTS: usize = 20_000;

/// Grid over `[0, σ_v]` plus regime boundaries, refined by golden section
/// around the best point.
fn search<F: Float + Debug>(ctx: &UtilityContext<F>) -> BestResponse<F> {
    let boundaries = ctx.regime_boundaries();
    let mut xs = vec![ctx.stake, F::zero()];
    xs.extend(&boundaries);
    let step = ctx.stake / lit(SEARCH_POINTS as f64);
    xs.extend((1..SEARCH_POINTS).map(|i| step * lit(i as f64)));
    let coarse = pick(ctx, &xs, &boundaries, true);
    let (lo, hi) = ((coarse.x - step).max(F::zero()), (coarse.x + step).min(ctx.stake));
    let mut refined = vec![golden(|x| ctx.utility(x), lo, hi)];
    refined.push(coarse.x);
    let mut best = pick(ctx, &refined, &boundaries, true);
    if coarse.utility >= best.utility {
        best.x = coarse.x;
        best.utility = coarse.utility;
        best.regime = coarse.regime;
    }
    best.candidates = coarse.candidates.into_iter().filter(|c| c.0 == ctx.stake || c.0 == F::zero()).collect();
    best.candidates.push((best.x, best.utility));
    best
}

/// Golden-section maximiser on `[lo, hi]`.
fn golden<F: Float>(f: impl Fn(F) -> F, mut lo: F, mut hi: F) -> F {
    let r = lit::<F>((5f64.sqrt() - 1.0) / 2.0);
    let mut a = hi - r * (hi - lo);
    let mut b = lo + r * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..200 {
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + r * (hi - lo);
            fb = f(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - r * (hi - lo);
            fa = f(a);
        }
    }
    (lo + hi) / lit(2.0)
}

/// Two-service environment for the withholding search: the attacker faces
/// fixed per-service fractions `λ_i` and pays the larger one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeviationEnv<F> {
    pub pi: [F; 2],
    pub lambda: [F; 2],
    /// Stake of the other attackers on each service, `Σ′_i`.
    pub others: [F; 2],
    /// Stake each service needs, `α_i σ_{T_i}`.
    pub thresholds: [F; 2],
    /// Current commitment.
    pub x: F,
}

impl<F: Float + Debug> DeviationEnv<F> {
    pub fn utility(&self, x: F) -> F {
        let share = (0..2).fold(F::zero(), |acc, i| acc + self.pi[i] * frac(x, self.others[i]));
        share - self.lambda[0].max(self.lambda[1]) * x
    }

    pub fn derivative(&self, x: F) -> F {
        let share = (0..2).fold(F::zero(), |acc, i| acc + self.pi[i] * dfrac(x, self.others[i]));
        share - self.lambda[0].max(self.lambda[1])
    }

    /// Stake that can be withdrawn before some service drops below its threshold.
    pub fn slack(&self) -> F {
        (0..2).map(|i| self.x + self.others[i] - self.thresholds[i]).fold(self.x, F::min)
    }

    fn validate(&self) -> Result<()> {
        for i in 0..2 {
            if !(self.lambda[i] >= F::zero() && self.lambda[i] <= F::one()) {
                return Err(bad("lambda", "fractions must lie in [0, 1]"));
            }
            if !(self.pi[i] >= F::zero() && self.others[i] >= F::zero() && self.thresholds[i] >= F::zero()) {
                return Err(bad("environment", "profits, stakes and thresholds must be non-negative"));
            }
        }
        if !(self.x > F::zero()) {
            return Err(bad("x", "current commitment must be positive"));
        }
        Ok(())
    }

    fn feasible_at(&self, x: F) -> bool {
        (0..2).all(|i| x + self.others[i] >= self.thresholds[i])
    }

    /// Slashing every attacker by `λ_i` still brings each service to its threshold.
    fn restores_at(&self, x: F) -> bool {
        (0..2).all(|i| (F::one() - self.lambda[i]) * (x + self.others[i]) <= self.thresholds[i] * (F::one() + lit(1e-12)))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeviationReport<F> {
    pub x_before: F,
    pub x_after: F,
    pub withheld: F,
    pub derivative: F,
    pub utility_before: F,
    pub utility_after: F,
    pub gain: F,
    pub feasible_after: bool,
    pub restores_after: bool,
    pub bounds_ok: bool,
}

/// Looks for a profitable withholding of stake in `env`.
///
/// The utility is concave in `x`, so a negative slope at the current
/// commitment means some withdrawal pays; the best one within the
/// feasibility slack is returned.
pub fn find_type1_deviation<F: Float + Debug>(env: &DeviationEnv<F>) -> Result<DeviationReport<F>> {
    env.validate()?;
    let slope = env.derivative(env.x);
    let room = env.slack();
    if !(slope < F::zero()) || !(room > F::zero()) {
        return Err(Error::NoDeviationFound);
    }
    let lo = env.x - room;
    let x_after = if env.derivative(lo) <= F::zero() { lo } else { bisect(|x| env.derivative(x), lo, env.x) };
    let (before, after) = (env.utility(env.x), env.utility(x_after));
    if !(after > before) {
        return Err(Error::NoDeviationFound);
    }
    let charge = env.lambda[0].max(env.lambda[1]) * x_after;
    Ok(DeviationReport {
        x_before: env.x,
        x_after,
        withheld: env.x - x_after,
        derivative: slope,
        utility_before: before,
        utility_after: after,
        gain: after - before,
        feasible_after: env.feasible_at(x_after),
        restores_after: env.restores_at(x_after),
        bounds_ok: charge >= F::zero() && charge <= x_after,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EquilibriumReport {
    pub profile: BTreeMap<OperatorId, f64>,
    pub utilities: BTreeMap<OperatorId, f64>,
    pub full_participation: bool,
    /// No player gains more than the tolerance on the verification grid.
    pub verified: bool,
    pub max_improvement: f64,
    pub rounds: usize,
}

const MAX_ROUNDS: usize = 200;
const VERIFY_POINTS: usize = 1000;

/// Iterated best responses from the committed profile.
pub fn nash_full_participation<T: Scalar>(
    graph: &RestakingGraph<T>,
    attack: &AttackSpec<T>,
    sharing: Sharing,
    rule: SlashRule,
) -> Result<EquilibriumReport> {
    if attack.services.len() > 2 {
        return Err(bad("services", "equilibrium search supports one or two attacked services"));
    }
    let fgraph = graph.to_f64();
    let mut current =
        AttackSpec::new(attack.services.clone(), attack.attackers.iter().map(|(v, x)| (v.clone(), x.to_f64_lossy())).collect());
    let players: Vec<OperatorId> = current.attackers.keys().cloned().collect();
    let mut rounds = 0;
    loop {
        rounds += 1;
        let mut moved: f64 = 0.0;
        for v in &players {
            let ctx = context_from_attack(&fgraph, &current, v, sharing, rule)?;
            let br = best_response_n(&ctx)?;
            moved = moved.max((br.x - current.attackers[v]).abs());
            current.attackers.insert(v.clone(), br.x);
        }
        if moved < 1e-10 {
            break;
        }
        if rounds >= MAX_ROUNDS {
            return Err(Error::NoConvergence(rounds));
        }
    }
    let mut utilities = BTreeMap::new();
    let mut max_improvement: f64 = 0.0;
    for v in &players {
        let ctx = context_from_attack(&fgraph, &current, v, sharing, rule)?;
        let here = ctx.utility(current.attackers[v]);
        for i in 0..=VERIFY_POINTS {
            let x = ctx.stake * i as f64 / VERIFY_POINTS as f64;
            max_improvement = max_improvement.max(ctx.utility(x) - here);
        }
        utilities.insert(v.clone(), here);
    }
    let full_participation = players.iter().all(|v| current.attackers[v] == fgraph.stake(v).copied().unwrap_or(f64::NAN));
    Ok(EquilibriumReport {
        profile: current.attackers,
        utilities,
        full_participation,
        verified: max_improvement <= 1e-8,
        max_improvement,
        rounds,
    })
}
