//! Random restaking networks drawn from a bipartite stochastic block model.
//!
//! Services fall into blocks `b`, background operators into blocks `c`, and
//! the edge `(v, s)` is present with probability `p_{cb}`. Every background
//! operator carries the same stake `σ̄`. The stake already securing a
//! block-`b` service is then approximately Gaussian with
//! `μ_b = Σ_c n_c p_{cb} σ̄` and `σ_b² = Σ_c n_c p_{cb}(1 − p_{cb}) σ̄²`.
//!
//! An attacker with stake `y` clears a service when `y ≥ α_b (y + Σ)`, so the
//! clearance probability is `Φ(((1−α_b)/α_b · y − μ_b)/σ_b)`.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::graph::NumberDoc;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServiceBlock {
    pub count: usize,
    pub alpha: f64,
    /// Attack profit of each service in the block.
    pub pi: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SbmModel {
    pub service_blocks: Vec<ServiceBlock>,
    /// Background operator block sizes `n_c`.
    pub operator_blocks: Vec<usize>,
    /// `connection[c][b]`: edge probability between operator block `c` and
    /// service block `b`.
    pub connection: Vec<Vec<f64>>,
    pub sigma_bar: f64,
    /// Edge probability between the attacker and each service block.
    pub attacker_p: Vec<f64>,
}

fn probability(p: f64, what: &str) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidModel(format!("{what} = {p} is not a probability")))
    }
}

impl SbmModel {
    pub fn new(
        service_blocks: Vec<ServiceBlock>,
        operator_blocks: Vec<usize>,
        connection: Vec<Vec<f64>>,
        sigma_bar: f64,
        attacker_p: Vec<f64>,
    ) -> Result<Self> {
        let model = Self { service_blocks, operator_blocks, connection, sigma_bar, attacker_p };
        model.validate()?;
        Ok(model)
    }

    /// One background operator block of `n_other` operators.
    pub fn single_background(
        service_blocks: Vec<ServiceBlock>,
        n_other: usize,
        p_other: Vec<f64>,
        sigma_bar: f64,
        attacker_p: Vec<f64>,
    ) -> Result<Self> {
        Self::new(service_blocks, vec![n_other], vec![p_other], sigma_bar, attacker_p)
    }

    /// Erdős–Rényi: one service block and one operator block.
    pub fn erdos_renyi(services: usize, alpha: f64, pi: f64, n_other: usize, p: f64, sigma_bar: f64, attacker_p: f64) -> Result<Self> {
        Self::single_background(vec![ServiceBlock { count: services, alpha, pi }], n_other, vec![p], sigma_bar, vec![attacker_p])
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.service_blocks.len();
        if r == 0 {
            return Err(Error::InvalidModel("no service blocks".into()));
        }
        if !(self.sigma_bar > 0.0 && self.sigma_bar.is_finite()) {
            return Err(Error::InvalidModel(format!("background stake {} must be positive", self.sigma_bar)));
        }
        if self.connection.len() != self.operator_blocks.len() {
            return Err(Error::InvalidModel("connection matrix needs one row per operator block".into()));
        }
        for (c, row) in self.connection.iter().enumerate() {
            if row.len() != r {
                return Err(Error::InvalidModel(format!("connection row {c} has {} entries, expected {r}", row.len())));
            }
            for &p in row {
                probability(p, "connection probability")?;
            }
        }
        if self.attacker_p.len() != r {
            return Err(Error::InvalidModel(format!("attacker row has {} entries, expected {r}", self.attacker_p.len())));
        }
        for &p in &self.attacker_p {
            probability(p, "attacker probability")?;
        }
        for b in &self.service_blocks {
            probability(b.alpha, "alpha")?;
            if !(b.pi >= 0.0 && b.pi.is_finite()) {
                return Err(Error::InvalidModel(format!("profit {} must be non-negative", b.pi)));
            }
        }
        Ok(())
    }

    pub fn block_count(&self) -> usize {
        self.service_blocks.len()
    }

    pub fn is_erdos_renyi(&self) -> bool {
        self.service_blocks.len() == 1 && self.operator_blocks.len() == 1
    }

    fn block(&self, b: usize) -> Result<&ServiceBlock> {
        self.service_blocks.get(b).ok_or(Error::EmptyBlock(b))
    }

    /// `μ_b`
    pub fn mu(&self, b: usize) -> f64 {
        self.operator_blocks.iter().zip(&self.connection).map(|(&n, row)| n as f64 * row[b] * self.sigma_bar).sum()
    }

    /// `σ_b`
    pub fn sd(&self, b: usize) -> f64 {
        self.operator_blocks
            .iter()
            .zip(&self.connection)
            .map(|(&n, row)| n as f64 * row[b] * (1.0 - row[b]) * self.sigma_bar * self.sigma_bar)
            .sum::<f64>()
            .sqrt()
    }

    /// Probability that a uniformly drawn neighbour of the attacker lies in each block.
    pub fn weights(&self) -> Vec<f64> {
        let total: f64 = self.attacker_p.iter().sum();
        if total == 0.0 {
            return vec![0.0; self.attacker_p.len()];
        }
        self.attacker_p.iter().map(|p| p / total).collect()
    }

    pub fn clearance_model(&self) -> ClearanceModel {
        let weights = self.weights();
        let blocks = (0..self.block_count())
            .map(|b| {
                let alpha = self.service_blocks[b].alpha;
                let mu = self.mu(b);
                BlockClearance { mu, sd: self.sd(b), alpha, inflection: alpha / (1.0 - alpha) * mu, weight: weights[b] }
            })
            .collect();
        ClearanceModel { blocks }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockClearance {
    pub mu: f64,
    pub sd: f64,
    pub alpha: f64,
    /// Stake where the clearance curve switches from convex to concave.
    pub inflection: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClearanceModel {
    pub blocks: Vec<BlockClearance>,
}

fn std_normal() -> Normal {
    Normal::standard()
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    std_normal().cdf(z)
}

/// `ln(1 − Φ(z))`, accurate far into the upper tail where `1 − Φ(z)`
/// underflows.
pub fn log_normal_sf(z: f64) -> f64 {
    if z < 5.0 {
        return std_normal().sf(z).ln();
    }
    // Mills ratio by its continued fraction.
    let mut tail = z;
    for n in (1..=80).rev() {
        tail = z + n as f64 / tail;
    }
    -z * z / 2.0 - (2.0 * std::f64::consts::PI).sqrt().ln() - tail.ln()
}

fn log_sum_exp(terms: impl Iterator<Item = f64>) -> f64 {
    let terms: Vec<f64> = terms.collect();
    let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln()
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::AlphaDegenerate(alpha))
    }
}

impl BlockClearance {
    /// Argument of `Φ` at stake `y`.
    pub fn z(&self, y: f64) -> f64 {
        ((1.0 - self.alpha) / self.alpha * y - self.mu) / self.sd
    }

    pub fn q(&self, y: f64) -> f64 {
        if self.sd == 0.0 {
            // Background stake is deterministic.
            return if (1.0 - self.alpha) / self.alpha * y >= self.mu { 1.0 } else { 0.0 };
        }
        normal_cdf(self.z(y))
    }

    /// `ln(1 − q(y))`
    pub fn log_miss(&self, y: f64) -> f64 {
        if self.sd == 0.0 {
            return if self.q(y) == 1.0 { f64::NEG_INFINITY } else { 0.0 };
        }
        log_normal_sf(self.z(y))
    }

    /// Second derivative of `q` in `y`.
    pub fn curvature(&self, y: f64) -> f64 {
        if self.sd == 0.0 {
            return 0.0;
        }
        let scale = (1.0 - self.alpha) / self.alpha / self.sd;
        let z = self.z(y);
        -z * std_normal().pdf(z) * scale * scale
    }
}

impl ClearanceModel {
    /// `γ = Σ_b w_b q_b(0)`, the success probability of a zero stake, which is
    /// also the lower bound `p_min` on any per-identity success probability.
    pub fn gamma(&self) -> f64 {
        self.blocks.iter().map(|b| b.weight * b.q(0.0)).sum()
    }

    /// `ln(1 − p(x))`
    pub fn log_miss(&self, x: f64) -> f64 {
        log_sum_exp(self.blocks.iter().filter(|b| b.weight > 0.0).map(|b| b.weight.ln() + b.log_miss(x)))
    }

    pub fn p(&self, x: f64) -> f64 {
        self.blocks.iter().map(|b| b.weight * b.q(x)).sum::<f64>().clamp(0.0, 1.0)
    }
}

fn check_stake(y: f64) -> Result<()> {
    if y >= 0.0 && y.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidValue { field: "stake".into(), reason: format!("{y} must be finite and non-negative") })
    }
}

fn checked_clearance(model: &SbmModel) -> Result<ClearanceModel> {
    let cm = model.clearance_model();
    for b in &cm.blocks {
        check_alpha(b.alpha)?;
    }
    Ok(cm)
}

/// `q_b(y)`
pub fn clearance(model: &SbmModel, block: usize, y: f64) -> Result<f64> {
    model.block(block)?;
    check_stake(y)?;
    let cm = model.clearance_model();
    check_alpha(cm.blocks[block].alpha)?;
    Ok(cm.blocks[block].q(y))
}

/// `p(x)`: one identity attacking one uniformly chosen neighbour.
pub fn success_single(model: &SbmModel, x: f64) -> Result<f64> {
    check_stake(x)?;
    Ok(checked_clearance(model)?.p(x))
}

/// `p_k(x)`: success probability of one of `k` identities holding `x/k`.
pub fn per_identity_success(model: &SbmModel, x: f64, k: u32) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidSybilCount);
    }
    success_single(model, x / k as f64)
}

/// `p′(x; k) = 1 − (1 − p_k(x))^k`: at least one of `k` identities succeeds,
/// each targeting a different service.
pub fn success_sybil(model: &SbmModel, x: f64, k: u32) -> Result<f64> {
    let pk = per_identity_success(model, x, k)?;
    if k == 1 {
        return Ok(pk);
    }
    Ok((1.0 - (1.0 - pk).powi(k as i32)).clamp(0.0, 1.0))
}

/// `k·ln(1 − p_k(x)) − ln(1 − p(x))`: positive exactly when one identity
/// does better than `k`. Stays informative where both probabilities round
/// to one.
pub fn single_identity_log_edge(model: &SbmModel, x: f64, k: u32) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidSybilCount);
    }
    check_stake(x)?;
    let cm = checked_clearance(model)?;
    Ok(k as f64 * cm.log_miss(x / k as f64) - cm.log_miss(x))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Curvature {
    Convex,
    Inflection,
    Concave,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConcavityRegime {
    pub block: usize,
    pub inflection: f64,
}

impl ConcavityRegime {
    pub fn classify(&self, y: f64) -> Curvature {
        if y < self.inflection {
            Curvature::Convex
        } else if y > self.inflection {
            Curvature::Concave
        } else {
            Curvature::Inflection
        }
    }
}

pub fn concavity_regime(model: &SbmModel, block: usize) -> Result<ConcavityRegime> {
    model.block(block)?;
    let b = model.clearance_model().blocks[block];
    check_alpha(b.alpha)?;
    Ok(ConcavityRegime { block, inflection: b.inflection })
}

pub const DEFAULT_K_MAX: u32 = 64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SybilRow {
    pub k: u32,
    pub p_k: f64,
    pub p_prime: f64,
    /// `p′(x; k) > p(x)`
    pub beats_single: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SybilSearch {
    pub x: f64,
    pub p_single: f64,
    pub k_star: Option<u32>,
    pub table: Vec<SybilRow>,
    /// `γ`, reported as the per-identity floor.
    pub p_min: f64,
    /// Smallest `k` that the floor alone guarantees to beat `p(x)`.
    pub sufficient_k: Option<u64>,
}

/// Least `k ∈ [2, k_max]` whose Sybil success beats the single identity.
pub fn min_sybil_count(model: &SbmModel, x: f64, k_max: u32) -> Result<SybilSearch> {
    let p_single = success_single(model, x)?;
    if p_single >= 1.0 {
        return Err(Error::InvalidValue { field: "x".into(), reason: "single-identity success is already certain".into() });
    }
    let mut table = Vec::new();
    let mut k_star = None;
    for k in 2..=k_max.max(1) {
        let p_k = per_identity_success(model, x, k)?;
        let p_prime = success_sybil(model, x, k)?;
        let beats_single = single_identity_log_edge(model, x, k)? < 0.0;
        if beats_single && k_star.is_none() {
            k_star = Some(k);
        }
        table.push(SybilRow { k, p_k, p_prime, beats_single });
    }
    let p_min = checked_clearance(model)?.gamma();
    Ok(SybilSearch { x, p_single, k_star, table, p_min, sufficient_k: sufficient_sybil_count(p_single, p_min) })
}

/// `k > ln(1 − p)/ln(1 − p_min)` forces `p′ > p` since every identity
/// succeeds with probability at least `p_min`.
pub fn sufficient_sybil_count(p_single: f64, p_min: f64) -> Option<u64> {
    if !(p_min > 0.0 && p_min < 1.0 && p_single < 1.0) {
        return None;
    }
    let ratio = (1.0 - p_single).ln() / (1.0 - p_min).ln();
    Some((ratio.floor() as u64 + 1).max(2))
}

/// Mean-field expected PNL of an Erdős–Rényi attack with `k` identities.
pub fn expected_pnl_er(model: &SbmModel, x: f64, pi: f64, k: u32) -> Result<f64> {
    if !model.is_erdos_renyi() {
        return Err(Error::NotErdosRenyi(model.block_count()));
    }
    if k == 0 {
        return Err(Error::InvalidSybilCount);
    }
    check_stake(x)?;
    let b = checked_clearance(model)?.blocks[0];
    if x == 0.0 {
        return Ok(0.0);
    }
    if b.mu == 0.0 {
        return Err(Error::InvalidModel("background stake mean is zero".into()));
    }
    Ok((pi - b.alpha * b.mu) * (x / b.mu) * b.q(x / k as f64))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PnlEstimate {
    pub value: f64,
    /// With more than one identity the value is only a lower bound.
    pub lower_bound: bool,
}

/// Mean-field expected PNL on a block model with per-block profits.
pub fn expected_pnl_sbm(model: &SbmModel, x: f64, pis: &[f64], k: u32) -> Result<PnlEstimate> {
    if k == 0 {
        return Err(Error::InvalidSybilCount);
    }
    if pis.len() != model.block_count() {
        return Err(Error::InvalidValue {
            field: "profits".into(),
            reason: format!("{} values for {} blocks", pis.len(), model.block_count()),
        });
    }
    check_stake(x)?;
    let cm = checked_clearance(model)?;
    let mut value = 0.0;
    if x > 0.0 {
        for (b, pi) in cm.blocks.iter().zip(pis) {
            if b.weight == 0.0 {
                continue;
            }
            if b.mu == 0.0 {
                return Err(Error::InvalidModel("background stake mean is zero".into()));
            }
            value += b.weight * (pi - b.alpha * b.mu) * (x / b.mu) * b.q(x / k as f64);
        }
    }
    Ok(PnlEstimate { value, lower_bound: k > 1 })
}

/// One attacked service as seen by a realised coalition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PnlTerm {
    pub pi: f64,
    /// Committed coalition stake on the service, including the focal attacker.
    pub coalition_stake: f64,
    /// Stake the service needs, `α σ_{∂s}`.
    pub threshold: f64,
}

fn max_factor(terms: &[PnlTerm]) -> Result<f64> {
    let mut best = 0.0f64;
    for (i, t) in terms.iter().enumerate() {
        if !(t.coalition_stake > 0.0) {
            return Err(Error::ZeroCoalitionStake(i));
        }
        best = best.max(t.threshold / t.coalition_stake);
    }
    Ok(best)
}

/// Realised PNL with per-service proportional payouts under the max rule.
pub fn pnl_point(x: f64, terms: &[PnlTerm]) -> Result<f64> {
    check_stake(x)?;
    if x == 0.0 {
        return Ok(0.0);
    }
    let phi = max_factor(terms)?;
    Ok(terms.iter().map(|t| t.pi * x / t.coalition_stake).sum::<f64>() - x * phi)
}

/// Realised PNL when the total profit is shared over the whole coalition stake.
pub fn pnl_point_pooled(x: f64, total_profit: f64, coalition_total: f64, terms: &[PnlTerm]) -> Result<f64> {
    check_stake(x)?;
    if x == 0.0 {
        return Ok(0.0);
    }
    if !(coalition_total > 0.0) {
        return Err(Error::ZeroCoalitionStake(terms.len()));
    }
    Ok(total_profit * x / coalition_total - x * max_factor(terms)?)
}

/// JSON layout of a single-background block model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbmConfig {
    pub blocks: Vec<BlockConfig>,
    pub n_other: usize,
    #[serde(deserialize_with = "number")]
    pub sigma_bar: f64,
    #[serde(deserialize_with = "numbers")]
    pub attacker_p: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockConfig {
    pub service_count: usize,
    #[serde(deserialize_with = "number")]
    pub alpha: f64,
    #[serde(deserialize_with = "number")]
    pub p_other: f64,
    #[serde(default, deserialize_with = "number")]
    pub pi: f64,
}

/// Accepts the same number forms as graph files: plain, `"a/b"` or `{num, den}`.
fn number<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    let doc = NumberDoc::deserialize(d)?;
    doc.to_rational().map(|r| r.to_f64_lossy()).map_err(serde::de::Error::custom)
}

fn numbers<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    let docs = Vec::<NumberDoc>::deserialize(d)?;
    docs.iter().map(|doc| doc.to_rational().map(|r| r.to_f64_lossy()).map_err(serde::de::Error::custom)).collect()
}

impl SbmConfig {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("line {}, column {}: {e}", e.line(), e.column())))
    }

    pub fn to_model(&self) -> Result<SbmModel> {
        SbmModel::single_background(
            self.blocks.iter().map(|b| ServiceBlock { count: b.service_count, alpha: b.alpha, pi: b.pi }).collect(),
            self.n_other,
            self.blocks.iter().map(|b| b.p_other).collect(),
            self.sigma_bar,
            self.attacker_p.clone(),
        )
    }

    pub fn from_model(model: &SbmModel) -> Result<Self> {
        if model.operator_blocks.len() != 1 {
            return Err(Error::InvalidModel("only single-background models have a file form".into()));
        }
        Ok(Self {
            blocks: model
                .service_blocks
                .iter()
                .zip(&model.connection[0])
                .map(|(b, &p)| BlockConfig { service_count: b.count, alpha: b.alpha, p_other: p, pi: b.pi })
                .collect(),
            n_other: model.operator_blocks[0],
            sigma_bar: model.sigma_bar,
            attacker_p: model.attacker_p.clone(),
        })
    }
}

pub fn read_sbm_config(text: &str) -> Result<SbmModel> {
    SbmConfig::parse(text)?.to_model()
}
