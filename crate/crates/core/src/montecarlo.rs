//! Simulation of block-model networks to check the analytic clearance and
//! success probabilities.
//!
//! Every replication draws from its own ChaCha stream, selected by the
//! replication index, so results do not depend on thread count or
//! scheduling.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{GraphBuilder, RestakingGraph};
use crate::randnet::{self, SbmModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TargetPolicy {
    /// `k` different services drawn from the attacker's neighbourhood.
    Distinct,
    /// `k` draws with replacement; identities on the same service pool stake.
    WithReplacement,
}

/// What to do with a replication whose attacker has too few neighbours.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShortNeighbourhood {
    /// Count it as a failed attack.
    Fail,
    /// Drop it from the estimate.
    Exclude,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub model: SbmModel,
    pub replications: u64,
    pub seed: u64,
    /// Attacker stake `x`.
    pub stake: f64,
    pub sybils: u32,
    pub policy: TargetPolicy,
    pub short_neighbourhood: ShortNeighbourhood,
    /// Background stakes are drawn uniformly from `σ̄(1 ± jitter)`.
    pub jitter: f64,
    pub parallel: bool,
}

impl SimConfig {
    pub fn new(model: SbmModel, replications: u64, seed: u64) -> Self {
        Self {
            model,
            replications,
            seed,
            stake: 0.0,
            sybils: 1,
            policy: TargetPolicy::Distinct,
            short_neighbourhood: ShortNeighbourhood::Fail,
            jitter: 0.0,
            parallel: true,
        }
    }

    pub fn with_attack(mut self, stake: f64, sybils: u32) -> Self {
        self.stake = stake;
        self.sybils = sybils;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.replications == 0 {
            return Err(Error::InvalidValue { field: "replications".into(), reason: "at least one is required".into() });
        }
        if self.sybils == 0 {
            return Err(Error::InvalidSybilCount);
        }
        if !(self.stake >= 0.0 && self.stake.is_finite()) {
            return Err(Error::InvalidValue { field: "stake".into(), reason: format!("{} must be non-negative", self.stake) });
        }
        if !(0.0..1.0).contains(&self.jitter) {
            return Err(Error::InvalidValue { field: "jitter".into(), reason: "must lie in [0, 1)".into() });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Comparison {
    pub analytic: f64,
    pub abs_error: f64,
    /// Standard error a sample of this size has if the analytic value is right.
    pub null_stderr: f64,
    pub z: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimEstimate {
    pub estimator: String,
    pub estimate: f64,
    /// `sqrt(p̂(1 − p̂)/N)`
    pub stderr: f64,
    /// Replications that entered the estimate.
    pub replications: u64,
    /// Replications where the attacker had too few neighbours.
    pub short: u64,
    pub comparison: Option<Comparison>,
}

impl SimEstimate {
    fn from_tally(estimator: impl Into<String>, t: Tally, analytic: Option<f64>) -> Self {
        let n = t.hits + t.misses;
        let estimate = if n == 0 { 0.0 } else { t.hits as f64 / n as f64 };
        let stderr = if n == 0 { 0.0 } else { (estimate * (1.0 - estimate) / n as f64).sqrt() };
        // The z-score uses the spread implied by the analytic value, so a
        // sample of all hits or all misses still gets a finite score.
        let comparison = analytic.map(|a| {
            let diff = estimate - a;
            let null_sd = if n == 0 { 0.0 } else { (a * (1.0 - a) / n as f64).sqrt() };
            let z = if null_sd > 0.0 {
                diff / null_sd
            } else if diff == 0.0 {
                0.0
            } else {
                diff.signum() * f64::INFINITY
            };
            Comparison { analytic: a, abs_error: diff.abs(), null_stderr: null_sd, z }
        });
        Self { estimator: estimator.into(), estimate, stderr, replications: n, short: t.short, comparison }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
struct Tally {
    hits: u64,
    misses: u64,
    short: u64,
}

impl Tally {
    fn merge(self, o: Tally) -> Tally {
        Tally { hits: self.hits + o.hits, misses: self.misses + o.misses, short: self.short + o.short }
    }
}

enum Trial {
    Hit,
    Miss,
    Short,
}

/// Generator for replication `rep`.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

fn run_each<R: Send>(config: &SimConfig, trial: impl Fn(&mut ChaCha8Rng) -> R + Sync) -> Vec<R> {
    let one = |rep: u64| trial(&mut replication_rng(config.seed, rep));
    if config.parallel {
        (0..config.replications).into_par_iter().map(one).collect()
    } else {
        (0..config.replications).map(one).collect()
    }
}

fn tally(config: &SimConfig, trial: impl Fn(&mut ChaCha8Rng) -> Trial + Sync) -> Tally {
    let score = |t: Trial| match (t, config.short_neighbourhood) {
        (Trial::Hit, _) => Tally { hits: 1, ..Tally::default() },
        (Trial::Miss, _) => Tally { misses: 1, ..Tally::default() },
        (Trial::Short, ShortNeighbourhood::Fail) => Tally { misses: 1, short: 1, ..Tally::default() },
        (Trial::Short, ShortNeighbourhood::Exclude) => Tally { short: 1, ..Tally::default() },
    };
    let one = |rep: u64| score(trial(&mut replication_rng(config.seed, rep)));
    if config.parallel {
        (0..config.replications).into_par_iter().map(one).reduce(Tally::default, Tally::merge)
    } else {
        (0..config.replications).map(one).fold(Tally::default(), Tally::merge)
    }
}

fn operator_stake(sigma_bar: f64, jitter: f64, rng: &mut impl Rng) -> f64 {
    if jitter == 0.0 {
        sigma_bar
    } else {
        sigma_bar * (1.0 + jitter * rng.random_range(-1.0..1.0))
    }
}

/// Background stake on one fresh block-`b` service.
fn background_sum(model: &SbmModel, block: usize, jitter: f64, rng: &mut impl Rng) -> f64 {
    let mut sum = 0.0;
    for (&n, row) in model.operator_blocks.iter().zip(&model.connection) {
        let p = row[block];
        for _ in 0..n {
            if rng.random_bool(p) {
                sum += operator_stake(model.sigma_bar, jitter, rng);
            }
        }
    }
    sum
}

/// Samples the background network: every operator block against every
/// service block, stake `σ̄` per operator.
pub fn sample_graph(model: &SbmModel, rng: &mut impl Rng) -> Result<RestakingGraph<f64>> {
    model.validate()?;
    let mut builder = GraphBuilder::new();
    for (b, block) in model.service_blocks.iter().enumerate() {
        for i in 0..block.count {
            builder.add_service(format!("b{b}:s{i}"), block.pi, block.alpha);
        }
    }
    for (c, &n) in model.operator_blocks.iter().enumerate() {
        for j in 0..n {
            builder.add_operator(format!("c{c}:v{j}"), model.sigma_bar);
        }
    }
    for (c, &n) in model.operator_blocks.iter().enumerate() {
        for j in 0..n {
            for (b, block) in model.service_blocks.iter().enumerate() {
                let p = model.connection[c][b];
                for i in 0..block.count {
                    if rng.random_bool(p) {
                        builder.add_edge(format!("b{b}:s{i}"), format!("c{c}:v{j}"));
                    }
                }
            }
        }
    }
    builder.build()
}

fn check_block(model: &SbmModel, block: usize) -> Result<()> {
    match model.service_blocks.get(block) {
        Some(b) if b.count > 0 => Ok(()),
        _ => Err(Error::EmptyBlock(block)),
    }
}

/// Background stakes of `replications` independent block-`b` services.
pub fn clearance_samples(config: &SimConfig, block: usize) -> Result<Vec<f64>> {
    config.validate()?;
    check_block(&config.model, block)?;
    Ok(run_each(config, |rng| background_sum(&config.model, block, config.jitter, rng)))
}

/// Fraction of sampled block-`b` services an attacker with stake `y` clears.
pub fn estimate_clearance(config: &SimConfig, block: usize, y: f64) -> Result<SimEstimate> {
    config.validate()?;
    check_block(&config.model, block)?;
    let analytic = randnet::clearance(&config.model, block, y)?;
    let alpha = config.model.service_blocks[block].alpha;
    let limit = (1.0 - alpha) / alpha * y;
    let t = tally(config, |rng| if background_sum(&config.model, block, config.jitter, rng) <= limit { Trial::Hit } else { Trial::Miss });
    Ok(SimEstimate::from_tally(format!("clearance[{}]", block + 1), t, Some(analytic)))
}

/// Empirical probability that at least one of `k` identities clears its target.
pub fn estimate_success(config: &SimConfig) -> Result<SimEstimate> {
    config.validate()?;
    let analytic = randnet::success_sybil(&config.model, config.stake, config.sybils)?;
    let model = &config.model;
    let k = config.sybils as usize;
    let t = tally(config, |rng| {
        let mut neighbours = Vec::new();
        for (b, block) in model.service_blocks.iter().enumerate() {
            for _ in 0..block.count {
                if rng.random_bool(model.attacker_p[b]) {
                    neighbours.push(b);
                }
            }
        }
        // (block, identities on the service)
        let targets: Vec<(usize, usize)> = match config.policy {
            TargetPolicy::Distinct => {
                if neighbours.len() < k {
                    return Trial::Short;
                }
                index::sample(rng, neighbours.len(), k).into_iter().map(|i| (neighbours[i], 1)).collect()
            }
            TargetPolicy::WithReplacement => {
                if neighbours.is_empty() {
                    return Trial::Short;
                }
                let mut counts = std::collections::BTreeMap::new();
                for _ in 0..k {
                    *counts.entry(rng.random_range(0..neighbours.len())).or_insert(0) += 1;
                }
                counts.into_iter().map(|(i, c)| (neighbours[i], c)).collect()
            }
        };
        let mut hit = false;
        for (b, identities) in targets {
            let alpha = model.service_blocks[b].alpha;
            let y = config.stake * identities as f64 / k as f64;
            // Every target is sampled even after a hit so the stream layout
            // does not depend on outcomes.
            if background_sum(model, b, config.jitter, rng) <= (1.0 - alpha) / alpha * y {
                hit = true;
            }
        }
        if hit {
            Trial::Hit
        } else {
            Trial::Miss
        }
    });
    let name = if k == 1 { "success".to_string() } else { format!("success[k={k}]") };
    Ok(SimEstimate::from_tally(name, t, Some(analytic)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct NeighbourRow {
    pub block: usize,
    /// `m_b p_{ab}`
    pub expected: f64,
    /// `D_b ≥ threshold` is counted.
    pub threshold: f64,
    /// `1 − exp(−m_b p_{ab}/8)`
    pub bound: f64,
    pub frequency: f64,
    pub stderr: f64,
    /// `frequency ≥ bound − 3·stderr`
    pub holds: bool,
}

/// Compares how often the attacker sees at least half its expected
/// neighbours in each block with the Chernoff lower bound.
pub fn neighbor_count_check(config: &SimConfig) -> Result<Vec<NeighbourRow>> {
    config.validate()?;
    let model = &config.model;
    let mut rows = Vec::new();
    for (b, block) in model.service_blocks.iter().enumerate() {
        let p = model.attacker_p[b];
        let expected = block.count as f64 * p;
        let threshold = expected / 2.0;
        let t = tally(config, |rng| {
            let degree = (0..block.count).filter(|_| rng.random_bool(p)).count();
            if degree as f64 >= threshold {
                Trial::Hit
            } else {
                Trial::Miss
            }
        });
        let est = SimEstimate::from_tally("neighbours", t, None);
        let bound = 1.0 - (-expected / 8.0).exp();
        rows.push(NeighbourRow {
            block: b,
            expected,
            threshold,
            bound,
            frequency: est.estimate,
            stderr: est.stderr,
            holds: est.estimate >= bound - 3.0 * est.stderr,
        });
    }
    Ok(rows)
}
