use std::fs;
use std::path::Path;

use num_traits::Zero;
use restake_core::graph::{
    enumerate_attacks, is_feasible, is_profitable, read_attack, read_graph, redundant_attacker, AdditiveProfit, AttackSpec, OperatorId,
    RestakingGraph,
};
use restake_core::marginal::{fingerprint_label, marginal_slash, partition_attackers};
use restake_core::montecarlo::{self, ShortNeighbourhood, SimConfig, SimEstimate, TargetPolicy};
use restake_core::multislash::{minimal_slashing, mult_slash_additive, mult_slash_max, MultSlashOutcome};
use restake_core::randnet::{self, SbmConfig, SbmModel, DEFAULT_K_MAX};
use restake_core::strategy::{best_response_n, best_response_single, best_response_two, context_from_attack, Sharing, SlashRule};
use restake_core::worked_examples::{reproduce, ExampleRow, GROUPS};
use restake_core::{Error, Rational, Scalar};

use crate::report::{digest, Cell, ScenarioReport};
use crate::{Cli, Command, Mechanism, PolicyArg, SchemeArg, SharingArg, EXIT_FIXTURE, EXIT_PRECONDITION, EXIT_STATISTICAL, EXIT_USAGE};

/// Seed used when neither `--seed` nor the environment provides one.
pub const DEFAULT_SEED: u64 = 1;

pub struct Outcome {
    pub output: String,
    pub code: u8,
}

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { code: EXIT_PRECONDITION, message: format!("{}: {e}", e.code()) }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure { code: EXIT_PRECONDITION, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_USAGE, message: message.into() }
}

type Run<T> = std::result::Result<T, Failure>;

fn read(path: &Path) -> Run<String> {
    fs::read_to_string(path).map_err(|e| Failure { code: EXIT_PRECONDITION, message: format!("cannot read {}: {e}", path.display()) })
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "input".into(), |s| s.to_string_lossy().into_owned())
}

fn exact(v: &Rational) -> Cell {
    Cell::Exact { text: v.render(), value: v.to_f64_lossy() }
}

struct Loaded {
    graph: RestakingGraph<Rational>,
    attack: AttackSpec<Rational>,
    graph_text: String,
    attack_text: String,
}

fn load_attack(graph_path: &Path, attack_path: &Path) -> Run<Loaded> {
    let graph_text = read(graph_path)?;
    let attack_text = read(attack_path)?;
    let graph = read_graph::<Rational>(&graph_text).map_err(|e| with_file(e, graph_path))?;
    let attack = read_attack(&attack_text, &graph).map_err(|e| with_file(e, attack_path))?;
    Ok(Loaded { graph, attack, graph_text, attack_text })
}

fn with_file(e: Error, path: &Path) -> Failure {
    let f = Failure::from(e);
    Failure { message: format!("{}: {}", path.display(), f.message), ..f }
}

pub fn run(cli: &Cli) -> Run<Outcome> {
    let (report, code) = match &cli.command {
        Command::Check(input) => (check(&input.graph, &input.attack)?, 0),
        Command::Slash { input, mechanism } => (slash(&input.graph, &input.attack, *mechanism)?, 0),
        Command::BestResponse { input, operator, sharing, scheme, sweep } => {
            (best_response(&input.graph, &input.attack, operator, *sharing, *scheme, *sweep, cli.tolerance)?, 0)
        }
        Command::Enumerate { graph, max_services, max_attackers } => (enumerate(graph, *max_services, *max_attackers)?, 0),
        Command::Sbm { config, stake, sybils, sweep, x_to, x_steps, k_max } => {
            let grid = sweep.then(|| (x_to.unwrap_or(2.0 * stake), *x_steps, *k_max));
            (sbm(config, *stake, *sybils, grid)?, 0)
        }
        Command::Montecarlo { config, replications, stake, sybils, policy, exclude_short, jitter, z_max } => {
            let (model, text) = load_model(config)?;
            let mut sim = SimConfig::new(model, *replications, cli.seed.unwrap_or(DEFAULT_SEED)).with_attack(*stake, *sybils);
            sim.policy = match policy {
                PolicyArg::Distinct => TargetPolicy::Distinct,
                PolicyArg::Replacement => TargetPolicy::WithReplacement,
            };
            if *exclude_short {
                sim.short_neighbourhood = ShortNeighbourhood::Exclude;
            }
            sim.jitter = *jitter;
            simulate(config, &text, &sim, *z_max)?
        }
        Command::PaperExamples { only } => examples(only.as_deref(), cli.tolerance)?,
    };
    let output = report.render(cli.format).map_err(Failure::from)?;
    Ok(Outcome { output, code })
}

fn check(graph_path: &Path, attack_path: &Path) -> Run<ScenarioReport> {
    let l = load_attack(graph_path, attack_path)?;
    let d = digest(&[b"check", l.graph_text.as_bytes(), l.attack_text.as_bytes()]);
    let mut r = ScenarioReport::new(stem(attack_path), "check", d, &["scope", "property", "value", "detail"]);
    let (g, a) = (&l.graph, &l.attack);
    let attack = || Cell::text("attack");
    r.push(vec![attack(), Cell::text("feasible"), Cell::Flag(is_feasible(g, a)?), Cell::text("")]);
    let profit = g.profit_of(&a.services)?;
    let committed = a.committed_total();
    r.push(vec![
        attack(),
        Cell::text("profitable"),
        Cell::Flag(is_profitable(g, a, &AdditiveProfit)?),
        Cell::text(format!("profit {} vs committed {}", profit.render(), committed.render())),
    ]);
    let redundant = redundant_attacker(g, a)?;
    r.push(vec![
        attack(),
        Cell::text("stable"),
        Cell::Flag(redundant.is_none()),
        Cell::text(redundant.map_or_else(String::new, |v| format!("{v} is redundant"))),
    ]);
    r.push(vec![attack(), Cell::text("committed"), exact(&committed), Cell::text("")]);
    r.push(vec![attack(), Cell::text("profit"), exact(&profit), Cell::text("")]);
    for s in &a.services {
        let coverage = a.coverage(g, s)?;
        let threshold = g.threshold(s)?;
        let cleared = coverage >= threshold;
        r.push(vec![
            Cell::text(s.as_str()),
            Cell::text("coverage"),
            exact(&coverage),
            Cell::text(if cleared { "reaches threshold" } else { "below threshold" }),
        ]);
        r.push(vec![Cell::text(s.as_str()), Cell::text("threshold"), exact(&threshold), Cell::text("")]);
    }
    Ok(r)
}

fn slash(graph_path: &Path, attack_path: &Path, mechanism: Mechanism) -> Run<ScenarioReport> {
    let l = load_attack(graph_path, attack_path)?;
    let name = format!("{mechanism:?}").to_lowercase();
    let d = digest(&[b"slash", name.as_bytes(), l.graph_text.as_bytes(), l.attack_text.as_bytes()]);
    let mut r = ScenarioReport::new(stem(attack_path), "slash", d, &["operator_id", "committed", "psi", "fraction", "detail"]);
    let (g, a) = (&l.graph, &l.attack);
    let mut rows: Vec<(OperatorId, Rational, String)> = Vec::new();
    match mechanism {
        Mechanism::Marginal => {
            let out = marginal_slash(g, a)?;
            for (v, psi) in &out.psi {
                let group = out.group_of(v).map(|grp| fingerprint_label(&grp.fingerprint)).unwrap_or_default();
                rows.push((v.clone(), psi.clone(), format!("group {group}")));
            }
        }
        Mechanism::Max | Mechanism::Additive => {
            let out: MultSlashOutcome<Rational> =
                if mechanism == Mechanism::Max { mult_slash_max(g, a)? } else { mult_slash_additive(g, a)? };
            for (v, c) in &out.operators {
                rows.push((v.clone(), c.psi.clone(), format!("binding {}", c.binding_label())));
            }
        }
        Mechanism::Minimal => {
            let out = minimal_slashing(g, a)?;
            let groups = partition_attackers(g, a)?;
            for (v, psi) in &out.psi {
                let group = groups.group_of(v).map(fingerprint_label).unwrap_or_default();
                rows.push((v.clone(), psi.clone(), format!("group {group}")));
            }
        }
    }
    let mut total = <Rational as Zero>::zero();
    for (v, psi, detail) in rows {
        let x = a.committed(&v).cloned().unwrap_or_else(<Rational as Zero>::zero);
        let fraction = if x.is_zero() { <Rational as Zero>::zero() } else { psi.clone() / x.clone() };
        total += psi.clone();
        r.push(vec![Cell::text(v.as_str()), exact(&x), exact(&psi), exact(&fraction), Cell::text(detail)]);
    }
    let committed = a.committed_total();
    let fraction = if committed.is_zero() { <Rational as Zero>::zero() } else { total.clone() / committed.clone() };
    r.push(vec![Cell::text("total"), exact(&committed), exact(&total), exact(&fraction), Cell::text(name)]);
    Ok(r)
}

/// Grid points used to confirm a best response.
const VERIFY_GRID: usize = 10_000;

fn best_response(
    graph_path: &Path,
    attack_path: &Path,
    operator: &str,
    sharing: SharingArg,
    scheme: SchemeArg,
    sweep: Option<usize>,
    tolerance: Option<f64>,
) -> Run<ScenarioReport> {
    let l = load_attack(graph_path, attack_path)?;
    let sharing = match sharing {
        SharingArg::Proportional => Sharing::Proportional,
        SharingArg::Pooled => Sharing::Pooled,
    };
    let rule = match scheme {
        SchemeArg::Max => SlashRule::Max,
        SchemeArg::Additive => SlashRule::Additive,
    };
    let op = OperatorId::from(operator);
    let args = format!("{operator} {} {} {sweep:?}", sharing.name(), rule.name());
    let d = digest(&[b"best-response", args.as_bytes(), l.graph_text.as_bytes(), l.attack_text.as_bytes()]);
    let scenario = stem(attack_path);
    let ctx = context_from_attack(&l.graph, &l.attack, &op, sharing, rule)?;

    if let Some(points) = sweep {
        if points < 2 {
            return Err(usage("--sweep needs at least two points"));
        }
        let mut r = ScenarioReport::new(scenario, "best-response", d, &["x", "utility", "slash"]);
        for i in 0..points {
            let x = ctx.stake * i as f64 / (points - 1) as f64;
            r.push(vec![Cell::Num(x), Cell::Num(ctx.utility(x)), Cell::Num(ctx.slash(x))]);
        }
        return Ok(r);
    }

    let br = match ctx.services.len() {
        1 => best_response_single(&ctx)?,
        2 => best_response_two(&ctx)?,
        _ => best_response_n(&ctx)?,
    };
    let current = l.attack.committed(&op).map_or(0.0, |x| x.to_f64_lossy());
    let grid_best = (0..=VERIFY_GRID).map(|i| ctx.utility(ctx.stake * i as f64 / VERIFY_GRID as f64)).fold(f64::NEG_INFINITY, f64::max);
    let verified = br.utility >= grid_best - tolerance.unwrap_or(1e-8);
    let mut r = ScenarioReport::new(
        scenario.clone(),
        "best-response",
        d,
        &["scenario_id", "operator_id", "sharing", "scheme", "x_star", "regime", "utility", "deviation_gain", "grid_verified"],
    );
    r.push(vec![
        Cell::text(scenario),
        Cell::text(operator),
        Cell::text(sharing.name()),
        Cell::text(rule.name()),
        Cell::Num(br.x),
        Cell::text(br.regime.name()),
        Cell::Num(br.utility),
        Cell::Num(br.utility - ctx.utility(current)),
        Cell::Flag(verified),
    ]);
    Ok(r)
}

fn enumerate(graph_path: &Path, max_services: usize, max_attackers: usize) -> Run<ScenarioReport> {
    let text = read(graph_path)?;
    let g = read_graph::<Rational>(&text).map_err(|e| with_file(e, graph_path))?;
    let args = format!("{max_services} {max_attackers}");
    let d = digest(&[b"enumerate", args.as_bytes(), text.as_bytes()]);
    let mut r = ScenarioReport::new(stem(graph_path), "enumerate", d, &["index", "services", "attackers", "committed", "profit", "stable"]);
    for (i, a) in enumerate_attacks(&g, max_services, max_attackers)?.iter().enumerate() {
        let services: Vec<&str> = a.services.iter().map(|s| s.as_str()).collect();
        let attackers: Vec<&str> = a.attackers.keys().map(|v| v.as_str()).collect();
        r.push(vec![
            Cell::Num(i as f64),
            Cell::text(services.join("+")),
            Cell::text(attackers.join("+")),
            exact(&a.committed_total()),
            exact(&g.profit_of(&a.services)?),
            Cell::Flag(redundant_attacker(&g, a)?.is_none()),
        ]);
    }
    Ok(r)
}

fn load_model(path: &Path) -> Run<(SbmModel, String)> {
    let text = read(path)?;
    let model = randnet::read_sbm_config(&text).map_err(|e| with_file(e, path))?;
    Ok((model, text))
}

fn sbm(config_path: &Path, stake: f64, sybils: u32, grid: Option<(f64, usize, u32)>) -> Run<ScenarioReport> {
    let (model, text) = load_model(config_path)?;
    if sybils == 0 {
        return Err(Error::InvalidSybilCount.into());
    }
    let args = format!("{stake} {sybils} {grid:?}");
    let d = digest(&[b"sbm", args.as_bytes(), text.as_bytes()]);
    let mut columns = vec!["x", "k", "p_single", "p_k", "p_prime", "k_star", "pnl", "pnl_lower_bound", "note"];
    let q_names: Vec<String> = (1..=model.block_count()).map(|b| format!("q_{b}")).collect();
    columns.extend(q_names.iter().map(String::as_str));
    let mut r = ScenarioReport::new(stem(config_path), "sbm", d, &columns);
    let pis: Vec<f64> = model.service_blocks.iter().map(|b| b.pi).collect();
    let inflection =
        (0..model.block_count()).map(|b| randnet::concavity_regime(&model, b).map(|c| c.inflection)).collect::<Result<Vec<_>, _>>()?;

    let points: Vec<(f64, u32)> = match grid {
        None => vec![(stake, sybils)],
        Some((x_to, steps, k_max)) => {
            if steps == 0 || k_max == 0 || x_to.is_nan() || x_to <= 0.0 {
                return Err(usage("--sweep needs a positive --x-to, --x-steps and --k-max"));
            }
            (1..=steps).flat_map(|i| (1..=k_max).map(move |k| (x_to * i as f64 / steps as f64, k))).collect()
        }
    };
    for (x, k) in points {
        let p = randnet::success_single(&model, x)?;
        let p_k = randnet::per_identity_success(&model, x, k)?;
        let p_prime = randnet::success_sybil(&model, x, k)?;
        let edge = randnet::single_identity_log_edge(&model, x, k)?;
        // No identity count can beat a certain single-identity attack.
        let k_star = if p < 1.0 { randnet::min_sybil_count(&model, x, DEFAULT_K_MAX)?.k_star } else { None };
        let pnl = randnet::expected_pnl_sbm(&model, x, &pis, k)?;
        let concave = inflection.iter().all(|t| x > *t);
        let note = if k == 1 {
            "single"
        } else if model.is_erdos_renyi() && concave && edge > 0.0 {
            "ER-dominated"
        } else if edge > 0.0 {
            "single-wins"
        } else if edge < 0.0 {
            "sybil-wins"
        } else {
            "tie"
        };
        let mut row = vec![
            Cell::Num(x),
            Cell::Num(f64::from(k)),
            Cell::Num(p),
            Cell::Num(p_k),
            Cell::Num(p_prime),
            k_star.map_or_else(|| Cell::text("none"), |k| Cell::Num(f64::from(k))),
            Cell::Num(pnl.value),
            Cell::Flag(pnl.lower_bound),
            Cell::text(note),
        ];
        for b in 0..model.block_count() {
            row.push(Cell::Num(randnet::clearance(&model, b, x)?));
        }
        r.push(row);
    }
    Ok(r)
}

fn simulate(config_path: &Path, text: &str, sim: &SimConfig, z_max: f64) -> Run<(ScenarioReport, u8)> {
    sim.validate()?;
    let config_hash = digest(&[text.as_bytes()])[..16].to_string();
    let args = format!(
        "{} {} {} {} {:?} {:?} {}",
        sim.replications, sim.seed, sim.stake, sim.sybils, sim.policy, sim.short_neighbourhood, sim.jitter
    );
    let d = digest(&[b"montecarlo", args.as_bytes(), text.as_bytes()]);
    let mut r =
        ScenarioReport::new(stem(config_path), "montecarlo", d, &["config_hash", "estimator", "analytic", "estimate", "stderr", "z"]);
    let echoed = serde_json::to_string(&SbmConfig::from_model(&sim.model)?).map_err(|e| Failure::from(anyhow::Error::from(e)))?;
    r.comments.push(format!(
        "seed={} replications={} stake={} sybils={} policy={:?} short={:?} jitter={} config={echoed}",
        sim.seed, sim.replications, sim.stake, sim.sybils, sim.policy, sim.short_neighbourhood, sim.jitter
    ));

    let mut estimates: Vec<SimEstimate> = Vec::new();
    for b in 0..sim.model.block_count() {
        estimates.push(montecarlo::estimate_clearance(sim, b, sim.stake)?);
    }
    estimates.push(montecarlo::estimate_success(&SimConfig { sybils: 1, ..sim.clone() })?);
    if sim.sybils > 1 {
        estimates.push(montecarlo::estimate_success(sim)?);
    }
    let mut rejected = false;
    for e in &estimates {
        // The reported spread is the one the z-score divides by.
        let (analytic, stderr, z) = e.comparison.map_or((f64::NAN, e.stderr, f64::NAN), |c| (c.analytic, c.null_stderr, c.z));
        rejected |= z.abs() > z_max;
        r.push(vec![
            Cell::text(&config_hash),
            Cell::text(&e.estimator),
            Cell::Num(analytic),
            Cell::Num(e.estimate),
            Cell::Num(stderr),
            Cell::Num(z),
        ]);
    }
    for n in montecarlo::neighbor_count_check(sim)? {
        rejected |= !n.holds;
        r.push(vec![
            Cell::text(&config_hash),
            Cell::text(format!("neighbours[{}]<={}", n.block + 1, n.threshold)),
            Cell::Num(n.bound),
            Cell::Num(n.frequency),
            Cell::Num(n.stderr),
            Cell::text(if n.holds { "within-bound" } else { "exceeds-bound" }),
        ]);
    }
    Ok((r, if rejected { EXIT_STATISTICAL } else { 0 }))
}

fn examples(only: Option<&str>, tolerance: Option<f64>) -> Run<(ScenarioReport, u8)> {
    if let Some(t) = tolerance {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(usage("--tolerance must be a non-negative number"));
        }
    }
    let mut rows = reproduce(tolerance)?;
    if let Some(sel) = only {
        rows.retain(|r| r.group == sel || r.quantity == sel);
        if rows.is_empty() {
            return Err(usage(format!("--only {sel}: no such group or quantity (groups: {})", GROUPS.join(", "))));
        }
    }
    let args = format!("{only:?} {tolerance:?}");
    let d = digest(&[b"paper-examples", args.as_bytes()]);
    let mut r = ScenarioReport::new(
        "reference",
        "paper-examples",
        d,
        &["group", "quantity", "computed", "exact", "expected", "tolerance", "status"],
    );
    let failed = rows.iter().filter(|r| !r.passed).count();
    for ExampleRow { group, quantity, computed, exact, expected, tolerance, passed, .. } in rows {
        r.push(vec![
            Cell::text(group),
            Cell::text(quantity),
            Cell::Num(computed),
            Cell::text(exact.unwrap_or_default()),
            Cell::Num(expected),
            Cell::Num(tolerance),
            Cell::text(if passed { "PASS" } else { "FAIL" }),
        ]);
    }
    Ok((r, if failed > 0 { EXIT_FIXTURE } else { 0 }))
}
