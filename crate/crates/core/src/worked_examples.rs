//! Reference values for the small worked instances, recomputed and checked
//! against the published figures.

use std::time::Instant;

use crate::error::Result;
use crate::graph::{apply_split, is_feasible, is_profitable, AdditiveProfit, OperatorId};
use crate::marginal::{marginal_slash, type2_gain};
use crate::multislash::mult_slash_max;
use crate::randnet::{self, DEFAULT_K_MAX};
use crate::scalar::Scalar;
use crate::scenarios::{
    overlap_attack, overlap_graph, overlap_three_way_split, overlap_withholding_split, single_edge_attack, single_edge_graph,
    two_block_model,
};
use crate::strategy::{context_from_attack, utility_attack_level, utility_single, utility_two_services, Sharing, SlashRule};
use crate::Rational;

/// One reproduced quantity.
#[derive(Clone, Debug, PartialEq)]
pub struct ExampleRow {
    pub group: &'static str,
    pub quantity: String,
    pub computed: f64,
    /// Exact value when the computation is rational.
    pub exact: Option<String>,
    pub expected: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub micros: u128,
}

pub const GROUPS: [&str; 6] = ["single-edge", "marginal", "sybil-split", "multiplicative", "utilities", "block-model"];

struct Rows {
    rows: Vec<ExampleRow>,
    group: &'static str,
    micros: u128,
    tolerance: Option<f64>,
}

impl Rows {
    fn push(&mut self, quantity: impl Into<String>, computed: f64, exact: Option<String>, expected: f64, tolerance: f64) {
        let tolerance = self.tolerance.unwrap_or(tolerance);
        let passed = (computed - expected).abs() <= tolerance;
        self.rows.push(ExampleRow {
            group: self.group,
            quantity: quantity.into(),
            computed,
            exact,
            expected,
            tolerance,
            passed,
            micros: self.micros,
        });
    }

    fn exact(&mut self, quantity: impl Into<String>, value: &Rational, expected: f64, tolerance: f64) {
        self.push(quantity, value.to_f64_lossy(), Some(value.render()), expected, tolerance);
    }

    fn flag(&mut self, quantity: impl Into<String>, holds: bool) {
        self.push(quantity, if holds { 1.0 } else { 0.0 }, None, 1.0, 0.0);
    }
}

fn op(s: &str) -> OperatorId {
    OperatorId::from(s)
}

fn single_edge(out: &mut Rows) -> Result<()> {
    let g = single_edge_graph::<Rational>();
    let a = single_edge_attack(&g);
    let feasible = is_feasible(&g, &a)?;
    let profitable = is_profitable(&g, &a, &AdditiveProfit)?;
    out.flag("attack on s1 by v1 is feasible", feasible);
    out.flag("attack on s1 by v1 is profitable", profitable);
    Ok(())
}

fn marginal(out: &mut Rows) -> Result<()> {
    let g = overlap_graph::<Rational>();
    let start = Instant::now();
    let slash = marginal_slash(&g, &overlap_attack(&g))?;
    out.micros = start.elapsed().as_micros();
    for (v, expected) in [("v1", 0.83), ("v2", 1.33), ("v3", 0.25)] {
        out.exact(format!("marginal psi {v}"), &slash.psi[&op(v)], expected, 0.005);
    }
    Ok(())
}

fn sybil_split(out: &mut Rows) -> Result<()> {
    let g = overlap_graph::<Rational>();
    let a = overlap_attack(&g);
    let split = overlap_three_way_split::<Rational>();
    let start = Instant::now();
    let gain = type2_gain(&g, &a, &split)?;
    out.micros = start.elapsed().as_micros();
    for (i, expected) in [0.33, 0.58, 0.08].into_iter().enumerate() {
        let id = format!("v2#{}", i + 1);
        out.exact(format!("split psi {id}"), &gain.after_parts[&op(&id)], expected, 0.005);
    }
    out.exact("type II gain", &gain.gain, 0.34, 0.007);
    Ok(())
}

fn multiplicative(out: &mut Rows) -> Result<()> {
    let g = overlap_graph::<Rational>();
    let a = overlap_attack(&g);
    let start = Instant::now();
    let base = mult_slash_max(&g, &a)?;
    out.micros = start.elapsed().as_micros();
    for (v, expected) in [("v1", 0.932), ("v2", 1.398), ("v3", 0.352)] {
        out.exact(format!("max-scheme psi {v}"), &base.operators[&op(v)].psi, expected, 0.005);
    }
    let split = overlap_withholding_split::<Rational>();
    let g2 = apply_split(&g, &split)?;
    let withheld = mult_slash_max(&g2, &split.apply_to_attack(&a))?;
    for (v, expected) in [("v1", 0.97), ("v2#1", 1.36), ("v3", 0.39)] {
        out.exact(format!("withholding psi {v}"), &withheld.operators[&op(v)].psi, expected, 0.005);
    }
    let (before, after) = (base.total(), withheld.total());
    out.exact("max-scheme total", &before, 2.682, 0.005);
    out.exact("withholding total", &after, 2.72, 0.005);
    out.flag("withholding raises the total", before < after);
    Ok(())
}

fn utilities(out: &mut Rows) -> Result<()> {
    let g = overlap_graph::<Rational>();
    let a = overlap_attack(&g);
    let start = Instant::now();
    let v2 = context_from_attack(&g, &a, &op("v2"), Sharing::Proportional, SlashRule::Max)?;
    let u2 = utility_two_services(&v2, v2.stake)?;
    let v1 = context_from_attack(&g, &a, &op("v1"), Sharing::Proportional, SlashRule::Max)?;
    let u1 = utility_single(&v1, v1.stake)?;
    let pooled = utility_attack_level(&g, &a, &op("v1"), 1.0)?;
    out.micros = start.elapsed().as_micros();
    out.push("utility v2, two services", u2, None, 1.002, 0.005);
    out.push("utility v1, own service", u1, None, -0.132, 0.005);
    out.push("utility v1, pooled profit", pooled, None, 0.21, 0.01);
    Ok(())
}

fn block_model(out: &mut Rows) -> Result<()> {
    let m = two_block_model();
    let start = Instant::now();
    let values = [
        ("mu block 1", m.mu(0), 18.0, 1e-4),
        ("sd block 1", m.sd(0), 3.54965, 1e-4),
        ("mu block 2", m.mu(1), 1.2, 1e-4),
        ("sd block 2", m.sd(1), 1.08444, 1e-4),
        ("clearance block 1 at 3", randnet::clearance(&m, 0, 3.0)?, 1.673e-6, 5e-8),
        ("clearance block 2 at 3", randnet::clearance(&m, 1, 3.0)?, 0.95153, 1e-4),
        ("single identity success at 3", randnet::success_single(&m, 3.0)?, 0.47576, 1e-4),
        ("per identity success at 3, k=2", randnet::per_identity_success(&m, 3.0, 2)?, 0.30449, 1e-4),
        ("two-identity success at 3", randnet::success_sybil(&m, 3.0, 2)?, 0.51626, 1e-4),
    ];
    let k_star = randnet::min_sybil_count(&m, 3.0, DEFAULT_K_MAX)?.k_star;
    out.micros = start.elapsed().as_micros();
    for (name, value, expected, tol) in values {
        out.push(name, value, None, expected, tol);
    }
    out.push("least profitable sybil count", k_star.map_or(f64::NAN, f64::from), None, 2.0, 0.0);
    Ok(())
}

/// Recomputes every reference value; `tolerance` overrides the per-row
/// tolerances when given.
pub fn reproduce(tolerance: Option<f64>) -> Result<Vec<ExampleRow>> {
    let mut rows = Vec::new();
    for group in GROUPS {
        rows.extend(reproduce_group(group, tolerance)?);
    }
    Ok(rows)
}

/// Rows of one group, or an empty list for an unknown name.
pub fn reproduce_group(group: &str, tolerance: Option<f64>) -> Result<Vec<ExampleRow>> {
    let Some(&name) = GROUPS.iter().find(|g| **g == group) else {
        return Ok(Vec::new());
    };
    let mut out = Rows { rows: Vec::new(), group: name, micros: 0, tolerance };
    match name {
        "single-edge" => single_edge(&mut out)?,
        "marginal" => marginal(&mut out)?,
        "sybil-split" => sybil_split(&mut out)?,
        "multiplicative" => multiplicative(&mut out)?,
        "utilities" => utilities(&mut out)?,
        _ => block_model(&mut out)?,
    }
    Ok(out.rows)
}
