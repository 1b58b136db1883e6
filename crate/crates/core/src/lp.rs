//! Small dense linear programs over any [`Scalar`].
//!
//! Two-phase tableau simplex with Bland's rule, so it terminates on
//! degenerate problems and is exact over rationals. Meant for the handful
//! of variables the slashing programs need, not for large models.

use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint<T> {
    pub coeffs: Vec<T>,
    pub relation: Relation,
    pub rhs: T,
}

impl<T: Scalar> Constraint<T> {
    pub fn new(coeffs: Vec<T>, relation: Relation, rhs: T) -> Self {
        Self { coeffs, relation, rhs }
    }
}

/// `min objective · x` subject to the constraints and `x ≥ 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram<T> {
    pub objective: Vec<T>,
    pub constraints: Vec<Constraint<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome<T> {
    Optimal { x: Vec<T>, value: T },
    Infeasible,
    Unbounded,
}

impl<T: Scalar> LinearProgram<T> {
    pub fn new(objective: Vec<T>) -> Self {
        Self { objective, constraints: Vec::new() }
    }

    pub fn constrain(&mut self, coeffs: Vec<T>, relation: Relation, rhs: T) {
        assert_eq!(coeffs.len(), self.objective.len(), "constraint width must match the objective");
        self.constraints.push(Constraint::new(coeffs, relation, rhs));
    }

    pub fn solve(&self) -> LpOutcome<T> {
        Tableau::build(self).run(&self.objective)
    }
}

/// Relation after scaling the row to a non-negative right-hand side.
fn effective<T: Scalar>(c: &Constraint<T>) -> Relation {
    match (c.relation, c.rhs.is_negative()) {
        (Relation::Le, true) => Relation::Ge,
        (Relation::Ge, true) => Relation::Le,
        (r, _) => r,
    }
}

struct Tableau<T> {
    rows: Vec<Vec<T>>,
    basis: Vec<usize>,
    vars: usize,
    first_artificial: usize,
}

impl<T: Scalar> Tableau<T> {
    fn build(lp: &LinearProgram<T>) -> Self {
        let n = lp.objective.len();
        let m = lp.constraints.len();
        let slacks = lp.constraints.iter().filter(|c| c.relation != Relation::Eq).count();
        let artificials = lp.constraints.iter().filter(|c| effective(c) != Relation::Le).count();
        let width = n + slacks + artificials;
        let mut rows = Vec::with_capacity(m);
        let mut basis = Vec::with_capacity(m);
        let (mut next_slack, mut next_art) = (n, n + slacks);
        for c in &lp.constraints {
            let flip = c.rhs.is_negative();
            let sign = |v: &T| if flip { -v.clone() } else { v.clone() };
            let mut row: Vec<T> = c.coeffs.iter().map(sign).chain(std::iter::repeat_n(T::zero(), width - n + 1)).collect();
            row[width] = sign(&c.rhs);
            let relation = effective(c);
            if c.relation != Relation::Eq {
                // The slack keeps its original orientation.
                row[next_slack] = if c.relation == Relation::Le { sign(&T::one()) } else { sign(&-T::one()) };
            }
            if relation == Relation::Le {
                basis.push(next_slack);
            } else {
                row[next_art] = T::one();
                basis.push(next_art);
                next_art += 1;
            }
            if c.relation != Relation::Eq {
                next_slack += 1;
            }
            rows.push(row);
        }
        Self { rows, basis, vars: n, first_artificial: n + slacks }
    }

    fn width(&self) -> usize {
        self.rows.first().map_or(self.first_artificial, |r| r.len() - 1)
    }

    fn pivot(&mut self, cost: &mut [T], r: usize, c: usize) {
        let p = self.rows[r][c].clone();
        for x in self.rows[r].iter_mut() {
            *x = x.clone() / p.clone();
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r && !row[c].is_zero() {
                let f = row[c].clone();
                for (x, y) in row.iter_mut().zip(&pivot_row) {
                    *x = x.clone() - f.clone() * y.clone();
                }
            }
        }
        if !cost[c].is_zero() {
            let f = cost[c].clone();
            for (x, y) in cost.iter_mut().zip(&pivot_row) {
                *x = x.clone() - f.clone() * y.clone();
            }
        }
        self.basis[r] = c;
    }

    /// Reduced-cost row for `costs` given the current basis; last entry is `−value`.
    fn reduced(&self, costs: &[T]) -> Vec<T> {
        let width = self.width();
        let mut out: Vec<T> = (0..=width).map(|j| if j < width { costs[j].clone() } else { T::zero() }).collect();
        for (row, &b) in self.rows.iter().zip(&self.basis) {
            let cb = costs[b].clone();
            if !cb.is_zero() {
                for (x, y) in out.iter_mut().zip(row) {
                    *x = x.clone() - cb.clone() * y.clone();
                }
            }
        }
        out
    }

    /// Runs Bland-rule pivots until optimal. Returns false if unbounded.
    fn optimize(&mut self, cost: &mut [T], allowed: usize) -> bool {
        let tol = T::tolerance();
        let width = self.width();
        loop {
            let Some(enter) = (0..allowed).find(|&j| cost[j] < -tol.clone()) else {
                return true;
            };
            let mut leave: Option<(usize, T)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if row[enter] > tol {
                    let ratio = row[width].clone() / row[enter].clone();
                    let better = match &leave {
                        None => true,
                        Some((li, best)) => ratio < *best || (ratio == *best && self.basis[i] < self.basis[*li]),
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            match leave {
                Some((r, _)) => self.pivot(cost, r, enter),
                None => return false,
            }
        }
    }

    fn run(mut self, objective: &[T]) -> LpOutcome<T> {
        let width = self.width();
        let tol = T::tolerance();
        if self.basis.iter().any(|&b| b >= self.first_artificial) {
            let phase_one: Vec<T> = (0..width).map(|j| if j >= self.first_artificial { T::one() } else { T::zero() }).collect();
            let mut cost = self.reduced(&phase_one);
            self.optimize(&mut cost, width);
            if (-cost[width].clone()) > tol {
                return LpOutcome::Infeasible;
            }
            for r in 0..self.rows.len() {
                if self.basis[r] >= self.first_artificial {
                    if let Some(c) = (0..self.first_artificial).find(|&j| self.rows[r][j].abs() > tol) {
                        self.pivot(&mut cost, r, c);
                    }
                }
            }
        }
        let costs: Vec<T> = (0..width).map(|j| if j < self.vars { objective[j].clone() } else { T::zero() }).collect();
        let mut cost = self.reduced(&costs);
        if !self.optimize(&mut cost, self.first_artificial) {
            return LpOutcome::Unbounded;
        }
        let mut x = vec![T::zero(); self.vars];
        for (row, &b) in self.rows.iter().zip(&self.basis) {
            if b < self.vars {
                x[b] = row[width].clone();
            }
        }
        let value = x.iter().zip(objective).fold(T::zero(), |acc, (a, c)| acc + a.clone() * c.clone());
        LpOutcome::Optimal { x, value }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::q;
    use crate::Rational;
    use proptest::prelude::*;

    fn optimal<T: Scalar>(out: LpOutcome<T>) -> (Vec<T>, T) {
        match out {
            LpOutcome::Optimal { x, value } => (x, value),
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn textbook_maximisation() {
        // max 3x + 5y st x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → (2, 6), 36.
        let mut lp = LinearProgram::new(vec![q(-3, 1), q(-5, 1)]);
        lp.constrain(vec![q(1, 1), q(0, 1)], Relation::Le, q(4, 1));
        lp.constrain(vec![q(0, 1), q(2, 1)], Relation::Le, q(12, 1));
        lp.constrain(vec![q(3, 1), q(2, 1)], Relation::Le, q(18, 1));
        let (x, v) = optimal(lp.solve());
        assert_eq!(x, vec![q(2, 1), q(6, 1)]);
        assert_eq!(v, q(-36, 1));
    }

    #[test]
    fn covering_with_equality_and_negative_rhs() {
        // min x + y st x + y ≥ 2, x − y = 1, −x ≤ −1/2 → (3/2, 1/2).
        let mut lp = LinearProgram::new(vec![q(1, 1), q(1, 1)]);
        lp.constrain(vec![q(1, 1), q(1, 1)], Relation::Ge, q(2, 1));
        lp.constrain(vec![q(1, 1), q(-1, 1)], Relation::Eq, q(1, 1));
        lp.constrain(vec![q(-1, 1), q(0, 1)], Relation::Le, q(-1, 2));
        let (x, v) = optimal(lp.solve());
        assert_eq!(x, vec![q(3, 2), q(1, 2)]);
        assert_eq!(v, q(2, 1));
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(vec![q(1, 1)]);
        lp.constrain(vec![q(1, 1)], Relation::Ge, q(2, 1));
        lp.constrain(vec![q(1, 1)], Relation::Le, q(1, 1));
        assert_eq!(lp.solve(), LpOutcome::Infeasible);
        let mut lp = LinearProgram::new(vec![q(-1, 1)]);
        lp.constrain(vec![q(1, 1)], Relation::Ge, q(0, 1));
        assert_eq!(lp.solve(), LpOutcome::Unbounded);
    }

    #[test]
    fn degenerate_cycle_example_terminates() {
        // Beale's cycling example: Bland's rule must terminate at value −1/20.
        let mut lp = LinearProgram::new(vec![q(-3, 4), q(150, 1), q(-1, 50), q(6, 1)]);
        lp.constrain(vec![q(1, 4), q(-60, 1), q(-1, 25), q(9, 1)], Relation::Le, q(0, 1));
        lp.constrain(vec![q(1, 2), q(-90, 1), q(-1, 50), q(3, 1)], Relation::Le, q(0, 1));
        lp.constrain(vec![q(0, 1), q(0, 1), q(1, 1), q(0, 1)], Relation::Le, q(1, 1));
        let (_, v) = optimal(lp.solve());
        assert_eq!(v, q(-1, 20));
    }

    #[test]
    fn float_solver_agrees() {
        let mut lp = LinearProgram::new(vec![-3.0, -5.0]);
        lp.constrain(vec![1.0, 0.0], Relation::Le, 4.0);
        lp.constrain(vec![0.0, 2.0], Relation::Le, 12.0);
        lp.constrain(vec![3.0, 2.0], Relation::Le, 18.0);
        let (_, v): (_, f64) = optimal(lp.solve());
        assert!((v + 36.0).abs() < 1e-12);
    }

    proptest! {
        /// Box-constrained covering of one row: the optimum fills the
        /// cheapest coordinates first.
        #[test]
        fn greedy_covering(costs in prop::collection::vec(1i64..9, 1..5), caps in prop::collection::vec(1i64..5, 5), need in 0i64..12) {
            let n = costs.len();
            let mut lp = LinearProgram::new(costs.iter().map(|c| q(*c, 1)).collect());
            lp.constrain(vec![q(1, 1); n], Relation::Ge, q(need, 1));
            for i in 0..n {
                let mut row = vec![q(0, 1); n];
                row[i] = q(1, 1);
                lp.constrain(row, Relation::Le, q(caps[i], 1));
            }
            let cap_total: i64 = caps[..n].iter().sum();
            if need > cap_total {
                prop_assert_eq!(lp.solve(), LpOutcome::Infeasible);
            } else {
                let mut order: Vec<usize> = (0..n).collect();
                order.sort_by_key(|&i| costs[i]);
                let (mut left, mut expect) = (need, 0);
                for i in order {
                    let take = left.min(caps[i]);
                    expect += take * costs[i];
                    left -= take;
                }
                let (_, v) = optimal(lp.solve());
                prop_assert_eq!(v, Rational::from_integer(expect.into()));
            }
        }
    }
}
