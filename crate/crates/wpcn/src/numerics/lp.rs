//! Dense two-phase simplex for small linear programs.
//!
//! Bland's rule picks both entering and leaving columns, so the method
//! cannot cycle on the degenerate vertices that the time-sharing programs of
//! this crate produce routinely. After the last pivot the basic solution and
//! the row prices are recomputed from an LU factorisation of the basis to
//! shed accumulated tableau error.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpRow {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// Maximise `objective . x` subject to `rows`; `nonneg[j]` marks `x_j >= 0`,
/// other variables are free.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub rows: Vec<LpRow>,
    pub nonneg: Vec<bool>,
}

impl LpProblem {
    /// A problem over `n` nonnegative variables.
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        LpProblem { objective, rows: Vec::new(), nonneg: vec![true; n] }
    }

    pub fn row(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) -> &mut Self {
        self.rows.push(LpRow { coeffs, relation, rhs });
        self
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    fn check(&self) -> Result<()> {
        let n = self.num_vars();
        if self.nonneg.len() != n {
            return Err(Error::Domain("nonnegativity flags do not match the variable count".into()));
        }
        for (i, r) in self.rows.iter().enumerate() {
            if r.coeffs.len() != n {
                return Err(Error::Domain(format!("row {i} has {} coefficients, expected {n}", r.coeffs.len())));
            }
            if !r.rhs.is_finite() || r.coeffs.iter().any(|c| !c.is_finite()) {
                return Err(Error::Domain(format!("row {i} has non-finite data")));
            }
        }
        Ok(())
    }

    /// Largest constraint violation of `x` (including sign restrictions).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for r in &self.rows {
            let lhs: f64 = r.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
            let v = match r.relation {
                Relation::Le => lhs - r.rhs,
                Relation::Ge => r.rhs - lhs,
                Relation::Eq => (lhs - r.rhs).abs(),
            };
            worst = worst.max(v);
        }
        for (j, &xj) in x.iter().enumerate() {
            if self.nonneg[j] {
                worst = worst.max(-xj);
            }
        }
        worst
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub value: f64,
    /// Shadow price of each row: the rate of change of the optimum per unit
    /// increase of its right-hand side.
    pub duals: Vec<f64>,
}

struct Tableau {
    m: usize,
    n: usize,
    /// Row-major `m x (n + 1)`; the last column holds the right-hand side.
    a: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * (self.n + 1) + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.n)
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.n + 1;
        let p = self.a[r * w + c];
        for j in 0..w {
            self.a[r * w + j] /= p;
        }
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.a[i * w + c];
            if f != 0.0 {
                for j in 0..w {
                    self.a[i * w + j] -= f * self.a[r * w + j];
                }
                self.a[i * w + c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Runs Bland-rule pivots maximising `cost . x` over columns where `allowed` holds.
    fn optimise(&mut self, cost: &[f64], allowed: &[bool]) -> Result<()> {
        let scale = cost.iter().fold(1.0f64, |s, c| s.max(c.abs()));
        for _ in 0..50_000 {
            let mut entering = None;
            for j in 0..self.n {
                if !allowed[j] || self.basis.contains(&j) {
                    continue;
                }
                let mut reduced = cost[j];
                for i in 0..self.m {
                    reduced -= cost[self.basis[i]] * self.at(i, j);
                }
                if reduced > PIVOT_TOL * scale {
                    entering = Some(j);
                    break;
                }
            }
            let Some(c) = entering else { return Ok(()) };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.at(i, c);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(i).max(0.0) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((k, best)) => {
                            let tie = (ratio - best).abs() <= 1e-13 * best.abs().max(1.0);
                            if ratio < best && !tie || tie && self.basis[i] < self.basis[k] {
                                Some((i, ratio))
                            } else {
                                Some((k, best))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else { return Err(Error::Unbounded { column: c }) };
            self.pivot(r, c);
        }
        Err(Error::NonConvergence { iterations: 50_000, last_step: f64::NAN, best: f64::NAN })
    }
}

/// Solves a small dense linear program to optimality.
pub fn solve_lp(p: &LpProblem) -> Result<LpSolution> {
    p.check()?;
    let m = p.rows.len();
    let nv = p.num_vars();

    // Standard-form columns: structural (free variables split in two),
    // then one slack/surplus per inequality row, then one artificial per row
    // that lacks a unit starting column.
    let mut structural: Vec<(usize, f64)> = Vec::new();
    for j in 0..nv {
        structural.push((j, 1.0));
        if !p.nonneg[j] {
            structural.push((j, -1.0));
        }
    }
    let ns = structural.len();
    let mut signs = vec![1.0; m];
    let mut rel = Vec::with_capacity(m);
    for (i, r) in p.rows.iter().enumerate() {
        let mut relation = r.relation;
        if r.rhs < 0.0 {
            signs[i] = -1.0;
            relation = match relation {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
        }
        rel.push(relation);
    }
    let n_slack = rel.iter().filter(|r| **r != Relation::Eq).count();
    let n_art = rel.iter().filter(|r| **r != Relation::Le).count();
    let n = ns + n_slack + n_art;
    let w = n + 1;
    let mut a = vec![0.0; m * w];
    let mut basis = vec![0; m];
    let mut unit_col = vec![0; m];
    let mut is_art = vec![false; n];
    let (mut next_slack, mut next_art) = (ns, ns + n_slack);
    for i in 0..m {
        let s = signs[i];
        for (k, &(j, sgn)) in structural.iter().enumerate() {
            a[i * w + k] = s * sgn * p.rows[i].coeffs[j];
        }
        a[i * w + n] = s * p.rows[i].rhs;
        match rel[i] {
            Relation::Le => {
                a[i * w + next_slack] = 1.0;
                basis[i] = next_slack;
                unit_col[i] = next_slack;
                next_slack += 1;
            }
            Relation::Ge => {
                a[i * w + next_slack] = -1.0;
                next_slack += 1;
                a[i * w + next_art] = 1.0;
                is_art[next_art] = true;
                basis[i] = next_art;
                unit_col[i] = next_art;
                next_art += 1;
            }
            Relation::Eq => {
                a[i * w + next_art] = 1.0;
                is_art[next_art] = true;
                basis[i] = next_art;
                unit_col[i] = next_art;
                next_art += 1;
            }
        }
    }
    let original = a.clone();
    let mut t = Tableau { m, n, a, basis };

    if n_art > 0 {
        let cost1: Vec<f64> = (0..n).map(|j| if is_art[j] { -1.0 } else { 0.0 }).collect();
        t.optimise(&cost1, &vec![true; n])?;
        let residual: f64 = (0..m).filter(|&i| is_art[t.basis[i]]).map(|i| t.rhs(i).max(0.0)).sum();
        let bscale = (0..m).fold(1.0f64, |s, i| s.max(original[i * w + n].abs()));
        if residual > 1e-9 * bscale {
            return Err(Error::Infeasible { residual });
        }
        // Drive zero-level artificials out of the basis where a structural
        // or slack column can replace them; rows that cannot are redundant.
        for i in 0..m {
            if is_art[t.basis[i]] {
                if let Some(c) = (0..n).find(|&j| !is_art[j] && !t.basis.contains(&j) && t.at(i, j).abs() > 1e-9) {
                    t.pivot(i, c);
                }
            }
        }
    }

    let mut cost2 = vec![0.0; n];
    for (k, &(j, sgn)) in structural.iter().enumerate() {
        cost2[k] = sgn * p.objective[j];
    }
    let allowed: Vec<bool> = (0..n).map(|j| !is_art[j]).collect();
    t.optimise(&cost2, &allowed)?;

    // Refine x_B and the row prices from the original columns of the basis.
    let bmat = DMatrix::from_fn(m, m, |i, k| original[i * w + t.basis[k]]);
    let rhs = DVector::from_fn(m, |i, _| original[i * w + n]);
    let cb = DVector::from_fn(m, |k, _| cost2[t.basis[k]]);
    let lu = bmat.clone().lu();
    let (xb, y) = match (lu.solve(&rhs), bmat.transpose().lu().solve(&cb)) {
        (Some(xb), Some(y)) => (xb, y),
        _ => {
            // Singular refinement basis (should not happen); fall back to the tableau.
            let xb = DVector::from_fn(m, |i, _| t.rhs(i));
            let y = DVector::from_fn(m, |i, _| {
                (0..m).map(|k| cost2[t.basis[k]] * t.at(k, unit_col[i])).sum::<f64>()
            });
            (xb, y)
        }
    };

    let mut std_x = vec![0.0; n];
    for k in 0..m {
        std_x[t.basis[k]] = xb[k].max(0.0);
    }
    let mut x = vec![0.0; nv];
    for (k, &(j, sgn)) in structural.iter().enumerate() {
        x[j] += sgn * std_x[k];
    }
    let duals = (0..m).map(|i| signs[i] * y[i]).collect();
    let bscale = (0..m).fold(1.0f64, |s, i| s.max(original[i * w + n].abs()));
    let residual = p.violation(&x);
    if residual > 1e-8 * bscale {
        return Err(Error::Precision(format!("simplex basis lost feasibility (residual {residual:.3e})")));
    }
    let value = p.objective_value(&x);
    Ok(LpSolution { x, value, duals })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_bound() {
        let mut p = LpProblem::new(vec![1.0]);
        p.row(vec![1.0], Relation::Le, 1.0);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.x, vec![1.0]);
        assert_eq!(s.value, 1.0);
        assert_eq!(s.duals, vec![1.0]);
    }

    #[test]
    fn duplicate_rows_do_not_change_optimum() {
        let mut p = LpProblem::new(vec![3.0, 2.0]);
        p.row(vec![1.0, 1.0], Relation::Le, 4.0);
        p.row(vec![1.0, 3.0], Relation::Le, 6.0);
        let single = solve_lp(&p).unwrap();
        p.row(vec![1.0, 1.0], Relation::Le, 4.0);
        let doubled = solve_lp(&p).unwrap();
        assert!((single.value - 12.0).abs() < 1e-12);
        assert!((doubled.value - single.value).abs() < 1e-12);
    }

    #[test]
    fn equality_and_ge_rows_with_duals() {
        // max x + 2y s.t. x + y = 3, y >= 1, y <= 2  ->  x = 1, y = 2, value 5
        let mut p = LpProblem::new(vec![1.0, 2.0]);
        p.row(vec![1.0, 1.0], Relation::Eq, 3.0);
        p.row(vec![0.0, 1.0], Relation::Ge, 1.0);
        p.row(vec![0.0, 1.0], Relation::Le, 2.0);
        let s = solve_lp(&p).unwrap();
        assert!((s.value - 5.0).abs() < 1e-12);
        assert!((s.duals[0] - 1.0).abs() < 1e-12);
        assert!(s.duals[1].abs() < 1e-12);
        assert!((s.duals[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn negative_rhs_and_free_variable() {
        // max -x s.t. x >= -2 with x free -> x = -2
        let mut p = LpProblem::new(vec![-1.0]);
        p.nonneg[0] = false;
        p.row(vec![1.0], Relation::Ge, -2.0);
        let s = solve_lp(&p).unwrap();
        assert!((s.x[0] + 2.0).abs() < 1e-12);
        assert!((s.duals[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let mut p = LpProblem::new(vec![1.0]);
        p.row(vec![1.0], Relation::Le, 1.0).row(vec![1.0], Relation::Ge, 2.0);
        assert!(matches!(solve_lp(&p), Err(Error::Infeasible { .. })));
        let mut q = LpProblem::new(vec![1.0, 0.0]);
        q.row(vec![-1.0, 1.0], Relation::Le, 1.0);
        assert!(matches!(solve_lp(&q), Err(Error::Unbounded { .. })));
    }

    #[test]
    fn degenerate_vertex_terminates() {
        // Classical cycling example (Beale), solved under Bland's rule.
        let mut p = LpProblem::new(vec![0.75, -150.0, 0.02, -6.0]);
        p.row(vec![0.25, -60.0, -0.04, 9.0], Relation::Le, 0.0);
        p.row(vec![0.5, -90.0, -0.02, 3.0], Relation::Le, 0.0);
        p.row(vec![0.0, 0.0, 1.0, 0.0], Relation::Le, 1.0);
        let s = solve_lp(&p).unwrap();
        assert!((s.value - 0.05).abs() < 1e-12);
    }
}
