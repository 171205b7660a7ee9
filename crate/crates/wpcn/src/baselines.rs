//! Reference interior-point solver and the comparison schemes.
//!
//! The reference solver is a log-barrier method with damped Newton
//! centering, applied directly to the convex program in slot lengths and
//! relay energies. It shares nothing with the dual decomposition beyond the
//! rate model, so agreement between the two is a genuine cross-check.
//!
//! Two comparison schemes are provided: cooperation without backscatter
//! (the relay forwards, the far device never backscatters) and independent
//! harvest-then-transmit. The latter has its own slot naming, with `t2` and
//! `t3` the far and near device's uplink slots; results are reported in the
//! main protocol's allocation with the far device in `t3` and the near
//! device in `t42`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::dual_solver::{solve, DualVars, Restrictions, SolveResult, SolverOptions};
use crate::error::{Error, Result};
use crate::phy::BackscatterLink;
use crate::rates::{evaluate, perspective, Allocation, RateBreakdown, Scaled};

/// Transmission schemes compared in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SchemeId {
    /// Backscatter-assisted cooperation.
    ProposedAB,
    /// Active cooperation only.
    CoopNoAB,
    /// Harvest-then-transmit without cooperation.
    Independent,
}

impl SchemeId {
    pub const ALL: [SchemeId; 3] = [SchemeId::ProposedAB, SchemeId::CoopNoAB, SchemeId::Independent];

    pub fn name(self) -> &'static str {
        match self {
            SchemeId::ProposedAB => "proposed_ab",
            SchemeId::CoopNoAB => "coop_no_ab",
            SchemeId::Independent => "independent",
        }
    }

    pub fn restrictions(self) -> Restrictions {
        match self {
            SchemeId::ProposedAB => Restrictions::ALL,
            SchemeId::CoopNoAB => Restrictions::NO_BACKSCATTER,
            SchemeId::Independent => Restrictions::DIRECT_ONLY,
        }
    }

    /// Max-min solve of this scheme with the dual decomposition solver.
    pub fn solve_dual(self, link: &BackscatterLink, opts: &SolverOptions) -> Result<SolveResult> {
        solve(link, &opts.with_restrictions(self.restrictions()))
    }

    /// Max-min solve of this scheme with the interior-point reference.
    pub fn solve_reference(self, link: &BackscatterLink) -> Result<SolveResult> {
        match self {
            SchemeId::ProposedAB => reference_solve(link),
            SchemeId::CoopNoAB => coop_no_ab_solve(link),
            SchemeId::Independent => independent_solve(link),
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "proposed_ab" | "proposed" | "ab" => Ok(SchemeId::ProposedAB),
            "coop_no_ab" | "coop" => Ok(SchemeId::CoopNoAB),
            "independent" | "indep" => Ok(SchemeId::Independent),
            other => Err(Error::Config(format!("unknown scheme `{other}`"))),
        }
    }
}

/// Concave constraint `g(x) >= 0` of the barrier program.
#[derive(Debug, Clone)]
enum Constraint {
    /// `b - a.x >= 0`.
    Linear { a: Vec<(usize, f64)>, b: f64 },
    /// `sum lin + sum t log2(1 + gain x / t) - x[cap] >= 0`.
    RateCap { cap: usize, linear: Vec<(usize, f64)>, persp: Vec<(usize, usize, f64)> },
}

impl Constraint {
    fn value(&self, x: &[f64]) -> f64 {
        match self {
            Constraint::Linear { a, b } => b - a.iter().map(|&(j, c)| c * x[j]).sum::<f64>(),
            Constraint::RateCap { cap, linear, persp } => {
                linear.iter().map(|&(j, c)| c * x[j]).sum::<f64>()
                    + persp.iter().map(|&(t, e, g)| perspective(x[t], x[e], g)).sum::<f64>()
                    - x[*cap]
            }
        }
    }

    /// Adds the gradient to `grad` and the Hessian to `hess`, both scaled by `w`.
    fn accumulate(&self, x: &[f64], w: f64, grad: &mut DVector<f64>, hess: Option<&mut DMatrix<f64>>) {
        match self {
            Constraint::Linear { a, .. } => {
                for &(j, c) in a {
                    grad[j] -= w * c;
                }
            }
            Constraint::RateCap { cap, linear, persp } => {
                grad[*cap] -= w;
                for &(j, c) in linear {
                    grad[j] += w * c;
                }
                let ln2 = std::f64::consts::LN_2;
                let mut hess = hess;
                for &(t, e, g) in persp {
                    let u = g * x[e] / x[t];
                    grad[t] += w * ((u.ln_1p() - u / (1.0 + u)) / ln2);
                    grad[e] += w * (g / ((1.0 + u) * ln2));
                    if let Some(h) = hess.as_deref_mut() {
                        // phi'' = -1 / ((1+u)^2 ln2) for phi(u) = log2(1+u).
                        let c2 = -1.0 / ((1.0 + u) * (1.0 + u) * ln2) / x[t];
                        h[(t, t)] += w * c2 * u * u;
                        h[(t, e)] -= w * c2 * u * g;
                        h[(e, t)] -= w * c2 * u * g;
                        h[(e, e)] += w * c2 * g * g;
                    }
                }
            }
        }
    }
}

/// `max c.x` subject to concave constraints, with a strictly feasible start.
#[derive(Debug, Clone)]
struct BarrierProgram {
    objective: Vec<f64>,
    constraints: Vec<Constraint>,
}

#[derive(Debug, Clone)]
struct BarrierSolution {
    x: Vec<f64>,
    /// Multiplier estimates `1 / (s g_i)` per constraint.
    multipliers: Vec<f64>,
}

const BARRIER_GROWTH: f64 = 10.0;
const BARRIER_FINAL: f64 = 1e11;
const NEWTON_TOL: f64 = 1e-9;
/// Newton decrement accepted when round-off blocks further progress; the
/// objective error it implies is below `1e-3 / s`.
const ROUNDOFF_DECREMENT: f64 = 1e-3;

impl BarrierProgram {
    fn n(&self) -> usize {
        self.objective.len()
    }

    fn strictly_feasible(&self, x: &[f64]) -> bool {
        self.constraints.iter().all(|c| c.value(x) > 0.0)
    }

    /// `-s c.x - sum ln g_i(x)`, infinite outside the domain.
    fn merit(&self, x: &[f64], s: f64) -> f64 {
        let mut f = -s * self.objective.iter().zip(x).map(|(c, v)| c * v).sum::<f64>();
        for c in &self.constraints {
            let g = c.value(x);
            if !(g > 0.0) {
                return f64::INFINITY;
            }
            f -= g.ln();
        }
        f
    }

    fn newton_system(&self, x: &[f64], s: f64) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.n();
        let mut grad = DVector::from_iterator(n, self.objective.iter().map(|c| -s * c));
        let mut hess = DMatrix::zeros(n, n);
        for c in &self.constraints {
            let g = c.value(x);
            let mut dg = DVector::zeros(n);
            let mut d2g = DMatrix::zeros(n, n);
            c.accumulate(x, 1.0, &mut dg, Some(&mut d2g));
            grad -= &dg / g;
            hess += &dg * dg.transpose() / (g * g) - d2g / g;
        }
        (grad, hess)
    }

    fn solve(&self, start: Vec<f64>) -> Result<BarrierSolution> {
        if !self.strictly_feasible(&start) {
            return Err(Error::Barrier { barrier: 0.0, reason: "starting point is not strictly feasible".into() });
        }
        let mut x = start;
        let mut s = 1.0;
        loop {
            self.center(&mut x, s)?;
            if s >= BARRIER_FINAL {
                break;
            }
            s = (s * BARRIER_GROWTH).min(BARRIER_FINAL);
        }
        let multipliers = self.constraints.iter().map(|c| 1.0 / (s * c.value(&x))).collect();
        Ok(BarrierSolution { x, multipliers })
    }

    fn center(&self, x: &mut Vec<f64>, s: f64) -> Result<()> {
        let fail = |reason: String| Error::Barrier { barrier: s, reason };
        let mut stalled = 0;
        for _ in 0..200 {
            let (grad, hess) = self.newton_system(x, s);
            let step = hess
                .clone()
                .cholesky()
                .map(|c| c.solve(&(-&grad)))
                .or_else(|| hess.lu().solve(&(-&grad)))
                .ok_or_else(|| fail("singular Newton system".into()))?;
            let decrement = -grad.dot(&step);
            if decrement / 2.0 <= NEWTON_TOL {
                return Ok(());
            }
            let f0 = self.merit(x, s);
            let mut alpha = 1.0;
            loop {
                let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(v, d)| v + alpha * d).collect();
                let f = self.merit(&trial, s);
                if f <= f0 - 0.25 * alpha * decrement {
                    // The merit is of size s; once its decrease is at round-off
                    // level, further steps only chase noise in the gradient.
                    stalled = if f0 - f <= 1e-13 * f0.abs() { stalled + 1 } else { 0 };
                    *x = trial;
                    break;
                }
                alpha *= 0.5;
                if alpha < 1e-14 {
                    if decrement <= ROUNDOFF_DECREMENT {
                        return Ok(());
                    }
                    return Err(fail(format!("line search stalled with decrement {decrement:.3e} at {x:?}")));
                }
            }
            if stalled >= 3 && decrement <= ROUNDOFF_DECREMENT {
                return Ok(());
            }
        }
        Err(fail(format!("centering did not converge at {x:?}")))
    }
}

/// Positions of the slot variables in the barrier vector.
#[derive(Debug, Clone, Copy)]
struct Layout {
    t1: usize,
    t2: Option<usize>,
    t3: usize,
    t41: Option<usize>,
    t42: usize,
    tau41: Option<usize>,
    tau42: usize,
    /// Throughput variables: the common rate, or the two device rates.
    r: (usize, Option<usize>),
    n: usize,
}

impl Layout {
    fn new(restr: Restrictions, two_rates: bool) -> Self {
        let mut n = 0;
        let mut next = || {
            n += 1;
            n - 1
        };
        let t1 = next();
        let t2 = restr.backscatter.then(&mut next);
        let t3 = next();
        let t41 = restr.forwarding.then(&mut next);
        let t42 = next();
        let tau41 = restr.forwarding.then(&mut next);
        let tau42 = next();
        let r0 = next();
        let r1 = two_rates.then(&mut next);
        Layout { t1, t2, t3, t41, t42, tau41, tau42, r: (r0, r1), n }
    }

    fn allocation(&self, x: &[f64], s: &Scaled) -> Allocation {
        let get = |i: Option<usize>| i.map_or(0.0, |i| x[i]);
        Allocation {
            t1: x[self.t1],
            t2: get(self.t2),
            t3: x[self.t3],
            t41: get(self.t41),
            t42: x[self.t42],
            tau41: get(self.tau41) * s.energy_unit,
            tau42: x[self.tau42] * s.energy_unit,
        }
    }
}

/// Builds the cooperative program. With `weights` the objective is
/// `w1 R1 + w2 R2`; otherwise it is the common throughput.
fn cooperative_program(s: &Scaled, restr: Restrictions, weights: Option<(f64, f64)>) -> (BarrierProgram, Layout, Vec<f64>) {
    let lay = Layout::new(restr, weights.is_some());
    let slots: Vec<usize> = [Some(lay.t1), lay.t2, Some(lay.t3), lay.t41, Some(lay.t42)].into_iter().flatten().collect();
    let mut cons = Vec::new();
    for j in 0..lay.n {
        cons.push(Constraint::Linear { a: vec![(j, -1.0)], b: 0.0 });
    }
    cons.push(Constraint::Linear { a: slots.iter().map(|&j| (j, 1.0)).collect(), b: s.time_budget });
    let mut energy = vec![(lay.t1, -1.0), (lay.tau42, 1.0)];
    if let Some(t2) = lay.t2 {
        energy.push((t2, -s.kappa));
    }
    if let Some(tau41) = lay.tau41 {
        energy.push((tau41, 1.0));
    }
    cons.push(Constraint::Linear { a: energy, b: 0.0 });

    let (r1, r2) = match lay.r {
        (r, None) => (r, r),
        (a, Some(b)) => (a, b),
    };
    let relay_branch = Constraint::RateCap {
        cap: r1,
        linear: lay.t2.map(|t2| vec![(t2, s.backscatter)]).unwrap_or_default(),
        persp: vec![(lay.t3, lay.t1, s.rho12)],
    };
    let mut direct = vec![(lay.t3, lay.t1, s.rho13)];
    if let (Some(t41), Some(tau41)) = (lay.t41, lay.tau41) {
        direct.push((t41, tau41, s.snr2));
    }
    cons.push(relay_branch);
    cons.push(Constraint::RateCap { cap: r1, linear: vec![], persp: direct });
    cons.push(Constraint::RateCap { cap: r2, linear: vec![], persp: vec![(lay.t42, lay.tau42, s.snr2)] });

    let mut objective = vec![0.0; lay.n];
    match weights {
        None => objective[r1] = 1.0,
        Some((w1, w2)) => {
            objective[r1] = w1;
            objective[r2] = w2;
        }
    }
    let program = BarrierProgram { objective, constraints: cons };

    // Strictly feasible start: equal slots using half the budget, a quarter
    // of the harvested energy in each relay slot, rates at half their caps.
    let mut x = vec![0.0; lay.n];
    let share = 0.5 * s.time_budget / slots.len() as f64;
    for &j in &slots {
        x[j] = share;
    }
    let harvested = x[lay.t1] + lay.t2.map_or(0.0, |t2| s.kappa * x[t2]);
    x[lay.tau42] = 0.25 * harvested;
    if let Some(tau41) = lay.tau41 {
        x[tau41] = 0.25 * harvested;
    }
    let caps: Vec<f64> = program.constraints[program.constraints.len() - 3..].iter().map(|c| c.value(&x)).collect();
    x[r1] = 0.5 * caps[0].min(caps[1]);
    x[r2] = 0.5 * caps[2];
    if r1 == r2 {
        x[r1] = 0.5 * caps.iter().copied().fold(f64::INFINITY, f64::min);
    }
    (program, lay, x)
}

/// Multipliers of the time, energy and rate rows from barrier estimates.
fn barrier_duals(sol: &BarrierSolution, n: usize, s: &Scaled) -> DualVars {
    let m = &sol.multipliers;
    let v = [m[n], m[n + 1], m[n + 2], m[n + 3], m[n + 4]];
    DualVars::from_scaled(&v, s)
}

fn reference_with(link: &BackscatterLink, restr: Restrictions) -> Result<SolveResult> {
    let s = Scaled::new(link);
    let (program, lay, start) = cooperative_program(&s, restr, None);
    let sol = program.solve(start)?;
    let alloc = lay.allocation(&sol.x, &s);
    Ok(SolveResult::from_allocation(alloc, link, barrier_duals(&sol, lay.n, &s)))
}

/// Common-throughput optimum of the backscatter-assisted scheme by the barrier method.
pub fn reference_solve(link: &BackscatterLink) -> Result<SolveResult> {
    reference_with(link, Restrictions::ALL)
}

/// Common-throughput optimum with the backscatter slot removed.
pub fn coop_no_ab_solve(link: &BackscatterLink) -> Result<SolveResult> {
    reference_with(link, Restrictions::NO_BACKSCATTER)
}

/// Rate pair maximising `w1 R1 + (1 - w1) R2` over the backscatter-assisted
/// scheme; one point of the throughput region boundary.
pub fn wsr_solve(link: &BackscatterLink, w1: f64) -> Result<(f64, f64, Allocation)> {
    wsr_solve_with(link, w1, Restrictions::ALL)
}

/// Weighted-sum-rate point for any scheme.
pub fn wsr_solve_scheme(link: &BackscatterLink, w1: f64, scheme: SchemeId) -> Result<(f64, f64, Allocation)> {
    match scheme {
        SchemeId::Independent => independent_wsr(link, w1),
        other => wsr_solve_with(link, w1, other.restrictions()),
    }
}

fn wsr_solve_with(link: &BackscatterLink, w1: f64, restr: Restrictions) -> Result<(f64, f64, Allocation)> {
    if !(0.0..=1.0).contains(&w1) {
        return Err(Error::Domain(format!("weight must lie in [0, 1], got {w1}")));
    }
    let s = Scaled::new(link);
    let (program, lay, start) = cooperative_program(&s, restr, Some((w1, 1.0 - w1)));
    let sol = program.solve(start)?;
    let alloc = lay.allocation(&sol.x, &s);
    let r = evaluate(&alloc, link);
    Ok((r.r1, r.r2, alloc))
}

/// Independent harvest-then-transmit program: `(t1, t2, t3, R...)` with the
/// far device sending in `t2` and the near device in `t3`.
fn independent_program(s: &Scaled, weights: Option<(f64, f64)>) -> (BarrierProgram, Vec<f64>) {
    let two = weights.is_some();
    let n = if two { 5 } else { 4 };
    let (r1, r2) = if two { (3, 4) } else { (3, 3) };
    let mut cons: Vec<Constraint> = (0..n).map(|j| Constraint::Linear { a: vec![(j, -1.0)], b: 0.0 }).collect();
    cons.push(Constraint::Linear { a: vec![(0, 1.0), (1, 1.0), (2, 1.0)], b: s.time_budget });
    cons.push(Constraint::RateCap { cap: r1, linear: vec![], persp: vec![(1, 0, s.rho13)] });
    cons.push(Constraint::RateCap { cap: r2, linear: vec![], persp: vec![(2, 0, s.snr2)] });
    let mut objective = vec![0.0; n];
    match weights {
        None => objective[r1] = 1.0,
        Some((w1, w2)) => {
            objective[r1] = w1;
            objective[r2] = w2;
        }
    }
    let program = BarrierProgram { objective, constraints: cons };
    let mut x = vec![s.time_budget / 6.0; n];
    let c1 = program.constraints[n + 1].value(&{
        let mut y = x.clone();
        y[r1] = 0.0;
        y
    });
    let c2 = perspective(x[2], x[0], s.snr2);
    x[r1] = 0.5 * c1;
    x[r2] = 0.5 * c2;
    if !two {
        x[r1] = 0.5 * c1.min(c2);
    }
    (program, x)
}

/// Independent-scheme allocation in the main protocol's slots.
fn independent_allocation(x: &[f64], s: &Scaled) -> Allocation {
    Allocation { t1: x[0], t3: x[1], t42: x[2], tau42: x[0] * s.energy_unit, ..Allocation::default() }
}

/// Rates of the independent scheme for an allocation in the main protocol's
/// slots: the far device sends directly in `t3`, the near device in `t42`
/// with energy `tau42`. The far device's rate sits in `r1_3`.
pub fn independent_rates(alloc: &Allocation, link: &BackscatterLink) -> RateBreakdown {
    let s = Scaled::new(link);
    let far = s.bandwidth * perspective(alloc.t3, alloc.t1, s.rho13);
    let near = s.bandwidth * perspective(alloc.t42, alloc.tau42 / s.energy_unit, s.snr2);
    RateBreakdown { r1_3: far, r1: far, r2: near, rbar: far.min(near), ..RateBreakdown::default() }
}

/// Common-throughput optimum of independent harvest-then-transmit.
///
/// Far device rate `t2 log2(1 + rho13 t1 / t2)`, near device rate
/// `t3 log2(1 + snr2 t1 / t3)`, `t1 + t2 + t3 <= 1 - t0`.
pub fn independent_solve(link: &BackscatterLink) -> Result<SolveResult> {
    let s = Scaled::new(link);
    let (program, start) = independent_program(&s, None);
    let sol = program.solve(start)?;
    let alloc = independent_allocation(&sol.x, &s);
    let m = &sol.multipliers;
    // Time row, no energy row, then the two rate rows.
    let duals = DualVars::from_scaled(&[m[4], 0.0, 0.0, m[5], m[6]], &s);
    let mut result = SolveResult::from_allocation(alloc, link, duals);
    result.rates = independent_rates(&alloc, link);
    result.rbar = result.rates.rbar;
    Ok(result)
}

fn independent_wsr(link: &BackscatterLink, w1: f64) -> Result<(f64, f64, Allocation)> {
    if !(0.0..=1.0).contains(&w1) {
        return Err(Error::Domain(format!("weight must lie in [0, 1], got {w1}")));
    }
    let s = Scaled::new(link);
    let (program, start) = independent_program(&s, Some((w1, 1.0 - w1)));
    let sol = program.solve(start)?;
    let alloc = independent_allocation(&sol.x, &s);
    let r = independent_rates(&alloc, link);
    Ok((r.r1, r.r2, alloc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysmodel::{reference_gains::*, ChannelState, SystemParams};

    fn link_with(p: SystemParams, h1: f64, h2: f64, h12: f64) -> BackscatterLink {
        let ch = ChannelState::real(h1, h2, h12, &p).unwrap();
        BackscatterLink::new(p, ch).unwrap()
    }

    fn reference_link() -> BackscatterLink {
        link_with(SystemParams::default(), H1, H2, H12_SPLIT)
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn reference_matches_known_optimum() {
        let r = reference_solve(&reference_link()).unwrap();
        assert!((r.rbar - 74_309.94).abs() < 0.05, "{}", r.rbar);
    }

    #[test]
    fn coop_without_backscatter_matches_dual_solver() {
        let p = SystemParams { rs: 4e7, rb: 2e6, ..SystemParams::default() }.with_beta(0.6);
        let l = link_with(p, H1, H2, H12_SPLIT);
        let barrier = coop_no_ab_solve(&l).unwrap();
        let dual = SchemeId::CoopNoAB.solve_dual(&l, &SolverOptions::default()).unwrap();
        assert_eq!(barrier.alloc.t2, 0.0);
        assert!(rel(barrier.rbar, dual.rbar) < 1e-8, "{} vs {}", barrier.rbar, dual.rbar);
        let full = reference_solve(&l).unwrap();
        assert!(full.rbar > barrier.rbar);
    }

    #[test]
    fn independent_balances_rates() {
        let r = independent_solve(&reference_link()).unwrap();
        assert!((r.rates.r1 - r.rates.r2).abs() <= 1e-6 * r.rbar);
        let dual = SchemeId::Independent.solve_dual(&reference_link(), &SolverOptions::default()).unwrap();
        assert!(rel(r.rbar, dual.rbar) < 1e-8, "{} vs {}", r.rbar, dual.rbar);
    }

    #[test]
    fn symmetric_devices_split_time_evenly() {
        let r = independent_solve(&link_with(SystemParams::default(), 2e-6, 2e-6, 2e-6)).unwrap();
        assert!((r.alloc.t3 - r.alloc.t42).abs() < 1e-6 * r.alloc.t3);
    }

    #[test]
    fn power_and_noise_scaling_is_invariant() {
        let base = reference_solve(&reference_link()).unwrap();
        let k = 7.0;
        let p = SystemParams { p1: k, n0: 1e-12 * k, ns: 1e-12 * k, ..SystemParams::default() };
        let scaled = reference_solve(&link_with(p, H1, H2, H12_SPLIT)).unwrap();
        assert!(rel(scaled.rbar, base.rbar) < 1e-6, "{} vs {}", scaled.rbar, base.rbar);
    }

    #[test]
    fn weighted_sum_extremes() {
        let l = reference_link();
        let (r1_lo, r2_lo, _) = wsr_solve(&l, 0.0).unwrap();
        let (r1_hi, r2_hi, _) = wsr_solve(&l, 1.0).unwrap();
        assert!(r1_lo < 1e-3 * r2_lo);
        assert!(r2_hi < 1e-3 * r1_hi);
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in SchemeId::ALL {
            assert_eq!(s.name().parse::<SchemeId>().unwrap(), s);
        }
        assert!("bogus".parse::<SchemeId>().is_err());
    }
}
