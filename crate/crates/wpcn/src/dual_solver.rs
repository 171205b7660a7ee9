//! Dual decomposition solver for the common-throughput problem.
//!
//! The partial Lagrangian keeps the sign restrictions and relaxes the time,
//! energy and three rate constraints with multipliers `lambda1..lambda5`.
//! For fixed multipliers its maximiser over each slot block is pinned by a
//! closed-form ratio: the harvest-to-transmit ratio `z1 = t1 / t3` from a
//! quadratic, and relay SNRs `z41`, `z42` from the Lambert W function. Once
//! the three ratios are fixed every rate is linear in the slot lengths and the
//! remaining allocation is a small linear program.
//!
//! Two multiplier updates are provided:
//!
//! * [`DualUpdate::CuttingPlane`] (default) keeps every block the ratio
//!   oracle has produced as a column of a master linear program and takes the
//!   master's row prices as the next multipliers. The master value is an
//!   achievable throughput at every iteration and converges to the optimum
//!   within a handful of iterations.
//! * [`DualUpdate::Subgradient`] moves the multipliers along the constraint
//!   violations of the fixed-ratio allocation, `lambda + alpha_k nu`, and
//!   projects back onto the admissible set. It is retained for comparison;
//!   because the fixed-ratio program balances its own rate constraints, the
//!   violations it reports are tiny and progress is slow.
//!
//! Internally everything runs in the units of [`Scaled`]: rates in multiples
//! of `B`, relay energy in multiples of `eta P1 h2`.

use std::f64::consts::LN_2;

use crate::error::{Error, Result};
use crate::numerics::{
    positive_quadratic_root, project_duals, snr_from_level, solve_lp, DualConstraints, DualVector, LpProblem,
    LpSolution, Relation,
};
use crate::phy::BackscatterLink;
use crate::rates::{evaluate, feasibility, Allocation, RateBreakdown, Scaled, Slack};

/// Lagrange multipliers in physical units.
///
/// `lam1` prices frame time (bits per unit time), `lam2` relay energy (bits
/// per joule), `lam3..lam5` weight the three rate constraints: far device via
/// the relay, far device end to end, relay's own data.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DualVars {
    pub lam1: f64,
    pub lam2: f64,
    pub lam3: f64,
    pub lam4: f64,
    pub lam5: f64,
}

impl DualVars {
    pub fn to_scaled(&self, s: &Scaled) -> DualVector {
        [
            self.lam1 / s.bandwidth,
            self.lam2 * s.energy_unit / s.bandwidth,
            self.lam3,
            self.lam4,
            self.lam5,
        ]
    }

    pub fn from_scaled(v: &DualVector, s: &Scaled) -> Self {
        DualVars {
            lam1: v[0] * s.bandwidth,
            lam2: v[1] * s.bandwidth / s.energy_unit,
            lam3: v[2],
            lam4: v[3],
            lam5: v[4],
        }
    }
}

/// Slot ratios pinned by the stationarity conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ratios {
    /// Harvest time per unit of the far device's active time, `t1 / t3`.
    pub z1: f64,
    /// Relay SNR while forwarding.
    pub z41: f64,
    /// Relay SNR on its own data.
    pub z42: f64,
}

/// Slots a scheme may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Restrictions {
    pub backscatter: bool,
    pub forwarding: bool,
}

impl Restrictions {
    pub const ALL: Restrictions = Restrictions { backscatter: true, forwarding: true };
    pub const NO_BACKSCATTER: Restrictions = Restrictions { backscatter: false, forwarding: true };
    pub const DIRECT_ONLY: Restrictions = Restrictions { backscatter: false, forwarding: false };
}

/// How the backscatter-time stationarity condition
/// `-lambda1 + kappa lambda2 + C Rb lambda3 = 0` enters the admissible set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackscatterStationarity {
    /// Imposed as an equality on every iterate.
    Equality,
    /// Imposed as `<= 0`, with equality whenever backscatter time is used.
    Complementary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// `alpha_k = step0 / k`.
    Diminishing,
    /// `alpha_k = step0`.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DualUpdate {
    CuttingPlane,
    Subgradient(StepRule),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub update: DualUpdate,
    /// Step-size scale of the subgradient update.
    pub step0: f64,
    /// Stop once successive multiplier vectors (solver units) differ by at most this.
    pub eps: f64,
    pub max_iter: usize,
    /// Relative master-value improvement below which polishing stops.
    pub polish_tol: f64,
    pub polish_max_iter: usize,
    pub restrictions: Restrictions,
    pub backscatter_stationarity: BackscatterStationarity,
    /// Starting multipliers; by default the row prices of the master program
    /// built from generic starting blocks.
    pub initial: Option<DualVars>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            update: DualUpdate::CuttingPlane,
            step0: 0.1,
            eps: 1e-3,
            max_iter: 500,
            polish_tol: 1e-15,
            polish_max_iter: 200,
            restrictions: Restrictions::ALL,
            backscatter_stationarity: BackscatterStationarity::Complementary,
            initial: None,
        }
    }
}

impl SolverOptions {
    pub fn subgradient(step0: f64) -> Self {
        SolverOptions { update: DualUpdate::Subgradient(StepRule::Diminishing), step0, ..Default::default() }
    }

    pub fn with_restrictions(mut self, r: Restrictions) -> Self {
        self.restrictions = r;
        self
    }
}

/// One iteration of the multiplier update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub iteration: usize,
    /// Throughput achievable with the allocation recovered at this iteration (bits).
    pub rbar: f64,
    /// `(d* - rbar) / d*` with `d*` the terminal optimum.
    pub gap: f64,
    /// `(g(lambda) - d*) / d*` where `g` is the dual function at this
    /// iteration's multipliers, an upper bound on the optimum.
    pub bound_gap: f64,
    /// Distance to the next multiplier vector (solver units).
    pub step: f64,
    pub duals: DualVars,
}

/// Optimality residuals at termination, in solver units; every entry is
/// relative to the price of time or to the throughput.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KktReport {
    /// `|lambda3 + lambda4 + lambda5 - 1|`.
    pub weight_sum: f64,
    /// Residual of the backscatter-time condition (complementary form: the
    /// positive part when no backscatter time is used).
    pub backscatter_stationarity: f64,
    /// Largest `|lambda_i nu_i|` over the energy and rate constraints, relative to throughput.
    pub complementary_slackness: f64,
    /// Largest partial-derivative residual of the Lagrangian over the slot
    /// variables, relative to the price of time.
    pub stationarity: f64,
    /// Time-constraint violation `|sum t + t0 - 1|`.
    pub time_residual: f64,
}

impl KktReport {
    pub fn max_residual(&self) -> f64 {
        self.complementary_slackness.max(self.stationarity).max(self.time_residual)
    }
}

/// Output of a solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    /// Common throughput (bits per frame), re-evaluated from `alloc`.
    pub rbar: f64,
    pub rates: RateBreakdown,
    pub alloc: Allocation,
    /// `(P3, P41, P42)` in watts, zero for empty slots.
    pub powers: (f64, f64, f64),
    pub duals: DualVars,
    pub trace: Vec<TraceEntry>,
    pub iterations: usize,
    pub kkt: Option<KktReport>,
    /// `(g(lambda) - rbar) / rbar` at the returned multipliers, when available.
    pub certified_gap: Option<f64>,
}

impl SolveResult {
    pub(crate) fn from_allocation(alloc: Allocation, link: &BackscatterLink, duals: DualVars) -> Self {
        let rates = evaluate(&alloc, link);
        SolveResult {
            rbar: rates.rbar,
            rates,
            alloc,
            powers: alloc.powers(&link.params, &link.ch),
            duals,
            trace: Vec::new(),
            iterations: 0,
            kkt: None,
            certified_gap: None,
        }
    }
}

fn norm_diff(a: &DualVector, b: &DualVector) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn log2_1p(x: f64) -> f64 {
    x.ln_1p() / LN_2
}

/// Ratio `z1` from the stationarity of the Lagrangian in `t1`:
/// `a z^2 + b z + c = 0` with `k = lambda1 - lambda2` (solver units),
/// `a = k rho12 rho13 ln2`, `b = k (rho12 + rho13) ln2 - (lambda3 + lambda4) rho12 rho13`,
/// `c = k ln2 - lambda3 rho12 - lambda4 rho13`.
fn harvest_ratio(l: &DualVector, s: &Scaled) -> Result<f64> {
    let k = l[0] - l[1];
    let (p12, p13) = (s.rho12, s.rho13);
    let a = k * p12 * p13 * LN_2;
    let b = k * (p12 + p13) * LN_2 - (l[2] + l[3]) * p12 * p13;
    let c = k * LN_2 - l[2] * p12 - l[3] * p13;
    positive_quadratic_root(a, b, c)
}

/// Relay SNR from the stationarity in the slot length, `g(z) = lambda1 ln2 / lambda_k`.
fn relay_snr(lam_time: f64, lam_rate: f64) -> Result<f64> {
    if !(lam_time > 0.0 && lam_rate > 0.0) {
        return Err(Error::DegenerateDual(format!(
            "relay SNR needs positive multipliers, got {lam_time:.3e} and {lam_rate:.3e}"
        )));
    }
    snr_from_level(lam_time * LN_2 / lam_rate)
}

/// Closed-form slot ratios maximising the Lagrangian at `duals`.
pub fn stationarity_ratios(duals: &DualVars, link: &BackscatterLink) -> Result<Ratios> {
    let s = Scaled::new(link);
    let l = duals.to_scaled(&s);
    for (name, v) in [("lambda1", l[0]), ("lambda4", l[3]), ("lambda5", l[4])] {
        if !(v > 0.0) {
            return Err(Error::DegenerateDual(format!("{name} = {v:.3e} must be positive")));
        }
    }
    Ok(Ratios { z1: harvest_ratio(&l, &s)?, z41: relay_snr(l[0], l[3])?, z42: relay_snr(l[0], l[4])? })
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Block {
    Backscatter,
    Harvest,
    Active(f64),
    Forward(f64),
    Own(f64),
}

/// A master-program column: one unit of slot time (one unit of `t3` for
/// the active block) and what it consumes and delivers.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Column {
    block: Block,
    time: f64,
    /// Net relay energy consumed (negative when harvested).
    energy: f64,
    rates: [f64; 3],
}

impl Column {
    fn new(block: Block, s: &Scaled) -> Self {
        match block {
            Block::Backscatter => Column { block, time: 1.0, energy: -s.kappa, rates: [s.backscatter, 0.0, 0.0] },
            Block::Harvest => Column { block, time: 1.0, energy: -1.0, rates: [0.0; 3] },
            Block::Active(z) => Column {
                block,
                time: 1.0 + z,
                energy: -z,
                rates: [log2_1p(s.rho12 * z), log2_1p(s.rho13 * z), 0.0],
            },
            Block::Forward(z) => Column { block, time: 1.0, energy: z / s.snr2, rates: [0.0, log2_1p(z), 0.0] },
            Block::Own(z) => Column { block, time: 1.0, energy: z / s.snr2, rates: [0.0, 0.0, log2_1p(z)] },
        }
    }
}

/// Master program over columns plus the throughput variable (last).
fn master_program(cols: &[Column], s: &Scaled) -> LpProblem {
    let n = cols.len() + 1;
    let mut objective = vec![0.0; n];
    objective[n - 1] = 1.0;
    let mut p = LpProblem::new(objective);
    let mut time: Vec<f64> = cols.iter().map(|c| c.time).collect();
    time.push(0.0);
    p.row(time, Relation::Eq, s.time_budget);
    let mut energy: Vec<f64> = cols.iter().map(|c| c.energy).collect();
    energy.push(0.0);
    p.row(energy, Relation::Le, 0.0);
    for b in 0..3 {
        let mut row: Vec<f64> = cols.iter().map(|c| -c.rates[b]).collect();
        row.push(1.0);
        p.row(row, Relation::Le, 0.0);
    }
    p
}

fn master_duals(sol: &LpSolution) -> DualVector {
    [sol.duals[0], sol.duals[1], sol.duals[2], sol.duals[3], sol.duals[4]]
}

/// Allocation in physical units from slot lengths in solver units.
fn allocation_from_columns(cols: &[Column], weights: &[f64], s: &Scaled) -> Allocation {
    let mut a = Allocation::default();
    let mut tau41 = 0.0;
    let mut tau42 = 0.0;
    for (c, &w) in cols.iter().zip(weights) {
        if w <= 0.0 {
            continue;
        }
        match c.block {
            Block::Backscatter => a.t2 += w,
            Block::Harvest => a.t1 += w,
            Block::Active(z) => {
                a.t3 += w;
                a.t1 += z * w;
            }
            Block::Forward(z) => {
                a.t41 += w;
                tau41 += z / s.snr2 * w;
            }
            Block::Own(z) => {
                a.t42 += w;
                tau42 += z / s.snr2 * w;
            }
        }
    }
    a.tau41 = tau41 * s.energy_unit;
    a.tau42 = tau42 * s.energy_unit;
    a
}

/// Ratios of an allocation, or `None` for an empty block.
fn merged_ratios(a: &Allocation, s: &Scaled) -> (Option<f64>, Option<f64>, Option<f64>) {
    let ratio = |num: f64, den: f64| if den > 0.0 { Some(num / den) } else { None };
    (
        ratio(a.t1, a.t3),
        ratio(s.snr2 * a.tau41 / s.energy_unit, a.t41),
        ratio(s.snr2 * a.tau42 / s.energy_unit, a.t42),
    )
}

fn fixed_ratio_columns(r: &Ratios, restr: Restrictions, s: &Scaled) -> Vec<Column> {
    let mut cols = Vec::with_capacity(4);
    if restr.backscatter {
        cols.push(Column::new(Block::Backscatter, s));
    }
    cols.push(Column::new(Block::Active(r.z1), s));
    if restr.forwarding {
        cols.push(Column::new(Block::Forward(r.z41), s));
    }
    cols.push(Column::new(Block::Own(r.z42), s));
    cols
}

/// Best allocation with the three ratios pinned: the linear program in
/// `(t2, t3, t41, t42, rbar)` with `t1 = z1 t3`, `tau4x = (z4x / rho2) t4x`,
/// total time at equality and the relay energy budget respected.
///
/// Returns the allocation, its common throughput in bits, and the row prices
/// of the program converted to physical multipliers.
pub fn recover_primal(ratios: &Ratios, link: &BackscatterLink, restr: Restrictions) -> Result<(Allocation, f64, DualVars)> {
    let s = Scaled::new(link);
    let cols = fixed_ratio_columns(ratios, restr, &s);
    let sol = solve_lp(&master_program(&cols, &s))?;
    let alloc = allocation_from_columns(&cols, &sol.x, &s);
    let rbar = evaluate(&alloc, link).rbar;
    Ok((alloc, rbar, DualVars::from_scaled(&master_duals(&sol), &s)))
}

/// Violations `nu` of the relaxed constraints at `(alloc, rbar)`, in physical units:
/// time, relay energy, and `rbar` minus each of the three rate expressions.
pub fn subgradient(alloc: &Allocation, rbar: f64, link: &BackscatterLink) -> [f64; 5] {
    let r = evaluate(alloc, link);
    let slack = feasibility(alloc, link);
    [-slack.time, -slack.energy, rbar - r.r1_1 - r.r1_2, rbar - r.r1_3 - r.r1_4, rbar - r.r2]
}

fn scaled_subgradient(alloc: &Allocation, rbar: f64, link: &BackscatterLink, s: &Scaled) -> DualVector {
    let v = subgradient(alloc, rbar, link);
    [v[0], v[1] / s.energy_unit, v[2] / s.bandwidth, v[3] / s.bandwidth, v[4] / s.bandwidth]
}

/// Best value per unit time of the active block, `max_z (lambda2 z + lambda3 L12 + lambda4 L13) / (1 + z)`,
/// and its maximiser.
fn active_block_value(l: &DualVector, s: &Scaled) -> (f64, f64) {
    let num = |z: f64| l[1] * z + l[2] * log2_1p(s.rho12 * z) + l[3] * log2_1p(s.rho13 * z);
    let slope = |z: f64| l[1] + (l[2] * s.rho12 / (1.0 + s.rho12 * z) + l[3] * s.rho13 / (1.0 + s.rho13 * z)) / LN_2;
    // The numerator is concave, so slope(z)(1 + z) - num(z) is decreasing.
    let sign = |z: f64| slope(z) * (1.0 + z) - num(z);
    if l[2] + l[3] <= 0.0 {
        return (l[1].max(0.0), f64::INFINITY);
    }
    let mut hi = 1.0;
    while sign(hi) > 0.0 && hi < 1e15 {
        hi *= 4.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sign(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let z = 0.5 * (lo + hi);
    (num(z) / (1.0 + z), z)
}

/// Relay slot value per unit time, `max_z lambda_k log2(1+z) - lambda2 z / snr2`.
fn relay_block_value(lam2: f64, lam_rate: f64, s: &Scaled) -> f64 {
    if lam_rate <= 0.0 {
        return 0.0;
    }
    if lam2 <= 0.0 {
        return f64::INFINITY;
    }
    let z = (lam_rate * s.snr2 / (lam2 * LN_2) - 1.0).max(0.0);
    lam_rate * log2_1p(z) - lam2 * z / s.snr2
}

/// Dual function with the time constraint kept: an upper bound on the
/// optimum (solver units) for any multipliers with `lambda2 >= 0` and
/// `lambda3 + lambda4 + lambda5 = 1`.
fn dual_function(l: &DualVector, s: &Scaled, restr: Restrictions) -> f64 {
    let mut best = l[1].max(0.0);
    if restr.backscatter {
        best = best.max(s.kappa * l[1] + s.backscatter * l[2]);
    }
    best = best.max(active_block_value(l, s).0);
    if restr.forwarding {
        best = best.max(relay_block_value(l[1], l[3], s));
    }
    best = best.max(relay_block_value(l[1], l[4], s));
    s.time_budget * best
}

/// Upper bound on the common throughput (bits) certified by `duals`.
///
/// Fails if the multipliers are outside the set on which the bound is valid.
pub fn dual_bound(duals: &DualVars, link: &BackscatterLink, restr: Restrictions) -> Result<f64> {
    let s = Scaled::new(link);
    let l = duals.to_scaled(&s);
    if l.iter().any(|&v| v < 0.0) || (l[2] + l[3] + l[4] - 1.0).abs() > 1e-9 {
        return Err(Error::Domain("dual bound needs nonnegative multipliers with unit rate weights".into()));
    }
    Ok(dual_function(&l, &s, restr) * s.bandwidth)
}

fn admissible_set(s: &Scaled, restr: Restrictions, form: BackscatterStationarity) -> DualConstraints {
    let mut c = DualConstraints { equalities: vec![([0.0, 0.0, 1.0, 1.0, 1.0], 1.0)], halfspaces: vec![] };
    if restr.backscatter {
        let plane = ([-1.0, s.kappa, s.backscatter, 0.0, 0.0], 0.0);
        match form {
            BackscatterStationarity::Equality => c.equalities.push(plane),
            BackscatterStationarity::Complementary => c.halfspaces.push(plane),
        }
    }
    c
}

/// Starting point for the subgradient update: equal rate weights, energy
/// priced below time, time priced to satisfy the backscatter condition.
fn subgradient_seed(s: &Scaled, restr: Restrictions, form: BackscatterStationarity) -> DualVector {
    let r = 1.0 / (2.0 * s.kappa.max(1.0));
    let third = 1.0 / 3.0;
    let mut lam1 = 0.5;
    if restr.backscatter {
        let balanced = s.backscatter * third / (1.0 - s.kappa * r);
        lam1 = match form {
            BackscatterStationarity::Equality if balanced > 0.0 => balanced,
            _ => lam1.max(1.1 * balanced),
        };
    }
    [lam1, r * lam1, third, third, third]
}

fn initial_columns(s: &Scaled, restr: Restrictions) -> Vec<Column> {
    let mut cols = vec![Column::new(Block::Harvest, s)];
    if restr.backscatter {
        cols.push(Column::new(Block::Backscatter, s));
    }
    cols.push(Column::new(Block::Active(1.0), s));
    if restr.forwarding {
        cols.push(Column::new(Block::Forward(1.0), s));
    }
    cols.push(Column::new(Block::Own(1.0), s));
    cols
}

/// Largest harvest-to-transmit ratio admitted as a column; beyond it the
/// block is indistinguishable from harvest-only time.
const MAX_HARVEST_RATIO: f64 = 1e6;

fn oracle_columns(l: &DualVector, s: &Scaled, restr: Restrictions) -> Vec<Column> {
    let mut out = Vec::with_capacity(3);
    // Near lambda1 = lambda2 the quadratic degenerates and its root runs off
    // to the harvest-only limit; price the block directly instead.
    match harvest_ratio(l, s) {
        Ok(z) if z <= MAX_HARVEST_RATIO => out.push(Column::new(Block::Active(z), s)),
        _ => {
            let (_, z) = active_block_value(l, s);
            if z.is_finite() && z > 0.0 && z <= MAX_HARVEST_RATIO {
                out.push(Column::new(Block::Active(z), s));
            }
        }
    }
    if restr.forwarding {
        if let Ok(z) = relay_snr(l[0], l[3]) {
            if z > 0.0 {
                out.push(Column::new(Block::Forward(z), s));
            }
        }
    }
    if let Ok(z) = relay_snr(l[0], l[4]) {
        if z > 0.0 {
            out.push(Column::new(Block::Own(z), s));
        }
    }
    out
}

/// Multipliers, scaled and physical, with the iterate that produced them.
struct Iterate {
    lam: DualVector,
    alloc: Allocation,
    value: f64,
}

/// Maximises the common throughput.
///
/// Iterates the multiplier update until successive multipliers differ by at
/// most `eps`, then polishes, merges the generated blocks into one ratio
/// per slot, and solves the fixed-ratio program for the final allocation.
pub fn solve(link: &BackscatterLink, opts: &SolverOptions) -> Result<SolveResult> {
    if !(opts.eps > 0.0) || opts.max_iter == 0 {
        return Err(Error::Config("eps must be positive and max_iter at least 1".into()));
    }
    let s = Scaled::new(link);
    let restr = opts.restrictions;
    let (raw_trace, last, iterations) = match opts.update {
        DualUpdate::CuttingPlane => cutting_plane(link, &s, opts)?,
        DualUpdate::Subgradient(rule) => subgradient_ascent(link, &s, opts, rule)?,
    };

    // Terminal fixed-ratio program at the merged ratios of the best iterate.
    let (z1, z41, z42) = merged_ratios(&last.alloc, &s);
    let fallback = oracle_ratio_fallback(&last.lam, &s);
    let ratios = Ratios {
        z1: z1.or(fallback.0).unwrap_or(1.0),
        z41: z41.or(fallback.1).unwrap_or(1.0),
        z42: z42.or(fallback.2).unwrap_or(1.0),
    };
    let cols = fixed_ratio_columns(&ratios, restr, &s);
    let sol = solve_lp(&master_program(&cols, &s))?;
    let mut alloc = allocation_from_columns(&cols, &sol.x, &s);
    if sol.value < last.value {
        // Merging never loses throughput in exact arithmetic; keep the
        // iterate if round-off says otherwise.
        alloc = last.alloc;
    }
    // The fixed-ratio program is degenerate (its energy row is tight with a
    // basic slack), so its row prices are not unique. The multipliers of the
    // last update priced every generated block and are reported instead.
    // After the cutting-plane update, allocation and multipliers are refined
    // together by Newton's method when that succeeds and loses nothing.
    let mut lam = last.lam;
    let refinement = match opts.update {
        DualUpdate::CuttingPlane => newton_refine(&alloc, &lam, &s),
        DualUpdate::Subgradient(_) => None,
    };
    if let Some((refined, refined_lam)) = refinement {
        let slack = feasibility(&refined, link);
        let before = evaluate(&alloc, link).rbar;
        let relative = Slack { time: slack.time, energy: slack.energy / s.energy_unit };
        if relative.is_feasible(1e-12) && evaluate(&refined, link).rbar >= before * (1.0 - 1e-12) {
            alloc = refined;
            lam = refined_lam;
        }
    }
    let duals = DualVars::from_scaled(&lam, &s);
    let mut result = SolveResult::from_allocation(alloc, link, duals);
    let d_star = result.rbar;
    result.trace = raw_trace
        .into_iter()
        .map(|mut e| {
            e.gap = (d_star - e.rbar) / d_star;
            e.bound_gap = (e.bound_gap - d_star) / d_star;
            e
        })
        .collect();
    result.iterations = iterations;
    result.kkt = Some(kkt_report(&alloc, &lam, &s, restr, opts.backscatter_stationarity, link));
    if lam.iter().all(|&v| v >= 0.0) {
        let bound = dual_function(&lam, &s, restr) * s.bandwidth;
        result.certified_gap = Some((bound - d_star) / d_star);
    }
    Ok(result)
}

fn oracle_ratio_fallback(l: &DualVector, s: &Scaled) -> (Option<f64>, Option<f64>, Option<f64>) {
    (harvest_ratio(l, s).ok(), relay_snr(l[0], l[3]).ok(), relay_snr(l[0], l[4]).ok())
}

type Run = (Vec<TraceEntry>, Iterate, usize);

fn cutting_plane(link: &BackscatterLink, s: &Scaled, opts: &SolverOptions) -> Result<Run> {
    let restr = opts.restrictions;
    let cons = admissible_set(s, restr, BackscatterStationarity::Complementary);
    let mut cols = initial_columns(s, restr);
    let mut sol = solve_lp(&master_program(&cols, s))?;
    let mut lam = match opts.initial {
        Some(d) => d.to_scaled(s),
        None => master_duals(&sol),
    };
    let mut trace = Vec::new();
    let mut converged = false;
    let mut k = 0;
    while k < opts.max_iter {
        k += 1;
        cols.extend(oracle_columns(&lam, s, restr));
        sol = solve_lp(&master_program(&cols, s))?;
        let mut next = master_duals(&sol);
        if cons.violation(&next) > 1e-12 {
            let anchor = next_anchor(&next, &cons);
            next = project_duals(&next, &anchor, &cons)?;
        }
        let alloc = allocation_from_columns(&cols, &sol.x, s);
        let step = norm_diff(&next, &lam);
        trace.push(TraceEntry {
            iteration: k,
            rbar: evaluate(&alloc, link).rbar,
            gap: 0.0,
            bound_gap: bound_or_inf(&lam, s, restr) * s.bandwidth,
            step,
            duals: DualVars::from_scaled(&lam, s),
        });
        lam = next;
        if step <= opts.eps {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            iterations: k,
            last_step: trace.last().map_or(f64::NAN, |e| e.step),
            best: sol.value * s.bandwidth,
        });
    }
    // Polishing: keep pricing until the master stops improving.
    let mut value = sol.value;
    for _ in 0..opts.polish_max_iter {
        let fresh = oracle_columns(&lam, s, restr);
        if fresh.is_empty() {
            break;
        }
        cols.extend(fresh);
        sol = solve_lp(&master_program(&cols, s))?;
        lam = master_duals(&sol);
        let gain = sol.value - value;
        value = sol.value;
        if gain <= opts.polish_tol * value.abs().max(1e-300) {
            break;
        }
    }
    let alloc = allocation_from_columns(&cols, &sol.x, s);
    Ok((trace, Iterate { lam, alloc, value: sol.value }, k))
}

/// A feasible anchor near `v` for repairing round-off in master prices.
fn next_anchor(v: &DualVector, cons: &DualConstraints) -> DualVector {
    let mut a = *v;
    for x in a.iter_mut() {
        *x = x.max(0.0);
    }
    let w = a[2] + a[3] + a[4];
    if w > 0.0 {
        for x in a[2..].iter_mut() {
            *x /= w;
        }
    } else {
        a[2..].iter_mut().for_each(|x| *x = 1.0 / 3.0);
    }
    // Raise the price of time until every half-space holds.
    for (n, b) in &cons.halfspaces {
        let lhs: f64 = n.iter().zip(&a).map(|(p, q)| p * q).sum();
        if lhs > *b && n[0] < 0.0 {
            a[0] += (lhs - b) / -n[0];
        }
    }
    a
}

fn bound_or_inf(l: &DualVector, s: &Scaled, restr: Restrictions) -> f64 {
    if l.iter().all(|&v| v >= 0.0) {
        dual_function(l, s, restr)
    } else {
        f64::INFINITY
    }
}

fn subgradient_ascent(link: &BackscatterLink, s: &Scaled, opts: &SolverOptions, rule: StepRule) -> Result<Run> {
    let restr = opts.restrictions;
    let form = opts.backscatter_stationarity;
    let cons = admissible_set(s, restr, form);
    let anchor = match opts.initial {
        Some(d) => d.to_scaled(s),
        None => subgradient_seed(s, restr, form),
    };
    if cons.violation(&anchor) > 1e-9 {
        return Err(Error::Config("initial multipliers are not admissible".into()));
    }
    let mut lam = anchor;
    let mut best: Option<Iterate> = None;
    let mut trace = Vec::new();
    let mut k = 0;
    let mut converged = false;
    while k < opts.max_iter {
        k += 1;
        let mut probe = lam;
        let mut recovered = None;
        for _ in 0..30 {
            let ratios = stationarity_ratios(&DualVars::from_scaled(&probe, s), link);
            if let Ok(r) = ratios {
                recovered = Some((r, probe));
                break;
            }
            for j in 0..5 {
                probe[j] = 0.5 * (probe[j] + anchor[j]);
            }
        }
        let Some((ratios, used)) = recovered else {
            return Err(Error::DegenerateDual(format!("stationarity ratios undefined near {lam:?}")));
        };
        lam = used;
        let (alloc, rbar, _) = recover_primal(&ratios, link, restr)?;
        let nu = scaled_subgradient(&alloc, rbar, link, s);
        let alpha = match rule {
            StepRule::Diminishing => opts.step0 / k as f64,
            StepRule::Constant => opts.step0,
        };
        let mut hat = lam;
        for j in 0..5 {
            hat[j] += alpha * nu[j];
        }
        let next = project_duals(&hat, &anchor, &cons)?;
        let step = norm_diff(&next, &lam);
        trace.push(TraceEntry {
            iteration: k,
            rbar,
            gap: 0.0,
            bound_gap: bound_or_inf(&lam, s, restr) * s.bandwidth,
            step,
            duals: DualVars::from_scaled(&lam, s),
        });
        if best.as_ref().is_none_or(|b| rbar > b.value * s.bandwidth) {
            best = Some(Iterate { lam, alloc, value: rbar / s.bandwidth });
        }
        lam = next;
        if step <= opts.eps {
            converged = true;
            break;
        }
    }
    let best = best.expect("at least one iteration ran");
    if !converged {
        return Err(Error::NonConvergence {
            iterations: k,
            last_step: trace.last().map_or(f64::NAN, |e| e.step),
            best: best.value * s.bandwidth,
        });
    }
    Ok((trace, best, k))
}

/// Which blocks, rows and prices a terminal allocation uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct ActiveSet {
    backscatter: bool,
    harvest: bool,
    active: bool,
    forward: bool,
    own: bool,
    energy: bool,
    rows: [bool; 3],
}

/// Unknowns of the optimality system on an active set, in solver units.
#[derive(Debug, Clone, Copy, Default)]
struct KktPoint {
    z: [f64; 3],
    t: [f64; 5],
    rbar: f64,
    lam: DualVector,
}

impl ActiveSet {
    fn detect(a: &Allocation, l: &DualVector, s: &Scaled) -> Self {
        let used = |t: f64| t > 1e-9 * s.time_budget;
        let harvest_only = a.t1 - merged_ratios(a, s).0.unwrap_or(0.0) * a.t3;
        ActiveSet {
            backscatter: used(a.t2),
            harvest: used(harvest_only),
            active: used(a.t3),
            forward: used(a.t41),
            own: used(a.t42),
            energy: l[1] > 1e-9,
            rows: [l[2] > 1e-9, l[3] > 1e-9, l[4] > 1e-9],
        }
    }

    fn slots(&self) -> [bool; 5] {
        [self.active, self.forward, self.own, self.backscatter, self.harvest]
    }

    /// Packs the free coordinates of `p`.
    fn pack(&self, p: &KktPoint) -> Vec<f64> {
        let mut u = Vec::with_capacity(12);
        for (i, on) in self.slots().into_iter().enumerate() {
            if on {
                if i < 3 {
                    u.push(p.z[i]);
                }
                u.push(p.t[i]);
            }
        }
        u.push(p.rbar);
        u.push(p.lam[0]);
        if self.energy {
            u.push(p.lam[1]);
        }
        for b in 0..3 {
            if self.rows[b] {
                u.push(p.lam[2 + b]);
            }
        }
        u
    }

    fn unpack(&self, u: &[f64]) -> KktPoint {
        let mut p = KktPoint::default();
        let mut it = u.iter().copied();
        for (i, on) in self.slots().into_iter().enumerate() {
            if on {
                if i < 3 {
                    p.z[i] = it.next().unwrap_or(0.0);
                }
                p.t[i] = it.next().unwrap_or(0.0);
            }
        }
        p.rbar = it.next().unwrap_or(0.0);
        p.lam[0] = it.next().unwrap_or(0.0);
        if self.energy {
            p.lam[1] = it.next().unwrap_or(0.0);
        }
        for b in 0..3 {
            if self.rows[b] {
                p.lam[2 + b] = it.next().unwrap_or(0.0);
            }
        }
        p
    }

    /// Stationarity of every used slot, unit rate weights, the tight rows.
    fn residual(&self, p: &KktPoint, s: &Scaled) -> Vec<f64> {
        let l = &p.lam;
        let [z1, z41, z42] = p.z;
        let [t3, t41, t42, t2, th] = p.t;
        let mut f = Vec::with_capacity(12);
        let relay = |f: &mut Vec<f64>, z: f64, lam_rate: f64| {
            f.push(-l[0] + lam_rate * (log2_1p(z) - z / ((1.0 + z) * LN_2)));
            f.push(-l[1] + lam_rate * s.snr2 / ((1.0 + z) * LN_2));
        };
        if self.active {
            let (a12, a13) = (s.rho12 * z1, s.rho13 * z1);
            f.push(-l[0] + l[1] + (l[2] * s.rho12 / (1.0 + a12) + l[3] * s.rho13 / (1.0 + a13)) / LN_2);
            f.push(
                -l[0]
                    + l[2] * (log2_1p(a12) - a12 / ((1.0 + a12) * LN_2))
                    + l[3] * (log2_1p(a13) - a13 / ((1.0 + a13) * LN_2)),
            );
        }
        if self.forward {
            relay(&mut f, z41, l[3]);
        }
        if self.own {
            relay(&mut f, z42, l[4]);
        }
        if self.backscatter {
            f.push(-l[0] + s.kappa * l[1] + s.backscatter * l[2]);
        }
        if self.harvest {
            f.push(-l[0] + l[1]);
        }
        f.push(l[2] + l[3] + l[4] - 1.0);
        f.push(t3 * (1.0 + z1) + t41 + t42 + t2 + th - s.time_budget);
        if self.energy {
            f.push(-th - s.kappa * t2 - z1 * t3 + (z41 * t41 + z42 * t42) / s.snr2);
        }
        let branch = [
            s.backscatter * t2 + t3 * log2_1p(s.rho12 * z1),
            t3 * log2_1p(s.rho13 * z1) + t41 * log2_1p(z41),
            t42 * log2_1p(z42),
        ];
        for (tight, value) in self.rows.iter().zip(branch) {
            if *tight {
                f.push(p.rbar - value);
            }
        }
        f
    }
}

/// Newton's method on the optimality system of the detected active set,
/// started from a column-generation solution. Returns `None` when the set
/// is not square, Newton fails, or the refined point leaves the feasible
/// region, in which case the caller keeps its starting point.
fn newton_refine(a: &Allocation, l: &DualVector, s: &Scaled) -> Option<(Allocation, DualVector)> {
    let set = ActiveSet::detect(a, l, s);
    let (z1, z41, z42) = merged_ratios(a, s);
    let z1 = z1.unwrap_or(0.0);
    let start = KktPoint {
        z: [z1, z41.unwrap_or(0.0), z42.unwrap_or(0.0)],
        t: [a.t3, a.t41, a.t42, a.t2, a.t1 - z1 * a.t3],
        rbar: s.branches(a).into_iter().fold(f64::INFINITY, f64::min),
        lam: *l,
    };
    let mut u = set.pack(&start);
    let n = u.len();
    if set.residual(&set.unpack(&u), s).len() != n {
        return None;
    }
    let norm = |f: &[f64]| f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut f = set.residual(&set.unpack(&u), s);
    for _ in 0..40 {
        if norm(&f) <= 1e-15 {
            break;
        }
        let mut jac = nalgebra::DMatrix::zeros(n, n);
        for j in 0..n {
            let h = 1e-7 * u[j].abs().max(1e-6);
            let mut up = u.clone();
            up[j] += h;
            let mut dn = u.clone();
            dn[j] -= h;
            let (fp, fm) = (set.residual(&set.unpack(&up), s), set.residual(&set.unpack(&dn), s));
            for i in 0..n {
                jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        let rhs = nalgebra::DVector::from_iterator(n, f.iter().map(|v| -v));
        let step = jac.lu().solve(&rhs)?;
        let mut alpha = 1.0;
        let current = norm(&f);
        loop {
            let trial: Vec<f64> = u.iter().zip(step.iter()).map(|(x, d)| x + alpha * d).collect();
            let ft = set.residual(&set.unpack(&trial), s);
            if norm(&ft) < current || alpha < 1e-4 {
                u = trial;
                f = ft;
                break;
            }
            alpha *= 0.5;
        }
    }
    if norm(&f) > 1e-12 {
        return None;
    }
    let p = set.unpack(&u);
    if p.z.iter().chain(&p.t).chain(&p.lam).any(|&v| v < 0.0 || !v.is_finite()) {
        return None;
    }
    let [z1, z41, z42] = p.z;
    let [t3, t41, t42, t2, th] = p.t;
    let refined = Allocation {
        t1: z1 * t3 + th,
        t2,
        t3,
        t41,
        t42,
        tau41: z41 * t41 / s.snr2 * s.energy_unit,
        tau42: z42 * t42 / s.snr2 * s.energy_unit,
    };
    Some((refined, p.lam))
}

/// Residuals of the optimality conditions at an allocation and multipliers (solver units).
fn kkt_report(
    alloc: &Allocation,
    l: &DualVector,
    s: &Scaled,
    restr: Restrictions,
    form: BackscatterStationarity,
    link: &BackscatterLink,
) -> KktReport {
    let rbar = evaluate(alloc, link).rbar / s.bandwidth;
    let nu = scaled_subgradient(alloc, rbar * s.bandwidth, link, s);
    let time_scale = l[0].abs().max(1e-300);
    let mut rep = KktReport {
        weight_sum: (l[2] + l[3] + l[4] - 1.0).abs(),
        time_residual: nu[0].abs(),
        ..Default::default()
    };
    if restr.backscatter {
        let r = -l[0] + s.kappa * l[1] + s.backscatter * l[2];
        rep.backscatter_stationarity = match form {
            BackscatterStationarity::Equality => r.abs(),
            BackscatterStationarity::Complementary if alloc.t2 > 0.0 => r.abs(),
            BackscatterStationarity::Complementary => r.max(0.0),
        } / time_scale;
    }
    let cs = (1..5).map(|i| (l[i] * nu[i]).abs()).fold(0.0, f64::max);
    rep.complementary_slackness = cs / rbar.max(1e-300);

    let mut worst: f64 = 0.0;
    let tight = |t: f64| t > 1e-12;
    // Active block: derivatives in t1 and t3.
    if tight(alloc.t3) {
        let z = alloc.t1 / alloc.t3;
        let (a12, a13) = (s.rho12 * z, s.rho13 * z);
        let d_t1 = -l[0] + l[1] + (l[2] * s.rho12 / (1.0 + a12) + l[3] * s.rho13 / (1.0 + a13)) / LN_2;
        let d_t3 = -l[0]
            + l[2] * (log2_1p(a12) - a12 / ((1.0 + a12) * LN_2))
            + l[3] * (log2_1p(a13) - a13 / ((1.0 + a13) * LN_2));
        worst = worst.max(d_t1.abs()).max(d_t3.abs());
    } else {
        worst = worst.max(active_block_value(l, s).0 - l[0]);
    }
    let relay = |t: f64, tau: f64, lam_rate: f64| -> f64 {
        if tight(t) {
            let z = s.snr2 * tau / s.energy_unit / t;
            let d_t = -l[0] + lam_rate * (log2_1p(z) - z / ((1.0 + z) * LN_2));
            let d_tau = -l[1] + lam_rate * s.snr2 / ((1.0 + z) * LN_2);
            d_t.abs().max(d_tau.abs())
        } else {
            (relay_block_value(l[1], lam_rate, s) - l[0]).max(0.0)
        }
    };
    if restr.forwarding {
        worst = worst.max(relay(alloc.t41, alloc.tau41, l[3]));
    }
    worst = worst.max(relay(alloc.t42, alloc.tau42, l[4]));
    // Harvest-only time: its reduced cost must not be positive.
    worst = worst.max(l[1] - l[0]);
    rep.stationarity = worst.max(0.0) / time_scale;
    rep
}

/// Helper for tests and reference comparisons: throughput of the fixed-ratio
/// program assembled from `ratios` (solver units).
pub fn fixed_ratio_value(ratios: &Ratios, link: &BackscatterLink, restr: Restrictions) -> Result<f64> {
    let s = Scaled::new(link);
    let sol = solve_lp(&master_program(&fixed_ratio_columns(ratios, restr, &s), &s))?;
    Ok(sol.value * s.bandwidth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysmodel::{reference_gains::*, ChannelState, SystemParams};

    fn link_with(p: SystemParams, h12: f64) -> BackscatterLink {
        let ch = ChannelState::real(H1, H2, h12, &p).unwrap();
        BackscatterLink::new(p, ch).unwrap()
    }

    fn link(h12: f64, beta: f64) -> BackscatterLink {
        link_with(SystemParams::default().with_beta(beta), h12)
    }

    /// Settings under which backscatter carries part of the traffic.
    fn backscatter_link(beta: f64) -> BackscatterLink {
        let p = SystemParams { rs: 4e7, rb: 2e6, ..SystemParams::default() }.with_beta(beta);
        link_with(p, H12_SPLIT)
    }

    fn assert_certified(r: &SolveResult) {
        let k = r.kkt.unwrap();
        assert!(k.max_residual() <= 1e-6, "{k:?}");
        assert!(k.weight_sum <= 1e-9 && k.backscatter_stationarity <= 1e-9, "{k:?}");
        assert!(r.certified_gap.unwrap() <= 1e-9, "{:?}", r.certified_gap);
    }

    #[test]
    fn reference_instance_throughput() {
        let r = solve(&link(H12_SPLIT, 0.8), &SolverOptions::default()).unwrap();
        assert!((r.rbar - 74_309.94).abs() < 0.05, "{}", r.rbar);
        assert_eq!(r.alloc.t2, 0.0);
        assert!((r.alloc.total_time() - 0.95).abs() < 1e-12);
        assert!(r.iterations <= 30);
        assert_certified(&r);
    }

    #[test]
    fn stronger_inter_user_link() {
        let r = solve(&link(H12_CONVERGENCE, 0.8), &SolverOptions::default()).unwrap();
        assert!((r.rbar - 78_948.30).abs() < 0.05, "{}", r.rbar);
        assert_certified(&r);
    }

    #[test]
    fn backscatter_used_when_cheap() {
        let r = solve(&backscatter_link(0.6), &SolverOptions::default()).unwrap();
        assert!(r.alloc.t2 > 0.0);
        assert!((r.rbar - 82_826.0).abs() < 1.0, "{}", r.rbar);
        assert_certified(&r);
    }

    #[test]
    fn restrictions_never_help() {
        let l = backscatter_link(0.6);
        let full = solve(&l, &SolverOptions::default()).unwrap();
        let coop = solve(&l, &SolverOptions::default().with_restrictions(Restrictions::NO_BACKSCATTER)).unwrap();
        let direct = solve(&l, &SolverOptions::default().with_restrictions(Restrictions::DIRECT_ONLY)).unwrap();
        assert_eq!(coop.alloc.t2, 0.0);
        assert_eq!(direct.alloc.t41, 0.0);
        assert!(direct.rbar <= coop.rbar + 1e-6 && coop.rbar <= full.rbar + 1e-6);
        assert_certified(&coop);
        assert_certified(&direct);
    }

    #[test]
    fn trace_gap_shrinks() {
        let r = solve(&link(H12_SPLIT, 0.8), &SolverOptions::default()).unwrap();
        let last = r.trace.last().unwrap();
        assert!(last.gap >= -1e-12 && last.gap < 1e-5);
        assert!(last.bound_gap >= -1e-12);
        assert!(last.step <= 1e-3);
    }

    #[test]
    fn ratios_reject_degenerate_multipliers() {
        let l = link(H12_SPLIT, 0.8);
        let d = DualVars { lam1: 1e5, lam2: 1.0, lam3: 0.5, lam4: 0.0, lam5: 0.5 };
        assert!(matches!(stationarity_ratios(&d, &l), Err(Error::DegenerateDual(_))));
    }

    #[test]
    fn scaled_duals_round_trip() {
        let l = link(H12_SPLIT, 0.8);
        let s = Scaled::new(&l);
        let d = DualVars { lam1: 7.8e4, lam2: 3.1e9, lam3: 0.3, lam4: 0.3, lam5: 0.4 };
        let back = DualVars::from_scaled(&d.to_scaled(&s), &s);
        assert!((back.lam1 - d.lam1).abs() < 1e-9 && (back.lam2 / d.lam2 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn subgradient_mode_runs_and_stays_feasible() {
        let l = link(H12_SPLIT, 0.8);
        let r = solve(&l, &SolverOptions::subgradient(0.1)).unwrap();
        assert!(r.rbar > 0.0 && r.rbar <= 74_309.94 * (1.0 + 1e-9));
        assert!(feasibility(&r.alloc, &l).is_feasible(1e-12));
    }

    #[test]
    fn dual_bound_is_an_upper_bound() {
        let l = link(H12_SPLIT, 0.8);
        let opt = solve(&l, &SolverOptions::default()).unwrap();
        let d = DualVars { lam1: 7e4, lam2: 3e9, lam3: 0.2, lam4: 0.5, lam5: 0.3 };
        assert!(dual_bound(&d, &l, Restrictions::ALL).unwrap() >= opt.rbar);
    }
}
