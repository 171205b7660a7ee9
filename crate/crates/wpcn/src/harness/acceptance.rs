//! Acceptance checks with pinned tolerances.
//!
//! Each check returns a [`CriterionReport`] whose `line()` is one pass/fail
//! line. The same functions back the `selftest` subcommand and the
//! `acceptance` integration test. Checks that share expensive sweeps reuse
//! one cached set of results.

use std::f64::consts::LN_2;
use std::sync::OnceLock;
use std::time::Instant;

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};

use crate::baselines::{coop_no_ab_solve, independent_solve, reference_solve, wsr_solve_scheme, SchemeId};
use crate::dual_solver::{solve, Restrictions, SolveResult, SolverOptions};
use crate::numerics::lambert_w0;
use crate::phy::{monte_carlo_ber, BackscatterLink, SignalModel};
use crate::rates::{hessian_check_r2, rate_r1_2, rate_r1_3, rate_r1_4, rate_r2};
use crate::sysmodel::{reference_gains::*, ChannelState, LinePlacement, SystemParams};

use super::run::solve_point;
use super::{Experiment, ExperimentKind};

/// Outcome of one criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct CriterionReport {
    pub id: &'static str,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionReport {
    pub fn line(&self) -> String {
        let mark = if self.passed { "PASS" } else { "FAIL" };
        format!("[{mark}] criterion {} ({}): {} [{:.1} s]", self.id, self.title, self.detail, self.seconds)
    }
}

fn report(id: &'static str, title: &'static str, f: impl FnOnce() -> (bool, String)) -> CriterionReport {
    let start = Instant::now();
    let (passed, detail) = f();
    CriterionReport { id, title, passed, detail, seconds: start.elapsed().as_secs_f64() }
}

// Pinned tolerances.
pub const BER_SIGMA_ENERGY: f64 = 3.0;
pub const BER_SIGMA_FULL: f64 = 5.0;
pub const BER_BITS: u64 = 1_000_000;
pub const CROSS_REL_TOL: f64 = 1e-3;
pub const CONVERGENCE_GAP: f64 = 1e-4;
pub const CONVERGENCE_ITERS: usize = 50;
pub const ARGMAX_RANGE: (f64, f64) = (0.7, 0.9);
pub const REDUCTION_REL_TOL: f64 = 1e-6;
pub const CONTAINMENT_TOL: f64 = 1e-6;
pub const KKT_RESIDUAL_TOL: f64 = 1e-6;
pub const KKT_EQUALITY_TOL: f64 = 1e-9;
pub const LAMBERT_TOL: f64 = 1e-12;
/// Relative slack for ties in trend checks.
pub const TREND_TIE_TOL: f64 = 1e-9;

/// Committed seeds for randomised instances.
pub const CROSS_SEED: u64 = 20_240_601;
pub const REDUCTION_SEED: u64 = 20_240_602;
pub const PROPERTY_SEED: u64 = 20_240_603;

fn link_from_gains(p: SystemParams, h: (f64, f64, f64)) -> BackscatterLink {
    let ch = ChannelState::real(h.0, h.1, h.2, &p).expect("valid gains");
    BackscatterLink::new(p, ch).expect("valid link")
}

fn line_link(p: SystemParams, d1: f64, d2: f64) -> BackscatterLink {
    let ch = LinePlacement::new(d1, d2).and_then(|pl| pl.channels(&p)).expect("valid placement");
    BackscatterLink::new(p, ch).expect("valid link")
}

/// Random instance: gains log-uniform in `[1e-7, 1e-4]`, `beta` in
/// `[0.1, 0.9]`, `Rb` in `[10, 100]` kbit/s. With `relay_stronger` the
/// inter-device gain is at least the far device's own gain, the regime in
/// which the relay can always decode what the access point can.
pub fn random_instance(rng: &mut SmallRng, relay_stronger: bool) -> BackscatterLink {
    let mut gain = || 10f64.powf(rng.random_range(-7.0..-4.0));
    let (mut h1, h2, mut h12) = (gain(), gain(), gain());
    if relay_stronger && h12 < h1 {
        std::mem::swap(&mut h1, &mut h12);
    }
    let beta = rng.random_range(0.1..0.9);
    let rb = rng.random_range(10e3..100e3);
    link_from_gains(SystemParams::default().with_beta(beta).with_rb(rb), (h1, h2, h12))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Criterion 1: simulated against closed-form error rate.
pub fn ber_agreement() -> CriterionReport {
    report("1", "error-rate oracle agreement", || {
        let mut worst = [0.0f64; 2];
        let models = [(SignalModel::EnergyDomain, BER_SIGMA_ENERGY), (SignalModel::Full, BER_SIGMA_FULL)];
        let mut seed = 1;
        for beta in [0.2, 0.5, 0.8] {
            for n in [20usize, 50, 100] {
                let base = SystemParams::default().with_beta(beta);
                let p = base.with_rb(base.rs / n as f64);
                let link = link_from_gains(p, (H1, H2, H12_SPLIT));
                for (k, (model, _)) in models.iter().enumerate() {
                    seed += 1;
                    match monte_carlo_ber(&link, BER_BITS, seed, *model) {
                        Ok(est) => worst[k] = worst[k].max(est.z_score(link.ber()).abs()),
                        Err(e) => return (false, format!("simulation failed: {e}")),
                    }
                }
            }
        }
        let passed = worst[0] <= BER_SIGMA_ENERGY && worst[1] <= BER_SIGMA_FULL;
        let detail = format!(
            "max |z| energy-domain model {:.2} (limit {BER_SIGMA_ENERGY}), full signal model {:.2} (limit {BER_SIGMA_FULL})",
            worst[0], worst[1]
        );
        (passed, detail)
    })
}

/// Instances of the standard sweeps: the beta grid on the reference gains,
/// the d1 grid at both bit rates and the d2 grid.
fn sweep_instances() -> Vec<(String, BackscatterLink)> {
    let p = SystemParams::default();
    let mut out = Vec::new();
    for &beta in &Experiment::defaults(ExperimentKind::BetaSweep).grid {
        out.push((format!("beta={beta}"), link_from_gains(p.with_beta(beta), (H1, H2, H12_SPLIT))));
    }
    let d1 = Experiment::defaults(ExperimentKind::D1Sweep);
    for &rb in &d1.rb_values {
        for &x in &d1.grid {
            out.push((format!("d1={x},rb={rb}"), line_link(p.with_rb(rb), x, d1.d2)));
        }
    }
    let d2 = Experiment::defaults(ExperimentKind::D2Sweep);
    for &x in &d2.grid {
        out.push((format!("d2={x}"), line_link(p, d2.d1, x)));
    }
    out
}

/// Criterion 2: dual solver against the barrier reference.
pub fn solver_cross_validation() -> CriterionReport {
    report("2", "solver cross-validation", || {
        let mut rng = SmallRng::seed_from_u64(CROSS_SEED);
        let mut cases: Vec<(String, BackscatterLink)> =
            (0..20).map(|i| (format!("random #{i}"), random_instance(&mut rng, false))).collect();
        cases.extend(sweep_instances());
        let mut worst = (0.0f64, String::new());
        for (name, link) in &cases {
            let dual = solve(link, &SolverOptions::default());
            let reference = reference_solve(link);
            match (dual, reference) {
                (Ok(d), Ok(r)) => {
                    let e = rel(d.rbar, r.rbar);
                    if e >= worst.0 {
                        worst = (e, name.clone());
                    }
                }
                (d, r) => return (false, format!("{name}: dual {:?}, reference {:?}", d.err(), r.err())),
            }
        }
        let passed = worst.0 <= CROSS_REL_TOL;
        (passed, format!("{} instances, worst relative difference {:.2e} at {} (limit {CROSS_REL_TOL:e})", cases.len(), worst.0, worst.1))
    })
}

/// Best gap within the first `iters` trace entries, measured against `d_star`.
fn best_gap(r: &SolveResult, d_star: f64, iters: usize) -> (f64, usize) {
    r.trace
        .iter()
        .take(iters)
        .map(|e| ((d_star - e.rbar) / d_star, e.iteration))
        .fold((f64::INFINITY, 0), |a, b| if b.0 < a.0 { b } else { a })
}

/// Criterion 3: convergence of the literal diminishing-step subgradient
/// update, `alpha_k = 0.1 / k`. The gap is measured against the optimum
/// certified by the barrier reference, not against the run's own terminal
/// value (which would make any stalled run look converged). The default
/// cutting-plane update is reported alongside.
pub fn convergence_reproduction() -> CriterionReport {
    report("3", "convergence, alpha = 0.1/k", || {
        let link = link_from_gains(SystemParams::default(), (H1, H2, H12_CONVERGENCE));
        let d_star = match reference_solve(&link) {
            Ok(r) => r.rbar,
            Err(e) => return (false, format!("reference failed: {e}")),
        };
        let literal = SolverOptions { max_iter: CONVERGENCE_ITERS, ..SolverOptions::subgradient(0.1) };
        let (sub_gap, sub_it, sub_note) = match solve(&link, &literal) {
            Ok(r) => {
                let (g, k) = best_gap(&r, d_star, CONVERGENCE_ITERS);
                (g, k, format!("stopped after {} iterations", r.iterations))
            }
            Err(crate::Error::NonConvergence { best, .. }) => {
                ((d_star - best) / d_star, CONVERGENCE_ITERS, "hit the iteration limit".into())
            }
            Err(e) => return (false, format!("subgradient run failed: {e}")),
        };
        let cp = solve(&link, &SolverOptions::default());
        let cp_note = match &cp {
            Ok(r) => {
                let (g, _) = best_gap(r, d_star, CONVERGENCE_ITERS);
                match r.trace.iter().find(|e| (d_star - e.rbar) / d_star <= CONVERGENCE_GAP) {
                    Some(e) => format!("cutting-plane update: gap {g:.2e}, below {CONVERGENCE_GAP:e} from iteration {}", e.iteration),
                    None => format!("cutting-plane update: gap {g:.2e}, never below {CONVERGENCE_GAP:e}"),
                }
            }
            Err(e) => format!("cutting-plane update failed: {e}"),
        };
        let passed = sub_gap <= CONVERGENCE_GAP;
        let detail = format!(
            "subgradient best gap {sub_gap:.2e} at iteration {sub_it} ({sub_note}; limit {CONVERGENCE_GAP:e} within {CONVERGENCE_ITERS}); {cp_note}"
        );
        (passed, detail)
    })
}

/// Indices of the maximisers of `v` up to a relative tie tolerance.
pub fn maximisers(v: &[f64]) -> Vec<usize> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (0..v.len()).filter(|&i| v[i] >= max - TREND_TIE_TOL * max.abs()).collect()
}

/// Non-decreasing then non-increasing, up to the tie tolerance.
pub fn is_unimodal(v: &[f64]) -> bool {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let tol = TREND_TIE_TOL * scale;
    let mut descending = false;
    for w in v.windows(2) {
        if w[1] < w[0] - tol {
            descending = true;
        } else if descending && w[1] > w[0] + tol {
            return false;
        }
    }
    true
}

/// Non-increasing up to the tie tolerance.
pub fn is_non_increasing(v: &[f64]) -> bool {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    v.windows(2).all(|w| w[1] <= w[0] + TREND_TIE_TOL * scale)
}

/// Results of one scheme along a sweep grid.
pub type SchemeSeries = Vec<crate::Result<SolveResult>>;

/// Solves of every scheme on every point of the standard sweeps.
pub struct SweepSet {
    /// `(label, grid, per-scheme results in SchemeId::ALL order)` per sweep.
    pub sweeps: Vec<(String, Vec<f64>, Vec<SchemeSeries>)>,
}

/// The beta sweep, d1 sweeps at both bit rates and the d2 sweep, solved once.
pub fn standard_sweeps() -> &'static SweepSet {
    static CACHE: OnceLock<SweepSet> = OnceLock::new();
    CACHE.get_or_init(|| {
        let p = SystemParams::default();
        let opts = SolverOptions::default();
        let run = |links: Vec<BackscatterLink>| -> Vec<SchemeSeries> {
            SchemeId::ALL.iter().map(|&s| links.iter().map(|l| solve_point(s, l, &opts)).collect()).collect()
        };
        let mut sweeps = Vec::new();
        let beta = Experiment::defaults(ExperimentKind::BetaSweep).grid;
        let links = beta.iter().map(|&b| link_from_gains(p.with_beta(b), (H1, H2, H12_SPLIT))).collect();
        sweeps.push(("beta sweep".to_string(), beta.clone(), run(links)));
        let d1 = Experiment::defaults(ExperimentKind::D1Sweep);
        for &rb in &d1.rb_values {
            let links = d1.grid.iter().map(|&x| line_link(p.with_rb(rb), x, d1.d2)).collect();
            sweeps.push((format!("d1 sweep Rb={rb}"), d1.grid.clone(), run(links)));
        }
        let d2 = Experiment::defaults(ExperimentKind::D2Sweep);
        let links = d2.grid.iter().map(|&x| line_link(p, d2.d1, x)).collect();
        sweeps.push(("d2 sweep".to_string(), d2.grid.clone(), run(links)));
        SweepSet { sweeps }
    })
}

fn rbar_series(results: &[crate::Result<SolveResult>]) -> Option<Vec<f64>> {
    results.iter().map(|r| r.as_ref().ok().map(|s| s.rbar)).collect()
}

/// Criterion 4: shape of the beta sweep.
pub fn beta_sweep_shape() -> CriterionReport {
    report("4", "beta sweep unimodal with argmax in [0.7, 0.9]", || {
        let (_, grid, res) = &standard_sweeps().sweeps[0];
        let Some(v) = rbar_series(&res[0]) else {
            return (false, "a beta sweep solve failed".into());
        };
        let arg: Vec<f64> = maximisers(&v).into_iter().map(|i| grid[i]).collect();
        let inside = arg.iter().all(|b| (ARGMAX_RANGE.0..=ARGMAX_RANGE.1).contains(b));
        let unimodal = is_unimodal(&v);
        let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        let detail = format!(
            "unimodal {unimodal}, maximisers at beta {}..{} ({} of {} points), rbar range [{lo:.2}, {hi:.2}] bit",
            arg.first().copied().unwrap_or(f64::NAN),
            arg.last().copied().unwrap_or(f64::NAN),
            arg.len(),
            v.len()
        );
        (unimodal && inside, detail)
    })
}

/// Criterion 5: removing slots reproduces the comparison schemes.
pub fn reductions() -> CriterionReport {
    report("5", "slot-removal reductions", || {
        let mut rng = SmallRng::seed_from_u64(REDUCTION_SEED);
        let (mut worst_coop, mut worst_ind) = (0.0f64, 0.0f64);
        for i in 0..10 {
            let link = random_instance(&mut rng, true);
            let no_bs = solve(&link, &SolverOptions::default().with_restrictions(Restrictions::NO_BACKSCATTER));
            let direct = solve(&link, &SolverOptions::default().with_restrictions(Restrictions::DIRECT_ONLY));
            match (no_bs, coop_no_ab_solve(&link), direct, independent_solve(&link)) {
                (Ok(a), Ok(b), Ok(c), Ok(d)) => {
                    worst_coop = worst_coop.max(rel(a.rbar, b.rbar));
                    worst_ind = worst_ind.max(rel(c.rbar, d.rbar));
                }
                _ => return (false, format!("instance {i}: a solve failed")),
            }
        }
        let passed = worst_coop <= REDUCTION_REL_TOL && worst_ind <= REDUCTION_REL_TOL;
        (passed, format!("10 instances, no backscatter {worst_coop:.2e}, direct only {worst_ind:.2e} (limit {REDUCTION_REL_TOL:e})"))
    })
}

/// Criterion 6: containment of the comparison schemes.
pub fn containment() -> CriterionReport {
    report("6", "containment", || {
        let mut worst = f64::NEG_INFINITY;
        let mut checked = 0;
        for (label, _, res) in &standard_sweeps().sweeps {
            for (i, ((p, c), ind)) in res[0].iter().zip(&res[1]).zip(&res[2]).enumerate() {
                let (Ok(p), Ok(c), Ok(ind)) = (p, c, ind) else {
                    return (false, format!("{label} point {i}: a solve failed"));
                };
                worst = worst.max((c.rbar.max(ind.rbar) - p.rbar) / p.rbar);
                checked += 1;
            }
        }
        // Region: the independent point at weight w must not exceed the
        // proposed scheme's supporting line at the same weight.
        let region = Experiment::defaults(ExperimentKind::RateRegion);
        let p = SystemParams::default();
        let mut worst_region = f64::NEG_INFINITY;
        for &d2 in &region.d2_values {
            let link = line_link(p, region.d1, d2);
            for &w in &region.grid {
                let (Ok(prop), Ok(ind)) = (
                    wsr_solve_scheme(&link, w, SchemeId::ProposedAB),
                    wsr_solve_scheme(&link, w, SchemeId::Independent),
                ) else {
                    return (false, format!("region d2={d2} w1={w}: a solve failed"));
                };
                let sup = w * prop.0 + (1.0 - w) * prop.1;
                let val = w * ind.0 + (1.0 - w) * ind.1;
                worst_region = worst_region.max((val - sup) / sup);
            }
        }
        let passed = worst <= CONTAINMENT_TOL && worst_region <= CONTAINMENT_TOL;
        let detail = format!(
            "{checked} sweep points, worst excess of a comparison scheme {worst:.2e}; region worst excess {worst_region:.2e} (limit {CONTAINMENT_TOL:e})"
        );
        (passed, detail)
    })
}

/// Criterion 7: optimality certificate of every converged dual solve.
pub fn kkt_certificates() -> CriterionReport {
    report("7", "KKT certificate", || {
        let mut worst_res = 0.0f64;
        let mut worst_eq = 0.0f64;
        let mut count = 0;
        let mut check = |r: &SolveResult| {
            if let Some(k) = r.kkt {
                worst_res = worst_res.max(k.max_residual());
                worst_eq = worst_eq.max(k.weight_sum).max(k.backscatter_stationarity);
                count += 1;
            }
        };
        for (_, _, res) in &standard_sweeps().sweeps {
            for s in &res[..2] {
                s.iter().flatten().for_each(&mut check);
            }
        }
        let mut rng = SmallRng::seed_from_u64(CROSS_SEED);
        for _ in 0..20 {
            if let Ok(r) = solve(&random_instance(&mut rng, false), &SolverOptions::default()) {
                check(&r);
            }
        }
        let passed = count > 0 && worst_res <= KKT_RESIDUAL_TOL && worst_eq <= KKT_EQUALITY_TOL;
        (passed, format!("{count} solves, worst residual {worst_res:.2e} (limit {KKT_RESIDUAL_TOL:e}), worst equality {worst_eq:.2e} (limit {KKT_EQUALITY_TOL:e})"))
    })
}

/// Criterion 8a: Lambert W round trip on `10^4` points.
pub fn lambert_round_trip() -> CriterionReport {
    report("8a", "Lambert W round trip", || {
        let branch = -(-1f64).exp();
        let mut worst = 0.0f64;
        for i in 0..10_000 {
            // Dense near the branch point, then log-spaced up to 1e6.
            let x = if i < 5_000 {
                branch - branch * (i as f64 / 5_000.0).powi(3)
            } else {
                10f64.powf(-8.0 + 14.0 * (i - 5_000) as f64 / 4_999.0)
            };
            let w = match lambert_w0(x) {
                Ok(w) => w,
                Err(e) => return (false, format!("x = {x}: {e}")),
            };
            worst = worst.max((w * w.exp() - x).abs() / x.abs().max(1.0));
        }
        (worst <= LAMBERT_TOL, format!("worst scaled residual {worst:.2e} (limit {LAMBERT_TOL:e})"))
    })
}

/// Criterion 8b: midpoint concavity of the four rate functions.
pub fn rate_concavity() -> CriterionReport {
    report("8b", "rate concavity", || {
        let p = SystemParams::default();
        let ch = ChannelState::real(H1, H2, H12_SPLIT, &p).expect("valid gains");
        let e = p.eta * p.p1 * H2;
        let mut rng = SmallRng::seed_from_u64(PROPERTY_SEED);
        let mut worst = f64::NEG_INFINITY;
        type RateFn = fn(f64, f64, &ChannelState, &SystemParams) -> crate::Result<f64>;
        let fns: [(RateFn, f64); 4] = [(rate_r1_2, 1.0), (rate_r1_3, 1.0), (rate_r1_4, e), (rate_r2, e)];
        for (f, scale) in fns {
            for _ in 0..1000 {
                let a = (rng.random_range(1e-4..1.0), rng.random_range(1e-6..1.0) * scale);
                let b = (rng.random_range(1e-4..1.0), rng.random_range(1e-6..1.0) * scale);
                let m = (0.5 * (a.0 + b.0), 0.5 * (a.1 + b.1));
                let (fa, fb, fm) = (f(a.0, a.1, &ch, &p), f(b.0, b.1, &ch, &p), f(m.0, m.1, &ch, &p));
                let (Ok(fa), Ok(fb), Ok(fm)) = (fa, fb, fm) else {
                    return (false, "rate evaluation failed".into());
                };
                worst = worst.max((0.5 * (fa + fb) - fm) / fm.abs().max(1.0));
            }
        }
        (worst <= 1e-12, format!("4000 midpoint pairs, worst violation {worst:.2e} (limit 1e-12)"))
    })
}

/// Criterion 8c: negative semidefinite Hessian of the relay rate and its
/// null direction `(1, tau/t)`, against the closed form
/// `v'Hv = -B rho2^2 (v_tau t - v_t tau)^2 / (t (t + rho2 tau)^2 ln 2)`.
pub fn hessian_structure() -> CriterionReport {
    report("8c", "relay-rate Hessian", || {
        let p = SystemParams::default();
        let ch = ChannelState::real(H1, H2, H12_SPLIT, &p).expect("valid gains");
        let e = p.eta * p.p1 * H2;
        let mut rng = SmallRng::seed_from_u64(PROPERTY_SEED + 1);
        let (mut worst_pos, mut worst_oracle, mut worst_null) = (f64::NEG_INFINITY, 0.0f64, 0.0f64);
        for _ in 0..100 {
            let t = rng.random_range(1e-3..1.0);
            let tau = rng.random_range(1e-3..1.0) * e;
            let v = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0) * e];
            let Ok(q) = hessian_check_r2(t, tau, v, &ch, &p) else {
                return (false, "Hessian probe failed".into());
            };
            let g = ch.rho2;
            let oracle = -p.b * g * g * (v[1] * t - v[0] * tau).powi(2) / (t * (t + g * tau).powi(2) * LN_2);
            // Same expression without the cancellation between the two terms.
            let magnitude = p.b * g * g * (v[1].abs() * t + v[0].abs() * tau).powi(2) / (t * (t + g * tau).powi(2) * LN_2);
            worst_pos = worst_pos.max(q / magnitude);
            worst_oracle = worst_oracle.max((q - oracle).abs() / magnitude);
            let null = [1.0, tau / t];
            let Ok(qn) = hessian_check_r2(t, tau, null, &ch, &p) else {
                return (false, "Hessian probe failed".into());
            };
            let along_tau = hessian_check_r2(t, tau, [0.0, tau / t], &ch, &p).unwrap_or(f64::NAN).abs();
            worst_null = worst_null.max(qn.abs() / along_tau);
        }
        let passed = worst_pos <= 1e-6 && worst_oracle <= 1e-4 && worst_null <= 1e-5;
        let detail = format!(
            "100 points: largest v'Hv relative to its magnitude {worst_pos:.2e}, worst mismatch to closed form {worst_oracle:.2e}, null direction curvature ratio {worst_null:.2e}"
        );
        (passed, detail)
    })
}

/// Criterion 8d: monotone trends on the standard sweeps.
pub fn sweep_trends() -> CriterionReport {
    report("8d", "sweep trends", || {
        let set = standard_sweeps();
        let beta = rbar_series(&set.sweeps[0].2[0]).is_some_and(|v| is_unimodal(&v) && {
            let arg = maximisers(&v);
            arg.iter().all(|&i| (ARGMAX_RANGE.0..=ARGMAX_RANGE.1).contains(&set.sweeps[0].1[i]))
        });
        let mut d1_ok = true;
        let mut notes = Vec::new();
        for (label, _, res) in set.sweeps.iter().filter(|s| s.0.starts_with("d1")) {
            for (k, s) in res.iter().enumerate() {
                let ok = rbar_series(s).is_some_and(|v| is_non_increasing(&v));
                if !ok {
                    notes.push(format!("{label} {} not decreasing", SchemeId::ALL[k]));
                }
                d1_ok &= ok;
            }
        }
        let detail = format!(
            "beta sweep unimodal with argmax in range: {beta}; rbar decreasing in d1 for all schemes at both bit rates: {d1_ok}{}",
            if notes.is_empty() { String::new() } else { format!(" ({})", notes.join(", ")) }
        );
        (beta && d1_ok, detail)
    })
}

/// Every criterion in order.
pub fn all_criteria() -> Vec<CriterionReport> {
    vec![
        ber_agreement(),
        solver_cross_validation(),
        convergence_reproduction(),
        beta_sweep_shape(),
        reductions(),
        containment(),
        kkt_certificates(),
        lambert_round_trip(),
        rate_concavity(),
        hessian_structure(),
        sweep_trends(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trend_helpers() {
        assert!(is_unimodal(&[1.0, 2.0, 3.0, 2.0]));
        assert!(!is_unimodal(&[1.0, 3.0, 2.0, 3.0]));
        assert!(is_unimodal(&[1.0, 1.0, 1.0]));
        assert_eq!(maximisers(&[1.0, 3.0, 3.0, 2.0]), vec![1, 2]);
        assert!(is_non_increasing(&[3.0, 3.0, 2.0]));
        assert!(!is_non_increasing(&[3.0, 3.1]));
    }
}
