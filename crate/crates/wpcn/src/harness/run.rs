//! Sweep execution.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::baselines::{independent_rates, independent_solve, wsr_solve_scheme, SchemeId};
use crate::dual_solver::{SolveResult, SolverOptions};
use crate::error::{Error, Result};
use crate::phy::{monte_carlo_ber, BackscatterLink, SignalModel};
use crate::rates::{evaluate, feasibility, Allocation, RateBreakdown};
use crate::sysmodel::{ChannelState, LinePlacement, SystemParams};

use super::output::{Column, Table};
use super::{signal_model_name, Experiment, ExperimentKind, GAUSSIAN_VALIDITY_SAMPLES};

/// Environment variable overriding the worker count.
pub const WORKERS_ENV: &str = "WPCN_WORKERS";

/// Worker threads: `WPCN_WORKERS` if set, otherwise the available parallelism.
pub fn worker_count() -> Result<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Error::Config(format!("{WORKERS_ENV} must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Tables produced by one experiment plus summary lines for the console.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub tables: Vec<Table>,
    pub summary: Vec<String>,
    /// Grid points whose solve failed or did not re-validate.
    pub failed_points: usize,
    /// Of those, the ones that stopped on the iteration limit.
    pub non_converged: usize,
}

/// Result of one scheme at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointOutcome {
    pub scheme: SchemeId,
    pub result: Result<SolveResult>,
    pub wall_seconds: f64,
}

fn rates_for(scheme: SchemeId, alloc: &Allocation, link: &BackscatterLink) -> RateBreakdown {
    match scheme {
        SchemeId::Independent => independent_rates(alloc, link),
        _ => evaluate(alloc, link),
    }
}

/// Re-evaluates a reported allocation with the rate model and checks it
/// against the solver's numbers and the resource constraints.
fn revalidate(scheme: SchemeId, r: &SolveResult, link: &BackscatterLink) -> Result<()> {
    let again = rates_for(scheme, &r.alloc, link);
    let slack = feasibility(&r.alloc, link);
    let energy_scale = link.params.eta * link.params.p1 * link.ch.h2;
    let tol = 1e-9;
    if (again.rbar - r.rbar).abs() > tol * r.rbar.abs().max(1.0) {
        return Err(Error::SolverState(format!("re-evaluated rbar {} differs from {}", again.rbar, r.rbar)));
    }
    if slack.time < -tol || slack.energy < -tol * energy_scale {
        return Err(Error::SolverState(format!("allocation violates resources: {slack:?}")));
    }
    Ok(())
}

/// Solves one scheme the way the sweeps do: the dual solver for the
/// cooperative schemes, the barrier method for independent transmission,
/// then re-validation of the reported allocation.
pub fn solve_point(scheme: SchemeId, link: &BackscatterLink, opts: &SolverOptions) -> Result<SolveResult> {
    let r = match scheme {
        SchemeId::Independent => independent_solve(link)?,
        _ => scheme.solve_dual(link, opts)?,
    };
    revalidate(scheme, &r, link)?;
    Ok(r)
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let v = f();
    (v, start.elapsed().as_secs_f64())
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn status(r: &Result<SolveResult>) -> String {
    match r {
        Ok(_) => "ok".into(),
        Err(e) => format!("failed: {e}"),
    }
}

const SWEEP_COLUMNS: [Column; 27] = [
    ("index", "-", "grid point index"),
    ("experiment", "-", "sweep family"),
    ("scheme", "-", "transmission scheme"),
    ("x", "varies", "swept value (beta, or distance in m)"),
    ("d1", "m", "far device to access point distance, blank when gains are given"),
    ("d2", "m", "relay to access point distance, blank when gains are given"),
    ("h1", "-", "far device channel power gain"),
    ("h2", "-", "relay channel power gain"),
    ("h12", "-", "inter-device channel power gain"),
    ("beta", "-", "power-splitting ratio"),
    ("rb", "bit/s", "backscatter bit rate"),
    ("rbar", "bit/frame", "common throughput"),
    ("r1", "bit/frame", "far device throughput"),
    ("r2", "bit/frame", "relay own throughput"),
    ("t1", "frame", "energy transfer time"),
    ("t2", "frame", "backscatter time"),
    ("t3", "frame", "far device active time"),
    ("t41", "frame", "relay forwarding time"),
    ("t42", "frame", "relay own-data time"),
    ("tau41", "J", "relay energy spent forwarding"),
    ("tau42", "J", "relay energy spent on own data"),
    ("p3", "W", "far device transmit power"),
    ("p41", "W", "relay forwarding power"),
    ("p42", "W", "relay own-data power"),
    ("iterations", "-", "multiplier updates (0 for the barrier method)"),
    ("certified_gap", "-", "relative duality gap certified by the returned multipliers"),
    ("status", "-", "ok, or the failure that flagged the row"),
];

/// One point of a gain or distance sweep.
struct SweepPoint {
    x: f64,
    d: Option<(f64, f64)>,
    params: SystemParams,
    link: Result<BackscatterLink>,
}

fn sweep_points(e: &Experiment, params: &SystemParams) -> Vec<SweepPoint> {
    let from_gains = |p: SystemParams, x: f64| {
        let (h1, h2, h12) = e.gains;
        let link = ChannelState::real(h1, h2, h12, &p).and_then(|ch| BackscatterLink::new(p, ch));
        SweepPoint { x, d: None, params: p, link }
    };
    let from_line = |p: SystemParams, x: f64, d1: f64, d2: f64| {
        let link = LinePlacement::new(d1, d2)
            .and_then(|pl| pl.channels(&p))
            .and_then(|ch| BackscatterLink::new(p, ch));
        SweepPoint { x, d: Some((d1, d2)), params: p, link }
    };
    match e.kind {
        ExperimentKind::BetaSweep => e.grid.iter().map(|&b| from_gains(params.with_beta(b), b)).collect(),
        ExperimentKind::D1Sweep => e
            .rb_values
            .iter()
            .flat_map(|&rb| e.grid.iter().map(move |&d1| (rb, d1)))
            .map(|(rb, d1)| from_line(params.with_rb(rb), d1, d1, e.d2))
            .collect(),
        ExperimentKind::D2Sweep => e.grid.iter().map(|&d2| from_line(*params, d2, e.d1, d2)).collect(),
        _ => Vec::new(),
    }
}

fn sweep_row(e: &Experiment, index: usize, pt: &SweepPoint, out: &PointOutcome) -> Vec<String> {
    let (d1, d2) = pt.d.map_or((None, None), |(a, b)| (Some(a), Some(b)));
    let (h1, h2, h12) = match &pt.link {
        Ok(l) => (Some(l.ch.h1), Some(l.ch.h2), Some(l.ch.h12)),
        Err(_) => (None, None, None),
    };
    let mut row = vec![
        index.to_string(),
        e.kind.name().into(),
        out.scheme.name().into(),
        num(pt.x),
        opt_num(d1),
        opt_num(d2),
        opt_num(h1),
        opt_num(h2),
        opt_num(h12),
        num(pt.params.beta),
        num(pt.params.rb),
    ];
    match &out.result {
        Ok(r) => {
            let a = &r.alloc;
            row.extend(
                [r.rbar, r.rates.r1, r.rates.r2, a.t1, a.t2, a.t3, a.t41, a.t42, a.tau41, a.tau42, r.powers.0, r.powers.1, r.powers.2]
                    .map(num),
            );
            row.push(r.iterations.to_string());
            row.push(opt_num(r.certified_gap));
        }
        Err(_) => row.extend(std::iter::repeat_n(String::new(), 15)),
    }
    row.push(status(&out.result));
    row
}

fn count_failures(outcomes: &[PointOutcome]) -> (usize, usize) {
    let failed = outcomes.iter().filter(|o| o.result.is_err()).count();
    let stalled = outcomes.iter().filter(|o| matches!(o.result, Err(Error::NonConvergence { .. }))).count();
    (failed, stalled)
}

fn pool() -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count()?)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

fn run_sweep(e: &Experiment, params: &SystemParams) -> Result<RunOutput> {
    let points = sweep_points(e, params);
    let tasks: Vec<(usize, SchemeId)> =
        (0..points.len()).flat_map(|i| e.schemes.iter().map(move |&s| (i, s))).collect();
    let outcomes: Vec<PointOutcome> = pool()?.install(|| {
        tasks
            .par_iter()
            .map(|&(i, scheme)| {
                let (result, wall_seconds) = timed(|| match &points[i].link {
                    Ok(link) => solve_point(scheme, link, &e.solver),
                    Err(err) => Err(err.clone()),
                });
                PointOutcome { scheme, result, wall_seconds }
            })
            .collect()
    });
    let mut table = Table::new(e.output.clone(), SWEEP_COLUMNS.to_vec());
    for (&(i, _), out) in tasks.iter().zip(&outcomes) {
        table.push(sweep_row(e, i, &points[i], out), out.wall_seconds);
    }
    let (failed_points, non_converged) = count_failures(&outcomes);
    let summary = vec![format!(
        "{}: {} points x {} schemes, {} failed",
        e.kind,
        points.len(),
        e.schemes.len(),
        failed_points
    )];
    Ok(RunOutput { tables: vec![table], summary, failed_points, non_converged })
}

const REGION_COLUMNS: [Column; 15] = [
    ("index", "-", "weight index"),
    ("scheme", "-", "transmission scheme"),
    ("d1", "m", "far device distance"),
    ("d2", "m", "relay distance"),
    ("w1", "-", "weight on the far device rate, w2 = 1 - w1"),
    ("r1", "bit/frame", "far device throughput"),
    ("r2", "bit/frame", "relay own throughput"),
    ("t1", "frame", "energy transfer time"),
    ("t2", "frame", "backscatter time"),
    ("t3", "frame", "far device active time"),
    ("t41", "frame", "relay forwarding time"),
    ("t42", "frame", "relay own-data time"),
    ("tau41", "J", "relay energy spent forwarding"),
    ("tau42", "J", "relay energy spent on own data"),
    ("status", "-", "ok, or the failure that flagged the row"),
];

/// Weighted-sum-rate boundary samples of each scheme on one placement.
///
/// Every reported pair is re-evaluated from its allocation before writing.
pub fn emit_rate_region(
    params: &SystemParams,
    placement: LinePlacement,
    weights: &[f64],
    schemes: &[SchemeId],
    path: PathBuf,
) -> Result<(Table, usize)> {
    if weights.len() < 11 || weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
        return Err(Error::Config("rate region needs at least 11 weights in [0, 1]".into()));
    }
    let link = BackscatterLink::new(*params, placement.channels(params)?)?;
    let tasks: Vec<(usize, SchemeId)> =
        schemes.iter().flat_map(|&s| (0..weights.len()).map(move |i| (i, s))).collect();
    type Boundary = (Result<(f64, f64, Allocation)>, f64);
    let results: Vec<Boundary> = pool()?.install(|| {
        tasks
            .par_iter()
            .map(|&(i, scheme)| {
                timed(|| {
                    let (r1, r2, alloc) = wsr_solve_scheme(&link, weights[i], scheme)?;
                    let again = rates_for(scheme, &alloc, &link);
                    if (again.r1 - r1).abs() > 1e-9 * r1.max(1.0) || (again.r2 - r2).abs() > 1e-9 * r2.max(1.0) {
                        return Err(Error::SolverState("region point does not re-evaluate".into()));
                    }
                    if !feasibility(&alloc, &link).is_feasible(1e-9) {
                        return Err(Error::SolverState("region point infeasible".into()));
                    }
                    Ok((r1, r2, alloc))
                })
            })
            .collect()
    });
    let mut table = Table::new(path, REGION_COLUMNS.to_vec());
    let mut failed = 0;
    for (&(i, scheme), (res, wall)) in tasks.iter().zip(&results) {
        let mut row = vec![i.to_string(), scheme.name().into(), num(placement.d1), num(placement.d2), num(weights[i])];
        match res {
            Ok((r1, r2, a)) => {
                row.extend([*r1, *r2, a.t1, a.t2, a.t3, a.t41, a.t42, a.tau41, a.tau42].map(num));
                row.push("ok".into());
            }
            Err(e) => {
                failed += 1;
                row.extend(std::iter::repeat_n(String::new(), 9));
                row.push(format!("failed: {e}"));
            }
        }
        table.push(row, *wall);
    }
    Ok((table, failed))
}

fn suffixed(path: &Path, tag: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = path.extension().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "csv".into());
    path.with_file_name(format!("{stem}_{tag}.{ext}"))
}

const TRACE_COLUMNS: [Column; 12] = [
    ("beta", "-", "power-splitting ratio"),
    ("iteration", "-", "multiplier update index"),
    ("rbar", "bit/frame", "throughput of the allocation recovered at this iteration"),
    ("gap", "-", "(d* - rbar) / d*, d* the terminal throughput"),
    ("bound_gap", "-", "(g(lambda) - d*) / d*, g the dual function"),
    ("step", "-", "distance to the next multipliers in solver units"),
    ("lam1", "bit/frame", "price of time"),
    ("lam2", "bit/J", "price of relay energy"),
    ("lam3", "-", "weight of the relay-decoded far device rate"),
    ("lam4", "-", "weight of the end-to-end far device rate"),
    ("lam5", "-", "weight of the relay's own rate"),
    ("status", "-", "ok, or the failure that stopped the run"),
];

/// The dual solver's iteration trace at each power-splitting ratio.
pub fn convergence_trace(
    params: &SystemParams,
    gains: (f64, f64, f64),
    betas: &[f64],
    opts: &SolverOptions,
    path: PathBuf,
) -> Result<(Table, usize, usize)> {
    let mut table = Table::new(path, TRACE_COLUMNS.to_vec());
    let (mut failed, mut stalled) = (0, 0);
    for &beta in betas {
        let p = params.with_beta(beta);
        let link = BackscatterLink::new(p, ChannelState::real(gains.0, gains.1, gains.2, &p)?)?;
        let (res, wall) = timed(|| SchemeId::ProposedAB.solve_dual(&link, opts));
        match res {
            Ok(r) => {
                let per_row = wall / r.trace.len().max(1) as f64;
                for t in &r.trace {
                    let d = t.duals;
                    let mut row = vec![num(beta), t.iteration.to_string()];
                    row.extend([t.rbar, t.gap, t.bound_gap, t.step, d.lam1, d.lam2, d.lam3, d.lam4, d.lam5].map(num));
                    row.push("ok".into());
                    table.push(row, per_row);
                }
            }
            Err(e) => {
                failed += 1;
                stalled += usize::from(matches!(e, Error::NonConvergence { .. }));
                let mut row = vec![num(beta)];
                row.extend(std::iter::repeat_n(String::new(), 10));
                row.push(format!("failed: {e}"));
                table.push(row, wall);
            }
        }
    }
    Ok((table, failed, stalled))
}

const BER_COLUMNS: [Column; 11] = [
    ("beta", "-", "power-splitting ratio"),
    ("samples_per_bit", "-", "detector samples per backscatter bit"),
    ("model", "-", "simulated signal model (energy or full)"),
    ("eps_closed", "-", "closed-form bit error rate"),
    ("eps_mc", "-", "simulated bit error rate"),
    ("stderr", "-", "binomial standard error of eps_mc"),
    ("z", "-", "(eps_mc - eps_closed) in standard errors"),
    ("errors", "-", "simulated bit errors"),
    ("bits", "-", "simulated bits"),
    ("below_gaussian_threshold", "-", "true when samples_per_bit < 10"),
    ("status", "-", "ok, or the failure that flagged the row"),
];

/// Simulated against closed-form error rates over a grid of `beta` and samples per bit.
///
/// The bit rate at each point is `Rs / N`. Rows use seeds `seed + row`,
/// so the table depends only on `seed`. The summary reports the largest
/// `|z|` per model over rows at or above the Gaussian-validity threshold.
#[allow(clippy::too_many_arguments)]
pub fn validate_ber(
    params: &SystemParams,
    gains: (f64, f64, f64),
    betas: &[f64],
    samples_per_bit: &[usize],
    num_bits: u64,
    seed: u64,
    models: &[SignalModel],
    path: PathBuf,
) -> Result<(Table, Vec<String>)> {
    if num_bits < 100_000 {
        return Err(Error::Config("error-rate validation needs at least 10^5 bits".into()));
    }
    let mut table = Table::new(path, BER_COLUMNS.to_vec());
    let mut worst: Vec<f64> = vec![0.0; models.len()];
    let pool = pool()?;
    let mut row_index = 0u64;
    for &beta in betas {
        for &n in samples_per_bit {
            for (mi, &model) in models.iter().enumerate() {
                let p = params.with_beta(beta).with_rb(params.rs / n as f64);
                let (res, wall) = timed(|| -> Result<_> {
                    let link = BackscatterLink::new(p, ChannelState::real(gains.0, gains.1, gains.2, &p)?)?;
                    let est = pool.install(|| monte_carlo_ber(&link, num_bits, seed + row_index, model))?;
                    Ok((link.ber(), est))
                });
                row_index += 1;
                let mut row = vec![num(beta), n.to_string(), signal_model_name(model).into()];
                match res {
                    Ok((closed, est)) => {
                        let z = est.z_score(closed);
                        if n >= GAUSSIAN_VALIDITY_SAMPLES {
                            worst[mi] = worst[mi].max(z.abs());
                        }
                        row.extend([closed, est.eps, est.stderr, z].map(num));
                        row.extend([est.errors.to_string(), est.bits.to_string()]);
                        row.push((n < GAUSSIAN_VALIDITY_SAMPLES).to_string());
                        row.push("ok".into());
                    }
                    Err(e) => {
                        row.extend(std::iter::repeat_n(String::new(), 6));
                        row.push((n < GAUSSIAN_VALIDITY_SAMPLES).to_string());
                        row.push(format!("failed: {e}"));
                    }
                }
                table.push(row, wall);
            }
        }
    }
    let summary = models
        .iter()
        .zip(&worst)
        .map(|(&m, z)| format!("max |z| ({} model, N >= {GAUSSIAN_VALIDITY_SAMPLES}) = {z:.3}", signal_model_name(m)))
        .collect();
    Ok((table, summary))
}

/// Runs an experiment and returns its tables without writing them.
pub fn run_experiment(e: &Experiment, params: &SystemParams) -> Result<RunOutput> {
    e.validate()?;
    match e.kind {
        ExperimentKind::BetaSweep | ExperimentKind::D1Sweep | ExperimentKind::D2Sweep => run_sweep(e, params),
        ExperimentKind::RateRegion => {
            let mut out = RunOutput { tables: Vec::new(), summary: Vec::new(), failed_points: 0, non_converged: 0 };
            for &d2 in &e.d2_values {
                let placement = LinePlacement::new(e.d1, d2)?;
                let path = suffixed(&e.output, &format!("d2_{d2}"));
                let (table, failed) = emit_rate_region(params, placement, &e.grid, &e.schemes, path)?;
                out.summary.push(format!("rate region d1 = {} m, d2 = {d2} m: {failed} failed", e.d1));
                out.failed_points += failed;
                out.tables.push(table);
            }
            Ok(out)
        }
        ExperimentKind::Convergence => {
            let (table, failed, stalled) = convergence_trace(params, e.gains, &e.grid, &e.solver, e.output.clone())?;
            let final_gap = table.numeric_column("gap").and_then(|g| g.last().copied()).unwrap_or(f64::NAN);
            let summary = vec![format!("convergence: {} iterations traced, last gap {final_gap:.3e}", table.rows.len())];
            Ok(RunOutput { tables: vec![table], summary, failed_points: failed, non_converged: stalled })
        }
        ExperimentKind::BerValidation => {
            let (table, summary) = validate_ber(
                params,
                e.gains,
                &e.grid,
                &e.samples_per_bit,
                e.num_bits,
                e.seed,
                &e.signal_models,
                e.output.clone(),
            )?;
            let failed = table.rows.iter().filter(|r| r.last().is_some_and(|s| s != "ok")).count();
            Ok(RunOutput { tables: vec![table], summary, failed_points: failed, non_converged: 0 })
        }
    }
}
