//! Randomised invariants of the models and numerical building blocks.

use proptest::prelude::*;

use wpcn::dual_solver::{solve, SolverOptions};
use wpcn::numerics::{lambert_w0, project_duals, snr_from_level, snr_level, solve_lp, DualConstraints, LpProblem, Relation};
use wpcn::phy::{bsc_capacity, BackscatterLink};
use wpcn::rates::{hessian_check_r2, rate_r1_3, rate_r2};
use wpcn::sysmodel::{reference_gains::*, ChannelState, LinePlacement, SystemParams};

fn reference_channel(p: &SystemParams) -> ChannelState {
    ChannelState::real(H1, H2, H12_SPLIT, p).unwrap()
}

/// Relay energy harvested per unit of transfer time at the reference gains.
fn energy_unit() -> f64 {
    let p = SystemParams::default();
    p.eta * p.p1 * H2
}

proptest! {
    #[test]
    fn lambert_round_trip(u in 0.0f64..1.0, log_x in -8.0f64..8.0, near_branch in any::<bool>()) {
        let x = if near_branch { -(-1f64).exp() * u } else { 10f64.powf(log_x) };
        let w = lambert_w0(x).unwrap();
        prop_assert!(w >= -1.0);
        prop_assert!((w * w.exp() - x).abs() <= 1e-12 * x.abs().max(1.0));
    }

    #[test]
    fn snr_level_round_trip(log_z in -8.0f64..6.0) {
        let z = 10f64.powf(log_z);
        let back = snr_from_level(snr_level(z)).unwrap();
        prop_assert!((back - z).abs() <= 1e-8 * z, "{z} -> {back}");
    }

    #[test]
    fn relay_rate_is_concave(a in (1e-4f64..1.0, 1e-4f64..1.0), b in (1e-4f64..1.0, 1e-4f64..1.0), s in 0.0f64..1.0) {
        let p = SystemParams::default();
        let ch = reference_channel(&p);
        let e = energy_unit();
        let f = |t: f64, x: f64| rate_r2(t, x * e, &ch, &p).unwrap();
        let mix = f(s * a.0 + (1.0 - s) * b.0, s * a.1 + (1.0 - s) * b.1);
        prop_assert!(mix >= s * f(a.0, a.1) + (1.0 - s) * f(b.0, b.1) - 1e-9 * mix.abs().max(1.0));
    }

    #[test]
    fn rates_are_positively_homogeneous(t in 1e-4f64..1.0, x in 1e-4f64..1.0, k in 0.01f64..10.0) {
        let p = SystemParams::default();
        let ch = reference_channel(&p);
        let base = rate_r1_3(x, t, &ch, &p).unwrap();
        let scaled = rate_r1_3(k * x, k * t, &ch, &p).unwrap();
        prop_assert!((scaled - k * base).abs() <= 1e-12 * scaled.abs().max(1.0));
    }

    #[test]
    fn rate_grows_with_energy(t in 1e-4f64..1.0, x in 1e-4f64..1.0, dx in 1e-4f64..1.0) {
        let p = SystemParams::default();
        let ch = reference_channel(&p);
        let e = energy_unit();
        prop_assert!(rate_r2(t, (x + dx) * e, &ch, &p).unwrap() > rate_r2(t, x * e, &ch, &p).unwrap());
    }

    #[test]
    fn hessian_is_nsd_with_radial_null_direction(t in 1e-3f64..1.0, x in 1e-3f64..1.0, v in (-1.0f64..1.0, -1.0f64..1.0)) {
        let p = SystemParams::default();
        let ch = reference_channel(&p);
        let e = energy_unit();
        let tau = x * e;
        let q = hessian_check_r2(t, tau, [v.0, v.1 * e], &ch, &p).unwrap();
        let scale = hessian_check_r2(t, tau, [0.0, e], &ch, &p).unwrap().abs();
        prop_assert!(q <= 1e-6 * scale);
        let null = hessian_check_r2(t, tau, [1.0, tau / t], &ch, &p).unwrap();
        let along = hessian_check_r2(t, tau, [0.0, tau / t], &ch, &p).unwrap().abs();
        prop_assert!(null.abs() <= 1e-5 * along);
    }

    #[test]
    fn error_rate_falls_with_samples_and_rises_with_split(beta in 0.05f64..0.9, db in 0.01f64..0.09, n in 2.0f64..200.0, dn in 1.0f64..50.0) {
        let base = SystemParams::default();
        let ber = |beta: f64, n: f64| {
            let p = base.with_beta(beta).with_rb(base.rs / n);
            BackscatterLink::new(p, reference_channel(&p)).unwrap().ber()
        };
        prop_assert!(ber(beta, n + dn) <= ber(beta, n));
        prop_assert!(ber(beta + db, n) >= ber(beta, n));
    }

    #[test]
    fn channel_capacity_is_symmetric(eps in 0.0f64..=1.0) {
        let c = bsc_capacity(eps).unwrap();
        prop_assert!((0.0..=1.0).contains(&c));
        prop_assert!((c - bsc_capacity(1.0 - eps).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn lp_duals_certify_the_optimum(c in prop::collection::vec(0.0f64..5.0, 3), a in prop::collection::vec(0.1f64..3.0, 9), b in prop::collection::vec(0.5f64..4.0, 3)) {
        let mut lp = LpProblem::new(c.clone());
        for i in 0..3 {
            lp.row(a[3 * i..3 * i + 3].to_vec(), Relation::Le, b[i]);
        }
        let sol = solve_lp(&lp).unwrap();
        let dual_value: f64 = sol.duals.iter().zip(&b).map(|(y, bi)| y * bi).sum();
        prop_assert!(lp.violation(&sol.x) <= 1e-9);
        prop_assert!(sol.duals.iter().all(|&y| y >= -1e-9));
        // Dual feasibility and a zero duality gap.
        for j in 0..3 {
            let reduced: f64 = (0..3).map(|i| a[3 * i + j] * sol.duals[i]).sum::<f64>() - c[j];
            prop_assert!(reduced >= -1e-9);
        }
        prop_assert!((dual_value - sol.value).abs() <= 1e-9 * sol.value.abs().max(1.0));
    }

    #[test]
    fn dual_projection_is_idempotent(x in prop::array::uniform5(-2.0f64..2.0)) {
        let cons = DualConstraints {
            equalities: vec![([1.0, 0.0, 1.0, 1.0, 1.0], 1.0)],
            halfspaces: vec![([0.0, 1.0, 0.0, 0.0, 0.0], 0.5)],
        };
        let anchor = [0.25; 5];
        let once = project_duals(&x, &anchor, &cons).unwrap();
        prop_assert!(cons.violation(&once) <= 1e-9);
        let twice = project_duals(&once, &anchor, &cons).unwrap();
        for j in 0..5 {
            prop_assert!((once[j] - twice[j]).abs() <= 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn throughput_falls_with_far_device_distance(d1 in 5.0f64..7.5, step in 0.05f64..0.5) {
        let p = SystemParams::default();
        let rbar = |d1: f64| {
            let ch = LinePlacement::new(d1, 2.5).unwrap().channels(&p).unwrap();
            solve(&BackscatterLink::new(p, ch).unwrap(), &SolverOptions::default()).unwrap().rbar
        };
        let (near, far) = (rbar(d1), rbar(d1 + step));
        prop_assert!(far <= near * (1.0 + 1e-9), "{near} -> {far}");
    }
}
