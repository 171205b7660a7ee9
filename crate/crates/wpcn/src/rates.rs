//! Achievable rates and constraint slacks as functions of the time split `t`
//! and the relay energy split `tau`.
//!
//! Every rate is a perspective `t log2(1 + g x / t)` of a time variable `t`
//! and a resource `x`, hence jointly concave. At `t = 0` the value is taken
//! to be 0 for every `x >= 0`, which is the limit along any ray and keeps the
//! functions total on the closed orthant.
//!
//! Rates are in bits per frame; the bandwidth `B` in hertz converts spectral
//! efficiency to bits because the frame lasts one second.

use std::f64::consts::LN_2;

use crate::error::{Error, Result};
use crate::phy::{backscatter_rate, phase1_energy, phase2_energy, BackscatterLink};
use crate::sysmodel::{ChannelState, SystemParams};

/// Time fractions of the five transmission slots and the relay's energy split.
///
/// `t1` wireless energy transfer, `t2` backscatter, `t3` the far device's
/// active transmission, `t41` the relay forwarding it, `t42` the relay's
/// own data. `tau41`, `tau42` are the joules the relay spends in its slots.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Allocation {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub t41: f64,
    pub t42: f64,
    pub tau41: f64,
    pub tau42: f64,
}

impl Allocation {
    pub fn total_time(&self) -> f64 {
        self.t1 + self.t2 + self.t3 + self.t41 + self.t42
    }

    /// Transmit powers `(P3, P41, P42)` in watts; zero for empty slots.
    pub fn powers(&self, params: &SystemParams, ch: &ChannelState) -> (f64, f64, f64) {
        let ratio = |e: f64, t: f64| if t > 0.0 { e / t } else { 0.0 };
        let (e1, _) = phase1_energy(params, ch, self.t1);
        (ratio(e1, self.t3), ratio(self.tau41, self.t41), ratio(self.tau42, self.t42))
    }

    fn is_nonnegative(&self) -> bool {
        [self.t1, self.t2, self.t3, self.t41, self.t42, self.tau41, self.tau42]
            .iter()
            .all(|&v| v >= 0.0)
    }
}

/// Per-component rates of one allocation, in bits per frame.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RateBreakdown {
    /// Backscatter bits received by the relay.
    pub r1_1: f64,
    /// Far device to relay, active phase.
    pub r1_2: f64,
    /// Far device to access point, active phase.
    pub r1_3: f64,
    /// Relay forwarding the far device's data.
    pub r1_4: f64,
    /// Far device end-to-end: `min(r1_1 + r1_2, r1_3 + r1_4)`.
    pub r1: f64,
    /// Relay's own data.
    pub r2: f64,
    /// Common throughput `min(r1, r2)`.
    pub rbar: f64,
}

/// Time and energy slack of an allocation; feasible iff both are nonnegative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slack {
    pub time: f64,
    pub energy: f64,
}

impl Slack {
    pub fn is_feasible(&self, tol: f64) -> bool {
        self.time >= -tol && self.energy >= -tol
    }
}

/// `t log2(1 + gain x / t)`, 0 at `t = 0`; inputs assumed nonnegative.
pub(crate) fn perspective(t: f64, x: f64, gain: f64) -> f64 {
    if t <= 0.0 || x <= 0.0 {
        0.0
    } else {
        t * (gain * x / t).ln_1p() / LN_2
    }
}

fn checked(t: f64, x: f64, gain: f64) -> Result<f64> {
    if !(t >= 0.0 && x >= 0.0) {
        return Err(Error::Domain(format!("rate arguments must be nonnegative, got ({t}, {x})")));
    }
    Ok(perspective(t, x, gain))
}

/// Far device to relay during its active slot.
pub fn rate_r1_2(t1: f64, t3: f64, ch: &ChannelState, params: &SystemParams) -> Result<f64> {
    Ok(params.b * checked(t3, t1, ch.rho12)?)
}

/// Far device to access point during its active slot.
pub fn rate_r1_3(t1: f64, t3: f64, ch: &ChannelState, params: &SystemParams) -> Result<f64> {
    Ok(params.b * checked(t3, t1, ch.rho13)?)
}

/// Relay forwarding the far device's data with energy `tau41`.
pub fn rate_r1_4(t41: f64, tau41: f64, ch: &ChannelState, params: &SystemParams) -> Result<f64> {
    Ok(params.b * checked(t41, tau41, ch.rho2)?)
}

/// Relay transmitting its own data with energy `tau42`.
pub fn rate_r2(t42: f64, tau42: f64, ch: &ChannelState, params: &SystemParams) -> Result<f64> {
    Ok(params.b * checked(t42, tau42, ch.rho2)?)
}

/// All component rates of `alloc`; feasibility is not required.
///
/// Negative entries (solver round-off) contribute nothing.
pub fn evaluate(alloc: &Allocation, link: &BackscatterLink) -> RateBreakdown {
    let (p, ch) = (&link.params, &link.ch);
    let c = |v: f64| v.max(0.0);
    let r1_1 = backscatter_rate(link, c(alloc.t2)).unwrap_or(0.0);
    let r1_2 = p.b * perspective(c(alloc.t3), c(alloc.t1), ch.rho12);
    let r1_3 = p.b * perspective(c(alloc.t3), c(alloc.t1), ch.rho13);
    let r1_4 = p.b * perspective(c(alloc.t41), c(alloc.tau41), ch.rho2);
    let r2 = p.b * perspective(c(alloc.t42), c(alloc.tau42), ch.rho2);
    let r1 = (r1_1 + r1_2).min(r1_3 + r1_4);
    RateBreakdown { r1_1, r1_2, r1_3, r1_4, r1, r2, rbar: r1.min(r2) }
}

/// Time slack `1 - t0 - sum t` and energy slack `E2(1) + E2(2) - tau41 - tau42`.
pub fn feasibility(alloc: &Allocation, link: &BackscatterLink) -> Slack {
    let p = &link.params;
    let (_, e21) = phase1_energy(p, &link.ch, alloc.t1);
    let e22 = phase2_energy(link, alloc.t2);
    Slack {
        time: p.frame - p.t0 - alloc.total_time(),
        energy: e21 + e22 - alloc.tau41 - alloc.tau42,
    }
}

/// Checks that `alloc` has no negative entries.
pub fn check_nonnegative(alloc: &Allocation) -> Result<()> {
    if alloc.is_nonnegative() {
        Ok(())
    } else {
        Err(Error::Domain(format!("allocation has negative entries: {alloc:?}")))
    }
}

/// `v' H v` for the Hessian `H` of the relay's own rate at `(t42, tau42)`,
/// by a central second difference along `v = (dt, dtau)`.
///
/// The step is `1e-4` of the smaller coordinate-to-direction ratio, so both
/// coordinates stay positive.
pub fn hessian_check_r2(t42: f64, tau42: f64, v: [f64; 2], ch: &ChannelState, params: &SystemParams) -> Result<f64> {
    if !(t42 > 0.0 && tau42 > 0.0) {
        return Err(Error::Domain(format!("Hessian probe needs an interior point, got ({t42}, {tau42})")));
    }
    if v == [0.0, 0.0] {
        return Ok(0.0);
    }
    let mut reach = f64::INFINITY;
    if v[0] != 0.0 {
        reach = reach.min(t42 / v[0].abs());
    }
    if v[1] != 0.0 {
        reach = reach.min(tau42 / v[1].abs());
    }
    let h = 1e-4 * reach;
    let f = |s: f64| params.b * perspective(t42 + s * v[0], tau42 + s * v[1], ch.rho2);
    Ok((f(h) - 2.0 * f(0.0) + f(-h)) / (h * h))
}

/// Constants of the common-throughput problem in solver units.
///
/// Rates are measured in multiples of `B` and the relay's energy in multiples
/// of `eta P1 h2`, the energy it harvests per unit of transfer time. With
/// that scaling a unit of `t1` yields one unit of relay energy, and all
/// coefficients are of moderate size across realistic channel gains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaled {
    pub rho12: f64,
    pub rho13: f64,
    /// Relay SNR per unit of scaled energy per unit time.
    pub snr2: f64,
    /// Scaled relay energy per unit backscatter time.
    pub kappa: f64,
    /// Backscatter throughput per unit time, in multiples of `B`.
    pub backscatter: f64,
    pub time_budget: f64,
    /// Joules per unit scaled energy.
    pub energy_unit: f64,
    /// Bits per frame per unit scaled rate (`B`).
    pub bandwidth: f64,
}

impl Scaled {
    pub fn new(link: &BackscatterLink) -> Self {
        let p = &link.params;
        let energy_unit = p.eta * p.p1 * link.ch.h2;
        Scaled {
            rho12: link.ch.rho12,
            rho13: link.ch.rho13,
            snr2: link.ch.rho2 * energy_unit,
            kappa: link.phase2_energy_rate() / energy_unit,
            backscatter: link.capacity() * p.rb / p.b,
            time_budget: p.time_budget(),
            energy_unit,
            bandwidth: p.b,
        }
    }

    /// Rate components `(branch via relay, branch direct, relay own)` in scaled units.
    pub fn branches(&self, a: &Allocation) -> [f64; 3] {
        let tau41 = a.tau41 / self.energy_unit;
        let tau42 = a.tau42 / self.energy_unit;
        [
            self.backscatter * a.t2 + perspective(a.t3, a.t1, self.rho12),
            perspective(a.t3, a.t1, self.rho13) + perspective(a.t41, tau41, self.snr2),
            perspective(a.t42, tau42, self.snr2),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysmodel::reference_gains::*;

    fn link() -> BackscatterLink {
        let p = SystemParams::default();
        let ch = ChannelState::real(H1, H2, H12_SPLIT, &p).unwrap();
        BackscatterLink::new(p, ch).unwrap()
    }

    #[test]
    fn perspective_boundary_values() {
        let l = link();
        let (ch, p) = (&l.ch, &l.params);
        assert_eq!(rate_r1_2(0.0, 0.3, ch, p).unwrap(), 0.0);
        assert_eq!(rate_r1_3(0.0, 0.3, ch, p).unwrap(), 0.0);
        assert_eq!(rate_r1_2(0.2, 0.0, ch, p).unwrap(), 0.0);
        assert_eq!(rate_r1_4(0.2, 0.0, ch, p).unwrap(), 0.0);
        assert_eq!(rate_r2(0.0, 0.5, ch, p).unwrap(), 0.0);
        assert!(rate_r1_2(-0.1, 0.3, ch, p).is_err());
        assert!(rate_r2(0.1, -1e-9, ch, p).is_err());
    }

    #[test]
    fn perspective_vanishes_as_time_shrinks() {
        let l = link();
        let mut last = f64::INFINITY;
        for k in 1..30 {
            let t3 = 0.5f64.powi(k);
            let r = rate_r1_3(0.3, t3, &l.ch, &l.params).unwrap();
            assert!(r < last);
            last = r;
        }
        assert!(last < 1e-2);
    }

    #[test]
    fn round_number_rates() {
        let mut l = link();
        l.ch.rho12 = 10.0;
        let r = rate_r1_2(0.2, 0.1, &l.ch, &l.params).unwrap();
        assert!((r - 0.1 * 1e5 * 21f64.log2()).abs() < 1e-9);
        // rho2 * P = 3 with P = tau / t.
        let power = 3.0 / l.ch.rho2;
        let r = rate_r1_4(0.2, 0.2 * power, &l.ch, &l.params).unwrap();
        assert!((r - 0.4 * 1e5).abs() < 1e-9);
        let r = rate_r2(0.2, 0.2 * power, &l.ch, &l.params).unwrap();
        assert!((r - 0.4 * 1e5).abs() < 1e-9);
    }

    #[test]
    fn homogeneity_of_degree_one() {
        let l = link();
        let (ch, p) = (&l.ch, &l.params);
        let base = rate_r1_2(0.3, 0.2, ch, p).unwrap();
        assert!((rate_r1_2(0.9, 0.6, ch, p).unwrap() - 3.0 * base).abs() < 1e-9 * base);
    }

    #[test]
    fn direct_link_beats_relay_link_iff_gain_is_larger() {
        let l = link();
        let (ch, p) = (&l.ch, &l.params);
        assert!(ch.h12 > ch.h1);
        assert!(rate_r1_2(0.3, 0.2, ch, p).unwrap() > rate_r1_3(0.3, 0.2, ch, p).unwrap());
        let swapped = ChannelState::real(H12_SPLIT, H2, H1, p).unwrap();
        assert!(rate_r1_2(0.3, 0.2, &swapped, p).unwrap() < rate_r1_3(0.3, 0.2, &swapped, p).unwrap());
    }

    #[test]
    fn evaluate_examples() {
        let l = link();
        assert_eq!(evaluate(&Allocation::default(), &l), RateBreakdown::default());
        let a = Allocation { t1: 0.4, t3: 0.2, t42: 0.3, tau42: 1e-7, ..Default::default() };
        let r = evaluate(&a, &l);
        assert_eq!(r.r1, r.r1_2.min(r.r1_3));
        assert!(r.rbar <= r.r1 && r.rbar <= r.r2);
    }

    #[test]
    fn slack_examples() {
        let l = link();
        let s = feasibility(&Allocation::default(), &l);
        assert!((s.time - 0.95).abs() < 1e-15);
        assert_eq!(s.energy, 0.0);
        let a = Allocation { t1: 0.5, t3: 0.45, ..Default::default() };
        assert!(feasibility(&a, &l).time.abs() < 1e-15);
        let (_, harvest) = phase1_energy(&l.params, &l.ch, 0.5);
        let over = Allocation { tau41: harvest + 1e-12, t41: 0.1, ..a };
        assert!(feasibility(&over, &l).energy < 0.0);
    }

    #[test]
    fn hessian_probe_basics() {
        let l = link();
        assert_eq!(hessian_check_r2(0.3, 1e-7, [0.0, 0.0], &l.ch, &l.params).unwrap(), 0.0);
        assert!(hessian_check_r2(0.0, 1e-7, [1.0, 0.0], &l.ch, &l.params).is_err());
    }

    #[test]
    fn scaled_branches_match_physical_rates() {
        let l = link();
        let s = Scaled::new(&l);
        let a = Allocation { t1: 0.3, t2: 0.1, t3: 0.2, t41: 0.1, t42: 0.2, tau41: 5e-8, tau42: 1e-7 };
        let r = evaluate(&a, &l);
        let b = s.branches(&a);
        assert!((b[0] * s.bandwidth - (r.r1_1 + r.r1_2)).abs() < 1e-9 * r.r1_2);
        assert!((b[1] * s.bandwidth - (r.r1_3 + r.r1_4)).abs() < 1e-9 * r.r1_3);
        assert!((b[2] * s.bandwidth - r.r2).abs() < 1e-9 * r.r2);
    }
}
