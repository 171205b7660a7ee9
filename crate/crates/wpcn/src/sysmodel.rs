//! Physical constants, network geometry and channel gains.
//!
//! [`SystemParams`] holds every constant that other modules read. Its
//! [`Default`] is the reference simulation setup: 1 W access point, 915 MHz
//! carrier, 100 kHz bandwidth, 2 MHz detector sampling and a 30 kbps
//! backscatter link.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};

const SPEED_OF_LIGHT: f64 = 3.0e8;

/// Converts a power ratio in decibels to linear scale.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Physical and protocol constants of the network.
///
/// Rates are reported in bits per frame with a normalized frame length
/// `frame = 1`, so bandwidths in hertz double as bits per frame per unit
/// spectral efficiency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    /// Access point transmit power (W).
    pub p1: f64,
    /// Energy harvesting efficiency.
    pub eta: f64,
    /// Antenna noise power (W).
    pub n0: f64,
    /// Noise added by the information-decoding circuit (W).
    pub ns: f64,
    /// Carrier frequency (Hz).
    pub fc: f64,
    /// Path-loss exponent.
    pub pl_exponent: f64,
    /// Antenna power gain, linear scale.
    pub ga: f64,
    /// Detector sampling rate (Hz).
    pub rs: f64,
    /// System bandwidth (Hz).
    pub b: f64,
    /// Power margin applied to energy harvested while backscattering.
    pub omega: f64,
    /// Channel-estimation time as a fraction of the frame.
    pub t0: f64,
    /// Magnitude of the backscatter reflection coefficient.
    pub mu: f64,
    /// Fraction of received power the relay routes to its harvester.
    pub beta: f64,
    /// Backscatter bit rate (bit/s).
    pub rb: f64,
    /// Probability that the backscattering device sends a "0".
    pub p0: f64,
    /// Frame length; always 1.
    pub frame: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        SystemParams {
            p1: 1.0,
            eta: 0.6,
            n0: 1e-12,
            ns: 1e-12,
            fc: 915e6,
            pl_exponent: 2.5,
            ga: db_to_linear(2.0),
            rs: 2e6,
            b: 100e3,
            omega: 0.8,
            t0: 0.05,
            mu: 0.8,
            beta: 0.8,
            rb: 30e3,
            p0: 0.5,
            frame: 1.0,
        }
    }
}

impl SystemParams {
    /// Checks every invariant and returns the parameters unchanged.
    pub fn validated(self) -> Result<Self> {
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        let positive = [
            ("P1", self.p1),
            ("N0", self.n0),
            ("Ns", self.ns),
            ("fc", self.fc),
            ("Rs", self.rs),
            ("B", self.b),
            ("Rb", self.rb),
            ("GA", self.ga),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return bad("eta must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return bad("beta must lie in [0, 1]");
        }
        if !(self.omega > 0.0 && self.omega <= 1.0) {
            return bad("omega must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.mu) {
            return bad("mu must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.p0) {
            return bad("p0 must lie in [0, 1]");
        }
        if self.frame != 1.0 {
            return bad("T must equal 1");
        }
        if !(self.t0 >= 0.0 && self.t0 < self.frame) {
            return bad("t0 must lie in [0, T)");
        }
        if !(self.pl_exponent.is_finite()) {
            return bad("pl_exponent must be finite");
        }
        Ok(self)
    }

    /// Samples per backscattered bit, `Rs / Rb`.
    pub fn samples_per_bit(&self) -> f64 {
        self.rs / self.rb
    }

    /// Time available for the four transmission phases.
    pub fn time_budget(&self) -> f64 {
        self.frame - self.t0
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_rb(mut self, rb: f64) -> Self {
        self.rb = rb;
        self
    }

    /// Overrides fields from `key = value` entries, consuming recognised keys.
    ///
    /// Keys are the field names used in configuration files: `P1`, `eta`,
    /// `N0`, `Ns`, `fc`, `pl_exponent`, `GA` (in dB), `Rs`, `B`, `omega`,
    /// `t0`, `mu`, `beta`, `Rb`, `p0` and `T`.
    pub fn apply_config(mut self, cfg: &mut Config) -> Result<Self> {
        let fields: [(&str, &mut f64); 15] = [
            ("P1", &mut self.p1),
            ("eta", &mut self.eta),
            ("N0", &mut self.n0),
            ("Ns", &mut self.ns),
            ("fc", &mut self.fc),
            ("pl_exponent", &mut self.pl_exponent),
            ("Rs", &mut self.rs),
            ("B", &mut self.b),
            ("omega", &mut self.omega),
            ("t0", &mut self.t0),
            ("mu", &mut self.mu),
            ("beta", &mut self.beta),
            ("Rb", &mut self.rb),
            ("p0", &mut self.p0),
            ("T", &mut self.frame),
        ];
        for (key, slot) in fields {
            if let Some(v) = cfg.take::<f64>(key)? {
                *slot = v;
            }
        }
        if let Some(db) = cfg.take::<f64>("GA")? {
            self.ga = db_to_linear(db);
        }
        self.validated()
    }
}

/// Parsed `key = value` configuration with `#` comments.
///
/// Values are kept as strings; typed access removes the key so that callers
/// can report anything left over as unknown.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, (usize, String)>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {}: expected `key = value`", idx + 1)));
            };
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", idx + 1)));
            }
            if entries
                .insert(key.to_string(), (idx + 1, value.trim().to_string()))
                .is_some()
            {
                return Err(Error::Config(format!("line {}: duplicate key `{key}`", idx + 1)));
            }
        }
        Ok(Config { entries })
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Removes `key` and parses its value.
    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((line, v)) => v.parse::<T>().map(Some).map_err(|_| {
                Error::Config(format!("line {line}: cannot parse value `{v}` for `{key}`"))
            }),
        }
    }

    /// Removes `key` and parses a comma-separated list.
    pub fn take_list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((line, v)) => v
                .split(',')
                .map(|s| s.trim().parse::<T>())
                .collect::<std::result::Result<Vec<T>, _>>()
                .map(Some)
                .map_err(|_| Error::Config(format!("line {line}: cannot parse list `{v}` for `{key}`"))),
        }
    }

    /// Keys that no caller consumed.
    pub fn remaining_keys(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }

    /// Fails if any key was left unconsumed.
    pub fn finish(self) -> Result<()> {
        let left = self.remaining_keys();
        if left.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("unknown keys: {}", left.join(", "))))
        }
    }
}

/// Free-space style power gain `G_A (c / (4 pi d fc))^lambda` at distance `d` metres.
pub fn path_loss_gain(d: f64, params: &SystemParams) -> Result<f64> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::Domain(format!("distance must be positive, got {d}")));
    }
    let ratio = SPEED_OF_LIGHT / (4.0 * PI * d * params.fc);
    Ok(params.ga * ratio.powf(params.pl_exponent))
}

/// Complex channel coefficients with their power gains and SNR constants.
///
/// `alpha1` links the access point and the far device, `alpha2` the access
/// point and the relay, `alpha12` the two devices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelState {
    pub alpha1: Complex64,
    pub alpha2: Complex64,
    pub alpha12: Complex64,
    pub h1: f64,
    pub h2: f64,
    pub h12: f64,
    /// SNR per unit harvest-to-transmit time ratio on the device-to-relay link.
    pub rho12: f64,
    /// SNR per unit harvest-to-transmit time ratio on the device-to-access-point link.
    pub rho13: f64,
    /// Relay-to-access-point SNR per watt of transmit power.
    pub rho2: f64,
}

impl ChannelState {
    /// Builds coefficients `sqrt(h) e^{j theta}` from power gains and phases.
    ///
    /// Zero phases make every coefficient real and positive, which maximises
    /// `|alpha2 + mu alpha1 alpha12|^2`.
    pub fn from_gains(h1: f64, h2: f64, h12: f64, phases: [f64; 3], params: &SystemParams) -> Result<Self> {
        for (name, h) in [("h1", h1), ("h2", h2), ("h12", h12)] {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::Domain(format!("{name} must be positive, got {h}")));
            }
        }
        let coeff = |h: f64, theta: f64| Complex64::from_polar(h.sqrt(), theta);
        Ok(ChannelState {
            alpha1: coeff(h1, phases[0]),
            alpha2: coeff(h2, phases[1]),
            alpha12: coeff(h12, phases[2]),
            h1,
            h2,
            h12,
            rho12: h1 * h12 * params.eta * params.p1 / params.n0,
            rho13: h1 * h1 * params.eta * params.p1 / params.n0,
            rho2: h2 / params.n0,
        })
    }

    /// Real, zero-phase coefficients.
    pub fn real(h1: f64, h2: f64, h12: f64, params: &SystemParams) -> Result<Self> {
        Self::from_gains(h1, h2, h12, [0.0; 3], params)
    }

    /// Power of the superposed direct and reflected paths, `|alpha2 + mu alpha1 alpha12|^2`.
    pub fn superposed_gain(&self, mu: f64) -> f64 {
        (self.alpha2 + self.alpha1 * self.alpha12 * mu).norm_sqr()
    }
}

/// Devices on a line with the access point at the origin: the relay at `d2`,
/// the far device at `d1`, and inter-device distance `d1 - d2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinePlacement {
    pub d1: f64,
    pub d2: f64,
}

impl LinePlacement {
    pub fn new(d1: f64, d2: f64) -> Result<Self> {
        if !(d2 > 0.0 && d1 > d2) {
            return Err(Error::Domain(format!("line placement needs d1 > d2 > 0, got d1 = {d1}, d2 = {d2}")));
        }
        Ok(LinePlacement { d1, d2 })
    }

    pub fn d12(&self) -> f64 {
        self.d1 - self.d2
    }

    /// Zero-phase channels from path-loss gains at the three distances.
    pub fn channels(&self, params: &SystemParams) -> Result<ChannelState> {
        ChannelState::real(
            path_loss_gain(self.d1, params)?,
            path_loss_gain(self.d2, params)?,
            path_loss_gain(self.d12(), params)?,
            params,
        )
    }
}

/// Gains used in the reference backscatter experiments.
pub mod reference_gains {
    pub const H1: f64 = 1.21e-6;
    pub const H2: f64 = 3.93e-6;
    /// Inter-device gain of the throughput-versus-splitting experiment.
    pub const H12_SPLIT: f64 = 6.87e-6;
    /// Inter-device gain of the convergence experiment.
    pub const H12_CONVERGENCE: f64 = 1.41e-5;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_free_space_factor_gives_antenna_gain() {
        let p = SystemParams::default();
        let d = SPEED_OF_LIGHT / (4.0 * PI * p.fc);
        for lambda in [1.0, 2.5, 4.0] {
            let q = SystemParams { pl_exponent: lambda, ..p };
            let g = path_loss_gain(d, &q).unwrap();
            assert!((g - p.ga).abs() <= 1e-12 * p.ga);
        }
    }

    #[test]
    fn gain_at_two_and_a_half_metres() {
        let p = SystemParams::default();
        // Hand evaluation: wavelength over 4 pi d, raised to 2.5, times 10^0.2.
        let wavelength = 3.0e8 / 915.0e6;
        let ratio = wavelength / (4.0 * (4.0 * 1f64.atan()) * 2.5);
        let by_hand = 10f64.powf(0.2) * ratio * ratio * ratio.sqrt();
        let g = path_loss_gain(2.5, &p).unwrap();
        assert!((g - by_hand).abs() <= 1e-14 * by_hand);
        assert!((g - 1.763_501_039_086_518e-5).abs() <= 1e-12 * g);
    }

    #[test]
    fn doubling_distance_scales_by_power_law() {
        let p = SystemParams::default();
        let g1 = path_loss_gain(3.0, &p).unwrap();
        let g2 = path_loss_gain(6.0, &p).unwrap();
        assert!((g2 / g1 - 2f64.powf(-2.5)).abs() < 1e-13);
    }

    #[test]
    fn gain_rejects_non_positive_distance() {
        let p = SystemParams::default();
        assert!(matches!(path_loss_gain(0.0, &p), Err(Error::Domain(_))));
        assert!(matches!(path_loss_gain(-1.0, &p), Err(Error::Domain(_))));
    }

    #[test]
    fn gain_decreases_with_distance() {
        let p = SystemParams::default();
        let mut last = f64::INFINITY;
        for i in 1..200 {
            let g = path_loss_gain(0.05 * i as f64, &p).unwrap();
            assert!(g < last);
            last = g;
        }
    }

    #[test]
    fn real_square_root_coefficient() {
        let p = SystemParams::default();
        let ch = ChannelState::real(4.0, 1.0, 9.0, &p).unwrap();
        assert_eq!(ch.alpha1, Complex64::new(2.0, 0.0));
        assert_eq!(ch.alpha12, Complex64::new(3.0, 0.0));
    }

    #[test]
    fn reference_channel_constants() {
        let p = SystemParams::default();
        let ch = ChannelState::real(1.21e-6, 3.93e-6, 6.87e-6, &p).unwrap();
        assert!((ch.rho12 - 1.21e-6 * 6.87e-6 * 0.6 / 1e-12).abs() < 1e-9);
        assert!((ch.rho13 - 1.21e-6 * 1.21e-6 * 0.6 / 1e-12).abs() < 1e-9);
        assert!((ch.rho2 - 3.93e6).abs() < 1e-6);
        assert!((ch.rho12 / ch.rho13 - ch.h12 / ch.h1).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_positive_gain() {
        let p = SystemParams::default();
        assert!(ChannelState::real(0.0, 1.0, 1.0, &p).is_err());
        assert!(ChannelState::real(1.0, -1.0, 1.0, &p).is_err());
    }

    #[test]
    fn config_round_trip() {
        let text = "# setup\nP1 = 2.0\nGA = 0   # dB\nbeta=0.5\nh1 = 1e-6\n";
        let mut cfg = Config::parse(text).unwrap();
        let p = SystemParams::default().apply_config(&mut cfg).unwrap();
        assert_eq!(p.p1, 2.0);
        assert_eq!(p.ga, 1.0);
        assert_eq!(p.beta, 0.5);
        assert_eq!(cfg.remaining_keys(), vec!["h1".to_string()]);
        assert_eq!(cfg.take::<f64>("h1").unwrap(), Some(1e-6));
        cfg.finish().unwrap();
    }

    #[test]
    fn config_rejects_garbage() {
        assert!(Config::parse("novalue\n").is_err());
        assert!(Config::parse("a = 1\na = 2\n").is_err());
        let mut cfg = Config::parse("eta = 1.5").unwrap();
        assert!(SystemParams::default().apply_config(&mut cfg).is_err());
        let mut cfg = Config::parse("B = fast").unwrap();
        assert!(SystemParams::default().apply_config(&mut cfg).is_err());
    }

    #[test]
    fn line_placement_distances() {
        let p = SystemParams::default();
        let lp = LinePlacement::new(6.5, 2.5).unwrap();
        let ch = lp.channels(&p).unwrap();
        assert!((ch.h12 - path_loss_gain(4.0, &p).unwrap()).abs() < 1e-20);
        assert!(LinePlacement::new(2.0, 2.5).is_err());
    }
}
