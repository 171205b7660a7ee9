//! Backscatter physical layer: energy-detector error rate, binary symmetric
//! channel capacity, harvested energy per phase, and a sample-level
//! simulator of the energy detector.

use num_complex::Complex64;
use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::erfc;
use crate::sysmodel::{ChannelState, SystemParams};

/// The far device's backscatter link to the relay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackscatterLink {
    pub params: SystemParams,
    pub ch: ChannelState,
    /// Detector samples per bit, `Rs / Rb`.
    pub samples_per_bit: f64,
}

impl BackscatterLink {
    pub fn new(params: SystemParams, ch: ChannelState) -> Result<Self> {
        let params = params.validated()?;
        let samples_per_bit = params.samples_per_bit();
        if !(samples_per_bit > 0.0) {
            return Err(Error::Config(format!("samples per bit must be positive, got {samples_per_bit}")));
        }
        Ok(BackscatterLink { params, ch, samples_per_bit })
    }

    /// Noise power seen by the detector, `(1 - beta) N0 + Ns`.
    pub fn detector_noise(&self) -> f64 {
        (1.0 - self.params.beta) * self.params.n0 + self.params.ns
    }

    /// Bit error rate of the energy detector (see [`ber`]).
    pub fn ber(&self) -> f64 {
        ber(self)
    }

    /// Capacity of the backscatter link in bits per channel use.
    pub fn capacity(&self) -> f64 {
        bsc_capacity(self.ber()).unwrap_or(0.0)
    }

    /// Energy harvested by the relay per unit backscatter time (J).
    pub fn phase2_energy_rate(&self) -> f64 {
        let p = &self.params;
        let mixed = p.p0 * self.ch.h2 + (1.0 - p.p0) * self.ch.superposed_gain(p.mu);
        p.omega * p.eta * p.beta * p.p1 * mixed
    }
}

/// Error rate of the energy detector under the Gaussian approximation of its
/// averaged-power statistic:
/// `eps = erfc((1-beta) P1 mu^2 h1 h12 sqrt(N) / (4((1-beta) N0 + Ns))) / 2`.
///
/// The approximation drops the direct/reflected cross term, so the result
/// does not depend on channel phases. Clamped to `[0, 0.5]`.
pub fn ber(link: &BackscatterLink) -> f64 {
    let p = &link.params;
    let swing = (1.0 - p.beta) * p.p1 * p.mu * p.mu * link.ch.h1 * link.ch.h12;
    let arg = swing * link.samples_per_bit.sqrt() / (4.0 * link.detector_noise());
    (0.5 * erfc(arg)).clamp(0.0, 0.5)
}

/// `C = 1 + eps log2 eps + (1 - eps) log2 (1 - eps)` with `0 log 0 = 0`.
pub fn bsc_capacity(eps: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::Domain(format!("crossover probability must lie in [0, 1], got {eps}")));
    }
    let xlog = |p: f64| if p > 0.0 { p * p.log2() } else { 0.0 };
    Ok((1.0 + xlog(eps) + xlog(1.0 - eps)).clamp(0.0, 1.0))
}

/// Bits delivered to the relay by backscattering for `t2` of the frame.
pub fn backscatter_rate(link: &BackscatterLink, t2: f64) -> Result<f64> {
    if !(t2 >= 0.0) {
        return Err(Error::Domain(format!("backscatter time must be nonnegative, got {t2}")));
    }
    Ok(link.capacity() * link.params.rb * t2)
}

/// Energy the relay books from the backscatter phase:
/// `omega eta beta P1 t2 (p0 h2 + (1 - p0) |alpha2 + mu alpha1 alpha12|^2)`.
pub fn phase2_energy(link: &BackscatterLink, t2: f64) -> f64 {
    link.phase2_energy_rate() * t2
}

/// Energy each device harvests during `t1` of wireless energy transfer.
pub fn phase1_energy(params: &SystemParams, ch: &ChannelState, t1: f64) -> (f64, f64) {
    let unit = params.eta * t1 * params.p1;
    (unit * ch.h1, unit * ch.h2)
}

/// Signal model used by [`monte_carlo_ber`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalModel {
    /// Complex baseband samples: unit-power complex Gaussian carrier through
    /// the direct and reflected paths, antenna noise `CN(0, N0)` scaled by
    /// the splitter, detector noise `CN(0, Ns)`.
    Full,
    /// Only the noise is random: each sample carries the deterministic signal
    /// energy `(1-beta) P1 (h2 + B mu^2 h1 h12)` plus the square of a real
    /// Gaussian noise sample of variance `(1-beta) N0 + Ns`. This is the
    /// idealisation behind the closed form, without the cross term.
    EnergyDomain,
}

/// Outcome of a simulated detector run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BerEstimate {
    pub eps: f64,
    /// Binomial standard error `sqrt(eps (1 - eps) / bits)`.
    pub stderr: f64,
    pub errors: u64,
    pub bits: u64,
    pub samples_per_bit: usize,
}

impl BerEstimate {
    /// Signed distance from `reference` in standard errors.
    ///
    /// The error scale is the larger of the empirical and the reference
    /// binomial standard errors, floored at one error in `bits`.
    pub fn z_score(&self, reference: f64) -> f64 {
        let n = self.bits as f64;
        let se_ref = (reference * (1.0 - reference) / n).sqrt();
        let scale = self.stderr.max(se_ref).max(1.0 / n);
        (self.eps - reference) / scale
    }
}

const BITS_PER_CHUNK: u64 = 1 << 15;

fn chunk_seed(seed: u64, chunk: u64) -> u64 {
    // SplitMix64 finaliser over the pair.
    let mut z = seed ^ chunk.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Simulates the averaged-power detector bit by bit and counts errors.
///
/// Bits are equiprobable. The statistic `Z = (1/N) sum |y[i]|^2` is compared
/// with the midpoint of its two conditional means and the nearer mean wins.
/// `N` is `Rs / Rb` rounded down. Bits are processed in fixed chunks with
/// independently seeded streams, so the result depends only on `seed`.
pub fn monte_carlo_ber(link: &BackscatterLink, num_bits: u64, seed: u64, model: SignalModel) -> Result<BerEstimate> {
    if num_bits < 10_000 {
        return Err(Error::Precision(format!("at least 10^4 bits are needed, got {num_bits}")));
    }
    let n = link.samples_per_bit.floor();
    if !(n >= 1.0) {
        return Err(Error::Config(format!(
            "fewer than one detector sample per bit ({})",
            link.samples_per_bit
        )));
    }
    let n = n as usize;
    let chunks = num_bits.div_ceil(BITS_PER_CHUNK);
    let errors: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let bits = BITS_PER_CHUNK.min(num_bits - c * BITS_PER_CHUNK);
            let mut rng = SmallRng::seed_from_u64(chunk_seed(seed, c));
            match model {
                SignalModel::Full => full_chunk(link, n, bits, &mut rng),
                SignalModel::EnergyDomain => energy_chunk(link, n, bits, &mut rng),
            }
        })
        .sum();
    let eps = errors as f64 / num_bits as f64;
    Ok(BerEstimate {
        eps,
        stderr: (eps * (1.0 - eps) / num_bits as f64).sqrt(),
        errors,
        bits: num_bits,
        samples_per_bit: n,
    })
}

fn complex_normal(rng: &mut SmallRng, sd: f64) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * sd, im * sd)
}

fn full_chunk(link: &BackscatterLink, n: usize, bits: u64, rng: &mut SmallRng) -> u64 {
    let p = &link.params;
    let ch = &link.ch;
    let split = (1.0 - p.beta).sqrt();
    let amp = p.p1.sqrt();
    let gain = [ch.alpha2 * amp * split, (ch.alpha2 + ch.alpha1 * ch.alpha12 * p.mu) * amp * split];
    // Splitter-scaled antenna noise plus detector noise is CN(0, sigma^2).
    let sigma2 = link.detector_noise();
    let noise_sd = (sigma2 / 2.0).sqrt();
    let mean = [gain[0].norm_sqr() + sigma2, gain[1].norm_sqr() + sigma2];
    let threshold = 0.5 * (mean[0] + mean[1]);
    let one_is_high = mean[1] >= mean[0];
    let mut errors = 0;
    for _ in 0..bits {
        let bit = rng.random::<bool>() as usize;
        let mut acc = 0.0;
        for _ in 0..n {
            let x = complex_normal(rng, std::f64::consts::FRAC_1_SQRT_2);
            let y = gain[bit] * x + complex_normal(rng, noise_sd);
            acc += y.norm_sqr();
        }
        let z = acc / n as f64;
        let decided_one = (z > threshold) == one_is_high;
        if decided_one != (bit == 1) {
            errors += 1;
        }
    }
    errors
}

fn energy_chunk(link: &BackscatterLink, n: usize, bits: u64, rng: &mut SmallRng) -> u64 {
    let p = &link.params;
    let ch = &link.ch;
    let sigma2 = link.detector_noise();
    let sd = sigma2.sqrt();
    // Work relative to the "0" signal energy, which is common to both hypotheses.
    let swing = (1.0 - p.beta) * p.p1 * p.mu * p.mu * ch.h1 * ch.h12;
    let threshold = sigma2 + 0.5 * swing;
    let mut errors = 0;
    for _ in 0..bits {
        let bit = rng.random::<bool>();
        let mut acc = 0.0;
        for _ in 0..n {
            let w: f64 = rng.sample(StandardNormal);
            acc += (w * sd) * (w * sd);
        }
        let z = if bit { swing } else { 0.0 } + acc / n as f64;
        if (z > threshold) != bit {
            errors += 1;
        }
    }
    errors
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysmodel::reference_gains::*;

    fn reference_link(beta: f64) -> BackscatterLink {
        let p = SystemParams::default().with_beta(beta);
        let ch = ChannelState::real(H1, H2, H12_SPLIT, &p).unwrap();
        BackscatterLink::new(p, ch).unwrap()
    }

    fn binary_entropy(p: f64) -> f64 {
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }

    #[test]
    fn no_power_to_decoder_gives_coin_flip() {
        assert_eq!(reference_link(1.0).ber(), 0.5);
        let mut link = reference_link(0.5);
        link.params.mu = 0.0;
        assert_eq!(link.ber(), 0.5);
    }

    #[test]
    fn capacity_values() {
        assert_eq!(bsc_capacity(0.0).unwrap(), 1.0);
        assert_eq!(bsc_capacity(0.5).unwrap(), 0.0);
        assert!((bsc_capacity(0.11).unwrap() - (1.0 - binary_entropy(0.11))).abs() < 1e-15);
        assert!(bsc_capacity(1.5).is_err());
        assert!(bsc_capacity(-0.1).is_err());
    }

    #[test]
    fn rate_examples() {
        let mut link = reference_link(0.0);
        assert_eq!(backscatter_rate(&link, 0.0).unwrap(), 0.0);
        link.ch.h1 = 1e-3;
        link.ch.h12 = 1e-3;
        assert_eq!(link.ber(), 0.0);
        assert!((backscatter_rate(&link, 0.1).unwrap() - 3000.0).abs() < 1e-9);
        assert!(backscatter_rate(&link, -0.1).is_err());
    }

    #[test]
    fn higher_bit_rate_drives_capacity_to_zero() {
        let p = SystemParams::default().with_beta(0.8);
        let ch = ChannelState::real(H1, H2, H12_SPLIT, &p).unwrap();
        // erfc argument per sqrt(sample): the rate C Rb saturates at 2 K^2 Rs / (pi ln 2).
        let k = (1.0 - p.beta) * p.p1 * p.mu * p.mu * H1 * H12_SPLIT / (4.0 * ((1.0 - p.beta) * p.n0 + p.ns));
        let ceiling = 2.0 * k * k * p.rs / (std::f64::consts::PI * std::f64::consts::LN_2);
        let mut last_c = f64::INFINITY;
        for i in 0..60 {
            let rb = 1e3 * 1.4f64.powi(i);
            let link = BackscatterLink::new(p.with_rb(rb), ch).unwrap();
            let c = link.capacity();
            assert!(c <= last_c);
            last_c = c;
            assert!(backscatter_rate(&link, 1.0).unwrap() <= ceiling * (1.0 + 1e-9));
        }
        assert!(last_c < 1e-6);
    }

    #[test]
    fn phase_energies() {
        let link = reference_link(0.8);
        assert_eq!(phase2_energy(&link, 0.0), 0.0);
        assert_eq!(phase2_energy(&reference_link(0.0), 0.3), 0.0);
        let mut silent = link;
        silent.params.mu = 0.0;
        let p = &silent.params;
        let expected = p.omega * p.eta * 0.3 * p.beta * p.p1 * silent.ch.h2;
        assert!((phase2_energy(&silent, 0.3) - expected).abs() < 1e-12 * expected);

        let (e1, e2) = phase1_energy(&link.params, &link.ch, 0.5);
        assert!((e1 - 3.63e-7).abs() < 1e-20);
        assert!((e2 / e1 - H2 / H1).abs() < 1e-12);
        assert_eq!(phase1_energy(&link.params, &link.ch, 0.0), (0.0, 0.0));
    }

    #[test]
    fn cross_term_is_largest_with_zero_phases() {
        let p = SystemParams::default();
        let aligned = ChannelState::real(H1, H2, H12_SPLIT, &p).unwrap();
        let twisted = ChannelState::from_gains(H1, H2, H12_SPLIT, [0.0, 0.0, 2.0], &p).unwrap();
        assert!(aligned.superposed_gain(p.mu) > twisted.superposed_gain(p.mu));
    }

    #[test]
    fn simulator_preconditions() {
        let link = reference_link(0.5);
        assert!(matches!(monte_carlo_ber(&link, 100, 1, SignalModel::Full), Err(Error::Precision(_))));
        let sparse = BackscatterLink::new(link.params.with_rb(4e6), link.ch).unwrap();
        assert!(matches!(
            monte_carlo_ber(&sparse, 20_000, 1, SignalModel::Full),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn simulator_coin_flip_without_decoder_power() {
        let link = reference_link(1.0);
        for model in [SignalModel::Full, SignalModel::EnergyDomain] {
            let est = monte_carlo_ber(&link, 40_000, 7, model).unwrap();
            assert!(est.z_score(0.5).abs() <= 3.0, "{model:?}: {est:?}");
        }
    }

    #[test]
    fn simulator_separates_at_high_snr() {
        let mut link = reference_link(0.5);
        link.ch.h1 *= 1e3;
        link.ch.h12 *= 1e3;
        link.ch.alpha1 *= 1e3f64.sqrt();
        link.ch.alpha12 *= 1e3f64.sqrt();
        for model in [SignalModel::Full, SignalModel::EnergyDomain] {
            let est = monte_carlo_ber(&link, 20_000, 3, model).unwrap();
            assert!(est.eps < 1e-3, "{model:?}: {est:?}");
        }
    }

    #[test]
    fn simulator_is_deterministic() {
        let link = reference_link(0.8);
        let a = monte_carlo_ber(&link, 50_000, 11, SignalModel::EnergyDomain).unwrap();
        let b = monte_carlo_ber(&link, 50_000, 11, SignalModel::EnergyDomain).unwrap();
        assert_eq!(a, b);
    }
}
