//! Synthetic time-correlated channel environment.
//!
//! The channel at slot `t` is a sum of `num_paths` uniform-linear-array
//! steering vectors weighted by complex path gains:
//!
//! ```text
//! h_t = sum_p g_p(t) a(theta_p)
//! g_p(t+1) = rho_p g_p(t) + sqrt(1 - kappa^2) sqrt(pow_p) e_p(t)
//! rho_p    = kappa * exp(j 2 pi doppler cos(phi_p))
//! kappa    = cos(2 pi doppler * DIFFUSE_RATE_RATIO)
//! ```
//!
//! Each path rotates at its own Doppler frequency `doppler * cos(phi_p)`
//! (`phi_p` is the angle between the path and the direction of motion), and
//! carries a slowly fading diffuse component. Site geometry (arrival angles,
//! motion angles, path powers) is a function of the site seed only, so regimes
//! that differ in Doppler or SNR describe the same site.

use std::f64::consts::{PI, TAU};

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;

use crate::linalg::CVec;
use crate::{rng, Error, Precoder, Result};

/// Rate of the diffuse (unpredictable) fading relative to the Doppler
/// rotation rate.
pub const DIFFUSE_RATE_RATIO: f64 = 0.02;

/// A stationary channel regime.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRegime {
    pub regime_id: String,
    pub num_paths: usize,
    /// Doppler frequency normalised to the slot rate (cycles per slot).
    pub doppler_norm: f64,
    /// Spread of arrival angles around the site's centre angle, radians.
    pub angle_spread: f64,
    /// Per-measurement SNR in dB. `f64::INFINITY` disables measurement noise.
    pub mean_snr_db: f64,
}

impl ChannelRegime {
    pub fn new(regime_id: impl Into<String>, num_paths: usize, doppler_norm: f64) -> Self {
        ChannelRegime {
            regime_id: regime_id.into(),
            num_paths,
            doppler_norm,
            angle_spread: 1.2,
            mean_snr_db: f64::INFINITY,
        }
    }

    pub fn with_snr_db(mut self, snr_db: f64) -> Self {
        self.mean_snr_db = snr_db;
        self
    }

    pub fn with_angle_spread(mut self, spread: f64) -> Self {
        self.angle_spread = spread;
        self
    }

    pub fn validate(&self, num_tx_antennas: usize) -> Result<()> {
        if self.num_paths == 0 {
            return Err(Error::invalid(format!("regime {}: num_paths must be positive", self.regime_id)));
        }
        if self.num_paths > num_tx_antennas {
            return Err(Error::invalid(format!(
                "regime {}: num_paths {} exceeds {} antennas",
                self.regime_id, self.num_paths, num_tx_antennas
            )));
        }
        if !(0.0..0.5).contains(&self.doppler_norm) {
            return Err(Error::invalid(format!(
                "regime {}: doppler_norm {} outside [0, 0.5)",
                self.regime_id, self.doppler_norm
            )));
        }
        if !(self.angle_spread > 0.0 && self.angle_spread <= PI) {
            return Err(Error::invalid(format!(
                "regime {}: angle_spread {} outside (0, pi]",
                self.regime_id, self.angle_spread
            )));
        }
        if self.mean_snr_db.is_nan() || self.mean_snr_db == f64::NEG_INFINITY {
            return Err(Error::invalid(format!("regime {}: invalid SNR", self.regime_id)));
        }
        Ok(())
    }
}

/// Regimes keyed by their start slot. The first entry must start at slot 0.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeSchedule(Vec<(u64, ChannelRegime)>);

impl RegimeSchedule {
    pub fn constant(regime: ChannelRegime) -> Self {
        RegimeSchedule(vec![(0, regime)])
    }

    pub fn new(entries: Vec<(u64, ChannelRegime)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("empty regime schedule"));
        }
        if entries[0].0 != 0 {
            return Err(Error::invalid(format!("schedule starts at slot {}, not 0", entries[0].0)));
        }
        if entries.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::invalid("schedule start slots must be strictly increasing"));
        }
        Ok(RegimeSchedule(entries))
    }

    pub fn entries(&self) -> &[(u64, ChannelRegime)] {
        &self.0
    }

    pub fn regime_at(&self, slot: u64) -> &ChannelRegime {
        let idx = self.0.partition_point(|(start, _)| *start <= slot);
        &self.0[idx.saturating_sub(1)].1
    }

    fn starts_at(&self, slot: u64) -> bool {
        self.0.iter().any(|(s, _)| *s == slot)
    }
}

/// Replaces the regime from `shift_slot` onward with `new_regime`.
pub fn inject_shift(
    schedule: &RegimeSchedule,
    num_slots: u64,
    shift_slot: u64,
    new_regime: ChannelRegime,
) -> Result<RegimeSchedule> {
    if shift_slot == 0 || shift_slot >= num_slots {
        return Err(Error::invalid(format!("shift slot {shift_slot} outside (0, {num_slots})")));
    }
    let mut entries: Vec<_> = schedule.0.iter().filter(|(s, _)| *s < shift_slot).cloned().collect();
    entries.push((shift_slot, new_regime));
    RegimeSchedule::new(entries)
}

/// DFT beam codebook with `n` beams over an `n`-element array.
pub fn dft_codebook(n: usize) -> Vec<Precoder> {
    let scale = 1.0 / (n as f64).sqrt();
    (0..n)
        .map(|k| {
            let v = CVec::from_fn(n, |m, _| {
                Complex64::from_polar(scale, TAU * (m * k) as f64 / n as f64)
            });
            Precoder::new(v).expect("DFT beams are unit norm")
        })
        .collect()
}

/// Unit-norm ULA steering vector at half-wavelength spacing.
pub fn steering_vector(n: usize, theta: f64) -> CVec {
    let scale = 1.0 / (n as f64).sqrt();
    CVec::from_fn(n, |m, _| Complex64::from_polar(scale, PI * m as f64 * theta.sin()))
}

#[derive(Debug, Clone)]
pub struct TraceConfig {
    pub num_tx_antennas: usize,
    pub num_slots: u64,
    pub schedule: RegimeSchedule,
    pub codebook: Vec<Precoder>,
    /// Seed for path-gain evolution.
    pub seed: u64,
    /// Seed for the site geometry; defaults to `seed`.
    pub site_seed: u64,
}

impl TraceConfig {
    pub fn new(
        schedule: RegimeSchedule,
        num_slots: u64,
        num_tx_antennas: usize,
        codebook: Vec<Precoder>,
        seed: u64,
    ) -> Self {
        TraceConfig { num_tx_antennas, num_slots, schedule, codebook, seed, site_seed: seed }
    }

    pub fn with_site_seed(mut self, site_seed: u64) -> Self {
        self.site_seed = site_seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotChannel {
    pub slot_index: u64,
    pub true_precoder: Precoder,
    pub per_beam_power: Vec<f64>,
    pub snr_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTrace {
    pub slots: Vec<SlotChannel>,
    pub regime_schedule: RegimeSchedule,
}

impl ChannelTrace {
    pub fn true_precoders(&self) -> Vec<Precoder> {
        self.slots.iter().map(|s| s.true_precoder.clone()).collect()
    }
}

/// Site geometry drawn once per site seed for the maximum path count.
struct Geometry {
    center: f64,
    offsets: Vec<f64>,
    motion_base: f64,
    motion_jitter: Vec<f64>,
    powers: Vec<f64>,
}

impl Geometry {
    fn draw(site_seed: u64, max_paths: usize) -> Self {
        let mut r = rng::stream(site_seed, "geometry", 0);
        let center = r.random::<f64>() - 0.5;
        let motion_base = r.random::<f64>() * TAU;
        let offsets = (0..max_paths).map(|_| r.random::<f64>() - 0.5).collect();
        let motion_jitter = (0..max_paths).map(|_| 0.6 * (r.random::<f64>() - 0.5)).collect();
        let powers = (0..max_paths).map(|_| 0.5 + 0.5 * r.random::<f64>()).collect();
        Geometry { center, offsets, motion_base, motion_jitter, powers }
    }

    fn paths(&self, regime: &ChannelRegime, n: usize) -> PathSet {
        let p = regime.num_paths;
        let total: f64 = self.powers[..p].iter().sum();
        let kappa = (TAU * regime.doppler_norm * DIFFUSE_RATE_RATIO).cos();
        let mut steering = Vec::with_capacity(p);
        let mut rotation = Vec::with_capacity(p);
        let mut power = Vec::with_capacity(p);
        for i in 0..p {
            let theta = self.center + regime.angle_spread * self.offsets[i];
            steering.push(steering_vector(n, theta));
            let phi = self.motion_base + TAU * i as f64 / p as f64 + self.motion_jitter[i];
            let f = regime.doppler_norm * phi.cos();
            rotation.push(Complex64::from_polar(kappa, TAU * f));
            power.push(self.powers[i] / total);
        }
        let innovation = (1.0 - kappa * kappa).max(0.0).sqrt();
        PathSet { steering, rotation, power, innovation }
    }
}

struct PathSet {
    steering: Vec<CVec>,
    rotation: Vec<Complex64>,
    power: Vec<f64>,
    innovation: f64,
}

impl PathSet {
    fn reseed(&self, seed: u64, slot: u64) -> Vec<Complex64> {
        let mut r = rng::stream(seed, "gains-reseed", slot);
        self.power.iter().map(|&p| rng::unit_phase(&mut r) * p.sqrt()).collect()
    }

    fn advance(&self, gains: &mut [Complex64], seed: u64, slot: u64) {
        if self.innovation == 0.0 {
            for (g, rho) in gains.iter_mut().zip(&self.rotation) {
                *g *= rho;
            }
            return;
        }
        let mut r = rng::stream(seed, "gains", slot);
        for ((g, rho), p) in gains.iter_mut().zip(&self.rotation).zip(&self.power) {
            let e = rng::complex_normal(&mut r, 1.0);
            *g = *g * rho + e * (self.innovation * p.sqrt());
        }
    }

    fn channel(&self, gains: &[Complex64], n: usize) -> CVec {
        let mut h = CVec::zeros(n);
        for (a, g) in self.steering.iter().zip(gains) {
            h.axpy(*g, a, Complex64::new(1.0, 0.0));
        }
        h
    }
}

/// Generates the per-slot channel trace. Deterministic in all inputs.
pub fn generate_trace(cfg: &TraceConfig) -> Result<ChannelTrace> {
    let n = cfg.num_tx_antennas;
    if n < 2 {
        return Err(Error::invalid("need at least 2 antennas"));
    }
    if cfg.num_slots == 0 {
        return Err(Error::invalid("num_slots must be at least 1"));
    }
    if cfg.codebook.is_empty() {
        return Err(Error::invalid("empty beam codebook"));
    }
    if let Some(b) = cfg.codebook.iter().find(|b| b.len() != n) {
        return Err(Error::DimensionMismatch { expected: n, actual: b.len() });
    }
    for (_, regime) in cfg.schedule.entries() {
        regime.validate(n)?;
    }

    let geometry = Geometry::draw(cfg.site_seed, n);
    let mut slots = Vec::with_capacity(cfg.num_slots as usize);
    let mut paths = geometry.paths(cfg.schedule.regime_at(0), n);
    let mut gains = paths.reseed(cfg.seed, 0);

    for t in 0..cfg.num_slots {
        if t > 0 {
            if cfg.schedule.starts_at(t) {
                paths = geometry.paths(cfg.schedule.regime_at(t), n);
                gains = paths.reseed(cfg.seed, t);
            } else {
                paths.advance(&mut gains, cfg.seed, t);
            }
        }
        let h = paths.channel(&gains, n);
        let per_beam_power = cfg.codebook.iter().map(|b| b.as_vector().dotc(&h).norm_sqr()).collect();
        slots.push(SlotChannel {
            slot_index: t,
            true_precoder: Precoder::from_unnormalized(h)?,
            per_beam_power,
            snr_db: cfg.schedule.regime_at(t).mean_snr_db,
        });
    }
    Ok(ChannelTrace { slots, regime_schedule: cfg.schedule.clone() })
}

/// A noisy CSI measurement taken by the UE.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiMeasurement {
    pub slot_index: u64,
    pub measured_precoder: Precoder,
    pub snr_db: f64,
}

/// `normalize(true + n)` with `n ~ CN(0, 10^(-snr/10) / N)` per component.
/// An infinite SNR disables noise. The noise stream is keyed by
/// `(seed, slot)`.
pub fn measure_csi(true_precoder: &Precoder, snr_db: f64, seed: u64, slot: u64) -> Result<CsiMeasurement> {
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::invalid("SNR must be finite or +inf"));
    }
    let measured_precoder = if snr_db == f64::INFINITY {
        true_precoder.clone()
    } else {
        let n = true_precoder.len();
        let var = 10f64.powf(-snr_db / 10.0) / n as f64;
        let mut r = rng::stream(seed, "measure", slot);
        let noisy = DVector::from_iterator(
            n,
            true_precoder.as_slice().iter().map(|c| c + rng::complex_normal(&mut r, var)),
        );
        Precoder::from_unnormalized(noisy)?
    };
    Ok(CsiMeasurement { slot_index: slot, measured_precoder, snr_db })
}

/// Measures every slot of a trace with its scheduled SNR.
pub fn measure_trace(trace: &ChannelTrace, seed: u64) -> Result<Vec<CsiMeasurement>> {
    trace
        .slots
        .iter()
        .map(|s| measure_csi(&s.true_precoder, s.snr_db, seed, s.slot_index))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kpi::sgcs;

    fn cfg(regime: ChannelRegime, slots: u64, n: usize, seed: u64) -> TraceConfig {
        TraceConfig::new(RegimeSchedule::constant(regime), slots, n, dft_codebook(n), seed)
    }

    #[test]
    fn zero_doppler_freezes() {
        let t = generate_trace(&cfg(ChannelRegime::new("s", 4, 0.0), 50, 16, 3)).unwrap();
        for s in &t.slots {
            assert_eq!(s.true_precoder, t.slots[0].true_precoder);
            assert!((sgcs(&s.true_precoder, &t.slots[0].true_precoder).unwrap() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn single_path_is_steering_vector() {
        let regime = ChannelRegime::new("los", 1, 0.1).with_angle_spread(1e-9);
        let t = generate_trace(&cfg(regime, 40, 8, 11)).unwrap();
        let geom = Geometry::draw(11, 8);
        let a = Precoder::new(steering_vector(8, geom.center + 1e-9 * geom.offsets[0])).unwrap();
        for s in &t.slots {
            assert!((sgcs(&s.true_precoder, &a).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_traces() {
        let regime = ChannelRegime::new("a", 6, 0.05);
        let a = generate_trace(&cfg(regime.clone(), 200, 32, 7)).unwrap();
        let b = generate_trace(&cfg(regime, 200, 32, 7)).unwrap();
        assert_eq!(a, b);
        for s in &a.slots {
            assert!((s.true_precoder.as_vector().norm() - 1.0).abs() < 1e-9);
            assert_eq!(s.per_beam_power.len(), 32);
        }
    }

    #[test]
    fn beam_power_definition() {
        let t = generate_trace(&cfg(ChannelRegime::new("a", 3, 0.02), 5, 8, 1)).unwrap();
        let cb = dft_codebook(8);
        // Power ratios between beams are independent of the channel norm.
        for s in &t.slots {
            let direct: Vec<f64> = cb.iter().map(|b| b.inner(&s.true_precoder).norm_sqr()).collect();
            let total: f64 = s.per_beam_power.iter().sum();
            let dtotal: f64 = direct.iter().sum();
            for (p, d) in s.per_beam_power.iter().zip(&direct) {
                assert!((p / total - d / dtotal).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn schedule_errors() {
        assert!(RegimeSchedule::new(vec![]).is_err());
        assert!(RegimeSchedule::new(vec![(5, ChannelRegime::new("a", 2, 0.0))]).is_err());
        let c = cfg(ChannelRegime::new("a", 9, 0.0), 10, 8, 0);
        assert!(generate_trace(&c).is_err());
        let c = cfg(ChannelRegime::new("a", 2, 0.6), 10, 8, 0);
        assert!(generate_trace(&c).is_err());
    }

    #[test]
    fn shift_rules() {
        let s = RegimeSchedule::constant(ChannelRegime::new("slow", 4, 0.01));
        assert!(inject_shift(&s, 100, 0, ChannelRegime::new("fast", 4, 0.2)).is_err());
        assert!(inject_shift(&s, 100, 100, ChannelRegime::new("fast", 4, 0.2)).is_err());
        let shifted = inject_shift(&s, 100, 40, ChannelRegime::new("fast", 4, 0.2)).unwrap();
        assert_eq!(shifted.regime_at(39).regime_id, "slow");
        assert_eq!(shifted.regime_at(40).regime_id, "fast");
        assert_eq!(shifted.regime_at(99).regime_id, "fast");
    }

    #[test]
    fn same_regime_shift_only_reseeds() {
        let regime = ChannelRegime::new("a", 4, 0.03);
        let base = cfg(regime.clone(), 120, 16, 5);
        let mut shifted = base.clone();
        shifted.schedule = inject_shift(&base.schedule, 120, 60, regime).unwrap();
        let a = generate_trace(&base).unwrap();
        let b = generate_trace(&shifted).unwrap();
        assert_eq!(a.slots[..60], b.slots[..60]);
        assert_ne!(a.slots[60].true_precoder, b.slots[60].true_precoder);
    }

    #[test]
    fn noise_free_measurement_is_exact() {
        let t = generate_trace(&cfg(ChannelRegime::new("a", 4, 0.03), 3, 16, 5)).unwrap();
        let m = measure_csi(&t.slots[1].true_precoder, f64::INFINITY, 9, 1).unwrap();
        assert_eq!(m.measured_precoder, t.slots[1].true_precoder);
        let a = measure_csi(&t.slots[1].true_precoder, 10.0, 9, 1).unwrap();
        let b = measure_csi(&t.slots[1].true_precoder, 10.0, 9, 1).unwrap();
        assert_eq!(a, b);
        assert!((a.measured_precoder.as_vector().norm() - 1.0).abs() < 1e-9);
        assert!(measure_csi(&t.slots[1].true_precoder, f64::NAN, 9, 1).is_err());
    }
}
