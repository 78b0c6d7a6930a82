//! Asynchronous sampling schedules and the measurement/actuation
//! distortions applied to samples.
//!
//! Randomness is counter-based: every draw is a pure function of
//! `(seed, domain, channel, index)`, so a channel's schedule and errors do
//! not depend on how events of different channels interleave.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Vector};

/// Delays are capped at `gap·(1 - DELAY_GUARD)` so `τ_k < t_{k+1} - t_k`
/// survives rounding.
pub const DELAY_GUARD: f64 = 1e-9;

/// Independent random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Schedule = 0,
    Error = 1,
    Initial = 2,
}

/// Generator for draw `index` of `channel` in `domain`.
pub fn counter_rng(seed: u64, domain: Domain, channel: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((domain as u64) << 48) ^ channel);
    // 16 words per index leaves room for eight u64 draws.
    rng.set_word_pos(u128::from(index) * 16);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSchedule {
    pub channel_id: usize,
    /// Increasing sampling instants `t_k`.
    pub sample_instants: Vec<f64>,
    /// Delay `τ_k` of each sample.
    pub delays: Vec<f64>,
}

impl ChannelSchedule {
    pub fn len(&self) -> usize {
        self.sample_instants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_instants.is_empty()
    }

    /// Delivery instants `t_k + τ_k`.
    pub fn deliveries(&self) -> impl Iterator<Item = f64> + '_ {
        self.sample_instants
            .iter()
            .zip(&self.delays)
            .map(|(t, d)| t + d)
    }

    /// Explicit schedule; checked for shape and monotonicity only.
    pub fn new(channel_id: usize, sample_instants: Vec<f64>, delays: Vec<f64>) -> Result<Self> {
        if sample_instants.len() != delays.len() {
            return Err(Error::Schedule(format!(
                "channel {channel_id}: {} instants but {} delays",
                sample_instants.len(),
                delays.len()
            )));
        }
        if sample_instants.iter().chain(&delays).any(|v| !v.is_finite()) {
            return Err(Error::Schedule(format!("channel {channel_id}: non-finite entry")));
        }
        let s = Self { channel_id, sample_instants, delays };
        if s.delays.iter().any(|&d| d < 0.0) {
            return Err(Error::Schedule(format!("channel {channel_id}: negative delay")));
        }
        if s.sample_instants.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Schedule(format!(
                "channel {channel_id}: sample instants not strictly increasing"
            )));
        }
        Ok(s)
    }
}

/// Draws an admissible schedule on `[0, horizon]`: first instant uniform in
/// `[0, h_max)`, gaps i.i.d. uniform in `[h_min, h_max]`, delays i.i.d.
/// uniform in `[0, min(tau_max, gap·(1 - 1e-9))]`.
///
/// `tau_max ≥ h_min` is accepted: the per-gap cap keeps every delay
/// strictly shorter than the following gap.
pub fn generate_schedule(
    h_min: f64,
    h_max: f64,
    tau_max: f64,
    horizon: f64,
    seed: u64,
    channel_id: usize,
) -> Result<ChannelSchedule> {
    if !(h_min > 0.0 && h_min <= h_max && h_max.is_finite()) {
        return Err(Error::Parameter(format!(
            "need 0 < h_min ≤ h_max, got h_min = {h_min}, h_max = {h_max}"
        )));
    }
    if !(tau_max >= 0.0 && tau_max.is_finite()) {
        return Err(Error::Parameter(format!("tau_max = {tau_max} must be finite and ≥ 0")));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Parameter(format!("horizon = {horizon} must be positive")));
    }
    let ch = channel_id as u64;
    let mut instants = Vec::new();
    let mut delays = Vec::new();
    let mut t = counter_rng(seed, Domain::Schedule, ch, 0).random::<f64>() * h_max;
    let mut k = 1u64;
    // One instant past the horizon so the hold covers the whole run.
    loop {
        let mut rng = counter_rng(seed, Domain::Schedule, ch, k);
        let gap = if h_max > h_min { rng.random_range(h_min..=h_max) } else { h_min };
        let cap = tau_max.min(gap * (1.0 - DELAY_GUARD));
        let delay = if cap > 0.0 { rng.random_range(0.0..=cap) } else { 0.0 };
        instants.push(t);
        delays.push(delay);
        if t > horizon {
            break;
        }
        t += gap;
        k += 1;
    }
    Ok(ChannelSchedule { channel_id, sample_instants: instants, delays })
}

/// Checks clauses (1)–(3) of the sampling assumption and strict
/// monotonicity of deliveries; returns every violation found.
pub fn validate_schedule(s: &ChannelSchedule, h: f64, tau: f64) -> Result<()> {
    let mut bad = Vec::new();
    let (t, d) = (&s.sample_instants, &s.delays);
    if t.len() != d.len() {
        bad.push(format!("{} instants vs {} delays", t.len(), d.len()));
    }
    for k in 0..t.len().min(d.len()) {
        if d[k] < 0.0 || d[k] > tau {
            bad.push(format!("k = {k}: delay {} outside [0, {tau}]", d[k]));
        }
        if k + 1 < t.len() {
            let gap = t[k + 1] - t[k];
            if !(gap > 0.0) || gap > h {
                bad.push(format!("k = {k}: gap {gap} outside (0, {h}]"));
            }
            if !(d[k] < gap) {
                bad.push(format!("k = {k}: delay {} not below gap {gap}", d[k]));
            }
            if k + 1 < d.len() && !(t[k] + d[k] < t[k + 1] + d[k + 1]) {
                bad.push(format!("k = {k}: deliveries not increasing"));
            }
        }
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::Schedule(format!(
            "channel {}: {}",
            s.channel_id,
            bad.join("; ")
        )))
    }
}

/// Form of the event-triggering test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerRule {
    /// `‖z - ẑ‖² ≥ ω ‖ẑ‖²`.
    #[default]
    Quadratic,
    /// `‖z - ẑ‖ ≥ √ω/(1+√ω) ‖z‖`.
    Norm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ErrorModel {
    None,
    Multiplicative {
        omega: f64,
        /// Error aligned with the sample at the largest admissible size.
        #[serde(default)]
        adversarial: bool,
    },
    /// `‖e‖₂ ≤ delta_e` per sample.
    Additive { delta_e: f64 },
    LogQuantizer { level: f64 },
    /// A sample is sent only when it has drifted from the last one sent;
    /// with `cap` the test is `‖z - ẑ‖ > min(√ω‖ẑ‖, cap)`.
    EventTrigger {
        omega: f64,
        dwell: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cap: Option<f64>,
        #[serde(default)]
        rule: TriggerRule,
    },
}

impl ErrorModel {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Parameter(m));
        match *self {
            ErrorModel::None => Ok(()),
            ErrorModel::Multiplicative { omega, .. } if !(omega >= 0.0 && omega.is_finite()) => {
                fail(format!("ω = {omega} must be finite and ≥ 0"))
            }
            ErrorModel::Additive { delta_e } if !(delta_e >= 0.0 && delta_e.is_finite()) => {
                fail(format!("Δ_e = {delta_e} must be finite and ≥ 0"))
            }
            ErrorModel::LogQuantizer { level } if !(level > 1.0 && level.is_finite()) => {
                fail(format!("quantizing level {level} must exceed 1"))
            }
            ErrorModel::EventTrigger { omega, dwell, cap, .. } => {
                if !(omega >= 0.0 && omega.is_finite()) {
                    fail(format!("ω = {omega} must be finite and ≥ 0"))
                } else if !(dwell > 0.0 && dwell.is_finite()) {
                    fail(format!("dwell = {dwell} must be positive"))
                } else if cap.is_some_and(|c| !(c > 0.0 && c.is_finite())) {
                    fail(format!("cap = {cap:?} must be positive"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    pub fn is_event_triggered(&self) -> bool {
        matches!(self, ErrorModel::EventTrigger { .. })
    }

    /// Measured value of sample `index` on `channel`. Event triggering
    /// does not distort samples and returns the value unchanged.
    pub fn measure(&self, value: &Vector, seed: u64, channel: usize, index: u64) -> Vector {
        match *self {
            ErrorModel::None | ErrorModel::EventTrigger { .. } => value.clone(),
            ErrorModel::Multiplicative { omega, adversarial } => {
                let mut rng = counter_rng(seed, Domain::Error, channel as u64, index);
                apply_multiplicative_error(value, omega, adversarial, &mut rng).0
            }
            ErrorModel::Additive { delta_e } => {
                let mut rng = counter_rng(seed, Domain::Error, channel as u64, index);
                let e = random_ball(value.len(), delta_e, &mut rng);
                value - e
            }
            ErrorModel::LogQuantizer { level } => log_quantize(value, level),
        }
    }
}

fn random_direction(dim: usize, rng: &mut impl Rng) -> Vector {
    loop {
        let v = Vector::from_fn(dim, |_, _| StandardNormal.sample(rng));
        let n = v.norm();
        if n > 1e-300 {
            return v / n;
        }
    }
}

/// Uniform direction, magnitude uniform in `[0, radius]`.
fn random_ball(dim: usize, radius: f64, rng: &mut impl Rng) -> Vector {
    if radius == 0.0 || dim == 0 {
        return Vector::zeros(dim);
    }
    let r = rng.random::<f64>() * radius;
    random_direction(dim, rng) * r
}

/// Draws `e` with `‖e‖ ≤ √ω/(1+√ω)·‖value‖`, which guarantees
/// `eᵀe ≤ ω (value - e)ᵀ(value - e)`. Returns `(value - e, e)`.
pub fn apply_multiplicative_error(
    value: &Vector,
    omega: f64,
    adversarial: bool,
    rng: &mut impl Rng,
) -> (Vector, Vector) {
    let radius = omega.sqrt() / (1.0 + omega.sqrt()) * value.norm();
    let e = if adversarial {
        if value.norm() > 0.0 {
            value * (radius / value.norm())
        } else {
            Vector::zeros(value.len())
        }
    } else {
        random_ball(value.len(), radius, rng)
    };
    (value - &e, e)
}

/// Entrywise `sign(ξ) ε^{⌊log_ε |ξ|⌋}` (zero maps to zero).
pub fn log_quantize(value: &Vector, quant_level: f64) -> Vector {
    value.map(|x| log_quantize_scalar(x, quant_level))
}

pub fn log_quantize_scalar(x: f64, eps: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let a = x.abs();
    let mut k = (a.ln() / eps.ln()).floor() as i32;
    // Snap: the logarithm may land half an ulp on the wrong side of an
    // integer; make ε^k ≤ |ξ| < ε^{k+1} hold for the computed powers.
    while eps.powi(k) > a {
        k -= 1;
    }
    while eps.powi(k + 1) <= a {
        k += 1;
    }
    x.signum() * eps.powi(k)
}

/// `(current - held)ᵀ(current - held) ≥ ω heldᵀheld`.
pub fn event_trigger_check(current: &Vector, held: &Vector, omega: f64) -> bool {
    (current - held).norm_squared() >= omega * held.norm_squared()
}

/// `‖current - held‖ ≥ √ω/(1+√ω) ‖current‖`.
pub fn event_trigger_check_norm(current: &Vector, held: &Vector, omega: f64) -> bool {
    let r = omega.sqrt() / (1.0 + omega.sqrt());
    (current - held).norm() >= r * current.norm()
}

/// `‖current - held‖ > min(√ω‖held‖, cap)`.
pub fn event_trigger_check_capped(current: &Vector, held: &Vector, omega: f64, cap: f64) -> bool {
    (current - held).norm() > (omega.sqrt() * held.norm()).min(cap)
}

/// Dispatches on the trigger parameters of an [`ErrorModel::EventTrigger`].
pub fn trigger_fires(model: &ErrorModel, current: &Vector, held: &Vector) -> bool {
    match *model {
        ErrorModel::EventTrigger { omega, cap: Some(cap), .. } => {
            event_trigger_check_capped(current, held, omega, cap)
        }
        ErrorModel::EventTrigger { omega, rule: TriggerRule::Norm, .. } => {
            event_trigger_check_norm(current, held, omega)
        }
        ErrorModel::EventTrigger { omega, .. } => event_trigger_check(current, held, omega),
        _ => true,
    }
}

/// Input-magnitude limiter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationScaler {
    pub rho_s: f64,
}

impl SaturationScaler {
    pub fn new(rho_s: f64) -> Result<Self> {
        if !(rho_s > 0.0 && rho_s.is_finite()) {
            return Err(Error::Parameter(format!("ρ_s = {rho_s} must be positive")));
        }
        Ok(Self { rho_s })
    }

    pub fn apply(&self, value: &Vector) -> (f64, Vector) {
        saturation_scale(value, self.rho_s)
    }
}

/// `ρ = 1/⌈‖ξ‖_∞/ρ_s⌉` (1 for `ξ = 0`); returns `(ρ, ρξ)`.
pub fn saturation_scale(value: &Vector, rho_s: f64) -> (f64, Vector) {
    let m = value.amax();
    let rho = if m == 0.0 { 1.0 } else { 1.0 / (m / rho_s).ceil() };
    (rho, value * rho)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    #[test]
    fn periodic_schedule() {
        let s = generate_schedule(0.01, 0.01, 0.0, 1.0, 7, 0).unwrap();
        assert!(s.delays.iter().all(|&d| d == 0.0));
        for w in s.sample_instants.windows(2) {
            assert!((w[1] - w[0] - 0.01).abs() < 1e-12);
        }
        assert!(*s.sample_instants.last().unwrap() > 1.0);
    }

    #[test]
    fn example_schedule_is_admissible_and_reproducible() {
        for ch in 0..5 {
            let s = generate_schedule(0.005, 0.012, 0.005, 60.0, 42, ch).unwrap();
            validate_schedule(&s, 0.012, 0.005).unwrap();
            assert_eq!(s, generate_schedule(0.005, 0.012, 0.005, 60.0, 42, ch).unwrap());
        }
        let a = generate_schedule(0.005, 0.012, 0.005, 1.0, 42, 0).unwrap();
        let b = generate_schedule(0.005, 0.012, 0.005, 1.0, 42, 1).unwrap();
        assert_ne!(a.sample_instants, b.sample_instants);
    }

    #[test]
    fn delay_equal_to_min_gap_stays_strict() {
        let s = generate_schedule(0.02, 0.02, 0.02, 5.0, 3, 0).unwrap();
        validate_schedule(&s, 0.02 + 1e-12, 0.02).unwrap();
    }

    #[test]
    fn validator_rejects_violations() {
        let s = ChannelSchedule::new(0, vec![0.0, 0.1, 0.3], vec![0.0, 0.05, 0.0]).unwrap();
        assert!(validate_schedule(&s, 0.15, 0.1).is_err());
        let s = ChannelSchedule::new(0, vec![0.0, 0.1], vec![0.1, 0.0]).unwrap();
        assert!(validate_schedule(&s, 0.2, 0.2).is_err());
        assert!(generate_schedule(0.0, 0.1, 0.0, 1.0, 0, 0).is_err());
        assert!(generate_schedule(0.2, 0.1, 0.0, 1.0, 0, 0).is_err());
    }

    #[test]
    fn multiplicative_error() {
        let mut rng = counter_rng(1, Domain::Error, 0, 0);
        let x = v(&[1.0, -2.0]);
        let (m, e) = apply_multiplicative_error(&x, 0.0, false, &mut rng);
        assert_eq!(m, x);
        assert_eq!(e.norm(), 0.0);

        let (m, e) = apply_multiplicative_error(&v(&[1.0, 0.0]), 1.0, true, &mut rng);
        assert!((e.norm() - 0.5).abs() < 1e-15);
        assert!(e.norm_squared() <= 1.0 * m.norm_squared());

        for k in 0..100_000u64 {
            let mut rng = counter_rng(9, Domain::Error, 3, k);
            let x = random_direction(3, &mut rng) * (rng.random::<f64>() * 10.0);
            let omega = rng.random::<f64>() * 2.0;
            let (m, e) = apply_multiplicative_error(&x, omega, k % 2 == 0, &mut rng);
            assert!(e.norm_squared() <= omega * m.norm_squared() * (1.0 + 1e-12) + 1e-300);
        }
    }

    #[test]
    fn quantizer_examples() {
        assert_eq!(log_quantize_scalar(0.0, 1.1), 0.0);
        assert_eq!(log_quantize_scalar(5.0, 2.0), 4.0);
        assert_eq!(log_quantize_scalar(-5.0, 2.0), -4.0);
        assert_eq!(log_quantize_scalar(1.0, 1.1), 1.0);
        for k in -30..30 {
            let p = 1.1f64.powi(k);
            assert_eq!(log_quantize_scalar(p, 1.1), p);
        }
    }

    #[test]
    fn trigger_examples() {
        let held = v(&[1.0]);
        assert!(!event_trigger_check(&held, &held, 0.09));
        assert!(event_trigger_check(&v(&[1.4]), &held, 0.09));
        // Capped form switches to the absolute threshold for large states.
        assert!(event_trigger_check_capped(&v(&[10.09]), &v(&[10.0]), 0.09, 0.08));
        assert!(!event_trigger_check_capped(&v(&[10.07]), &v(&[10.0]), 0.09, 0.08));
        assert!(!event_trigger_check_capped(&v(&[0.1]), &v(&[0.1]), 0.09, 0.08));
        assert!(event_trigger_check_norm(&v(&[2.0]), &v(&[1.0]), 1.0));
    }

    #[test]
    fn saturation_examples() {
        assert_eq!(saturation_scale(&v(&[0.0, 0.0]), 1.0).0, 1.0);
        assert_eq!(saturation_scale(&v(&[0.5, -0.2]), 1.0).0, 1.0);
        let (rho, s) = saturation_scale(&v(&[2.3, -1.0]), 1.0);
        assert!((rho - 1.0 / 3.0).abs() < 1e-15);
        assert!((s.amax() - 0.766_666_666_666).abs() < 1e-9 && s.amax() <= 1.0);
    }

    #[test]
    fn error_model_literals() {
        let m: ErrorModel = serde_json::from_str(r#"{"kind":"log_quantizer","level":1.1}"#).unwrap();
        assert_eq!(m, ErrorModel::LogQuantizer { level: 1.1 });
        let m: ErrorModel =
            serde_json::from_str(r#"{"kind":"event_trigger","omega":0.09,"dwell":0.025,"cap":0.08}"#).unwrap();
        assert!(m.is_event_triggered());
        m.validate().unwrap();
        assert!(ErrorModel::LogQuantizer { level: 1.0 }.validate().is_err());
        assert!(ErrorModel::EventTrigger { omega: 0.1, dwell: 0.0, cap: None, rule: TriggerRule::Quadratic }
            .validate()
            .is_err());
    }
}
