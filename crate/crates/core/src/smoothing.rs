//! Scalar smoothing primitives: the one-sided hinge `σ_δ` and two smooth
//! approximations of the pointwise minimum.
//!
//! Both softmins are evaluated in shifted/log form so that large `τ·c` or
//! large exponents never overflow.

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum SmoothingError {
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error("softmin of an empty vector")]
    Empty,
    #[error("non-finite entry in softmin input")]
    NonFinite,
    #[error("lp exponent must be at least 1")]
    BadExponent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SoftminMethod {
    /// `ℓp` power mean of `(c² + ε²)`.
    #[serde(rename = "lp")]
    LpNorm,
    /// `-(1/τ) ln Σ exp(-τ c)`.
    #[serde(rename = "lse")]
    LogSumExp,
}

impl std::str::FromStr for SoftminMethod {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "lp" => Ok(Self::LpNorm),
            "lse" => Ok(Self::LogSumExp),
            other => Err(format!("unknown smoothing method `{other}` (expected lp or lse)")),
        }
    }
}

impl std::fmt::Display for SoftminMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::LpNorm => "lp",
            Self::LogSumExp => "lse",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    pub method: SoftminMethod,
    /// Knee of the hinge `σ_δ`.
    pub delta: f64,
    /// `ℓp` regularizer.
    pub epsilon: f64,
    /// `ℓp` exponent.
    pub p_exp: u32,
    /// Log-sum-exp scale.
    pub tau: f64,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self { method: SoftminMethod::LpNorm, delta: 1.0, epsilon: 1e-3, p_exp: 3, tau: 1e2 }
    }
}

impl SmoothingConfig {
    pub fn with_method(method: SoftminMethod) -> Self {
        Self { method, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), SmoothingError> {
        if !(self.delta > 0.0) {
            return Err(SmoothingError::NonPositive("delta"));
        }
        if !(self.epsilon > 0.0) {
            return Err(SmoothingError::NonPositive("epsilon"));
        }
        if !(self.tau > 0.0) {
            return Err(SmoothingError::NonPositive("tau"));
        }
        if self.p_exp < 1 {
            return Err(SmoothingError::BadExponent);
        }
        Ok(())
    }

    pub fn softmin(&self) -> Softmin {
        match self.method {
            SoftminMethod::LpNorm => Softmin::Lp { p: self.p_exp as f64, epsilon: self.epsilon },
            SoftminMethod::LogSumExp => Softmin::Lse { tau: self.tau },
        }
    }

    pub fn hinge(&self) -> Hinge {
        Hinge { delta: self.delta }
    }
}

/// The hinge `σ_δ`: zero for `α ≤ 0`, quadratic up to `δ`, linear after.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hinge {
    delta: f64,
}

impl Hinge {
    pub fn new(delta: f64) -> Result<Self, SmoothingError> {
        if delta > 0.0 {
            Ok(Self { delta })
        } else {
            Err(SmoothingError::NonPositive("delta"))
        }
    }

    pub fn value(&self, alpha: f64) -> f64 {
        if alpha <= 0.0 {
            0.0
        } else if alpha <= self.delta {
            0.5 * alpha * alpha
        } else {
            self.delta * alpha - 0.5 * self.delta * self.delta
        }
    }

    pub fn derivative(&self, alpha: f64) -> f64 {
        alpha.clamp(0.0, self.delta)
    }
}

pub fn sigma_delta(alpha: f64, delta: f64) -> Result<f64, SmoothingError> {
    Ok(Hinge::new(delta)?.value(alpha))
}

pub fn sigma_delta_derivative(alpha: f64, delta: f64) -> Result<f64, SmoothingError> {
    Ok(Hinge::new(delta)?.derivative(alpha))
}

/// A validated softmin kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Softmin {
    Lp { p: f64, epsilon: f64 },
    Lse { tau: f64 },
}

impl Softmin {
    /// Value at `c`, writing `∂/∂c_k` into `grad` (same length as `c`).
    ///
    /// Inputs are assumed nonempty and finite; the checked wrappers
    /// [`softmin_lse`] and [`softmin_lp`] enforce that.
    pub fn eval(&self, c: &[f64], grad: &mut [f64]) -> f64 {
        debug_assert!(!c.is_empty() && c.len() == grad.len());
        match *self {
            Softmin::Lse { tau } => lse_eval(c, tau, grad),
            Softmin::Lp { p, epsilon } => lp_eval(c, p, epsilon, grad),
        }
    }

    pub fn value(&self, c: &[f64]) -> f64 {
        let mut scratch = vec![0.0; c.len()];
        self.eval(c, &mut scratch)
    }

    /// Upper bound on the softmin of `n` entries when exactly one entry is
    /// zero and the rest are far away: the bias a satisfied disjunction
    /// carries after smoothing.
    pub fn feasible_bias(&self, n: usize) -> f64 {
        match *self {
            Softmin::Lse { .. } => 0.0,
            Softmin::Lp { p, epsilon } => ((n as f64).powf(1.0 / (2.0 * p)) - 1.0) * epsilon,
        }
    }

    /// Interval that always contains the softmin of `n` entries whose
    /// smallest magnitude is `min_abs`.
    pub fn bounds(&self, min_abs: f64, n: usize) -> (f64, f64) {
        match *self {
            Softmin::Lse { tau } => (min_abs - (n as f64).ln() / tau, min_abs),
            Softmin::Lp { p, epsilon } => {
                let floor = min_abs.hypot(epsilon);
                (floor - epsilon, (n as f64).powf(1.0 / (2.0 * p)) * floor - epsilon)
            }
        }
    }
}

fn lse_eval(c: &[f64], tau: f64, grad: &mut [f64]) -> f64 {
    let m = c.iter().copied().fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    for (g, &ck) in grad.iter_mut().zip(c) {
        let w = (-tau * (ck - m)).exp();
        *g = w;
        sum += w;
    }
    for g in grad.iter_mut() {
        *g /= sum;
    }
    m - sum.ln() / tau
}

fn lp_eval(c: &[f64], p: f64, epsilon: f64, grad: &mut [f64]) -> f64 {
    // log-weights w_k = -p ln(c_k² + ε²); M = (mean e^w)^(-1/2p).
    let eps2 = epsilon * epsilon;
    let mut wmax = f64::NEG_INFINITY;
    for (g, &ck) in grad.iter_mut().zip(c) {
        let w = -p * (ck * ck + eps2).ln();
        *g = w;
        wmax = wmax.max(w);
    }
    let mut sum = 0.0;
    for g in grad.iter_mut() {
        *g = (*g - wmax).exp();
        sum += *g;
    }
    let log_mean = wmax + sum.ln() - (c.len() as f64).ln();
    let m = (-log_mean / (2.0 * p)).exp();
    for (g, &ck) in grad.iter_mut().zip(c) {
        *g = m * (*g / sum) * ck / (ck * ck + eps2);
    }
    m - epsilon
}

fn check_input(c: &[f64]) -> Result<(), SmoothingError> {
    if c.is_empty() {
        return Err(SmoothingError::Empty);
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(SmoothingError::NonFinite);
    }
    Ok(())
}

/// `-(1/τ) ln Σ_k exp(-τ c_k)`.
pub fn softmin_lse(c: &[f64], tau: f64) -> Result<f64, SmoothingError> {
    softmin_lse_with_gradient(c, tau).map(|(v, _)| v)
}

/// Log-sum-exp softmin and its gradient (the softmax weights of `-τc`).
pub fn softmin_lse_with_gradient(c: &[f64], tau: f64) -> Result<(f64, Vec<f64>), SmoothingError> {
    check_input(c)?;
    if !(tau > 0.0) {
        return Err(SmoothingError::NonPositive("tau"));
    }
    let mut grad = vec![0.0; c.len()];
    let v = lse_eval(c, tau, &mut grad);
    Ok((v, grad))
}

/// `((1/n) Σ_k (c_k² + ε²)^(-p))^(-1/(2p)) - ε`.
pub fn softmin_lp(c: &[f64], p_exp: u32, epsilon: f64) -> Result<f64, SmoothingError> {
    softmin_lp_with_gradient(c, p_exp, epsilon).map(|(v, _)| v)
}

pub fn softmin_lp_with_gradient(c: &[f64], p_exp: u32, epsilon: f64) -> Result<(f64, Vec<f64>), SmoothingError> {
    check_input(c)?;
    if p_exp < 1 {
        return Err(SmoothingError::BadExponent);
    }
    if !(epsilon > 0.0) {
        return Err(SmoothingError::NonPositive("epsilon"));
    }
    let mut grad = vec![0.0; c.len()];
    let v = lp_eval(c, p_exp as f64, epsilon, &mut grad);
    Ok((v, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn hinge_branches() {
        assert_eq!(sigma_delta(-0.3, 1.0).unwrap(), 0.0);
        assert_eq!(sigma_delta(0.5, 1.0).unwrap(), 0.125);
        assert_eq!(sigma_delta(2.0, 1.0).unwrap(), 1.5);
        assert!(sigma_delta(1.0, 0.0).is_err());
        assert!(sigma_delta(1.0, -1.0).is_err());
        // C¹ at the knees.
        let h = Hinge::new(0.7).unwrap();
        for knee in [0.0, 0.7] {
            let l = h.value(knee - 1e-9);
            let r = h.value(knee + 1e-9);
            assert!((l - r).abs() < 2e-9 * 0.7 + 1e-15);
            assert!((h.derivative(knee - 1e-12) - h.derivative(knee + 1e-12)).abs() < 1e-9);
        }
    }

    #[test]
    fn lse_examples() {
        assert_eq!(softmin_lse(&[5.0], 100.0).unwrap(), 5.0);
        assert_relative_eq!(softmin_lse(&[1.0, 1.0], 100.0).unwrap(), 1.0 - 2f64.ln() / 100.0, epsilon = 1e-15);
        // -(1/100) ln(1 + e^-50) = -e^-50/100 to first order (next term ~ e^-100).
        let expected = -(-50f64).exp() / 100.0;
        assert_relative_eq!(softmin_lse(&[0.0, 0.5], 100.0).unwrap(), expected, max_relative = 1e-12);
        assert!(softmin_lse(&[1e6, 2e6], 100.0).unwrap().is_finite());
    }

    #[test]
    fn lp_examples() {
        let v = softmin_lp(&[1.0, 1.0, 1.0], 3, 1e-12).unwrap();
        assert_relative_eq!(v, 1.0 - 1e-12, epsilon = 1e-14);
        let v = softmin_lp(&[2.0], 3, 1e-3).unwrap();
        assert_relative_eq!(v, (4.0f64 + 1e-6).sqrt() - 1e-3, epsilon = 1e-14);
        assert_relative_eq!(v, 1.999_000_25, epsilon = 1e-8);
        // Brute force in the raw (unshifted) form: ((1 + 2^-6) / 2)^(-1/6).
        let raw = ((1.0f64.powi(-6) + 2.0f64.powi(-6)) / 2.0).powf(-1.0 / 6.0) - 1e-12;
        let v = softmin_lp(&[1.0, 2.0], 3, 1e-12).unwrap();
        assert_relative_eq!(v, raw, epsilon = 1e-12);
        assert_relative_eq!(v, 1.11956, epsilon = 1e-5);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert_eq!(softmin_lse(&[], 1.0), Err(SmoothingError::Empty));
        assert_eq!(softmin_lp(&[], 3, 1e-3), Err(SmoothingError::Empty));
        assert_eq!(softmin_lse(&[f64::NAN], 1.0), Err(SmoothingError::NonFinite));
        assert_eq!(softmin_lp(&[1.0, f64::INFINITY], 3, 1e-3), Err(SmoothingError::NonFinite));
        assert!(softmin_lse(&[1.0], 0.0).is_err());
        assert!(softmin_lp(&[1.0], 0, 1e-3).is_err());
        assert!(softmin_lp(&[1.0], 3, 0.0).is_err());
    }

    #[test]
    fn extreme_magnitudes_stay_finite() {
        let v = softmin_lp(&[1e-200, 1e200], 32, 1e-3).unwrap();
        assert!(v.is_finite());
        let v = softmin_lp(&[1e150, 1e151], 3, 1e-3).unwrap();
        assert!(v.is_finite() && v > 0.0);
        let v = softmin_lse(&[-1e5, 1e5], 1e3).unwrap();
        assert_eq!(v, -1e5);
    }

    #[test]
    fn config_defaults() {
        let cfg = SmoothingConfig::default();
        assert_eq!((cfg.delta, cfg.epsilon, cfg.p_exp, cfg.tau), (1.0, 1e-3, 3, 100.0));
        assert!(cfg.validate().is_ok());
        assert!(SmoothingConfig { tau: -1.0, ..cfg }.validate().is_err());
        assert_eq!("lse".parse::<SoftminMethod>().unwrap(), SoftminMethod::LogSumExp);
        assert!("lq".parse::<SoftminMethod>().is_err());
    }

    #[test]
    fn feasible_bias_is_the_far_limit() {
        let s = Softmin::Lp { p: 3.0, epsilon: 1e-3 };
        let v = s.value(&[0.0, 1e3, 1e3, 1e3]);
        assert_relative_eq!(v, s.feasible_bias(4), max_relative = 1e-9);
        let s = Softmin::Lse { tau: 100.0 };
        assert!(s.value(&[0.0, 10.0]).abs() < 1e-300 + 1e-12);
    }
}
