//! One-sided stable subordinators and their relativistic tempering.
//!
//! The subordinator `T` with `E exp(-λ T_1) = exp(-Φ(λ))` has Laplace exponent
//! `Φ(λ) = λ^a` (pure) or `Φ(λ) = (λ + m^{1/a})^a - m` (relativistic). Its
//! density at time one is evaluated from a closed form when `a = 1/2`, from
//! Kanter's positive integral representation for `s < 1`, and from the
//! convergent power series in `s^{-a}` for `s >= 1`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::density::StableSpec;
use crate::error::{invalid, Error, Result};
use crate::quad::{geomspace, integrate_with_breaks, Estimate, Tolerance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubordinatorSpec {
    pub index: f64,
    #[serde(default)]
    pub mass: f64,
}

impl SubordinatorSpec {
    pub fn new(index: f64, mass: f64) -> Result<Self> {
        if !(index > 0.0 && index < 1.0) {
            return Err(invalid(format!("subordinator index must lie in (0,1), got {index}")));
        }
        if !(mass >= 0.0 && mass.is_finite()) {
            return Err(invalid(format!("mass must be finite and nonnegative, got {mass}")));
        }
        Ok(SubordinatorSpec { index, mass })
    }

    pub fn pure(index: f64) -> Result<Self> {
        Self::new(index, 0.0)
    }

    /// `m^{1/a}`, the exponential tempering rate.
    pub fn tempering_rate(&self) -> f64 {
        if self.mass == 0.0 {
            0.0
        } else {
            self.mass.powf(1.0 / self.index)
        }
    }

    pub fn laplace_exponent(&self, lambda: f64) -> Result<f64> {
        if !(lambda >= 0.0) {
            return Err(invalid(format!("lambda must be nonnegative, got {lambda}")));
        }
        Ok(self.phi(lambda))
    }

    pub(crate) fn phi(&self, lambda: f64) -> f64 {
        if self.mass == 0.0 {
            lambda.powf(self.index)
        } else {
            (lambda + self.tempering_rate()).powf(self.index) - self.mass
        }
    }

    /// Density of `T_1` at `s`.
    pub fn eta(&self, s: f64) -> Result<f64> {
        if !(s > 0.0) {
            return Err(invalid(format!("eta needs s > 0, got {s}")));
        }
        let base = eta_pure(self.index, s)?;
        if self.mass == 0.0 {
            Ok(base)
        } else {
            Ok((self.mass - self.tempering_rate() * s).exp() * base)
        }
    }
}

pub fn laplace_exponent(spec: &SubordinatorSpec, lambda: f64) -> Result<f64> {
    spec.laplace_exponent(lambda)
}

pub fn eval_eta(spec: &SubordinatorSpec, s: f64) -> Result<f64> {
    spec.eta(s)
}

fn eta_half(s: f64) -> f64 {
    0.5 / PI.sqrt() * s.powf(-1.5) * (-0.25 / s).exp()
}

/// Pure one-sided stable density of index `a` at time one.
pub(crate) fn eta_pure(a: f64, s: f64) -> Result<f64> {
    if a == 0.5 {
        Ok(eta_half(s))
    } else if s < 1.0 {
        eta_kanter(a, s)
    } else {
        Ok(eta_series(a, s))
    }
}

// ln A(φ) for Kanter's function, stable near both ends of (0, π).
fn kanter_ln_a(a: f64, p: f64) -> f64 {
    let b = 1.0 - a;
    ((a * p).sin().ln() - p.sin().ln()) / b + (b * p).sin().ln() - (a * p).sin().ln()
}

fn eta_kanter(a: f64, s: f64) -> Result<f64> {
    let b = 1.0 - a;
    let x = s.powf(-a / b);
    let f = |p: f64| {
        if p <= 0.0 || p >= PI {
            return 0.0;
        }
        let la = kanter_ln_a(a, p);
        let v = (la - x * la.exp()).exp();
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    // The integrand peaks at the origin with width ~ x^{-1/2}.
    let w = (1.0 / x.sqrt()).min(1.0);
    let breaks = [w * 0.25, w, 4.0 * w, PI / 2.0, 3.0];
    let tol = Tolerance::new(1e-300, 1e-13).with_max_intervals(4000);
    let est = integrate_with_breaks(f, 0.0, PI, &breaks, tol)?;
    let pref = a / b / PI;
    let ln_scale = -s.ln() / b;
    Ok(pref * (ln_scale.exp() * est.value))
}

fn eta_series(a: f64, s: f64) -> f64 {
    let ls = s.ln();
    let mut sum = 0.0;
    let mut small = 0;
    for k in 1..2000 {
        let kf = k as f64;
        let sn = (PI * a * kf).sin();
        let mag = ln_gamma(a * kf + 1.0) - ln_gamma(kf + 1.0) - (a * kf + 1.0) * ls;
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        let term = sign * sn * mag.exp();
        sum += term;
        if mag.exp() < 1e-18 * sum.abs() {
            small += 1;
            if small >= 3 {
                break;
            }
        } else {
            small = 0;
        }
    }
    sum / PI
}

/// Lower end of the useful `s`-range: below it `η` underflows.
pub(crate) fn s_floor(a: f64) -> f64 {
    let b = 1.0 - a;
    let a0 = b * a.powf(a / b);
    (a0 / 720.0).powf(b / a)
}

/// `∫ e^{-λs} η(s) ds`, integrated in `v = ln s`.
pub fn laplace_transform(spec: &SubordinatorSpec, lambda: f64) -> Result<Estimate> {
    integrate_against(spec, |s| (-lambda * s).exp(), 0.0, 0.0)
}

/// `∫ η(s) ds`.
pub fn total_mass(spec: &SubordinatorSpec) -> Result<Estimate> {
    integrate_against(spec, |_| 1.0, 0.0, 0.0)
}

/// `∫ w(s) η(s) ds` over `s > 0` for a weight that behaves like `s^{-decay}`
/// beyond `s = e^{v_center}`.
pub(crate) fn integrate_against<W: Fn(f64) -> f64>(
    spec: &SubordinatorSpec,
    w: W,
    decay: f64,
    v_center: f64,
) -> Result<Estimate> {
    let a = spec.index;
    let v_lo = s_floor(a).ln();
    let v_hi = v_center.max(0.0) + 1.0 + 40.0 * std::f64::consts::LN_10 / (a + decay);
    let mut failure = None;
    let f = |v: f64| {
        let s = v.exp();
        match spec.eta(s) {
            Ok(e) => s * e * w(s),
            Err(err) => {
                failure.get_or_insert(err);
                0.0
            }
        }
    };
    let breaks: Vec<f64> = (v_lo.ceil() as i64..=v_hi.floor() as i64)
        .map(|k| k as f64)
        .collect();
    let tol = Tolerance::new(1e-15, 1e-12).with_max_intervals(4000);
    let est = integrate_with_breaks(f, v_lo, v_hi, &breaks, tol)?;
    if let Some(e) = failure {
        return Err(e);
    }
    // Pure-stable tail beyond v_hi from the leading series term.
    let tail = if spec.mass == 0.0 {
        let c1 = (ln_gamma(a + 1.0)).exp() * (PI * a).sin() / PI;
        let s_hi = v_hi.exp();
        c1 * w(s_hi) * s_hi.powf(-a) / (a + decay)
    } else {
        0.0
    };
    Ok(Estimate {
        value: est.value + tail,
        error: est.error + tail.abs() * 1e-3,
    })
}

pub fn default_s_grid() -> Vec<f64> {
    geomspace(1e-3, 1e3, 600)
}

/// `sup_s s^{1+a} η(s)` over the grid.
pub fn check_etabound(spec: &SubordinatorSpec, s_grid: &[f64]) -> Result<f64> {
    let mut best: f64 = 0.0;
    for &s in s_grid {
        let v = s.powf(1.0 + spec.index) * spec.eta(s)?;
        best = best.max(v);
    }
    Ok(best)
}

/// Least-squares slope of `ln Φ` against `ln λ` on `[1e2, 1e6]`.
pub fn check_growth(spec: &SubordinatorSpec) -> f64 {
    let lambdas = geomspace(1e2, 1e6, 41);
    let xs: Vec<f64> = lambdas.iter().map(|l| l.ln()).collect();
    let ys: Vec<f64> = lambdas.iter().map(|&l| spec.phi(l).ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// `∫_0^∞ t φ̂(t e)^2 dt` for a unit vector `e`, with `φ̂(ξ) = exp(-ρ(2π|ξ|))`.
pub fn check_fourierray(spec: &StableSpec) -> Result<f64> {
    // Substituting k = 2πt turns the integral into (2π)^{-2} ∫ k e^{-2ρ(k)} dk.
    let f = |v: f64| {
        let k = v.exp();
        k * k * (-2.0 * spec.rho(k)).exp()
    };
    let hi = find_rho_level(spec, 80.0).ln();
    let lo = hi - 60.0;
    let breaks: Vec<f64> = (lo.ceil() as i64..=hi.floor() as i64).map(|k| k as f64).collect();
    let est = integrate_with_breaks(f, lo, hi, &breaks, Tolerance::new(1e-300, 1e-13))?;
    let value = est.value / (4.0 * PI * PI);
    if !(value.is_finite() && value > 0.0) {
        return Err(Error::Inconclusive(format!("fourier-ray integral not finite: {value}")));
    }
    Ok(value)
}

/// Smallest `k` with `ρ(k) >= level`.
pub(crate) fn find_rho_level(spec: &StableSpec, level: f64) -> f64 {
    let mut hi = 1.0;
    while spec.rho(hi) < level {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if spec.rho(mid) < level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LaplaceResidual {
    pub lambda: f64,
    pub transform: f64,
    pub expected: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubordinatorReport {
    pub spec: SubordinatorSpec,
    pub etabound_c: f64,
    pub growth_slope: f64,
    pub fourierray_c: f64,
    pub mass_integral: f64,
    pub laplace_residuals: Vec<LaplaceResidual>,
}

pub fn laplace_residuals(spec: &SubordinatorSpec, lambdas: &[f64]) -> Result<Vec<LaplaceResidual>> {
    lambdas
        .iter()
        .map(|&lambda| {
            let transform = laplace_transform(spec, lambda)?.value;
            let expected = (-spec.phi(lambda)).exp();
            Ok(LaplaceResidual {
                lambda,
                transform,
                expected,
                residual: (transform - expected).abs(),
            })
        })
        .collect()
}

/// All hypothesis checks for one subordinator.
pub fn check(spec: &SubordinatorSpec) -> Result<SubordinatorReport> {
    let stable = StableSpec::from_subordinator(spec, 1)?;
    Ok(SubordinatorReport {
        spec: *spec,
        etabound_c: check_etabound(spec, &default_s_grid())?,
        growth_slope: check_growth(spec),
        fourierray_c: check_fourierray(&stable)?,
        mass_integral: total_mass(spec)?.value,
        laplace_residuals: laplace_residuals(spec, &[0.5, 1.0, 2.0, 4.0])?,
    })
}
