//! Rotationally invariant stable densities and their radial lifts.
//!
//! `φ` is the density of `X_1` where `E exp(iξ·X_1) = exp(-ρ(|ξ|))`, with
//! `ρ(k) = k^α` (pure stable) or `ρ(k) = (k² + m^{2/α})^{α/2} - m`
//! (relativistic). Write `φ_d` for the `d`-dimensional radial density with the
//! same `ρ`. Derivatives never need a numerical difference: the lift identity
//! `φ_d'(r) = -2π r φ_{d+2}(r)` turns every Cartesian derivative of `φ_n`
//! into polynomials in `x` times lifts `φ_{n+2k}`.
//!
//! Two independent evaluation routes are provided.
//!
//! * Fourier inversion. In `d = 1` the cosine transform is rotated onto a ray
//!   `k = t e^{iθ}` in the upper half plane, which turns oscillation into
//!   decay. Odd `d >= 3` use the spherical Hankel form on the same ray for
//!   large `r` and a real-axis spherical Bessel integral for small `r`.
//!   Even `d` are Abel projections of `φ_{d+1}`.
//! * Subordination: `φ_d(r) = ∫ (4πs)^{-d/2} e^{-r²/4s} η(s) ds` with `η` the
//!   density of the `α/2`-stable subordinator at time one.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::error::{invalid, Error, Result};
use crate::quad::{integrate_with_breaks, Estimate, Tolerance};
use crate::special::{hankel_poly, horner, reduced_spherical_j};
use crate::subordinator::{eta_pure, integrate_against, s_floor, SubordinatorSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StableKind {
    PureStable,
    Relativistic { mass: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpecRepr", into = "SpecRepr")]
pub struct StableSpec {
    pub alpha: f64,
    pub dim: usize,
    pub kind: StableKind,
}

#[derive(Serialize, Deserialize)]
struct SpecRepr {
    alpha: f64,
    dim: usize,
    kind: String,
    #[serde(default)]
    mass: f64,
}

impl TryFrom<SpecRepr> for StableSpec {
    type Error = Error;
    fn try_from(r: SpecRepr) -> Result<Self> {
        let kind = match r.kind.as_str() {
            "pure_stable" => StableKind::PureStable,
            "relativistic" => StableKind::Relativistic { mass: r.mass },
            other => return Err(invalid(format!("unknown kind {other:?}"))),
        };
        StableSpec::new(r.alpha, r.dim, kind)
    }
}

impl From<StableSpec> for SpecRepr {
    fn from(s: StableSpec) -> Self {
        let (kind, mass) = match s.kind {
            StableKind::PureStable => ("pure_stable", 0.0),
            StableKind::Relativistic { mass } => ("relativistic", mass),
        };
        SpecRepr {
            alpha: s.alpha,
            dim: s.dim,
            kind: kind.to_string(),
            mass,
        }
    }
}

impl StableSpec {
    pub fn new(alpha: f64, dim: usize, kind: StableKind) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(invalid(format!("alpha must lie in (0,2], got {alpha}")));
        }
        if dim == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        if let StableKind::Relativistic { mass } = kind {
            if !(mass >= 0.0 && mass.is_finite()) {
                return Err(invalid(format!("mass must be finite and nonnegative, got {mass}")));
            }
            if alpha == 2.0 && mass > 0.0 {
                return Err(invalid("relativistic kind needs alpha < 2"));
            }
        }
        Ok(StableSpec { alpha, dim, kind })
    }

    pub fn pure(alpha: f64, dim: usize) -> Result<Self> {
        Self::new(alpha, dim, StableKind::PureStable)
    }

    pub fn relativistic(alpha: f64, dim: usize, mass: f64) -> Result<Self> {
        Self::new(alpha, dim, StableKind::Relativistic { mass })
    }

    pub fn from_subordinator(sub: &SubordinatorSpec, dim: usize) -> Result<Self> {
        if sub.mass == 0.0 {
            Self::pure(2.0 * sub.index, dim)
        } else {
            Self::relativistic(2.0 * sub.index, dim, sub.mass)
        }
    }

    pub fn mass(&self) -> f64 {
        match self.kind {
            StableKind::PureStable => 0.0,
            StableKind::Relativistic { mass } => mass,
        }
    }

    /// True when `φ_y(x) = y^{-n} φ(x/y)` holds, i.e. the process is self-similar.
    pub fn is_self_similar(&self) -> bool {
        self.mass() == 0.0
    }

    pub fn with_dim(&self, dim: usize) -> Self {
        StableSpec { dim, ..*self }
    }

    pub fn subordinator(&self) -> Option<SubordinatorSpec> {
        if self.alpha < 2.0 {
            Some(SubordinatorSpec {
                index: self.alpha / 2.0,
                mass: self.mass(),
            })
        } else {
            None
        }
    }

    pub fn rho(&self, k: f64) -> f64 {
        let m = self.mass();
        if m == 0.0 {
            k.powf(self.alpha)
        } else {
            (k * k + m.powf(2.0 / self.alpha)).powf(self.alpha / 2.0) - m
        }
    }

    pub fn rho_prime(&self, k: f64) -> f64 {
        let m = self.mass();
        if m == 0.0 {
            self.alpha * k.powf(self.alpha - 1.0)
        } else {
            self.alpha * k * (k * k + m.powf(2.0 / self.alpha)).powf(self.alpha / 2.0 - 1.0)
        }
    }

    fn rho_c(&self, z: Complex64) -> Complex64 {
        let m = self.mass();
        if m == 0.0 {
            z.powf(self.alpha)
        } else {
            (z * z + m.powf(2.0 / self.alpha)).powf(self.alpha / 2.0) - m
        }
    }

    /// Characteristic function of `X_y` at `ξ` in the `e^{-2πix·ξ}` convention.
    pub fn fourier_symbol(&self, xi_norm: f64, y: f64) -> f64 {
        (-self.rho(2.0 * PI * y * xi_norm)).exp()
    }

    /// Expected power-law tail exponent `n + α`.
    pub fn tail_exponent(&self) -> f64 {
        self.dim as f64 + self.alpha
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn check_point(spec: &StableSpec, x: &[f64]) -> Result<()> {
    if x.len() != spec.dim {
        return Err(Error::Geometry(format!(
            "point has {} coordinates, spec dimension is {}",
            x.len(),
            spec.dim
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(invalid("point coordinates must be finite"));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Fourier route

fn ray_angle(alpha: f64) -> f64 {
    0.5 * (PI / 2.0).min(PI / (2.0 * alpha))
}

fn fourier_tol() -> Tolerance {
    Tolerance::new(1e-300, 1e-13).with_max_intervals(6000)
}

/// Scan a log-magnitude on a geometric grid from `t0` and return the cutoff
/// beyond the peak where it has dropped by `drop`, with the scan points.
fn scan_cutoff<L: Fn(f64) -> f64>(logmag: L, t0: f64, drop: f64) -> (f64, Vec<f64>) {
    let mut t = t0;
    let mut best = f64::NEG_INFINITY;
    let mut peak = t;
    let mut below = 0;
    let mut pts = Vec::new();
    while t < 1e200 {
        let lm = logmag(t);
        if lm > best {
            best = lm;
            peak = t;
        }
        pts.push(t);
        if t > peak && lm < best - drop {
            below += 1;
            if below >= 3 {
                break;
            }
        } else {
            below = 0;
        }
        t *= 1.25;
    }
    (t, pts)
}

fn ray_integrate<G: Fn(f64) -> Complex64>(g: G) -> Result<Estimate> {
    let (cut, pts) = scan_cutoff(|t| g(t).norm().ln(), 1e-8, 46.0);
    let breaks: Vec<f64> = pts.into_iter().step_by(3).collect();
    integrate_with_breaks(|t| g(t).re, 0.0, cut, &breaks, fourier_tol())
}

fn ray_d1(spec: &StableSpec, r: f64) -> Result<Estimate> {
    let th = ray_angle(spec.alpha);
    let e = Complex64::from_polar(1.0, th);
    let i = Complex64::i();
    let est = ray_integrate(|t| {
        let z = t * e;
        (i * z * r - spec.rho_c(z)).exp() * e
    })?;
    Ok(scale(est, 1.0 / PI))
}

fn odd_prefactor(d: usize) -> f64 {
    (2.0 * PI).powf(-(d as f64) / 2.0) * (2.0 / PI).sqrt()
}

fn hankel_ray(spec: &StableSpec, l: usize, r: f64) -> Result<Estimate> {
    let d = 2 * l + 3;
    let c = hankel_poly(l);
    let th = ray_angle(spec.alpha);
    let e = Complex64::from_polar(1.0, th);
    let i = Complex64::i();
    let est = ray_integrate(|t| {
        let z = t * e;
        z * horner(&c, z * r) * (i * z * r - spec.rho_c(z)).exp() * e
    })?;
    Ok(scale(est, odd_prefactor(d) * r.powi(-(2 * l as i32) - 1)))
}

fn real_axis(spec: &StableSpec, d: usize, r: f64) -> Result<Estimate> {
    let l = (d - 3) / 2;
    let p = (d - 1) as i32;
    let (cut, pts) = scan_cutoff(|k| p as f64 * k.ln() - spec.rho(k), 1e-8, 46.0);
    let mut breaks: Vec<f64> = pts.into_iter().step_by(3).collect();
    if r > 0.0 {
        let half = PI / r;
        let count = (cut / half) as usize;
        if count < 100_000 {
            breaks.extend((1..=count).map(|j| j as f64 * half));
        }
    }
    let est = integrate_with_breaks(
        |k| k.powi(p) * reduced_spherical_j(l, k * r) * (-spec.rho(k)).exp(),
        0.0,
        cut,
        &breaks,
        fourier_tol(),
    )?;
    Ok(scale(est, odd_prefactor(d)))
}

// Below this radius the Hankel ray loses digits to cancellation of r^{-2l-1};
// above it the real-axis integral loses them to oscillation.
fn hankel_switch(_l: usize) -> f64 {
    0.5
}

fn abel(spec: &StableSpec, d: usize, r: f64) -> Result<Estimate> {
    let s = r.max(1.0);
    let mut u_max = 2f64.ln() + 1.0 + 35.0 / (d as f64 + spec.alpha);
    if spec.alpha == 2.0 {
        // Gaussian decay: e^{-t²/4} < 1e-18 beyond t = 13.
        u_max = u_max.min((13.0 / s).asinh());
    }
    let mut failure = None;
    let mut worst_rel: f64 = 0.0;
    let f = |u: f64| {
        let t = s * u.sinh();
        let rr = (r * r + t * t).sqrt();
        match radial_fourier(spec, d + 1, rr) {
            Ok(e) => {
                if e.value != 0.0 {
                    worst_rel = worst_rel.max(e.error / e.value.abs());
                }
                2.0 * s * u.cosh() * e.value
            }
            Err(err) => {
                failure.get_or_insert(err);
                0.0
            }
        }
    };
    let breaks: Vec<f64> = (1..=8).map(|k| k as f64 * u_max / 8.0).collect();
    let est = integrate_with_breaks(f, 0.0, u_max, &breaks, Tolerance::new(1e-300, 1e-12))?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(Estimate {
        value: est.value,
        error: est.error + worst_rel.min(1.0) * est.value.abs(),
    })
}

fn scale(e: Estimate, c: f64) -> Estimate {
    Estimate {
        value: e.value * c,
        error: e.error * c.abs(),
    }
}

/// `φ_d(r)` by Fourier inversion.
pub fn radial_fourier(spec: &StableSpec, d: usize, r: f64) -> Result<Estimate> {
    if d == 0 {
        return Err(invalid("dimension must be at least 1"));
    }
    if !(r >= 0.0 && r.is_finite()) {
        return Err(invalid(format!("radius must be finite and nonnegative, got {r}")));
    }
    if d == 1 {
        ray_d1(spec, r)
    } else if d % 2 == 1 {
        let l = (d - 3) / 2;
        if r >= hankel_switch(l) {
            hankel_ray(spec, l, r)
        } else {
            real_axis(spec, d, r)
        }
    } else {
        abel(spec, d, r)
    }
}

/// `φ_d(r)` by subordination of the Gaussian kernel.
pub fn radial_subordination(spec: &StableSpec, d: usize, r: f64) -> Result<Estimate> {
    if !(r >= 0.0 && r.is_finite()) {
        return Err(invalid(format!("radius must be finite and nonnegative, got {r}")));
    }
    let Some(sub) = spec.subordinator() else {
        return Ok(Estimate {
            value: gaussian_lift(d, r),
            error: 0.0,
        });
    };
    let half_d = d as f64 / 2.0;
    let w = |s: f64| (4.0 * PI * s).powf(-half_d) * (-r * r / (4.0 * s)).exp();
    let center = if r > 1.0 { 2.0 * r.ln() } else { 0.0 };
    integrate_against(&sub, w, half_d, center)
}

fn gaussian_lift(d: usize, r: f64) -> f64 {
    (4.0 * PI).powf(-(d as f64) / 2.0) * (-r * r / 4.0).exp()
}

pub fn eval_density_fourier(spec: &StableSpec, x: &[f64]) -> Result<f64> {
    check_point(spec, x)?;
    let v = radial_fourier(spec, spec.dim, norm(x))?.value;
    Ok(v)
}

pub fn eval_density_subordination(spec: &StableSpec, x: &[f64]) -> Result<f64> {
    check_point(spec, x)?;
    Ok(radial_subordination(spec, spec.dim, norm(x))?.value)
}

/// `φ_y(x) = y^{-n} φ(x/y)`.
pub fn eval_scaled(spec: &StableSpec, x: &[f64], y: f64) -> Result<f64> {
    if !(y > 0.0 && y.is_finite()) {
        return Err(invalid(format!("scale y must be positive, got {y}")));
    }
    if !spec.is_self_similar() {
        return Err(Error::Unsupported(
            "φ_y(x) = y^{-n} φ(x/y) needs a pure stable spec".into(),
        ));
    }
    let z: Vec<f64> = x.iter().map(|v| v / y).collect();
    Ok(eval_density_fourier(spec, &z)? * y.powi(-(spec.dim as i32)))
}

/// `∇φ(x) = -2π x φ_{n+2}(|x|)`.
pub fn grad_density(spec: &StableSpec, x: &[f64]) -> Result<Vec<f64>> {
    check_point(spec, x)?;
    let r = norm(x);
    if r == 0.0 {
        return Ok(vec![0.0; spec.dim]);
    }
    let l1 = radial_fourier(spec, spec.dim + 2, r)?.value;
    Ok(x.iter().map(|v| -2.0 * PI * v * l1).collect())
}

/// `∂_i∂_jφ(x) = -2π δ_ij φ_{n+2} + 4π² x_i x_j φ_{n+4}`.
pub fn second_derivs(spec: &StableSpec, x: &[f64]) -> Result<Vec<Vec<f64>>> {
    check_point(spec, x)?;
    let r = norm(x);
    let n = spec.dim;
    let l1 = radial_fourier(spec, n + 2, r)?.value;
    let l2 = if r == 0.0 {
        0.0
    } else {
        radial_fourier(spec, n + 4, r)?.value
    };
    Ok((0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let d = if i == j { -2.0 * PI * l1 } else { 0.0 };
                    d + 4.0 * PI * PI * x[i.min(j)] * x[i.max(j)] * l2
                })
                .collect()
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Tabulated profiles

/// Trapezoid table of `s η(s)` on a uniform grid in `v = ln s`. The integrand
/// of the subordination formula is analytic in a strip around the real
/// `v`-axis, so the trapezoid rule converges geometrically in `1/h`.
#[derive(Debug, Clone)]
struct EtaTable {
    ln_w: Vec<f64>,
    ln_s: Vec<f64>,
    s: Vec<f64>,
}

impl EtaTable {
    fn new(sub: &SubordinatorSpec, r_max: f64, d_min: usize) -> Result<Self> {
        let a = sub.index;
        // Half-width of the analyticity strip of η(e^v) in v.
        let strip = (PI * (1.0 - a) / (2.0 * a)).min(PI / 2.0);
        let h = (strip / 8.0).min(0.04);
        let v_lo = s_floor(a).ln();
        let v_hi = 2.0 * r_max.max(1.0).ln() + 1.0 + 92.0 / (a + d_min as f64 / 2.0);
        let count = ((v_hi - v_lo) / h).ceil() as usize + 1;
        let rate = sub.tempering_rate();
        let mut ln_w = Vec::with_capacity(count);
        let mut ln_s = Vec::with_capacity(count);
        let mut s = Vec::with_capacity(count);
        for j in 0..count {
            let v = v_lo + j as f64 * h;
            let sv = v.exp();
            let eta = eta_pure(a, sv)?;
            let lw = h.ln() + v + eta.ln() + sub.mass - rate * sv;
            ln_w.push(if eta > 0.0 { lw } else { f64::NEG_INFINITY });
            ln_s.push(v);
            s.push(sv);
        }
        Ok(EtaTable { ln_w, ln_s, s })
    }

    fn ln_phi(&self, d: usize, r: f64) -> f64 {
        let half_d = d as f64 / 2.0;
        let c = half_d * (4.0 * PI).ln();
        let r2 = r * r / 4.0;
        let mut best = f64::NEG_INFINITY;
        for j in 0..self.s.len() {
            let t = self.ln_w[j] - c - half_d * self.ln_s[j] - r2 / self.s[j];
            best = best.max(t);
        }
        let mut sum = 0.0;
        for j in 0..self.s.len() {
            let t = self.ln_w[j] - c - half_d * self.ln_s[j] - r2 / self.s[j];
            if t > best - 80.0 {
                sum += (t - best).exp();
            }
        }
        best + sum.ln()
    }

    /// Probability that `|X_1| > r` in dimension `d`.
    fn tail_mass(&self, d: usize, r: f64) -> f64 {
        let half_d = d as f64 / 2.0;
        let mut sum = 0.0;
        for j in 0..self.s.len() {
            if self.ln_w[j].is_finite() {
                sum += self.ln_w[j].exp() * gamma_ur(half_d, r * r / (4.0 * self.s[j]));
            }
        }
        sum
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ProfileOptions {
    pub r_min: f64,
    pub r_max: f64,
    pub points: usize,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        ProfileOptions {
            r_min: 1e-3,
            r_max: 1e3,
            points: 2000,
        }
    }
}

/// Number of lifts held in the table: `φ_n, φ_{n+2}, φ_{n+4}, φ_{n+6}`.
pub const LIFTS: usize = 4;
const ORIGIN_LIFTS: usize = LIFTS + 2;

#[derive(Debug, Clone)]
enum LiftSource {
    Table {
        ln_r0: f64,
        dln: f64,
        ln_vals: Vec<Vec<f64>>,
        origin: [f64; ORIGIN_LIFTS],
        eta: EtaTable,
    },
    Gaussian,
}

/// Radial tables of `φ` and its lifts, with Cartesian derivative helpers.
///
/// `radii[0] = 0` followed by a geometric grid. `d2phi[k] = [φ''(r), φ'(r)/r]`,
/// the radial and tangential Hessian eigenvalues.
#[derive(Debug, Clone, Serialize)]
pub struct RadialProfile {
    pub spec: StableSpec,
    pub radii: Vec<f64>,
    pub phi: Vec<f64>,
    pub dphi: Vec<f64>,
    pub d2phi: Vec<[f64; 2]>,
    pub tail_exponent: f64,
    #[serde(skip)]
    source: LiftSource,
    #[serde(skip)]
    options: ProfileOptions,
}

impl RadialProfile {
    pub fn build(spec: &StableSpec) -> Result<Self> {
        Self::build_with(spec, ProfileOptions::default())
    }

    pub fn build_with(spec: &StableSpec, opts: ProfileOptions) -> Result<Self> {
        if !(opts.r_min > 0.0 && opts.r_max > opts.r_min && opts.points >= 8) {
            return Err(invalid("profile needs 0 < r_min < r_max and at least 8 points"));
        }
        let n = spec.dim;
        let ln_r0 = opts.r_min.ln();
        let dln = (opts.r_max.ln() - ln_r0) / (opts.points - 1) as f64;
        let grid: Vec<f64> = (0..opts.points)
            .map(|k| (ln_r0 + k as f64 * dln).exp())
            .collect();
        let source = match spec.subordinator() {
            None => LiftSource::Gaussian,
            Some(sub) => {
                let eta = EtaTable::new(&sub, opts.r_max, n)?;
                let ln_vals: Vec<Vec<f64>> = (0..LIFTS)
                    .map(|k| grid.iter().map(|&r| eta.ln_phi(n + 2 * k, r)).collect())
                    .collect();
                let mut origin = [0.0; ORIGIN_LIFTS];
                for (k, o) in origin.iter_mut().enumerate() {
                    *o = eta.ln_phi(n + 2 * k, 0.0).exp();
                }
                LiftSource::Table {
                    ln_r0,
                    dln,
                    ln_vals,
                    origin,
                    eta,
                }
            }
        };
        let mut prof = RadialProfile {
            spec: *spec,
            radii: Vec::new(),
            phi: Vec::new(),
            dphi: Vec::new(),
            d2phi: Vec::new(),
            tail_exponent: 0.0,
            source,
            options: opts,
        };
        let mut radii = Vec::with_capacity(opts.points + 1);
        radii.push(0.0);
        radii.extend(grid);
        for &r in &radii {
            let l0 = prof.lift(0, r);
            let l1 = prof.lift(1, r);
            let l2 = prof.lift(2, r);
            prof.phi.push(l0);
            prof.dphi.push(-2.0 * PI * r * l1);
            prof.d2phi
                .push([-2.0 * PI * l1 + 4.0 * PI * PI * r * r * l2, -2.0 * PI * l1]);
        }
        prof.radii = radii;
        prof.tail_exponent = -prof.log_slope(0, opts.r_max);
        Ok(prof)
    }

    /// Process-wide cached profile with default options.
    pub fn shared(spec: &StableSpec) -> Result<Arc<RadialProfile>> {
        type Key = (u64, usize, u64);
        static CACHE: OnceLock<Mutex<HashMap<Key, Arc<RadialProfile>>>> = OnceLock::new();
        let key = (spec.alpha.to_bits(), spec.dim, spec.mass().to_bits());
        let cache = CACHE.get_or_init(Default::default);
        if let Some(p) = cache.lock().expect("profile cache poisoned").get(&key) {
            return Ok(p.clone());
        }
        let p = Arc::new(Self::build(spec)?);
        cache
            .lock()
            .expect("profile cache poisoned")
            .insert(key, p.clone());
        Ok(p)
    }

    pub fn options(&self) -> ProfileOptions {
        self.options
    }

    fn log_slope(&self, k: usize, r: f64) -> f64 {
        match &self.source {
            LiftSource::Gaussian => -r * r / 2.0,
            LiftSource::Table { dln, ln_vals, .. } => {
                let v = &ln_vals[k];
                let m = v.len();
                (v[m - 1] - v[m - 2]) / dln
            }
        }
    }

    /// `φ_{n+2k}(r)`.
    pub fn lift(&self, k: usize, r: f64) -> f64 {
        let d = self.spec.dim + 2 * k;
        match &self.source {
            LiftSource::Gaussian => gaussian_lift(d, r),
            LiftSource::Table {
                ln_r0,
                dln,
                ln_vals,
                origin,
                ..
            } => {
                assert!(k < LIFTS, "lift index {k} beyond table");
                if r < self.options.r_min {
                    let q = PI * r * r;
                    return origin[k] - q * origin[k + 1] + 0.5 * q * q * origin[k + 2];
                }
                let v = &ln_vals[k];
                let m = v.len();
                let x = (r.ln() - ln_r0) / dln;
                if x >= (m - 1) as f64 {
                    let slope = (v[m - 1] - v[m - 2]) / dln;
                    return (v[m - 1] + slope * (x - (m - 1) as f64) * dln).exp();
                }
                let i = (x.floor() as usize).clamp(1, m - 3);
                let t = x - i as f64;
                // Four-point Lagrange on nodes i-1, i, i+1, i+2.
                let w0 = -t * (t - 1.0) * (t - 2.0) / 6.0;
                let w1 = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0;
                let w2 = -(t + 1.0) * t * (t - 2.0) / 2.0;
                let w3 = (t + 1.0) * t * (t - 1.0) / 6.0;
                (w0 * v[i - 1] + w1 * v[i] + w2 * v[i + 1] + w3 * v[i + 2]).exp()
            }
        }
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        self.lift(0, norm(z))
    }

    pub fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let l1 = self.lift(1, norm(z));
        z.iter().map(|v| -2.0 * PI * v * l1).collect()
    }

    /// Row-major `n×n` Hessian.
    pub fn hessian(&self, z: &[f64]) -> Vec<f64> {
        let n = z.len();
        let r = norm(z);
        let l1 = self.lift(1, r);
        let l2 = self.lift(2, r);
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let d = if i == j { -2.0 * PI * l1 } else { 0.0 };
                h[i * n + j] = d + 4.0 * PI * PI * z[i.min(j)] * z[i.max(j)] * l2;
            }
        }
        h
    }

    /// `φ_y(x) = y^{-n} φ(x/y)` from the table.
    pub fn scaled_value(&self, x: &[f64], y: f64) -> f64 {
        let z: Vec<f64> = x.iter().map(|v| v / y).collect();
        self.value(&z) * y.powi(-(self.spec.dim as i32))
    }

    /// Probability that `|X_1| > r`.
    pub fn tail_mass(&self, r: f64) -> f64 {
        let n = self.spec.dim;
        match &self.source {
            LiftSource::Gaussian => gamma_ur(n as f64 / 2.0, r * r / 4.0),
            LiftSource::Table { eta, .. } => eta.tail_mass(n, r),
        }
    }

    /// `∫_{|x| < R} φ_y(x) dx` from the table, by adaptive quadrature in `ln r`.
    pub fn mass_within(&self, radius: f64, y: f64) -> Result<f64> {
        let n = self.spec.dim as i32;
        let surface = 2.0 * PI.powf(n as f64 / 2.0) / ln_gamma(n as f64 / 2.0).exp();
        let eps = self.options.r_min * 1e-3;
        let lo = (eps * y).ln();
        let hi = radius.ln();
        let inner = self.lift(0, 0.0) * eps.powi(n) / n as f64;
        let f = |v: f64| {
            let r = v.exp();
            (r / y).powi(n) * self.lift(0, r / y)
        };
        let breaks: Vec<f64> = (lo.ceil() as i64..=hi.floor() as i64).map(|k| k as f64).collect();
        let est = integrate_with_breaks(f, lo, hi, &breaks, Tolerance::new(1e-14, 1e-12))?;
        Ok(surface * (est.value + inner))
    }

    /// `∫_{ℝⁿ} φ_y` assembled from the table interior and the exact tail.
    pub fn total_mass(&self, y: f64) -> Result<f64> {
        let r = self.options.r_max * y;
        Ok(self.mass_within(r, y)? + self.tail_mass(r / y))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayConstants {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

/// Weighted suprema `sup (1+r²)^{(n+k+α)/2} |∇^k φ|` over the table, `k = 0,1,2`.
/// The Hessian norm is the spectral norm, `max(|φ''|, |φ'/r|)`.
pub fn decay_constants(profile: &RadialProfile) -> Result<DecayConstants> {
    let n = profile.spec.dim as f64;
    let a = profile.spec.alpha;
    let m = profile.radii.len();
    let mut series = [vec![0.0; m], vec![0.0; m], vec![0.0; m]];
    for (idx, &r) in profile.radii.iter().enumerate() {
        let w = 1.0 + r * r;
        let h = profile.d2phi[idx];
        let h_norm = if profile.spec.dim == 1 {
            h[0].abs()
        } else {
            h[0].abs().max(h[1].abs())
        };
        series[0][idx] = w.powf((n + a) / 2.0) * profile.phi[idx].abs();
        series[1][idx] = w.powf((n + 1.0 + a) / 2.0) * profile.dphi[idx].abs();
        series[2][idx] = w.powf((n + 2.0 + a) / 2.0) * h_norm;
    }
    let mut out = [0.0; 3];
    // A supremum still climbing over the last decade of the table has not
    // been reached.
    let decade = (10f64.ln() / (profile.radii[m - 1].ln() - profile.radii[1].ln())
        * (m - 2) as f64) as usize;
    for (k, s) in series.iter().enumerate() {
        let sup = s.iter().cloned().fold(0.0, f64::max);
        if !sup.is_finite() {
            return Err(Error::Inconclusive(format!("decay constant c{k} is not finite")));
        }
        let last = s[m - 1];
        let earlier = s[m - 1 - decade.min(m - 2)];
        if last >= sup * (1.0 - 1e-12) && last > earlier * 1.01 {
            return Err(Error::Inconclusive(format!(
                "decay constant c{k} still growing at the end of the table (r = {})",
                profile.radii[m - 1]
            )));
        }
        out[k] = sup;
    }
    Ok(DecayConstants {
        c0: out[0],
        c1: out[1],
        c2: out[2],
    })
}
