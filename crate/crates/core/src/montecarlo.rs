//! Martingale transforms along Brownian paths.
//!
//! Background radiation (`α = 1`): a standard Brownian motion in `ℝⁿ × (0, Y]`
//! starts uniformly on the periodic box at height `Y`, is reflected at `Y` and
//! stopped when it reaches `y = 0`. Its Green's function is `2y/|box|`, so the
//! transform `∫ A∇u_f · dW` satisfies
//! `|box|·E[(A∗f) g(B_τ)] = ∫_0^Y ∫ 2y A∇u_f · ∇v_g`, where `u_f` is the
//! Poisson extension and `v_g` the harmonic function of the strip with
//! `v_g = g` at `y = 0` and `∂_y v_g = 0` at `y = Y`.
//!
//! Space-time (`α = 2`): `B` has generator `Δ` and runs for time `T` while the
//! heat extension is evaluated at the remaining time.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::StableSpec;
use crate::error::{invalid, Error, Result};
use crate::grid::{fft_nd, Geometry, SampledField};
use crate::multiplier::{compute_multiplier, MultiplierTable};
use crate::quad::{integrate_with_breaks, Tolerance};
use crate::symbol::MatrixSymbol;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    BackgroundRadiation,
    Spacetime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    pub mode: Mode,
    /// Largest time step.
    pub step: f64,
    /// Start height `Y` (background radiation) or horizon `T` (space-time).
    pub height: f64,
    /// Half the side of the periodic box the start points are drawn from.
    pub half_width: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Steps near the boundary are capped at `relative_step·max(y, 4h)²`.
    pub relative_step: f64,
    pub max_steps: usize,
}

impl PathConfig {
    pub fn background_radiation(height: f64, half_width: f64, n_paths: usize, seed: u64) -> Self {
        PathConfig {
            mode: Mode::BackgroundRadiation,
            step: 0.01 * height * height,
            height,
            half_width,
            n_paths,
            seed,
            relative_step: 0.005,
            max_steps: 10_000_000,
        }
    }

    pub fn spacetime(horizon: f64, half_width: f64, n_paths: usize, seed: u64) -> Self {
        PathConfig {
            mode: Mode::Spacetime,
            step: 1e-3 * horizon,
            height: horizon,
            half_width,
            n_paths,
            seed,
            relative_step: 0.005,
            max_steps: 10_000_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.step) || !positive(self.height) || !positive(self.half_width) || !positive(self.relative_step) {
            return Err(invalid("step, height, half width and relative step must be positive"));
        }
        if self.n_paths == 0 || self.max_steps == 0 {
            return Err(invalid("n_paths and max_steps must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathResult {
    pub endpoint: Vec<f64>,
    pub transform_value: f64,
    pub terminal_f: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ensemble {
    pub config: PathConfig,
    pub geometry: Geometry,
    pub results: Vec<PathResult>,
    /// Paths dropped for exceeding `max_steps`.
    pub excluded: usize,
    pub total_steps: u64,
}

impl Ensemble {
    pub fn volume(&self) -> f64 {
        self.geometry.length.powi(self.geometry.dim as i32)
    }

    pub fn transform_mean_and_se(&self) -> (f64, f64) {
        mean_se(self.results.iter().map(|r| r.transform_value))
    }
}

fn mean_se(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut n, mut mean, mut m2) = (0.0, 0.0, 0.0);
    for v in values {
        n += 1.0;
        let d = v - mean;
        mean += d / n;
        m2 += d * (v - mean);
    }
    if n < 2.0 {
        return (mean, f64::NAN);
    }
    (mean, (m2 / (n - 1.0) / n).sqrt())
}

fn lagrange4(t: f64) -> [f64; 4] {
    [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ]
}

/// Periodic cubic stencil: four indices and weights per axis.
fn stencil(g: &Geometry, x: &[f64]) -> [([usize; 4], [f64; 4]); 2] {
    let n = g.points as i64;
    let h = g.spacing();
    let mut out = [([0; 4], [0.0; 4]); 2];
    for a in 0..g.dim {
        let p = (x[a] + 0.5 * g.length) / h;
        let i0 = p.floor();
        let w = lagrange4(p - i0);
        let i0 = i0 as i64;
        let idx = [-1, 0, 1, 2].map(|d| (i0 + d).rem_euclid(n) as usize);
        out[a] = (idx, w);
    }
    out
}

fn interpolate(g: &Geometry, data: &[f64], st: &[([usize; 4], [f64; 4]); 2]) -> f64 {
    let (ix, wx) = st[0];
    if g.dim == 1 {
        return (0..4).map(|k| wx[k] * data[ix[k]]).sum();
    }
    let (iy, wy) = st[1];
    let n = g.points;
    let mut s = 0.0;
    for a in 0..4 {
        let row = ix[a] * n;
        let mut r = 0.0;
        for b in 0..4 {
            r += wy[b] * data[row + iy[b]];
        }
        s += wx[a] * r;
    }
    s
}

/// Real samples interpolated periodically.
#[derive(Debug, Clone)]
pub struct PeriodicInterpolant {
    geometry: Geometry,
    data: Vec<f64>,
}

impl PeriodicInterpolant {
    pub fn new(f: &SampledField) -> Result<Self> {
        if f.max_imag() > 1e-12 * f.sup().max(1e-300) {
            return Err(invalid(format!("field '{}' must be real", f.name)));
        }
        Ok(PeriodicInterpolant { geometry: f.geometry, data: f.real_parts() })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        interpolate(&self.geometry, &self.data, &stencil(&self.geometry, x))
    }
}

const LADDER_BOTTOM: f64 = 1e-3;
const LADDER_RATIO: f64 = 1.05;

/// `u_f(x, y) = (φ_y ∗ f)(x)` and its gradient on a geometric ladder of
/// heights, cubic in `x` and in `ln y` between rungs.
#[derive(Debug, Clone)]
pub struct Extension {
    geometry: Geometry,
    rungs: usize,
    /// Layout `[rung][component][point]`; components `u, ∂_1u, …, ∂_nu, ∂_yu`.
    data: Vec<f64>,
}

impl Extension {
    pub fn build(f: &SampledField, spec: &StableSpec, y_top: f64) -> Result<Self> {
        let g = f.geometry;
        if spec.dim != g.dim {
            return Err(Error::Geometry("spec and field dimensions differ".into()));
        }
        if !(y_top.is_finite() && y_top > 0.0) {
            return Err(invalid("extension height must be positive"));
        }
        if f.max_imag() > 1e-12 * f.sup().max(1e-300) {
            return Err(invalid(format!("field '{}' must be real", f.name)));
        }
        let top = y_top.max(LADDER_BOTTOM) * 1.1;
        let rungs = ((top / LADDER_BOTTOM).ln() / LADDER_RATIO.ln()).ceil() as usize + 4;
        let comps = g.dim + 2;
        let size = rungs * comps * g.len();
        if size > 200_000_000 {
            return Err(invalid(format!("extension would hold {size} samples; use a coarser grid")));
        }
        let mut spectrum: Vec<Complex64> = f.values.iter().map(|v| Complex64::new(v.re, 0.0)).collect();
        fft_nd(&g, &mut spectrum, false);
        let freqs: Vec<Vec<f64>> = (0..g.len()).map(|k| g.frequency(k)).collect();
        let levels: Vec<Vec<f64>> = (0..rungs)
            .into_par_iter()
            .map(|r| {
                let y = LADDER_BOTTOM * LADDER_RATIO.powi(r as i32);
                let mut block = Vec::with_capacity(comps * g.len());
                for c in 0..comps {
                    let mut d: Vec<Complex64> = spectrum
                        .iter()
                        .zip(&freqs)
                        .map(|(s, xi)| {
                            let norm = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
                            let t = 2.0 * PI * y * norm;
                            let decay = (-spec.rho(t)).exp();
                            let factor = match c {
                                0 => Complex64::new(decay, 0.0),
                                c if c <= g.dim => Complex64::new(0.0, 2.0 * PI * xi[c - 1] * decay),
                                _ if norm == 0.0 => Complex64::new(0.0, 0.0),
                                _ => Complex64::new(-2.0 * PI * norm * spec.rho_prime(t) * decay, 0.0),
                            };
                            s * factor
                        })
                        .collect();
                    fft_nd(&g, &mut d, true);
                    block.extend(d.iter().map(|v| v.re));
                }
                block
            })
            .collect();
        Ok(Extension { geometry: g, rungs, data: levels.concat() })
    }

    pub fn heights(&self) -> Vec<f64> {
        (0..self.rungs).map(|r| LADDER_BOTTOM * LADDER_RATIO.powi(r as i32)).collect()
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    /// `[u, ∂_1u, …, ∂_nu, ∂_yu]` at `(x, y)`; heights outside the ladder are
    /// clamped to it.
    pub fn eval(&self, x: &[f64], y: f64) -> [f64; 4] {
        let g = &self.geometry;
        let comps = g.dim + 2;
        let top = LADDER_BOTTOM * LADDER_RATIO.powi(self.rungs as i32 - 1);
        let y = y.clamp(LADDER_BOTTOM, top);
        let q = (y / LADDER_BOTTOM).ln() / LADDER_RATIO.ln();
        let j = (q.floor() as usize).clamp(1, self.rungs - 3);
        let wy = lagrange4(q - j as f64);
        let st = stencil(g, x);
        let mut out = [0.0; 4];
        for (k, w) in wy.iter().enumerate() {
            let base = (j - 1 + k) * comps * g.len();
            for (c, o) in out.iter_mut().enumerate().take(comps) {
                let slice = &self.data[base + c * g.len()..base + (c + 1) * g.len()];
                *o += w * interpolate(g, slice, &st);
            }
        }
        out
    }

    /// One component on the grid at a ladder rung.
    pub fn rung_field(&self, rung: usize, component: usize) -> Result<SampledField> {
        let g = self.geometry;
        if rung >= self.rungs || component >= g.dim + 2 {
            return Err(invalid("rung or component out of range"));
        }
        let base = (rung * (g.dim + 2) + component) * g.len();
        let values = self.data[base..base + g.len()].iter().map(|&v| Complex64::new(v, 0.0)).collect();
        SampledField::new(g, values, format!("rung{rung}_c{component}"))
    }
}

/// Extension up to the default height `16`.
pub fn extend(f: &SampledField, spec: &StableSpec) -> Result<Extension> {
    check_alpha(spec)?;
    Extension::build(f, spec, 16.0)
}

fn check_alpha(spec: &StableSpec) -> Result<()> {
    if !spec.is_self_similar() || !(spec.alpha == 1.0 || spec.alpha == 2.0) {
        return Err(Error::Unsupported("path constructions exist for pure α = 1 and α = 2 only".into()));
    }
    Ok(())
}

fn check_setup(config: &PathConfig, spec: &StableSpec, sym: &MatrixSymbol, f: &SampledField) -> Result<()> {
    config.validate()?;
    check_alpha(spec)?;
    let n = f.geometry.dim;
    if spec.dim != n || sym.dim() != n {
        return Err(Error::Geometry("spec, symbol and field must share the dimension".into()));
    }
    if (config.half_width - 0.5 * f.geometry.length).abs() > 1e-9 * f.geometry.length {
        return Err(Error::Geometry(format!(
            "half width {} does not match the field box {}",
            config.half_width,
            0.5 * f.geometry.length
        )));
    }
    match config.mode {
        Mode::BackgroundRadiation if spec.alpha != 1.0 => {
            Err(Error::Unsupported("background radiation pairs with the Poisson extension (α = 1)".into()))
        }
        Mode::Spacetime if spec.alpha != 2.0 => {
            Err(Error::Unsupported("space-time paths pair with the heat extension (α = 2)".into()))
        }
        Mode::Spacetime if !sym.all_spatial() => {
            Err(Error::Unsupported("space-time transforms use the spatial block of A only".into()))
        }
        _ => Ok(()),
    }
}

pub fn run_paths(config: &PathConfig, spec: &StableSpec, sym: &MatrixSymbol, f: &SampledField) -> Result<Ensemble> {
    check_setup(config, spec, sym, f)?;
    let g = f.geometry;
    let top = match config.mode {
        Mode::BackgroundRadiation => config.height,
        Mode::Spacetime => config.height.sqrt(),
    };
    let ext = Extension::build(f, spec, top)?;
    let terminal = PeriodicInterpolant::new(f)?;
    let constant = if sym.is_constant() { Some(sym.eval(&vec![0.0; g.dim], 1.0)) } else { None };
    let zero = sym.is_zero();
    let outcomes: Vec<Option<(PathResult, u64)>> = (0..config.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i as u64);
            let walker = Walker { config, sym, ext: &ext, constant: constant.as_deref(), zero, geometry: g };
            let (endpoint, value, steps) = match config.mode {
                Mode::BackgroundRadiation => walker.radiation(&mut rng)?,
                Mode::Spacetime => walker.spacetime(&mut rng)?,
            };
            let terminal_f = terminal.eval(&endpoint);
            Some((PathResult { endpoint, transform_value: value, terminal_f }, steps))
        })
        .collect();
    let mut results = Vec::with_capacity(config.n_paths);
    let mut excluded = 0;
    let mut total_steps = 0;
    for o in outcomes {
        match o {
            Some((r, s)) => {
                total_steps += s;
                results.push(r);
            }
            None => excluded += 1,
        }
    }
    if excluded * 1000 > config.n_paths {
        return Err(Error::Inconclusive(format!(
            "{excluded} of {} paths exceeded {} steps",
            config.n_paths, config.max_steps
        )));
    }
    Ok(Ensemble { config: config.clone(), geometry: g, results, excluded, total_steps })
}

struct Walker<'a> {
    config: &'a PathConfig,
    sym: &'a MatrixSymbol,
    ext: &'a Extension,
    constant: Option<&'a [f64]>,
    zero: bool,
    geometry: Geometry,
}

impl Walker<'_> {
    fn wrap(&self, x: f64) -> f64 {
        let l = self.geometry.length;
        (x + 0.5 * l).rem_euclid(l) - 0.5 * l
    }

    /// `(A∇u)·dW` with `grad = [∂_1u, …, ∂_nu, ∂_yu]` (length `n+1`).
    fn pairing(&self, x: &[f64], y: f64, grad: &[f64], dw: &[f64], size: usize) -> f64 {
        if self.zero {
            return 0.0;
        }
        let m = self.sym.dim() + 1;
        let mut s = 0.0;
        match self.constant {
            Some(a) => {
                for i in 0..size {
                    let mut row = 0.0;
                    for j in 0..size {
                        row += a[i * m + j] * grad[j];
                    }
                    s += row * dw[i];
                }
            }
            None => {
                for i in 0..size {
                    let mut row = 0.0;
                    for j in 0..size {
                        let e = self.sym.entry(i, j);
                        if !e.is_zero() {
                            row += e.eval(x, y) * grad[j];
                        }
                    }
                    s += row * dw[i];
                }
            }
        }
        s
    }

    fn radiation(&self, rng: &mut ChaCha8Rng) -> Option<(Vec<f64>, f64, u64)> {
        let n = self.geometry.dim;
        let cfg = self.config;
        let l = self.geometry.length;
        let floor = 4.0 * self.geometry.spacing();
        let mut x = [0.0; 2];
        for c in x.iter_mut().take(n) {
            *c = -0.5 * l + l * rng.random::<f64>();
        }
        let mut y = cfg.height;
        let mut value = 0.0;
        let mut dw = [0.0; 3];
        for step in 0..cfg.max_steps {
            let dt = cfg.step.min(cfg.relative_step * y.max(floor).powi(2));
            let sd = dt.sqrt();
            for w in dw.iter_mut().take(n + 1) {
                *w = sd * rng.sample::<f64, _>(StandardNormal);
            }
            let e = self.ext.eval(&x[..n], y);
            value += self.pairing(&x[..n], y, &e[1..n + 2], &dw, n + 1);
            let y_new = y + dw[n];
            if y_new <= 0.0 {
                let theta = y / (y - y_new);
                let end: Vec<f64> = (0..n).map(|a| self.wrap(x[a] + theta * dw[a])).collect();
                return Some((end, value, step as u64 + 1));
            }
            for a in 0..n {
                x[a] = self.wrap(x[a] + dw[a]);
            }
            y = if y_new > cfg.height { 2.0 * cfg.height - y_new } else { y_new };
        }
        None
    }

    fn spacetime(&self, rng: &mut ChaCha8Rng) -> Option<(Vec<f64>, f64, u64)> {
        let n = self.geometry.dim;
        let cfg = self.config;
        let l = self.geometry.length;
        let mut x = [0.0; 2];
        for c in x.iter_mut().take(n) {
            *c = -0.5 * l + l * rng.random::<f64>();
        }
        let mut t = 0.0;
        let mut value = 0.0;
        let mut db = [0.0; 3];
        let mut steps = 0u64;
        while t < cfg.height {
            if steps as usize >= cfg.max_steps {
                return None;
            }
            let dt = cfg.step.min(cfg.height - t);
            // Generator Δ: variance 2dt per coordinate.
            let sd = (2.0 * dt).sqrt();
            for b in db.iter_mut().take(n) {
                *b = sd * rng.sample::<f64, _>(StandardNormal);
            }
            let y = (cfg.height - t).sqrt();
            let e = self.ext.eval(&x[..n], y);
            value += self.pairing(&x[..n], y, &e[1..n + 1], &db, n);
            for a in 0..n {
                x[a] = self.wrap(x[a] + db[a]);
            }
            t += dt;
            steps += 1;
        }
        Some((x[..n].to_vec(), value, steps))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NormCheck {
    pub p: f64,
    pub monte_carlo: f64,
    pub standard_error: f64,
    pub grid: f64,
    pub pass: bool,
}

/// `|box|·E|f(B_τ)|^p` against the grid integral of `|f|^p`.
pub fn check_norm_preservation(ensemble: &Ensemble, f: &SampledField, p: f64) -> Result<NormCheck> {
    if !(p >= 1.0) {
        return Err(invalid("p must be at least 1"));
    }
    ensemble.geometry.ensure_same(&f.geometry)?;
    let interp = PeriodicInterpolant::new(f)?;
    let vol = ensemble.volume();
    let (mc, se) = mean_se(ensemble.results.iter().map(|r| vol * interp.eval(&r.endpoint).abs().powf(p)));
    let grid = f.lp_norm(p).powf(p);
    Ok(NormCheck { p, monte_carlo: mc, standard_error: se, grid, pass: (mc - grid).abs() <= 3.0 * se })
}

/// Pairing multiplier of the path construction at `ξ`: the integral of
/// `A∇u_f · ∇v_g` (background radiation) or of `2A∇_xu_f · ∇_xu_g`
/// (space-time) per unit `f̂ conj(ĝ)`.
pub fn path_multiplier(config: &PathConfig, spec: &StableSpec, sym: &MatrixSymbol, xi: &[f64]) -> Result<Complex64> {
    check_alpha(spec)?;
    let n = xi.len();
    let norm = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    if !sym.is_x_independent() {
        return Err(Error::Unsupported("duality quadrature needs an x-independent symbol".into()));
    }
    let tol = Tolerance::new(1e-15, 1e-11);
    let zero = vec![0.0; n];
    let mut kinks = sym.kinks();
    match config.mode {
        Mode::BackgroundRadiation => {
            let big_y = config.height;
            let kappa = 2.0 * PI * norm;
            let mut breaks: Vec<f64> = [0.1, 1.0, 10.0].iter().map(|s| s / kappa).collect();
            breaks.append(&mut kinks);
            let damp = 1.0 + (-2.0 * kappa * big_y).exp();
            let parts = |y: f64| -> (f64, f64, f64) {
                let e = (-kappa * y).exp();
                let mirror = (-kappa * (2.0 * big_y - y)).exp();
                (e, (e + mirror) / damp, (e - mirror) / damp)
            };
            let mut re = |y: f64| {
                let (e, c, s) = parts(y);
                let a = sym.eval(&zero, y);
                let mut v = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        v += a[i * (n + 1) + j] * 4.0 * PI * PI * xi[i] * xi[j] * e * c;
                    }
                }
                v += a[n * (n + 1) + n] * kappa * kappa * e * s;
                2.0 * y * v
            };
            let re_val = integrate_with_breaks(&mut re, 0.0, big_y, &breaks, tol)?.value;
            let mut im = |y: f64| {
                let (e, c, s) = parts(y);
                let a = sym.eval(&zero, y);
                let mut v = 0.0;
                for j in 0..n {
                    v -= a[n * (n + 1) + j] * 2.0 * PI * xi[j] * kappa * e * s;
                    v += a[j * (n + 1) + n] * 2.0 * PI * xi[j] * kappa * e * c;
                }
                2.0 * y * v
            };
            let im_val = integrate_with_breaks(&mut im, 0.0, big_y, &breaks, tol)?.value;
            Ok(Complex64::new(re_val, im_val))
        }
        Mode::Spacetime => {
            let rate = 8.0 * PI * PI * norm * norm;
            let quad_form = |a: &[f64]| -> f64 {
                let mut v = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        v += a[i * (n + 1) + j] * xi[i] * xi[j];
                    }
                }
                v / (norm * norm)
            };
            if sym.is_constant() {
                return Ok(Complex64::new(quad_form(&sym.eval(&zero, 1.0)) * -(-rate * config.height).exp_m1(), 0.0));
            }
            let breaks: Vec<f64> = kinks.iter().map(|k| k * k).chain([0.1 / rate, 1.0 / rate, 10.0 / rate]).collect();
            let f = |s: f64| quad_form(&sym.eval(&zero, s.sqrt())) * rate * (-rate * s).exp();
            Ok(Complex64::new(integrate_with_breaks(f, 0.0, config.height, &breaks, tol)?.value, 0.0))
        }
    }
}

/// `|box|·Σ_k c_k conj(d_k) M(ξ_k)` for torus coefficients `c, d` of `f, g`.
fn spectral_pairing(
    f: &SampledField,
    g: &SampledField,
    multiplier: impl Fn(&[f64]) -> Result<Complex64>,
) -> Result<f64> {
    f.geometry.ensure_same(&g.geometry)?;
    let geo = f.geometry;
    let mut cf = f.values.clone();
    let mut cg = g.values.clone();
    fft_nd(&geo, &mut cf, false);
    fft_nd(&geo, &mut cg, false);
    let scale = 1.0 / geo.len() as f64;
    let weights: Vec<Complex64> = cf.iter().zip(&cg).map(|(a, b)| a * b.conj() * scale * scale).collect();
    let biggest = weights.iter().fold(0.0f64, |m, w| m.max(w.norm()));
    let mut total = Complex64::new(0.0, 0.0);
    for (k, w) in weights.iter().enumerate() {
        if k == 0 || w.norm() <= 1e-17 * biggest {
            continue;
        }
        total += w * multiplier(&geo.frequency(k))?;
    }
    Ok(total.re * geo.length.powi(geo.dim as i32))
}

#[derive(Debug, Clone, Serialize)]
pub struct DualityCheck {
    pub monte_carlo: f64,
    pub standard_error: f64,
    /// Exact target for the simulated construction.
    pub quadrature: f64,
    /// `∫ (T_A f) g` with the full multiplier, for reference.
    pub full_range: f64,
    pub z_score: f64,
    pub pass: bool,
}

pub fn check_duality(
    ensemble: &Ensemble,
    f: &SampledField,
    g: &SampledField,
    spec: &StableSpec,
    sym: &MatrixSymbol,
) -> Result<DualityCheck> {
    ensemble.geometry.ensure_same(&f.geometry)?;
    let gi = PeriodicInterpolant::new(g)?;
    let vol = ensemble.volume();
    let (mc, se) = mean_se(ensemble.results.iter().map(|r| vol * r.transform_value * gi.eval(&r.endpoint)));
    let quadrature = spectral_pairing(f, g, |xi| path_multiplier(&ensemble.config, spec, sym, xi))?;
    let full_range = if sym.is_zero() {
        0.0
    } else {
        spectral_pairing(f, g, |xi| compute_multiplier(spec, sym, xi))?
    };
    let gap = mc - quadrature;
    let z_score = if se > 0.0 { gap / se } else if gap == 0.0 { 0.0 } else { f64::INFINITY };
    Ok(DualityCheck { monte_carlo: mc, standard_error: se, quadrature, full_range, z_score, pass: z_score.abs() <= 3.0 })
}

/// `E[A∗f | B_τ = x]` on the grid, from the path multiplier.
pub fn conditional_transform(
    config: &PathConfig,
    spec: &StableSpec,
    sym: &MatrixSymbol,
    f: &SampledField,
) -> Result<SampledField> {
    let table = MultiplierTable::from_fn(f.geometry, *spec, sym.id(), |xi| path_multiplier(config, spec, sym, xi))?;
    crate::operator::apply_multiplier(f, &table)
}

#[derive(Debug, Clone, Serialize)]
pub struct Projection {
    pub dim: usize,
    pub length: f64,
    pub bins: usize,
    pub mean: Vec<f64>,
    pub standard_error: Vec<f64>,
    pub counts: Vec<usize>,
    pub empty: Vec<usize>,
}

impl Projection {
    pub fn bin_of(&self, x: &[f64]) -> usize {
        let w = self.length / self.bins as f64;
        let idx = |c: f64| (((c + 0.5 * self.length) / w).floor() as usize).min(self.bins - 1);
        if self.dim == 1 {
            idx(x[0])
        } else {
            idx(x[0]) * self.bins + idx(x[1])
        }
    }

    /// Bin averages of a grid field, for comparison with the projection.
    pub fn average(&self, field: &SampledField) -> Vec<f64> {
        let mut sum = vec![0.0; self.mean.len()];
        let mut cnt = vec![0usize; self.mean.len()];
        for (k, v) in field.values.iter().enumerate() {
            let b = self.bin_of(&field.geometry.point(k));
            sum[b] += v.re;
            cnt[b] += 1;
        }
        sum.iter().zip(&cnt).map(|(s, &c)| if c == 0 { f64::NAN } else { s / c as f64 }).collect()
    }

    pub fn to_field(&self, name: &str) -> Result<SampledField> {
        let geo = Geometry::new(self.dim, self.length, self.bins)?;
        let values = self.mean.iter().map(|&m| Complex64::new(if m.is_nan() { 0.0 } else { m }, 0.0)).collect();
        SampledField::new(geo, values, name)
    }
}

pub fn project(ensemble: &Ensemble, bins: usize) -> Result<Projection> {
    if ensemble.results.is_empty() {
        return Err(Error::Precondition("empty ensemble".into()));
    }
    if bins == 0 {
        return Err(invalid("need at least one bin"));
    }
    let dim = ensemble.geometry.dim;
    let total = bins.pow(dim as u32);
    let mut proj = Projection {
        dim,
        length: ensemble.geometry.length,
        bins,
        mean: vec![0.0; total],
        standard_error: vec![f64::NAN; total],
        counts: vec![0; total],
        empty: Vec::new(),
    };
    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); total];
    for r in &ensemble.results {
        buckets[proj.bin_of(&r.endpoint)].push(r.transform_value);
    }
    for (b, values) in buckets.into_iter().enumerate() {
        proj.counts[b] = values.len();
        if values.is_empty() {
            proj.mean[b] = f64::NAN;
            proj.empty.push(b);
            continue;
        }
        let (m, se) = mean_se(values.into_iter());
        proj.mean[b] = m;
        proj.standard_error[b] = se;
    }
    Ok(proj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::hilbert_table;
    use crate::multiplier::SIGMA;

    fn bump(g: Geometry, c: f64, s: f64) -> SampledField {
        SampledField::from_fn(g, "bump", |x| (-(x[0] - c) * (x[0] - c) / (2.0 * s * s)).exp()).unwrap()
    }

    fn geo() -> Geometry {
        Geometry::new(1, 64.0, 1024).unwrap()
    }

    #[test]
    fn extension_of_a_harmonic() {
        let g = geo();
        let k = 3.0;
        let f = SampledField::from_fn(g, "cos", |x| (2.0 * PI * k * x[0] / 64.0).cos()).unwrap();
        let ext = Extension::build(&f, &StableSpec::pure(1.0, 1).unwrap(), 4.0).unwrap();
        for &(x, y) in &[(0.3, 0.5), (-7.1, 2.9), (12.0, 0.01)] {
            let e = ext.eval(&[x], y);
            let decay = (-2.0 * PI * k * y / 64.0).exp();
            assert!((e[0] - decay * (2.0 * PI * k * x / 64.0).cos()).abs() < 1e-6);
            assert!((e[2] + 2.0 * PI * k / 64.0 * decay * (2.0 * PI * k * x / 64.0).cos()).abs() < 1e-6);
        }
    }

    #[test]
    fn extension_bottom_rung_and_vertical_mean() {
        let g = geo();
        let f = bump(g, 0.0, 1.0);
        let ext = Extension::build(&f, &StableSpec::pure(1.0, 1).unwrap(), 8.0).unwrap();
        let bottom = ext.rung_field(0, 0).unwrap();
        assert!(bottom.relative_l2_distance(&f).unwrap() < 2e-3);
        for r in [0, 40, 120] {
            assert!(ext.rung_field(r, 2).unwrap().mean().norm() < 1e-14);
        }
    }

    #[test]
    fn zero_symbol_and_zero_field_give_zero_transforms() {
        let g = geo();
        let s = StableSpec::pure(1.0, 1).unwrap();
        let cfg = PathConfig { step: 0.2, ..PathConfig::background_radiation(2.0, 32.0, 50, 9) };
        let f = bump(g, 0.0, 1.0);
        let a = run_paths(&cfg, &s, &MatrixSymbol::zero(1).unwrap(), &f).unwrap();
        assert!(a.results.iter().all(|r| r.transform_value == 0.0));
        let zero = SampledField::zeros(g, "0").unwrap();
        let b = run_paths(&cfg, &s, &MatrixSymbol::identity(1).unwrap(), &zero).unwrap();
        assert!(b.results.iter().all(|r| r.transform_value == 0.0));
    }

    #[test]
    fn reproducible_given_seed() {
        let g = geo();
        let s = StableSpec::pure(1.0, 1).unwrap();
        let cfg = PathConfig { step: 0.2, ..PathConfig::background_radiation(2.0, 32.0, 40, 5) };
        let f = bump(g, 0.0, 1.0);
        let a = MatrixSymbol::riesz(1, 1).unwrap();
        let e1 = run_paths(&cfg, &s, &a, &f).unwrap();
        let e2 = run_paths(&cfg, &s, &a, &f).unwrap();
        assert_eq!(e1.results, e2.results);
        let other = run_paths(&PathConfig { seed: 6, ..cfg }, &s, &a, &f).unwrap();
        assert_ne!(e1.results, other.results);
    }

    #[test]
    fn path_multiplier_approaches_full_multiplier() {
        let s = StableSpec::pure(1.0, 1).unwrap();
        let cfg = PathConfig::background_radiation(1e3, 32.0, 1, 0);
        for (sym, want) in [
            (MatrixSymbol::identity(1).unwrap(), Complex64::new(1.0, 0.0)),
            (MatrixSymbol::riesz(1, 1).unwrap(), Complex64::new(0.0, SIGMA)),
        ] {
            let m = path_multiplier(&cfg, &s, &sym, &[0.3]).unwrap();
            assert!((m - want).norm() < 1e-9, "{m}");
        }
        let st = PathConfig::spacetime(1e3, 32.0, 1, 0);
        let m = path_multiplier(&st, &StableSpec::pure(2.0, 2).unwrap(), &MatrixSymbol::riesz2(1, 2, 2).unwrap(), &[0.3, 0.4])
            .unwrap();
        assert!((m.re + 0.3 * 0.4 / 0.25).abs() < 1e-12);
    }

    #[test]
    fn conditional_transform_tends_to_hilbert() {
        let g = geo();
        let s = StableSpec::pure(1.0, 1).unwrap();
        let f = bump(g, 0.0, 1.0);
        let a = MatrixSymbol::riesz(1, 1).unwrap();
        let h = crate::operator::apply_multiplier(&f, &hilbert_table(&s, &g).unwrap()).unwrap();
        let near = conditional_transform(&PathConfig::background_radiation(8.0, 32.0, 1, 0), &s, &a, &f).unwrap();
        let far = conditional_transform(&PathConfig::background_radiation(64.0, 32.0, 1, 0), &s, &a, &f).unwrap();
        let d_near = near.relative_l2_distance(&h).unwrap();
        let d_far = far.relative_l2_distance(&h).unwrap();
        assert!(d_far < d_near && d_far < 0.05, "{d_near} {d_far}");
    }

    #[test]
    fn spacetime_rejects_vertical_entries_and_wrong_alpha() {
        let g = geo();
        let f = bump(g, 0.0, 1.0);
        let cfg = PathConfig::spacetime(1.0, 32.0, 10, 1);
        let s2 = StableSpec::pure(2.0, 1).unwrap();
        assert!(run_paths(&cfg, &s2, &MatrixSymbol::riesz(1, 1).unwrap(), &f).is_err());
        assert!(run_paths(&cfg, &StableSpec::pure(1.0, 1).unwrap(), &MatrixSymbol::spatial_identity(1).unwrap(), &f).is_err());
        assert!(run_paths(&cfg, &s2, &MatrixSymbol::spatial_identity(1).unwrap(), &f).is_ok());
    }

    #[test]
    fn norm_preservation_small_ensemble() {
        let g = geo();
        let s = StableSpec::pure(1.0, 1).unwrap();
        let cfg = PathConfig { step: 0.5, ..PathConfig::background_radiation(1.0, 32.0, 4000, 2) };
        let f = bump(g, 0.0, 4.0);
        let e = run_paths(&cfg, &s, &MatrixSymbol::zero(1).unwrap(), &f).unwrap();
        let c = check_norm_preservation(&e, &f, 1.0).unwrap();
        assert!(c.pass, "{c:?}");
    }

    #[test]
    fn projection_bins_and_empty_flags() {
        let g = Geometry::new(1, 8.0, 64).unwrap();
        let cfg = PathConfig::background_radiation(1.0, 4.0, 3, 0);
        let e = Ensemble {
            config: cfg,
            geometry: g,
            results: vec![
                PathResult { endpoint: vec![-3.9], transform_value: 1.0, terminal_f: 0.0 },
                PathResult { endpoint: vec![-3.5], transform_value: 3.0, terminal_f: 0.0 },
                PathResult { endpoint: vec![3.9], transform_value: -1.0, terminal_f: 0.0 },
            ],
            excluded: 0,
            total_steps: 0,
        };
        let p = project(&e, 4).unwrap();
        assert_eq!(p.counts, vec![2, 0, 0, 1]);
        assert_eq!(p.mean[0], 2.0);
        assert_eq!(p.empty, vec![1, 2]);
    }
}
