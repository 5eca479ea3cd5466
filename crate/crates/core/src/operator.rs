//! Applying `T_A` to sampled fields.
//!
//! Two routes: the multiplier route multiplies the discrete spectrum by a
//! [`MultiplierTable`]; the principal-value route sums the kernel over
//! punctured lattices of spacing `ε = mh`, extrapolates `ε → 0` and adds the
//! point mass of the symbol's spherical mean. Both act on the periodic box and
//! remove the mean of the output.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::density::StableSpec;
use crate::error::{Error, Result};
use crate::grid::{convolve_spectrum, fft_nd};
pub use crate::grid::{Geometry, SampledField};
use crate::kernel::kernel_full;
use crate::quad::{integrate, Tolerance};
use crate::multiplier::{beurling_multiplier, lp_integrals, riesz_multiplier, tabulate, MultiplierTable};
use crate::symbol::{Entry, MatrixSymbol};

pub fn apply_multiplier(field: &SampledField, table: &MultiplierTable) -> Result<SampledField> {
    field.geometry.ensure_same(&table.geometry)?;
    let values = convolve_spectrum(field, |k| table.values[k]);
    SampledField::new(field.geometry, values, format!("{}[{}]", table.symbol_id, field.name))
}

/// `T_A f` by the multiplier route, checking that `f` decays away from the
/// boundary so that the periodic box stands in for `ℝⁿ`.
pub fn apply_symbol(field: &SampledField, spec: &StableSpec, sym: &MatrixSymbol) -> Result<SampledField> {
    field.check_decay()?;
    let table = tabulate(spec, sym, &field.geometry)?;
    apply_multiplier(field, &table)
}

/// Closed-form table for the Riesz transform `R_j` (one-based `j`).
pub fn riesz_table(spec: &StableSpec, j: usize, geometry: &Geometry) -> Result<MultiplierTable> {
    MultiplierTable::from_fn(*geometry, *spec, format!("R{j}"), |xi| riesz_multiplier(j, xi))
}

/// Hilbert transform `H` with multiplier `-i sgn ξ`.
pub fn hilbert_table(spec: &StableSpec, geometry: &Geometry) -> Result<MultiplierTable> {
    if geometry.dim != 1 {
        return Err(Error::Geometry("Hilbert transform needs n = 1".into()));
    }
    MultiplierTable::from_fn(*geometry, *spec, "H", |xi| Ok(-riesz_multiplier(1, xi)?))
}

pub fn beurling_table(spec: &StableSpec, geometry: &Geometry) -> Result<MultiplierTable> {
    MultiplierTable::from_fn(*geometry, *spec, "B", beurling_multiplier)
}

/// Beurling–Ahlfors transform as `R₂² − R₁² + 2iR₁R₂`.
pub fn beurling_apply(field: &SampledField) -> Result<SampledField> {
    let g = field.geometry;
    if g.dim != 2 {
        return Err(Error::Geometry("Beurling–Ahlfors transform needs n = 2".into()));
    }
    // The Riesz tables do not depend on the stable law; any spec serves as a tag.
    let spec = StableSpec::pure(1.0, 2)?;
    let r1 = riesz_table(&spec, 1, &g)?;
    let r2 = riesz_table(&spec, 2, &g)?;
    let f1 = apply_multiplier(field, &r1)?;
    let f2 = apply_multiplier(field, &r2)?;
    let f11 = apply_multiplier(&f1, &r1)?;
    let f22 = apply_multiplier(&f2, &r2)?;
    let f12 = apply_multiplier(&f2, &r1)?;
    let i2 = Complex64::new(0.0, 2.0);
    let values = (0..g.len()).map(|k| f22.values[k] - f11.values[k] + i2 * f12.values[k]).collect();
    SampledField::new(g, values, format!("B[{}]", field.name))
}

/// Lattice spacings `ε = m·h` used by the principal-value route.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsilonSchedule {
    pub multiples: Vec<usize>,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        EpsilonSchedule { multiples: vec![4, 2, 1] }
    }
}

/// `|u|^n K(u) = Ω(û)` for a constant symbol, written as
/// `c₁û₁ + s₁û₂ + c₂(û₁² − û₂²) + 2s₂û₁û₂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AngularProfile {
    pub dim: usize,
    pub coeffs: [f64; 4],
    /// Spherical mean and fit residual relative to `‖A‖/|S^{n-1}|`.
    pub mean: f64,
    pub residual: f64,
}

impl AngularProfile {
    pub fn fit(spec: &StableSpec, sym: &MatrixSymbol) -> Result<Self> {
        let n = spec.dim;
        // Fit checks are relative to ‖A‖ over the sphere area, the size of a
        // Riesz-type kernel of the same norm.
        let scale = match n {
            1 => 0.5,
            _ => 0.5 / PI,
        } * sym.norm().max(f64::MIN_POSITIVE);
        let omega = |u: &[f64]| -> Result<f64> { Ok(kernel_full(spec, sym, u, &vec![0.0; n])?.value) };
        match n {
            1 => {
                let (p, m) = (omega(&[1.0])?, omega(&[-1.0])?);
                let mean = 0.5 * (p + m);
                Ok(AngularProfile { dim: 1, coeffs: [if (p - m).abs() < 2e-9 * scale { 0.0 } else { 0.5 * (p - m) }, 0.0, 0.0, 0.0], mean: mean / scale, residual: 0.0 })
            }
            2 => {
                const K: usize = 8;
                let angles: Vec<f64> = (0..K).map(|k| 0.3 + 2.0 * PI * k as f64 / K as f64).collect();
                let vals = angles
                    .par_iter()
                    .map(|&t| omega(&[t.cos(), t.sin()]))
                    .collect::<Result<Vec<_>>>()?;
                let proj = |w: &dyn Fn(f64) -> f64| {
                    angles.iter().zip(&vals).map(|(&t, v)| w(t) * v).sum::<f64>() * 2.0 / K as f64
                };
                let coeffs = [
                    proj(&|t| t.cos()),
                    proj(&|t| t.sin()),
                    proj(&|t| (2.0 * t).cos()),
                    proj(&|t| (2.0 * t).sin()),
                ]
                .map(|c| if c.abs() < 1e-9 * scale { 0.0 } else { c });
                let mean = vals.iter().sum::<f64>() / K as f64;
                let mut prof = AngularProfile { dim: 2, coeffs, mean: mean / scale, residual: 0.0 };
                prof.residual = angles
                    .iter()
                    .zip(&vals)
                    .map(|(&t, v)| (v - mean - prof.omega(&[t.cos(), t.sin()])).abs())
                    .fold(0.0, f64::max)
                    / scale;
                Ok(prof)
            }
            _ => Err(Error::Unsupported(format!("principal-value route supports n <= 2, got {n}"))),
        }
    }

    /// Powers of `ε` in the error of the punctured lattice sum: odd parts of
    /// `Ω` contribute odd powers, even parts even powers.
    pub fn error_exponents(&self) -> Vec<i32> {
        let [c1, s1, c2, s2] = self.coeffs;
        let odd = c1 != 0.0 || s1 != 0.0;
        let even = self.dim == 2 && (c2 != 0.0 || s2 != 0.0);
        let mut e: Vec<i32> = (1..=6).filter(|k| if k % 2 == 1 { odd } else { even }).collect();
        if e.is_empty() {
            e.push(1);
        }
        e
    }

    /// Mean-zero part of `Ω` at a unit vector.
    pub fn omega(&self, u: &[f64]) -> f64 {
        let [c1, s1, c2, s2] = self.coeffs;
        if self.dim == 1 {
            c1 * u[0].signum()
        } else {
            c1 * u[0] + s1 * u[1] + c2 * (u[0] * u[0] - u[1] * u[1]) + 2.0 * s2 * u[0] * u[1]
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    /// `∮ K n ds` over the boundary of `[-1, 1]²`.
    fn boundary_flux(&self) -> Result<[f64; 2]> {
        let tol = Tolerance::new(1e-15, 1e-13);
        let k = |w: [f64; 2]| {
            let r2 = w[0] * w[0] + w[1] * w[1];
            let r = r2.sqrt();
            self.omega(&[w[0] / r, w[1] / r]) / r2
        };
        let fx = integrate(|t| k([1.0, t]) - k([-1.0, t]), -1.0, 1.0, tol)?.value;
        let fy = integrate(|t| k([t, 1.0]) - k([t, -1.0]), -1.0, 1.0, tol)?.value;
        Ok([fx, fy])
    }

    /// Kernel summed over the periodic images of the box. In two dimensions
    /// the images within `|m|_∞ ≤ images` are summed directly and the rest
    /// by the boundary term of the exterior integral, which is linear in `u`.
    pub fn periodized(&self, u: &[f64], length: f64, images: i64) -> Result<f64> {
        if self.dim == 1 {
            return Ok(self.coeffs[0] * PI / length * (PI * u[0] / length).tan().recip());
        }
        let flux = self.boundary_flux()?;
        Ok(self.image_sum(u, length, images, flux))
    }

    fn image_sum(&self, u: &[f64], length: f64, images: i64, flux: [f64; 2]) -> f64 {
        let reach = (images as f64 + 0.5) * length;
        let mut total = -(u[0] * flux[0] + u[1] * flux[1]) / (reach * length * length);
        for a in -images..=images {
            for b in -images..=images {
                let v = [u[0] + a as f64 * length, u[1] + b as f64 * length];
                let r2 = v[0] * v[0] + v[1] * v[1];
                if r2 == 0.0 {
                    continue;
                }
                let r = r2.sqrt();
                total += self.omega(&[v[0] / r, v[1] / r]) / r2;
            }
        }
        total
    }
}

/// Coefficient of the point mass: the spherical mean of the multiplier.
pub fn delta_coefficient(spec: &StableSpec, sym: &MatrixSymbol) -> Result<f64> {
    let n = sym.dim();
    let lp = lp_integrals(spec)?;
    let constant = |i: usize, j: usize| match sym.entry(i, j) {
        Entry::Const(c) => *c,
        _ => 0.0,
    };
    let trace: f64 = (0..n).map(|i| constant(i, i)).sum();
    Ok(lp.ss * trace / n as f64 + lp.vv * constant(n, n))
}

#[derive(Debug, Clone)]
pub struct PvResult {
    pub field: SampledField,
    /// Per-point gap between the full extrapolation and the one-term one.
    pub error: Vec<f64>,
    pub delta_coefficient: f64,
    pub profile: AngularProfile,
}

/// Weights `w` with `Σw = 1` and `Σ w mᵉ = 0` for each error exponent `e`.
fn richardson_weights(multiples: &[usize], exponents: &[i32]) -> Result<Vec<f64>> {
    let k = multiples.len();
    let used = &exponents[..exponents.len().min(k - 1)];
    let mut a = DMatrix::zeros(k, k);
    let mut b = DVector::zeros(k);
    for (c, &m) in multiples.iter().enumerate() {
        a[(0, c)] = 1.0;
        for (r, &e) in used.iter().enumerate() {
            a[(r + 1, c)] = (m as f64).powi(e);
        }
    }
    b[0] = 1.0;
    let w = a.lu().solve(&b).ok_or_else(|| Error::InvalidParameter("degenerate ε-schedule".into()))?;
    Ok(w.iter().copied().collect())
}

const IMAGES: i64 = 6;

/// `T_A f` by punctured lattice sums of the periodized kernel at the spacings
/// of `schedule`, Richardson-extrapolated to `ε = 0`, plus the point mass.
pub fn apply_kernel_pv(
    field: &SampledField,
    spec: &StableSpec,
    sym: &MatrixSymbol,
    schedule: &EpsilonSchedule,
) -> Result<PvResult> {
    let g = field.geometry;
    if spec.dim != g.dim || sym.dim() != g.dim {
        return Err(Error::Geometry("spec, symbol and field must share the dimension".into()));
    }
    if !sym.is_constant() {
        return Err(Error::Unsupported("principal-value route needs a constant symbol".into()));
    }
    let ms = &schedule.multiples;
    if ms.is_empty() || ms.iter().any(|&m| m == 0 || g.points % m != 0) {
        return Err(Error::InvalidParameter(format!("ε multiples {ms:?} must be positive divisors of N")));
    }
    field.check_decay()?;
    let profile = AngularProfile::fit(spec, sym)?;
    if profile.mean.abs() > 1e-6 || profile.residual > 1e-6 {
        return Err(Error::Inconclusive(format!(
            "kernel is not of the expected angular form (mean {:.2e}, residual {:.2e})",
            profile.mean, profile.residual
        )));
    }
    let c_delta = delta_coefficient(spec, sym)?;

    if profile.is_zero() {
        let mean = field.mean();
        let values = field.values.iter().map(|v| (v - mean) * c_delta).collect();
        let out = SampledField::new(g, values, format!("{}[{}]", sym.id(), field.name))?;
        return Ok(PvResult { field: out, error: vec![0.0; g.len()], delta_coefficient: c_delta, profile });
    }

    let exponents = profile.error_exponents();
    let weights = richardson_weights(ms, &exponents)?;
    let h = g.spacing();
    let flux = if g.dim == 2 { profile.boundary_flux()? } else { [0.0; 2] };
    let kper: Vec<f64> = (0..g.len())
        .into_par_iter()
        .map(|flat| {
            let m = g.multi_index(flat);
            let u: Vec<f64> = (0..g.dim).map(|a| g.signed(m[a]) as f64 * h).collect();
            if u.iter().all(|&c| c == 0.0) {
                0.0
            } else if g.dim == 1 {
                profile.coeffs[0] * PI / g.length * (PI * u[0] / g.length).tan().recip()
            } else {
                profile.image_sum(&u, g.length, IMAGES, flux)
            }
        })
        .collect();
    let mut spectrum = field.values.clone();
    fft_nd(&g, &mut spectrum, false);
    let sums: Vec<Vec<Complex64>> = ms
        .iter()
        .map(|&m| {
            let cell = (m as f64 * h).powi(g.dim as i32);
            let mut d: Vec<Complex64> = (0..g.len())
                .map(|flat| {
                    let idx = g.multi_index(flat);
                    if idx[..g.dim].iter().all(|&k| k % m == 0) {
                        Complex64::new(cell * kper[flat], 0.0)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
                .collect();
            fft_nd(&g, &mut d, false);
            let mut out: Vec<Complex64> = d.iter().zip(&spectrum).map(|(a, b)| a * b).collect();
            fft_nd(&g, &mut out, true);
            out
        })
        .collect();
    let combine = |w: &[f64], levels: &[Vec<Complex64>], k: usize| -> Complex64 {
        w.iter().zip(levels).map(|(wi, s)| s[k] * *wi).sum()
    };
    // One-term extrapolation from the two finest levels for the error gauge.
    let coarse = if ms.len() >= 2 {
        let tail = &ms[ms.len() - 2..];
        Some((richardson_weights(tail, &exponents)?, &sums[sums.len() - 2..]))
    } else {
        None
    };
    let mut values: Vec<Complex64> = (0..g.len())
        .map(|k| combine(&weights, &sums, k) + field.values[k] * c_delta)
        .collect();
    let error: Vec<f64> = (0..g.len())
        .map(|k| match &coarse {
            Some((w, s)) => (combine(&weights, &sums, k) - combine(w, s, k)).norm(),
            None => f64::NAN,
        })
        .collect();
    let mean = values.iter().sum::<Complex64>() / values.len() as f64;
    values.iter_mut().for_each(|v| *v -= mean);
    let field = SampledField::new(g, values, format!("{}[{}]", sym.id(), field.name))?;
    Ok(PvResult { field, error, delta_coefficient: c_delta, profile })
}

/// `p* = max(p, p/(p−1))`.
pub fn p_star(p: f64) -> Result<f64> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!("p must lie in (1, ∞), got {p}")));
    }
    Ok(p.max(p / (p - 1.0)))
}

/// `‖Tf‖_p / ‖f‖_p` by grid Riemann sums.
pub fn lp_ratio(tf: &SampledField, f: &SampledField, p: f64) -> Result<f64> {
    p_star(p)?;
    tf.geometry.ensure_same(&f.geometry)?;
    let den = f.lp_norm(p);
    if den == 0.0 {
        return Err(Error::Precondition("zero field has no norm ratio".into()));
    }
    Ok(tf.lp_norm(p) / den)
}

/// `λ·|{|Tf| > λ}|` for each `λ`, in grid measure.
pub fn weak_profile(tf: &SampledField, f: &SampledField, lambdas: &[f64]) -> Result<Vec<f64>> {
    tf.geometry.ensure_same(&f.geometry)?;
    if f.lp_norm(1.0) == 0.0 {
        return Err(Error::Precondition("zero field".into()));
    }
    let cell = tf.geometry.cell();
    let mut mags: Vec<f64> = tf.values.iter().map(|v| v.norm()).collect();
    mags.sort_unstable_by(|a, b| a.total_cmp(b));
    Ok(lambdas
        .iter()
        .map(|&l| {
            let above = mags.len() - mags.partition_point(|&m| m <= l);
            l * above as f64 * cell
        })
        .collect())
}

fn gaussian(x: &[f64], centre: &[f64], sigma: f64) -> f64 {
    let r2: f64 = x.iter().zip(centre).map(|(a, b)| (a - b) * (a - b)).sum();
    (-0.5 * r2 / (sigma * sigma)).exp()
}

/// Gaussian bump of width `w` (twice the standard deviation) with unit `L¹` norm.
pub fn normalized_bump(geometry: &Geometry, width: f64) -> Result<SampledField> {
    let s = 0.5 * width;
    let norm = (2.0 * PI * s * s).powf(0.5 * geometry.dim as f64);
    SampledField::from_fn(*geometry, format!("bump_w{width}"), |x| gaussian(x, &[0.0, 0.0], s) / norm)
}

/// Ten test fields: three centred bumps, two offset bumps, two wave packets,
/// two random band-limited packets and one mean-zero difference of bumps.
/// Widths are twice the Gaussian standard deviation.
pub fn battery(geometry: &Geometry, seed: u64) -> Result<Vec<SampledField>> {
    let g = *geometry;
    let d = g.dim;
    let o = g.length / 16.0;
    let origin = [0.0, 0.0];
    let mut out = Vec::with_capacity(10);
    for w in [0.5, 1.0, 2.0] {
        out.push(SampledField::from_fn(g, format!("bump_w{w}"), |x| gaussian(x, &origin, 0.5 * w))?);
    }
    let c1 = [o, -0.5 * o];
    let c2 = [-0.7 * o, 0.8 * o];
    out.push(SampledField::from_fn(g, "offset_bump_a", |x| gaussian(x, &c1, 0.5))?);
    out.push(SampledField::from_fn(g, "offset_bump_b", |x| 0.5 * gaussian(x, &c2, 0.25))?);
    for k in [16.0, 48.0] {
        let dir = if d == 1 { [1.0, 0.0] } else { [1.0, 0.5] };
        out.push(SampledField::from_fn(g, format!("packet_k{k}"), move |x| {
            let phase: f64 = x.iter().zip(&dir).map(|(a, b)| a * b).sum::<f64>() * 2.0 * PI * k / g.length;
            phase.cos() * gaussian(x, &origin, 1.0)
        })?);
    }
    for s in [seed, seed.wrapping_add(1)] {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let modes: Vec<(f64, [f64; 2], f64)> = (0..8)
            .map(|_| {
                let amp: f64 = rng.sample(StandardNormal);
                let mut xi = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                if d == 1 {
                    xi[1] = 0.0;
                }
                (amp, xi, rng.random_range(0.0..2.0 * PI))
            })
            .collect();
        out.push(SampledField::from_fn(g, format!("random_{s}"), move |x| {
            let wave: f64 = modes
                .iter()
                .map(|(a, xi, ph)| {
                    let dot: f64 = x.iter().zip(xi).map(|(p, q)| p * q).sum();
                    a * (2.0 * PI * dot + ph).cos()
                })
                .sum();
            wave * gaussian(x, &origin, 1.0)
        })?);
    }
    let (s1, s2) = (0.5, 1.0);
    out.push(SampledField::from_fn(g, "bump_difference", |x| {
        gaussian(x, &origin, s1) / s1.powi(d as i32) - gaussian(x, &origin, s2) / s2.powi(d as i32)
    })?);
    Ok(out)
}
