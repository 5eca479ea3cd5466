//! Fourier multipliers of `T_A` for symbols that depend on `y` only.
//!
//! With `t = 2πy|ξ|` the multiplier is
//! `m(ξ) = ∫_0^∞ 2t Σ a_ij(t/(2π|ξ|)) β_j conj(β_i) dt`, where
//! `β_k = iξ̂_k e^{-ρ(t)}` for spatial `k` and `β_v = -ρ'(t) e^{-ρ(t)}`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::density::StableSpec;
use crate::error::{Error, Result};
use crate::grid::Geometry;
use crate::quad::{integrate_with_breaks, Tolerance};
use crate::subordinator::find_rho_level;
use crate::symbol::{Entry, MatrixSymbol};

/// Sign relating the `A_j` multiplier to `iξ_j/|ξ|` at `α = 1`.
pub const SIGMA: f64 = -1.0;

/// `∫2t e^{-2ρ}`, `∫2tρ' e^{-2ρ}` and `∫2tρ'² e^{-2ρ}` over `t ∈ (0, t_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LpIntegrals {
    pub ss: f64,
    pub sv: f64,
    pub vv: f64,
}

impl LpIntegrals {
    /// Bound on `|m(ξ)|/‖A‖` from Cauchy–Schwarz on the pairing.
    pub fn bound(&self) -> f64 {
        self.ss + self.vv
    }
}

fn weighted_integrals(spec: &StableSpec, t_max: f64, weight: impl Fn(f64) -> f64, kinks: &[f64]) -> Result<[f64; 3]> {
    let hi = find_rho_level(spec, 40.0).min(t_max).ln();
    let lo = (-40.0f64).min(hi - 1.0);
    let mut breaks: Vec<f64> = (lo.ceil() as i64..=hi.floor() as i64).map(|k| k as f64).collect();
    breaks.extend(kinks.iter().filter(|&&k| k > 0.0).map(|k| k.ln()));
    let tol = Tolerance::new(1e-16, 1e-12);
    let mut out = [0.0; 3];
    for (power, slot) in out.iter_mut().enumerate() {
        let f = |v: f64| {
            let t = v.exp();
            let w = weight(t);
            if w == 0.0 {
                return 0.0;
            }
            2.0 * t * t * spec.rho_prime(t).powi(power as i32) * (-2.0 * spec.rho(t)).exp() * w
        };
        *slot = integrate_with_breaks(f, lo, hi, &breaks, tol)?.value;
    }
    Ok(out)
}

/// Littlewood–Paley integrals, optionally truncated to heights `y ≤ y_max` at `|ξ|`.
pub fn lp_integrals(spec: &StableSpec) -> Result<LpIntegrals> {
    let [ss, sv, vv] = weighted_integrals(spec, f64::INFINITY, |_| 1.0, &[])?;
    Ok(LpIntegrals { ss, sv, vv })
}

fn entry_integrals(spec: &StableSpec, a: &Entry, xi_norm: f64, y_max: Option<f64>) -> Result<[f64; 3]> {
    let scale = 2.0 * PI * xi_norm;
    let t_max = y_max.map_or(f64::INFINITY, |y| y * scale);
    match a {
        Entry::Const(c) if y_max.is_none() => {
            let l = lp_integrals(spec)?;
            Ok([c * l.ss, c * l.sv, c * l.vv])
        }
        _ => {
            let kinks: Vec<f64> = a.kinks().iter().map(|k| k * scale).collect();
            weighted_integrals(spec, t_max, |t| a.eval_y(t / scale), &kinks)
        }
    }
}

fn check_symbol(sym: &MatrixSymbol, xi: &[f64]) -> Result<()> {
    if !sym.is_x_independent() {
        return Err(Error::Unsupported("x-dependent symbols have no Fourier multiplier".into()));
    }
    if xi.len() != sym.dim() {
        return Err(Error::Geometry(format!("ξ has {} components, symbol dimension is {}", xi.len(), sym.dim())));
    }
    Ok(())
}

fn unit(xi: &[f64]) -> Result<(f64, Vec<f64>)> {
    let r = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
    if r == 0.0 || !r.is_finite() {
        return Err(Error::Singular("multiplier undefined at ξ = 0".into()));
    }
    Ok((r, xi.iter().map(|v| v / r).collect()))
}

/// Assemble `m` from per-entry integrals `[ss, sv, vv]`.
fn assemble(sym: &MatrixSymbol, hat: &[f64], integrals: impl Fn(usize, usize) -> [f64; 3]) -> Complex64 {
    let n = sym.dim();
    let mut m = Complex64::new(0.0, 0.0);
    for (i, j, _) in sym.nonzero_entries() {
        let w = integrals(i, j);
        m += match (i == n, j == n) {
            (false, false) => Complex64::new(hat[i] * hat[j] * w[0], 0.0),
            (true, false) => Complex64::new(0.0, -hat[j] * w[1]),
            (false, true) => Complex64::new(0.0, hat[i] * w[1]),
            (true, true) => Complex64::new(w[2], 0.0),
        };
    }
    m
}

pub fn compute_multiplier(spec: &StableSpec, sym: &MatrixSymbol, xi: &[f64]) -> Result<Complex64> {
    compute_multiplier_truncated(spec, sym, xi, None)
}

/// Multiplier of the operator restricted to heights `y ≤ y_max`.
pub fn compute_multiplier_truncated(
    spec: &StableSpec,
    sym: &MatrixSymbol,
    xi: &[f64],
    y_max: Option<f64>,
) -> Result<Complex64> {
    check_symbol(sym, xi)?;
    let (r, hat) = unit(xi)?;
    let mut cache = HashMap::new();
    for (i, j, a) in sym.nonzero_entries() {
        cache.insert((i, j), entry_integrals(spec, a, r, y_max)?);
    }
    Ok(assemble(sym, &hat, |i, j| cache[&(i, j)]))
}

/// `iξ_j/|ξ|` with one-based `j`.
pub fn riesz_multiplier(j: usize, xi: &[f64]) -> Result<Complex64> {
    if j == 0 || j > xi.len() {
        return Err(Error::InvalidParameter(format!("Riesz index {j} out of range for dimension {}", xi.len())));
    }
    let (_, hat) = unit(xi)?;
    Ok(Complex64::new(0.0, hat[j - 1]))
}

/// `(ξ₁² − ξ₂² − 2iξ₁ξ₂)/|ξ|²`.
pub fn beurling_multiplier(xi: &[f64]) -> Result<Complex64> {
    if xi.len() != 2 {
        return Err(Error::InvalidParameter("Beurling–Ahlfors multiplier needs n = 2".into()));
    }
    let (_, h) = unit(xi)?;
    Ok(Complex64::new(h[0] * h[0] - h[1] * h[1], -2.0 * h[0] * h[1]))
}

#[derive(Debug, Clone, Serialize)]
pub struct MultiplierTable {
    pub geometry: Geometry,
    /// FFT-ordered values, `m(0) = 0`.
    pub values: Vec<Complex64>,
    pub spec: StableSpec,
    pub symbol_id: String,
    pub y_max: Option<f64>,
}

impl MultiplierTable {
    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    /// Largest `|m(ξ) − conj(m(−ξ))|`.
    pub fn hermitian_defect(&self) -> f64 {
        let g = self.geometry;
        (0..g.len())
            .map(|flat| (self.values[flat] - self.values[mirror(&g, flat)].conj()).norm())
            .fold(0.0, f64::max)
    }

    /// Table from a closed-form multiplier, Nyquist bins taken as given.
    pub fn from_fn(
        geometry: Geometry,
        spec: StableSpec,
        symbol_id: impl Into<String>,
        m: impl Fn(&[f64]) -> Result<Complex64> + Sync,
    ) -> Result<Self> {
        geometry.validate()?;
        let values = (0..geometry.len())
            .into_par_iter()
            .map(|k| if k == 0 { Ok(Complex64::new(0.0, 0.0)) } else { m(&geometry.frequency(k)) })
            .collect::<Result<Vec<_>>>()?;
        Ok(MultiplierTable { geometry, values, spec, symbol_id: symbol_id.into(), y_max: None })
    }
}

/// Flat index of `-ξ` on the periodic dual grid.
fn mirror(g: &Geometry, flat: usize) -> usize {
    let n = g.points;
    let m = g.multi_index(flat);
    let neg = |k: usize| (n - k) % n;
    if g.dim == 1 {
        neg(m[0])
    } else {
        neg(m[0]) * n + neg(m[1])
    }
}

/// Nyquist bins alias `ξ` with `-ξ`; keep only their Hermitian part so real
/// input stays real.
fn symmetrize_nyquist(g: &Geometry, mut values: Vec<Complex64>) -> Vec<Complex64> {
    let half = g.points / 2;
    let orig = values.clone();
    for (flat, v) in values.iter_mut().enumerate() {
        let m = g.multi_index(flat);
        if m[..g.dim].contains(&half) {
            *v = 0.5 * (orig[flat] + orig[mirror(g, flat)].conj());
        }
    }
    values
}

type TableCache = Mutex<HashMap<String, Arc<MultiplierTable>>>;

fn table_cache() -> &'static TableCache {
    static CACHE: OnceLock<TableCache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

pub fn tabulate(spec: &StableSpec, sym: &MatrixSymbol, geometry: &Geometry) -> Result<Arc<MultiplierTable>> {
    tabulate_truncated(spec, sym, geometry, None)
}

pub fn tabulate_truncated(
    spec: &StableSpec,
    sym: &MatrixSymbol,
    geometry: &Geometry,
    y_max: Option<f64>,
) -> Result<Arc<MultiplierTable>> {
    geometry.validate()?;
    check_symbol(sym, &vec![0.0; geometry.dim])?;
    let key = format!(
        "{}|{}|{:?}|{:?}",
        serde_json::to_string(spec)?,
        serde_json::to_string(&sym.to_file())?,
        geometry,
        y_max.map(f64::to_bits)
    );
    if let Some(t) = table_cache().lock().unwrap().get(&key) {
        return Ok(t.clone());
    }
    let table = Arc::new(build_table(spec, sym, geometry, y_max)?);
    table_cache().lock().unwrap().insert(key, table.clone());
    Ok(table)
}

fn build_table(spec: &StableSpec, sym: &MatrixSymbol, g: &Geometry, y_max: Option<f64>) -> Result<MultiplierTable> {
    let entries: Vec<(usize, usize, Entry)> = sym.nonzero_entries().map(|(i, j, a)| (i, j, *a)).collect();
    // Entry integrals depend on |ξ| only, so group bins by the integer k·k.
    let radius_key = |flat: usize| -> u64 {
        let m = g.multi_index(flat);
        (0..g.dim).map(|a| g.signed(m[a]).unsigned_abs().pow(2)).sum()
    };
    let needs_radius = y_max.is_some() || !sym.is_constant();
    let mut radii: Vec<u64> = if needs_radius { (1..g.len()).map(radius_key).collect() } else { vec![1] };
    radii.sort_unstable();
    radii.dedup();
    let per_radius: Vec<Vec<[f64; 3]>> = radii
        .par_iter()
        .map(|&k2| {
            let r = (k2 as f64).sqrt() / g.length;
            entries.iter().map(|(_, _, a)| entry_integrals(spec, a, r, y_max)).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let lookup: HashMap<u64, usize> = radii.iter().enumerate().map(|(k, &r)| (r, k)).collect();
    let index: HashMap<(usize, usize), usize> = entries.iter().enumerate().map(|(k, e)| ((e.0, e.1), k)).collect();
    let values = (0..g.len())
        .into_par_iter()
        .map(|flat| {
            if flat == 0 {
                return Complex64::new(0.0, 0.0);
            }
            let xi = g.frequency(flat);
            let r = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
            let hat: Vec<f64> = xi.iter().map(|v| v / r).collect();
            let w = &per_radius[lookup[&if needs_radius { radius_key(flat) } else { 1 }]];
            assemble(sym, &hat, |i, j| w[index[&(i, j)]])
        })
        .collect();
    let values = symmetrize_nyquist(g, values);
    Ok(MultiplierTable { geometry: *g, values, spec: *spec, symbol_id: sym.id().to_string(), y_max })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbol::FyExpr;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn spec(alpha: f64, n: usize) -> StableSpec {
        StableSpec::pure(alpha, n).unwrap()
    }

    #[test]
    fn lp_integrals_closed_forms() {
        let l1 = lp_integrals(&spec(1.0, 1)).unwrap();
        assert_relative_eq!(l1.ss, 0.5, max_relative = 1e-12);
        assert_relative_eq!(l1.sv, 0.5, max_relative = 1e-12);
        assert_relative_eq!(l1.vv, 0.5, max_relative = 1e-12);
        let l2 = lp_integrals(&spec(2.0, 1)).unwrap();
        assert_relative_eq!(l2.ss, 0.5, max_relative = 1e-12);
        assert_relative_eq!(l2.sv, (PI / 2.0).sqrt() / 2.0, max_relative = 1e-12);
        assert_relative_eq!(l2.vv, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn identity_is_one_at_alpha_one() {
        let s = spec(1.0, 2);
        let id = MatrixSymbol::identity(2).unwrap();
        for xi in [[1.0, 0.0], [0.3, -2.0], [1e-3, 4e-3], [50.0, 1.0]] {
            let m = compute_multiplier(&s, &id, &xi).unwrap();
            assert!((m - 1.0).norm() < 1e-10, "{m}");
        }
    }

    #[test]
    fn riesz_symbol_gives_riesz_multiplier_with_fixed_sign() {
        let s = spec(1.0, 2);
        for j in 1..=2 {
            let a = MatrixSymbol::riesz(j, 2).unwrap();
            for xi in [[1.0, 0.5], [-0.2, 3.0], [7.0, -7.0]] {
                let m = compute_multiplier(&s, &a, &xi).unwrap();
                let want = riesz_multiplier(j, &xi).unwrap() * SIGMA;
                assert!((m - want).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn second_order_riesz_at_alpha_two() {
        let s = spec(2.0, 2);
        for (i, j) in [(1, 1), (1, 2), (2, 2)] {
            let a = MatrixSymbol::riesz2(i, j, 2).unwrap();
            let xi = [0.7, -1.9];
            let r2 = xi[0] * xi[0] + xi[1] * xi[1];
            let m = compute_multiplier(&s, &a, &xi).unwrap();
            assert!((m - Complex64::new(-xi[i - 1] * xi[j - 1] / (2.0 * r2), 0.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn closed_form_references() {
        assert_eq!(riesz_multiplier(1, &[1.0, 0.0]).unwrap(), Complex64::new(0.0, 1.0));
        assert_eq!(beurling_multiplier(&[1.0, 0.0]).unwrap(), Complex64::new(1.0, 0.0));
        assert_eq!(beurling_multiplier(&[0.0, 1.0]).unwrap(), Complex64::new(-1.0, 0.0));
        assert!(riesz_multiplier(1, &[0.0, 0.0]).is_err());
        assert!(beurling_multiplier(&[1.0]).is_err());
    }

    #[test]
    fn x_dependent_symbols_rejected() {
        use crate::symbol::FxyExpr;
        let a = MatrixSymbol::new(1, &[(0, 0, Entry::Fxy { expr: FxyExpr::CosX1, scale: 1.0 })], "cos").unwrap();
        assert!(matches!(compute_multiplier(&spec(1.0, 1), &a, &[1.0]), Err(Error::Unsupported(_))));
    }

    #[test]
    fn y_dependent_entry_matches_direct_integral() {
        // a(y) = e^{-y} on the vv entry at α=1: ∫2t·e^{-t/(2π|ξ|)}e^{-2t} dt = 2/(2 + 1/(2π|ξ|))².
        let s = spec(1.0, 1);
        let a = MatrixSymbol::new(1, &[(1, 1, Entry::Fy { expr: FyExpr::ExpNegY, scale: 1.0 })], "e").unwrap();
        for r in [0.05, 1.0, 10.0] {
            let m = compute_multiplier(&s, &a, &[r]).unwrap();
            let k = 2.0 + 1.0 / (2.0 * PI * r);
            assert_relative_eq!(m.re, 2.0 / (k * k), max_relative = 1e-9);
        }
    }

    #[test]
    fn truncation_converges_to_full() {
        let s = spec(1.0, 1);
        let id = MatrixSymbol::identity(1).unwrap();
        // ∫_0^T 4t e^{-2t} dt = 1 − (1 + 2T)e^{-2T} with T = 2π|ξ|y_max.
        let m = compute_multiplier_truncated(&s, &id, &[0.1], Some(2.0)).unwrap();
        let t = 2.0 * PI * 0.1 * 2.0;
        assert_relative_eq!(m.re, 1.0 - (1.0 + 2.0 * t) * (-2.0 * t).exp(), max_relative = 1e-10);
        let far = compute_multiplier_truncated(&s, &id, &[0.1], Some(1e4)).unwrap();
        assert!((far - 1.0).norm() < 1e-12);
    }

    #[test]
    fn table_is_hermitian_homogeneous_and_cached() {
        let s = spec(1.5, 2);
        let g = Geometry::new(2, 8.0, 32).unwrap();
        let a = MatrixSymbol::riesz(1, 2).unwrap();
        let t = tabulate(&s, &a, &g).unwrap();
        assert_eq!(t.values[0], Complex64::new(0.0, 0.0));
        assert!(t.hermitian_defect() < 1e-14);
        // (1,2), (2,4), (4,8) lie on one ray.
        let bin = |k1: usize, k2: usize| k1 * 32 + k2;
        let m = compute_multiplier(&s, &a, &[1.0 / 8.0, 2.0 / 8.0]).unwrap();
        for (k1, k2) in [(1, 2), (2, 4), (4, 8)] {
            assert!((t.values[bin(k1, k2)] - m).norm() < 1e-12);
        }
        let again = tabulate(&s, &a, &g).unwrap();
        assert!(Arc::ptr_eq(&t, &again));
    }

    #[test]
    fn y_dependent_table_matches_pointwise() {
        let s = spec(1.0, 1);
        let g = Geometry::new(1, 4.0, 16).unwrap();
        let a = MatrixSymbol::new(
            1,
            &[
                (0, 0, Entry::Fy { expr: FyExpr::IndicatorYLt1, scale: 1.0 }),
                (1, 0, Entry::Fy { expr: FyExpr::YOverOnePlusY, scale: 0.5 }),
            ],
            "mixed",
        )
        .unwrap();
        let t = tabulate(&s, &a, &g).unwrap();
        for k in (1..16).filter(|&k| k != 8) {
            let m = compute_multiplier(&s, &a, &g.frequency(k)).unwrap();
            assert!((t.values[k] - m).norm() < 1e-13);
        }
        assert!(t.hermitian_defect() < 1e-14);
    }

    #[test]
    fn identity_table_is_one_off_origin() {
        let g = Geometry::new(1, 16.0, 64).unwrap();
        let t = tabulate(&spec(1.0, 1), &MatrixSymbol::identity(1).unwrap(), &g).unwrap();
        assert!(t.values[1..].iter().all(|v| (v - 1.0).norm() < 1e-10));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn bounded_by_lp_constant(alpha in 0.5f64..2.0, a in -2.0f64..2.0, b in -2.0f64..2.0,
                                  c in -2.0f64..2.0, x in -5.0f64..5.0, y in 0.1f64..5.0) {
            let s = spec(alpha, 2);
            let sym = MatrixSymbol::new(2, &[(0, 0, Entry::Const(a)), (0, 2, Entry::Const(b)),
                                             (2, 1, Entry::Const(c)), (2, 2, Entry::Const(a - c))], "p").unwrap();
            let m = compute_multiplier(&s, &sym, &[x, y]).unwrap();
            let bound = lp_integrals(&s).unwrap().bound() * sym.norm();
            prop_assert!(m.norm() <= bound * (1.0 + 1e-9));
        }

        #[test]
        fn degree_zero_homogeneity(alpha in 0.5f64..2.0, lam in 0.01f64..100.0, x in -3.0f64..3.0) {
            let s = spec(alpha, 2);
            let sym = MatrixSymbol::riesz(2, 2).unwrap();
            let xi = [x, 1.0];
            let m1 = compute_multiplier(&s, &sym, &xi).unwrap();
            let m2 = compute_multiplier(&s, &sym, &[lam * x, lam]).unwrap();
            prop_assert!((m1 - m2).norm() < 1e-10);
        }
    }
}
