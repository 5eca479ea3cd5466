//! The kernel `K_A(x, x̃) = ∫∫ 2y Σ a_ij(x̄, y) ∂_jφ_y(x̄ - x̃) ∂_iφ_y(x̄ - x) dx̄ dy`.
//!
//! Row `i` pairs with the `x` (output) side and column `j` with the `x̃`
//! (input) side; index `n` is `∂/∂y`. Two routes:
//!
//! * semigroup, for entries independent of `x`. The `x̄` integral collapses via
//!   `φ_y ∗ φ_y = φ_{cy}`, `c = 2^{1/α}`, leaving a single `y` integral of
//!   derivatives of `Φ = φ_{cy}(u)`, `u = x - x̃`:
//!   `C_ij = -∂_i∂_jΦ`, `C_nj = ½∂_y∂_jΦ`, `C_in = -½∂_y∂_iΦ` and
//!   `C_nn = ¼∂_y²Φ - (α-1)/(4y) ∂_yΦ`.
//! * general, for spatial entries depending on `x`: nested quadrature over
//!   `(x̄, y)` after rescaling by `R = |x - x̃|`.
//!
//! Derivatives of `φ_s(u) = s^{-n} φ(u/s)` are kept symbolically as sums of
//! `coef · z^e · |z|^{2q} · L_p(|z|)`, `z = u/s`, where `L_p = φ_{n+2p}` is a
//! radial lift. Both `∂/∂z_k` and the Euler operator `z·∇` act on such sums in
//! closed form, so no numerical differentiation is involved.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use crate::density::{RadialProfile, StableSpec, LIFTS};
use crate::error::{invalid, Error, Result};
use crate::quad::{integrate_with_breaks, Estimate, Tolerance};
use crate::symbol::{Entry, MatrixSymbol};

/// Largest dimension handled by the semigroup route.
pub const MAX_DIM_SEMIGROUP: usize = 4;
/// Largest dimension handled by the general route.
pub const MAX_DIM_GENERAL: usize = 2;

const T_LO: f64 = 1e-4;
const T_HI: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelEvaluation {
    pub value: f64,
    pub quadrature_error: f64,
}

impl From<Estimate> for KernelEvaluation {
    fn from(e: Estimate) -> Self {
        KernelEvaluation {
            value: e.value,
            quadrature_error: e.error,
        }
    }
}

/// Which integral a homogeneity constant is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    /// One-dimensional `y` integral of the collapsed `x̄` convolution.
    Semigroup,
    /// `(n+1)`-dimensional integral over `(x̄, y)`.
    General,
}

// --- symbolic derivatives ----------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
struct Term {
    coef: f64,
    exps: [u8; MAX_DIM_SEMIGROUP],
    q: u8,
    p: u8,
}

#[derive(Debug, Clone, Default)]
struct Poly {
    terms: Vec<Term>,
}

impl Poly {
    fn lift0() -> Self {
        Poly {
            terms: vec![Term {
                coef: 1.0,
                exps: [0; MAX_DIM_SEMIGROUP],
                q: 0,
                p: 0,
            }],
        }
    }

    fn push(&mut self, t: Term) {
        if t.coef == 0.0 {
            return;
        }
        match self
            .terms
            .iter_mut()
            .find(|s| s.exps == t.exps && s.q == t.q && s.p == t.p)
        {
            Some(s) => s.coef += t.coef,
            None => self.terms.push(t),
        }
    }

    fn add_scaled(&mut self, other: &Poly, c: f64) {
        for t in &other.terms {
            self.push(Term {
                coef: c * t.coef,
                ..*t
            });
        }
    }

    fn dz(&self, k: usize) -> Poly {
        let mut out = Poly::default();
        for t in &self.terms {
            let mut up = t.exps;
            up[k] += 1;
            if t.exps[k] > 0 {
                let mut down = t.exps;
                down[k] -= 1;
                out.push(Term {
                    coef: t.coef * t.exps[k] as f64,
                    exps: down,
                    ..*t
                });
            }
            if t.q > 0 {
                out.push(Term {
                    coef: t.coef * 2.0 * t.q as f64,
                    exps: up,
                    q: t.q - 1,
                    p: t.p,
                });
            }
            out.push(Term {
                coef: -2.0 * PI * t.coef,
                exps: up,
                q: t.q,
                p: t.p + 1,
            });
        }
        out
    }

    /// `z·∇` applied to the sum.
    fn euler(&self) -> Poly {
        let mut out = Poly::default();
        for t in &self.terms {
            let deg: u32 = t.exps.iter().map(|&e| e as u32).sum::<u32>() + 2 * t.q as u32;
            out.push(Term {
                coef: t.coef * deg as f64,
                ..*t
            });
            out.push(Term {
                coef: -2.0 * PI * t.coef,
                exps: t.exps,
                q: t.q + 1,
                p: t.p + 1,
            });
        }
        out
    }

    fn max_lift(&self) -> usize {
        self.terms.iter().map(|t| t.p as usize).max().unwrap_or(0)
    }

    fn eval(&self, z: &[f64], rho2: f64, lifts: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let mut m = t.coef * lifts[t.p as usize];
                for (k, &e) in t.exps.iter().enumerate() {
                    if e > 0 {
                        m *= z[k].powi(e as i32);
                    }
                }
                if t.q > 0 {
                    m *= rho2.powi(t.q as i32);
                }
                m
            })
            .sum()
    }
}

/// `s^{pow} H(u/s)`, a derivative of `φ_s(u)` in `(u, s)`.
#[derive(Debug, Clone)]
struct Scaled {
    pow: i32,
    poly: Poly,
}

impl Scaled {
    fn base(n: usize) -> Self {
        Scaled {
            pow: -(n as i32),
            poly: Poly::lift0(),
        }
    }

    fn du(&self, k: usize) -> Self {
        Scaled {
            pow: self.pow - 1,
            poly: self.poly.dz(k),
        }
    }

    fn ds(&self) -> Self {
        let m = -self.pow as f64;
        let mut poly = Poly::default();
        poly.add_scaled(&self.poly, -m);
        poly.add_scaled(&self.poly.euler(), -1.0);
        Scaled {
            pow: self.pow - 1,
            poly,
        }
    }
}

/// `C_ij(u, y) = s^{pow} H(u/s)` at `s = c y`, optionally differentiated in `u_k`.
fn collapsed_entry(n: usize, alpha: f64, i: usize, j: usize, k: Option<usize>) -> Scaled {
    let c = 2f64.powf(1.0 / alpha);
    let phi = Scaled::base(n);
    let mut out = match (i == n, j == n) {
        (false, false) => {
            let d = phi.du(i).du(j);
            Scaled {
                pow: d.pow,
                poly: {
                    let mut p = Poly::default();
                    p.add_scaled(&d.poly, -1.0);
                    p
                },
            }
        }
        (true, false) => {
            let d = phi.ds().du(j);
            let mut p = Poly::default();
            p.add_scaled(&d.poly, 0.5 * c);
            Scaled { pow: d.pow, poly: p }
        }
        (false, true) => {
            let d = phi.ds().du(i);
            let mut p = Poly::default();
            p.add_scaled(&d.poly, -0.5 * c);
            Scaled { pow: d.pow, poly: p }
        }
        (true, true) => {
            // ∂_y = c∂_s and 1/y = c/s, so both pieces carry s^{-n-2}.
            let d1 = phi.ds();
            let d2 = d1.ds();
            let mut p = Poly::default();
            p.add_scaled(&d2.poly, 0.25 * c * c);
            p.add_scaled(&d1.poly, -(alpha - 1.0) * c * c / 4.0);
            Scaled { pow: d2.pow, poly: p }
        }
    };
    if let Some(k) = k {
        out = out.du(k);
    }
    out
}

// --- shared integration helpers ----------------------------------------------

fn lifts_at(profile: &RadialProfile, upto: usize, r: f64, out: &mut [f64; LIFTS]) {
    for (p, o) in out.iter_mut().enumerate().take(upto + 1) {
        *o = profile.lift(p, r);
    }
}

// Power-law extrapolation of `∫ f dv` beyond `v_end`; `step` points back into
// the integration range.
fn tail<F: FnMut(f64) -> f64>(f: &mut F, v_end: f64, step: f64) -> Estimate {
    let f0 = f(v_end);
    if f0 == 0.0 || !f0.is_finite() {
        return Estimate::ZERO;
    }
    let f1 = f(v_end + step);
    if f1.signum() != f0.signum() || f1.abs() <= f0.abs() {
        // Not yet in a clean decaying regime; charge the endpoint value.
        return Estimate {
            value: 0.0,
            error: 10.0 * f0.abs(),
        };
    }
    let rate = (f1.abs() / f0.abs()).ln() / step.abs();
    let value = f0 / rate;
    Estimate {
        value,
        error: 0.05 * value.abs(),
    }
}

fn integrate_log<F: FnMut(f64) -> f64>(mut f: F, t_lo: f64, extra_breaks: &[f64], tol: Tolerance) -> Result<Estimate> {
    let (lo, hi) = (t_lo.ln(), T_HI.ln());
    let mut breaks: Vec<f64> = (lo.ceil() as i64..=hi.floor() as i64).map(|k| k as f64).collect();
    breaks.extend_from_slice(extra_breaks);
    let body = integrate_with_breaks(&mut f, lo, hi, &breaks, tol)?;
    let upper = tail(&mut f, hi, -0.5);
    let lower = tail(&mut f, lo, 0.5);
    Ok(body + upper + lower)
}

fn unit(u: &[f64]) -> Result<(f64, Vec<f64>)> {
    let r = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    if r == 0.0 {
        return Err(Error::Singular("kernel evaluated on the diagonal x = x̃".into()));
    }
    if !r.is_finite() {
        return Err(invalid("non-finite kernel argument"));
    }
    Ok((r, u.iter().map(|v| v / r).collect()))
}

fn self_similar_profile(spec: &StableSpec) -> Result<Arc<RadialProfile>> {
    if !spec.is_self_similar() {
        return Err(Error::Unsupported(
            "kernels need the scaling φ_y(x) = y^{-n}φ(x/y); use a pure stable spec".into(),
        ));
    }
    RadialProfile::shared(spec)
}

fn check_index(n: usize, idx: &[usize], spatial_only: bool) -> Result<()> {
    let top = if spatial_only { n } else { n + 1 };
    if let Some(&bad) = idx.iter().find(|&&i| i >= top) {
        return Err(invalid(format!("index {bad} out of range for dimension {n}")));
    }
    Ok(())
}

// --- semigroup route ----------------------------------------------------------

// Below this `t` the collapsed integrand would read the lifts beyond the
// tabulated radii, where leading tail terms cancel between lifts and the
// single-slope extrapolation cannot follow; the fitted tail covers the rest.
fn collapsed_t_lo(profile: &RadialProfile, c: f64) -> f64 {
    T_LO.max(1.0 / (c * profile.options().r_max))
}

struct CollapsedTerm<'a> {
    entry: &'a Entry,
    c: Scaled,
}

/// `Σ ∫ 2y a(y) C(u, y) dy` for x-independent entries, optionally
/// differentiated in `u_k`.
fn semigroup_sum(
    spec: &StableSpec,
    profile: &RadialProfile,
    parts: &[(usize, usize, &Entry)],
    u: &[f64],
    k: Option<usize>,
) -> Result<Estimate> {
    let n = spec.dim;
    let (r, uhat) = unit(u)?;
    let terms: Vec<CollapsedTerm> = parts
        .iter()
        .map(|&(i, j, e)| CollapsedTerm {
            entry: e,
            c: collapsed_entry(n, spec.alpha, i, j, k),
        })
        .collect();
    if terms.is_empty() {
        return Ok(Estimate::ZERO);
    }
    let pow = terms[0].c.pow;
    let upto = terms.iter().map(|t| t.c.poly.max_lift()).max().unwrap_or(0);
    let c = 2f64.powf(1.0 / spec.alpha);
    let mut z = vec![0.0; n];
    let mut lifts = [0.0; LIFTS];
    let f = |v: f64| {
        let t = v.exp();
        let s = c * t;
        for (zk, uk) in z.iter_mut().zip(&uhat) {
            *zk = uk / s;
        }
        let rho = 1.0 / s;
        lifts_at(profile, upto, rho, &mut lifts);
        let y = r * t;
        let h: f64 = terms
            .iter()
            .map(|term| term.entry.eval_y(y) * term.c.poly.eval(&z, rho * rho, &lifts))
            .sum();
        2.0 * t * t * s.powi(pow) * h
    };
    let mut kinks: Vec<f64> = parts
        .iter()
        .flat_map(|(_, _, e)| e.kinks().iter().map(|y| (y / r).ln()))
        .collect();
    kinks.retain(|v| v.is_finite());
    let t_lo = collapsed_t_lo(profile, c);
    let est = integrate_log(f, t_lo, &kinks, Tolerance::new(1e-15, 1e-11).with_max_intervals(4000))?;
    let scale = r.powi(2 + pow);
    Ok(Estimate {
        value: est.value * scale,
        error: est.error * scale,
    })
}

/// One entry of the kernel by the semigroup route, at `u = x - x̃`.
///
/// Indices are zero-based; `n` is the vertical direction.
pub fn kernel_entry_semigroup(
    spec: &StableSpec,
    a: &Entry,
    i: usize,
    j: usize,
    u: &[f64],
) -> Result<KernelEvaluation> {
    let n = spec.dim;
    if n > MAX_DIM_SEMIGROUP || u.len() != n {
        return Err(invalid(format!(
            "semigroup route needs 1 <= n <= {MAX_DIM_SEMIGROUP} and a point of matching dimension"
        )));
    }
    check_index(n, &[i, j], false)?;
    if a.depends_on_x() {
        return Err(Error::Precondition("semigroup route needs an x-independent entry".into()));
    }
    unit(u)?;
    if a.is_zero() {
        return Ok(KernelEvaluation {
            value: 0.0,
            quadrature_error: 0.0,
        });
    }
    let profile = self_similar_profile(spec)?;
    semigroup_sum(spec, &profile, &[(i, j, a)], u, None).map(Into::into)
}

// --- general route ------------------------------------------------------------

struct GeneralSetup {
    n: usize,
    r: f64,
    uhat: Vec<f64>,
}

fn inner_breaks(c: f64, t: f64, zmax: f64) -> Vec<f64> {
    let mut b = vec![c];
    for m in [1.0, 10.0, 100.0] {
        b.push(c - m * t);
        b.push(c + m * t);
    }
    b.retain(|x| x.abs() < zmax);
    b
}

/// `∫_0^∞ ∫ g(z, t) dz dt` in `v = ln t`, with the `z` range truncated at
/// `50·max(1, t) + 1` and breakpoints around `0` and `û`.
///
/// The `t` integral marches upward one unit of `v` at a time. It stops once
/// the pieces are negligible, or once they decay geometrically (a power law
/// in `t`), in which case the geometric remainder is added. `period` is the
/// oscillation length of the integrand in `z`, if any; the inner partition then
/// resolves it up front.
fn general_integral<G>(setup: &GeneralSetup, g: G, period: Option<f64>, rel: f64) -> Result<Estimate>
where
    G: Fn(&[f64], f64) -> f64,
{
    let n = setup.n;
    let uh = &setup.uhat;
    let failure = std::cell::RefCell::new(None::<Error>);
    let inner_tol = Tolerance::new(0.0, rel * 1e-2).with_max_intervals(if n == 1 { 20_000 } else { 2000 });
    let axis_breaks = |axis: usize, t: f64, zmax: f64| {
        let mut b = inner_breaks(0.0, t, zmax);
        b.extend(inner_breaks(uh[axis], t, zmax));
        if let Some(p) = period {
            let cap = if n == 1 { 100_000.0 } else { 400.0 };
            let h = (p / 4.0).max(2.0 * zmax / cap);
            let m = (zmax / h).ceil() as i64;
            b.extend((-m..=m).map(|k| k as f64 * h));
        }
        b
    };
    let inner = |t: f64| -> f64 {
        let zmax = 50.0 * t.max(1.0) + 1.0;
        let res = match n {
            1 => integrate_with_breaks(|z| g(&[z], t), -zmax, zmax, &axis_breaks(0, t, zmax), inner_tol),
            _ => {
                let b0 = axis_breaks(0, t, zmax);
                let b1 = axis_breaks(1, t, zmax);
                let tol_z = Tolerance {
                    rel: inner_tol.rel * 0.1,
                    ..inner_tol
                };
                integrate_with_breaks(
                    |z0| match integrate_with_breaks(|z1| g(&[z0, z1], t), -zmax, zmax, &b1, tol_z) {
                        Ok(e) => e.value,
                        Err(Error::Quadrature { value, .. }) => value,
                        Err(_) => f64::NAN,
                    },
                    -zmax,
                    zmax,
                    &b0,
                    inner_tol,
                )
            }
        };
        match res {
            Ok(e) => e.value * t,
            Err(Error::Quadrature { value, .. }) => value * t,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        }
    };
    let mut f = |v: f64| inner(v.exp());

    let v_lo = T_LO.ln();
    let v_hi = T_HI.ln();
    let mut total = tail(&mut f, v_lo, 0.5);
    let mut l1: f64 = 0.0;
    let mut pieces: Vec<f64> = Vec::new();
    let mut quiet = 0;
    let mut a = v_lo;
    let mut closed = false;
    while a < v_hi {
        let b = (a + 1.0).min(v_hi);
        let tol = Tolerance::new(1e-15 + 1e-3 * rel * l1, rel).with_max_intervals(200);
        let piece = match integrate_with_breaks(&mut f, a, b, &[], tol) {
            Ok(e) => e,
            Err(Error::Quadrature { value, error, .. }) => Estimate { value, error },
            Err(e) => return Err(e),
        };
        if let Some(e) = failure.borrow_mut().take() {
            return Err(e);
        }
        total = total + piece;
        l1 += piece.value.abs();
        pieces.push(piece.value);
        a = b;
        if a <= 2.0 {
            continue;
        }
        // Negligible pieces: done.
        if piece.value.abs() + piece.error <= 1e-3 * rel * l1 {
            quiet += 1;
            if quiet >= 2 {
                closed = true;
                break;
            }
        } else {
            quiet = 0;
        }
        // Clean geometric decay: close with the remainder of the series.
        if let [p0, p1, p2] = pieces[pieces.len().saturating_sub(3)..] {
            let (r1, r2) = (p1 / p0, p2 / p1);
            if r1 > 0.0 && r1 < 0.9 && (r1 - r2).abs() < 1e-3 * r2 && p2.abs() < 1e-4 * l1 {
                let rest = p2 * r2 / (1.0 - r2);
                total = total
                    + Estimate {
                        value: rest,
                        error: 1e-2 * rest.abs(),
                    };
                closed = true;
                break;
            }
        }
    }
    if !closed {
        total = total + tail(&mut f, v_hi, -0.5);
    }
    Ok(total)
}

fn general_setup(n: usize, x: &[f64], xt: &[f64]) -> Result<GeneralSetup> {
    if n == 0 || n > MAX_DIM_GENERAL || x.len() != n || xt.len() != n {
        return Err(invalid(format!(
            "general route needs 1 <= n <= {MAX_DIM_GENERAL} and points of matching dimension"
        )));
    }
    let u: Vec<f64> = x.iter().zip(xt).map(|(a, b)| a - b).collect();
    let (r, uhat) = unit(&u)?;
    Ok(GeneralSetup { n, r, uhat })
}

/// One spatial entry of the kernel by full quadrature over `(x̄, y)`.
pub fn kernel_entry_general(
    spec: &StableSpec,
    a: &Entry,
    i: usize,
    j: usize,
    x: &[f64],
    xt: &[f64],
) -> Result<KernelEvaluation> {
    let n = spec.dim;
    let setup = general_setup(n, x, xt)?;
    check_index(n, &[i, j], true)?;
    if a.is_zero() {
        return Ok(KernelEvaluation {
            value: 0.0,
            quadrature_error: 0.0,
        });
    }
    let profile = self_similar_profile(spec)?;
    let r = setup.r;
    let uh = setup.uhat.clone();
    let xt = xt.to_vec();
    let g = |z: &[f64], t: f64| {
        let mut xbar = [0.0; MAX_DIM_GENERAL];
        let mut w = [0.0; MAX_DIM_GENERAL];
        let mut zr2 = 0.0;
        let mut wr2 = 0.0;
        for k in 0..n {
            xbar[k] = xt[k] + r * z[k];
            w[k] = (z[k] - uh[k]) / t;
            zr2 += (z[k] / t) * (z[k] / t);
            wr2 += w[k] * w[k];
        }
        let dj = -2.0 * PI * (z[j] / t) * profile.lift(1, zr2.sqrt());
        let di = -2.0 * PI * w[i] * profile.lift(1, wr2.sqrt());
        2.0 * t.powi(-2 * n as i32 - 1) * a.eval(&xbar[..n], r * t) * dj * di
    };
    let period = a.x_period().map(|p| p / r);
    let est = general_integral(&setup, g, period, if n == 1 { 1e-9 } else { 1e-6 })?;
    let scale = r.powi(-(n as i32));
    Ok(KernelEvaluation {
        value: est.value * scale,
        quadrature_error: est.error * scale,
    })
}

/// The full kernel at `(x, x̃)`. Entries independent of `x` go through the
/// semigroup route in one combined integral; the rest through the general
/// route.
pub fn kernel_full(spec: &StableSpec, sym: &MatrixSymbol, x: &[f64], xt: &[f64]) -> Result<KernelEvaluation> {
    let n = spec.dim;
    if sym.dim() != n || x.len() != n || xt.len() != n {
        return Err(invalid("symbol, spec and points must share the dimension"));
    }
    let u: Vec<f64> = x.iter().zip(xt).map(|(a, b)| a - b).collect();
    unit(&u)?;
    let (semi, general): (Vec<_>, Vec<_>) = sym.nonzero_entries().partition(|(_, _, e)| !e.depends_on_x());
    let mut total = Estimate::ZERO;
    if !semi.is_empty() {
        let profile = self_similar_profile(spec)?;
        if n > MAX_DIM_SEMIGROUP {
            return Err(invalid(format!("semigroup route supports n <= {MAX_DIM_SEMIGROUP}")));
        }
        total = total + semigroup_sum(spec, &profile, &semi, &u, None)?;
    }
    for (i, j, e) in general {
        let k = kernel_entry_general(spec, e, i, j, x, xt)?;
        total = total
            + Estimate {
                value: k.value,
                error: k.quadrature_error,
            };
    }
    Ok(total.into())
}

/// `∇_x K_A(x, x̃)` by central differences with step `1e-4·|x - x̃|`.
pub fn kernel_gradient_fd(spec: &StableSpec, sym: &MatrixSymbol, x: &[f64], xt: &[f64]) -> Result<Vec<f64>> {
    let u: Vec<f64> = x.iter().zip(xt).map(|(a, b)| a - b).collect();
    let (r, _) = unit(&u)?;
    let h = 1e-4 * r;
    (0..x.len())
        .map(|k| {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[k] += h;
            xm[k] -= h;
            let kp = kernel_full(spec, sym, &xp, xt)?.value;
            let km = kernel_full(spec, sym, &xm, xt)?.value;
            Ok((kp - km) / (2.0 * h))
        })
        .collect()
}

/// `∇_u` of the x-independent part of the kernel, from the symbolic third
/// derivatives.
pub fn kernel_gradient_semigroup(spec: &StableSpec, sym: &MatrixSymbol, u: &[f64]) -> Result<Vec<f64>> {
    let n = spec.dim;
    if !sym.is_x_independent() {
        return Err(Error::Precondition("symbol depends on x".into()));
    }
    let profile = self_similar_profile(spec)?;
    let parts: Vec<_> = sym.nonzero_entries().collect();
    (0..n)
        .map(|k| Ok(semigroup_sum(spec, &profile, &parts, u, Some(k))?.value))
        .collect()
}

// --- homogeneity constants ----------------------------------------------------

// Rotation-invariant majorant of the entry class of (i, j) at one point: the
// Frobenius norm over all spatial index choices, so it bounds every entry of
// the class and depends only on |u|.
fn class_majorant(n: usize, alpha: f64, i: usize, j: usize, k: bool) -> Vec<Scaled> {
    let spatial: Vec<usize> = (0..n).collect();
    let rows: Vec<usize> = if i == n { vec![n] } else { spatial.clone() };
    let cols: Vec<usize> = if j == n { vec![n] } else { spatial.clone() };
    let ks: Vec<Option<usize>> = if k { spatial.iter().map(|&k| Some(k)).collect() } else { vec![None] };
    let mut out = Vec::new();
    for &a in &rows {
        for &b in &cols {
            for &kk in &ks {
                out.push(collapsed_entry(n, alpha, a, b, kk));
            }
        }
    }
    out
}

fn semigroup_constant(spec: &StableSpec, i: usize, j: usize, k: bool, direction: &[f64]) -> Result<f64> {
    let n = spec.dim;
    let (_, dir) = unit(direction)?;
    let profile = self_similar_profile(spec)?;
    let parts = class_majorant(n, spec.alpha, i, j, k);
    let pow = parts[0].pow;
    let upto = parts.iter().map(|t| t.poly.max_lift()).max().unwrap_or(0);
    let c = 2f64.powf(1.0 / spec.alpha);
    let mut z = vec![0.0; n];
    let mut lifts = [0.0; LIFTS];
    let f = |v: f64| {
        let t = v.exp();
        let s = c * t;
        for (zk, dk) in z.iter_mut().zip(&dir) {
            *zk = dk / s;
        }
        let rho = 1.0 / s;
        lifts_at(&profile, upto, rho, &mut lifts);
        let h2: f64 = parts
            .iter()
            .map(|p| p.poly.eval(&z, rho * rho, &lifts).powi(2))
            .sum();
        2.0 * t * t * s.powi(pow) * h2.sqrt()
    };
    let t_lo = collapsed_t_lo(&profile, c);
    let est = integrate_log(f, t_lo, &[], Tolerance::new(1e-14, 1e-9).with_max_intervals(4000))?;
    Ok(est.value)
}

fn general_constant(spec: &StableSpec, k: bool, direction: &[f64]) -> Result<f64> {
    let n = spec.dim;
    let zero = vec![0.0; n];
    let setup = general_setup(n, direction, &zero)?;
    let profile = self_similar_profile(spec)?;
    let uh = setup.uhat.clone();
    let g = |z: &[f64], t: f64| {
        let mut zr2 = 0.0;
        let mut w = [0.0; MAX_DIM_GENERAL];
        let mut wr2 = 0.0;
        for m in 0..n {
            zr2 += (z[m] / t) * (z[m] / t);
            w[m] = (z[m] - uh[m]) / t;
            wr2 += w[m] * w[m];
        }
        let zr = zr2.sqrt();
        let wr = wr2.sqrt();
        let g1 = 2.0 * PI * zr * profile.lift(1, zr);
        let g2 = if k {
            // Hessian eigenvalues are -2πL1 (tangential) and
            // -2πL1 + 4π²r²L2 (radial); Frobenius norm over both.
            let l1 = profile.lift(1, wr);
            let l2 = profile.lift(2, wr);
            let tang = 2.0 * PI * l1;
            let rad = -2.0 * PI * l1 + 4.0 * PI * PI * wr2 * l2;
            (rad * rad + (n as f64 - 1.0) * tang * tang).sqrt()
        } else {
            2.0 * PI * wr * profile.lift(1, wr)
        };
        let p = if k { -2 * n as i32 - 2 } else { -2 * n as i32 - 1 };
        2.0 * t.powi(p) * g1 * g2
    };
    Ok(general_integral(&setup, g, None, if n == 1 { 1e-8 } else { 1e-6 })?.value)
}

/// Size constant of entry `(i, j)` in direction `û`: a bound `κ` with
/// `|K^{ij}(u)| ≤ sup|a_ij| κ / |u|ⁿ`.
///
/// The integrand is the rotation-invariant majorant of the entry's derivative
/// class (Frobenius norm over spatial indices), so the result does not depend
/// on the direction.
pub fn size_constant(spec: &StableSpec, i: usize, j: usize, direction: &[f64], route: Route) -> Result<f64> {
    let n = spec.dim;
    if direction.len() != n {
        return Err(invalid("direction must have the spec dimension"));
    }
    match route {
        Route::Semigroup => {
            check_index(n, &[i, j], false)?;
            semigroup_constant(spec, i, j, false, direction)
        }
        Route::General => {
            check_index(n, &[i, j], true)?;
            general_constant(spec, false, direction)
        }
    }
}

/// Smoothness constant: a bound `κ` with `|∂_{x_k} K^{ij}(u)| ≤ sup|a_ij| κ / |u|^{n+1}`.
/// The majorant runs over all spatial `k`, so the result is the same for every
/// `k`.
pub fn smoothness_constant(
    spec: &StableSpec,
    i: usize,
    j: usize,
    k: usize,
    direction: &[f64],
    route: Route,
) -> Result<f64> {
    let n = spec.dim;
    if direction.len() != n {
        return Err(invalid("direction must have the spec dimension"));
    }
    check_index(n, &[k], true)?;
    match route {
        Route::Semigroup => {
            check_index(n, &[i, j], false)?;
            semigroup_constant(spec, i, j, true, direction)
        }
        Route::General => {
            check_index(n, &[i, j], true)?;
            general_constant(spec, true, direction)
        }
    }
}

/// Bounds `(κ_size, κ_smooth)` for a whole symbol: `‖A‖` times the sum of the
/// entry constants over the nonzero entries, each entry using the route
/// `kernel_full` would use.
pub fn symbol_constants(spec: &StableSpec, sym: &MatrixSymbol) -> Result<(f64, f64)> {
    let n = spec.dim;
    let mut dir = vec![0.0; n];
    dir[0] = 1.0;
    let mut size = 0.0;
    let mut smooth = 0.0;
    for (i, j, e) in sym.nonzero_entries() {
        let route = if e.depends_on_x() { Route::General } else { Route::Semigroup };
        size += size_constant(spec, i, j, &dir, route)?;
        smooth += smoothness_constant(spec, i, j, 0, &dir, route)?;
    }
    Ok((sym.norm() * size, sym.norm() * smooth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbol::{FxyExpr, FyExpr};
    use approx::assert_relative_eq;

    fn cauchy(n: usize) -> StableSpec {
        StableSpec::pure(1.0, n).unwrap()
    }

    #[test]
    fn term_engine_matches_closed_forms() {
        // ∂_sΦ = -s^{-n-1}(n L0 - 2πρ² L1)
        let n = 2;
        let d = Scaled::base(n).ds();
        assert_eq!(d.pow, -3);
        let z = [0.3, -0.4];
        let rho2 = 0.25;
        let lifts = [1.1, 0.7, 0.2, 0.05];
        let want = -(n as f64 * lifts[0] - 2.0 * PI * rho2 * lifts[1]);
        assert_relative_eq!(d.poly.eval(&z, rho2, &lifts), want, epsilon = 1e-14);
        // ∂_s²Φ = s^{-n-2}[n(n+1)L0 - 2π(2n+3)ρ²L1 + 4π²ρ⁴L2]
        let d2 = d.ds();
        let nf = n as f64;
        let want2 = nf * (nf + 1.0) * lifts[0] - 2.0 * PI * (2.0 * nf + 3.0) * rho2 * lifts[1]
            + 4.0 * PI * PI * rho2 * rho2 * lifts[2];
        assert_relative_eq!(d2.poly.eval(&z, rho2, &lifts), want2, epsilon = 1e-12);
        // ∂_s∂_jΦ = s^{-n-2} z_j [2π(n+2)L1 - 4π²ρ²L2]
        let d3 = Scaled::base(n).ds().du(1);
        let want3 = z[1] * (2.0 * PI * (nf + 2.0) * lifts[1] - 4.0 * PI * PI * rho2 * lifts[2]);
        assert_relative_eq!(d3.poly.eval(&z, rho2, &lifts), want3, epsilon = 1e-12);
    }

    #[test]
    fn symbolic_derivatives_match_finite_differences() {
        let spec = StableSpec::pure(1.5, 2).unwrap();
        let prof = RadialProfile::shared(&spec).unwrap();
        let phi = |u: &[f64], s: f64| prof.scaled_value(u, s);
        let eval = |d: &Scaled, u: &[f64], s: f64| {
            let z: Vec<f64> = u.iter().map(|v| v / s).collect();
            let rho = (z[0] * z[0] + z[1] * z[1]).sqrt();
            let mut l = [0.0; LIFTS];
            lifts_at(&prof, 3, rho, &mut l);
            s.powi(d.pow) * d.poly.eval(&z, rho * rho, &l)
        };
        let u = [0.7, -0.4];
        let s = 1.3;
        let h = 1e-4;
        let fd_s = (phi(&u, s + h) - phi(&u, s - h)) / (2.0 * h);
        assert_relative_eq!(eval(&Scaled::base(2).ds(), &u, s), fd_s, max_relative = 1e-6);
        let up = [u[0] + h, u[1]];
        let um = [u[0] - h, u[1]];
        let dsd = Scaled::base(2).ds();
        let fd = (eval(&dsd, &up, s) - eval(&dsd, &um, s)) / (2.0 * h);
        assert_relative_eq!(eval(&dsd.du(0), &u, s), fd, max_relative = 1e-6);
    }

    #[test]
    fn zero_entry_and_diagonal() {
        let spec = cauchy(1);
        let z = Entry::Const(0.0);
        assert_eq!(kernel_entry_semigroup(&spec, &z, 0, 1, &[1.0]).unwrap().value, 0.0);
        assert!(matches!(
            kernel_entry_semigroup(&spec, &Entry::Const(1.0), 0, 1, &[0.0]),
            Err(Error::Singular(_))
        ));
        let zero = MatrixSymbol::zero(1).unwrap();
        assert_eq!(kernel_full(&spec, &zero, &[1.0], &[0.0]).unwrap().value, 0.0);
    }

    #[test]
    fn riesz_kernel_is_hilbert() {
        let spec = cauchy(1);
        let a1 = MatrixSymbol::riesz(1, 1).unwrap();
        for &(x, xt) in &[(1.0, 0.0), (0.3, 1.0), (-2.0, 5.0)] {
            let k = kernel_full(&spec, &a1, &[x], &[xt]).unwrap();
            assert_relative_eq!(k.value, 1.0 / (PI * (x - xt)), max_relative = 1e-9);
        }
    }

    #[test]
    fn spatial_entry_vanishes_in_one_dimension() {
        // -∂²Φ integrates to a multiple of δ; off the diagonal it is zero.
        let spec = StableSpec::pure(0.7, 1).unwrap();
        let k = kernel_entry_semigroup(&spec, &Entry::Const(1.0), 0, 0, &[1.0]).unwrap();
        assert!(k.value.abs() < 1e-9, "{k:?}");
    }

    #[test]
    fn second_order_riesz_kernel_two_dims() {
        // For α = 2 the collapsed potential is ∫2y φ_{√2 y} dy = -log|u|/(4π) + C,
        // so -∂_1∂_1 of it gives (u_2² - u_1²)/(4π|u|⁴) per unit entry.
        let spec = StableSpec::pure(2.0, 2).unwrap();
        let u = [0.6, 0.8];
        let k = kernel_entry_semigroup(&spec, &Entry::Const(1.0), 0, 0, &u).unwrap();
        assert_relative_eq!(k.value, (u[1] * u[1] - u[0] * u[0]) / (4.0 * PI), max_relative = 1e-8);
    }

    #[test]
    fn homogeneity_and_symmetry() {
        for &alpha in &[0.7, 1.0, 1.5, 2.0] {
            let spec = StableSpec::pure(alpha, 2).unwrap();
            let a = MatrixSymbol::new(
                2,
                &[
                    (0, 1, Entry::Const(1.0)),
                    (2, 0, Entry::Const(0.5)),
                    (0, 2, Entry::Const(-0.3)),
                    (2, 2, Entry::Const(1.0)),
                ],
                "mix",
            )
            .unwrap();
            let u = [0.6, -0.3];
            let base = kernel_full(&spec, &a, &u, &[0.0, 0.0]).unwrap().value;
            for &lam in &[0.5, 2.0, 4.0] {
                let x = [lam * u[0], lam * u[1]];
                let v = kernel_full(&spec, &a, &x, &[0.0, 0.0]).unwrap().value;
                assert_relative_eq!(v * lam * lam, base, max_relative = 1e-8);
            }
        }
        let spec = cauchy(2);
        let e = Entry::Const(1.0);
        let k1 = kernel_entry_semigroup(&spec, &e, 1, 1, &[0.4, 0.9]).unwrap().value;
        let k2 = kernel_entry_semigroup(&spec, &e, 1, 1, &[-0.4, -0.9]).unwrap().value;
        assert_relative_eq!(k1, k2, max_relative = 1e-12);
    }

    #[test]
    fn vertical_entry_is_pure_delta() {
        // C_nn integrates to zero off the diagonal: its multiplier is constant.
        for &alpha in &[0.7, 1.0, 2.0] {
            let spec = StableSpec::pure(alpha, 1).unwrap();
            let k = kernel_entry_semigroup(&spec, &Entry::Const(1.0), 1, 1, &[1.3]).unwrap();
            assert!(k.value.abs() < 1e-8, "alpha {alpha}: {k:?}");
        }
    }

    #[test]
    fn general_route_matches_semigroup_for_constants() {
        let spec = cauchy(1);
        let e = Entry::Const(1.0);
        // Compare an entry with a nonzero kernel: the y-dependent variant.
        let ey = Entry::Fy {
            expr: FyExpr::ExpNegY,
            scale: 1.0,
        };
        for a in [&e, &ey] {
            let s = kernel_entry_semigroup(&spec, a, 0, 0, &[1.0]).unwrap();
            let g = kernel_entry_general(&spec, a, 0, 0, &[1.0], &[0.0]).unwrap();
            assert!((s.value - g.value).abs() < 1e-7, "{s:?} vs {g:?}");
        }
    }

    #[test]
    fn y_dependent_entry_has_kink_handled() {
        let spec = cauchy(1);
        let a = MatrixSymbol::new(
            1,
            &[
                (
                    1,
                    0,
                    Entry::Fy {
                        expr: FyExpr::IndicatorYLt1,
                        scale: 1.0,
                    },
                ),
                (
                    0,
                    1,
                    Entry::Fy {
                        expr: FyExpr::IndicatorYLt1,
                        scale: -1.0,
                    },
                ),
            ],
            "cut_riesz",
        )
        .unwrap();
        // Cutting y at 1 only removes the large-scale part: close to 1/(πu)
        // for small u, much smaller than it for large u.
        let small = kernel_full(&spec, &a, &[0.01], &[0.0]).unwrap().value;
        assert_relative_eq!(small, 1.0 / (PI * 0.01), max_relative = 1e-3);
        let large = kernel_full(&spec, &a, &[100.0], &[0.0]).unwrap().value;
        assert!(large.abs() < 1e-3 / (PI * 100.0));
    }

    #[test]
    fn constants_are_direction_free_and_bound_the_kernel() {
        let spec = cauchy(2);
        let d1 = [1.0, 0.0];
        let d2 = [0.6, 0.8];
        for &(i, j) in &[(0, 0), (0, 1), (2, 0), (2, 2)] {
            let a = size_constant(&spec, i, j, &d1, Route::Semigroup).unwrap();
            let b = size_constant(&spec, i, j, &d2, Route::Semigroup).unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-8);
            let s1 = smoothness_constant(&spec, i, j, 0, &d1, Route::Semigroup).unwrap();
            let s2 = smoothness_constant(&spec, i, j, 1, &d2, Route::Semigroup).unwrap();
            assert_relative_eq!(s1, s2, max_relative = 1e-8);
            assert!(a.is_finite() && a > 0.0 && s1.is_finite() && s1 > 0.0);
        }
        let a1 = MatrixSymbol::riesz(1, 1).unwrap();
        let spec1 = cauchy(1);
        let (ks, km) = symbol_constants(&spec1, &a1).unwrap();
        assert!(ks >= 1.0 / PI);
        let grad = kernel_gradient_semigroup(&spec1, &a1, &[1.0]).unwrap();
        assert_relative_eq!(grad[0], -1.0 / PI, max_relative = 1e-8);
        assert!(km >= 1.0 / PI);
    }

    #[test]
    fn general_constants_one_dimension() {
        let spec = cauchy(1);
        let s = size_constant(&spec, 0, 0, &[1.0], Route::General).unwrap();
        let s2 = size_constant(&spec, 0, 0, &[-1.0], Route::General).unwrap();
        assert!(s.is_finite() && s > 0.0);
        assert_relative_eq!(s, s2, max_relative = 1e-6);
        let m = smoothness_constant(&spec, 0, 0, 0, &[1.0], Route::General).unwrap();
        assert!(m.is_finite() && m > 0.0);
        let e = Entry::Fxy {
            expr: FxyExpr::CosX1,
            scale: 1.0,
        };
        for &(x, xt) in &[(0.3, -0.5), (2.0, 1.0)] {
            let k = kernel_entry_general(&spec, &e, 0, 0, &[x], &[xt]).unwrap();
            assert!(k.value.abs() * (x - xt as f64).abs() <= s * (1.0 + 1e-6));
        }
    }

    #[test]
    fn gradients_agree() {
        let spec = StableSpec::pure(1.5, 2).unwrap();
        let a = MatrixSymbol::new(2, &[(2, 1, Entry::Const(1.0)), (0, 0, Entry::Const(-1.0))], "m").unwrap();
        let x = [0.5, 0.7];
        let fd = kernel_gradient_fd(&spec, &a, &x, &[0.0, 0.0]).unwrap();
        let an = kernel_gradient_semigroup(&spec, &a, &x).unwrap();
        for k in 0..2 {
            assert_relative_eq!(fd[k], an[k], max_relative = 1e-6);
        }
    }

    #[test]
    fn relativistic_rejected() {
        let spec = StableSpec::relativistic(1.0, 1, 1.0).unwrap();
        let r = kernel_entry_semigroup(&spec, &Entry::Const(1.0), 0, 1, &[1.0]);
        assert!(matches!(r, Err(Error::Unsupported(_))));
    }
}
