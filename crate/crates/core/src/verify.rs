//! Report suites bundling the quantitative checks.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::density::{decay_constants, ProfileOptions, RadialProfile, StableKind, StableSpec};
use crate::error::{invalid, Error, Result};
use crate::grid::{Geometry, SampledField};
use crate::kernel::{kernel_full, kernel_gradient_fd, symbol_constants};
use crate::multiplier::{lp_integrals, tabulate};
use crate::operator::{apply_multiplier, battery, lp_ratio, normalized_bump, p_star, weak_profile};
use crate::quad::geomspace;
use crate::subordinator::{check_etabound, check_fourierray, check_growth, default_s_grid};
use crate::symbol::MatrixSymbol;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    pub pass: bool,
    /// Sample point, field or parameter where the value was attained.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
}

impl Check {
    fn new(name: impl Into<String>, value: f64, bound: Option<f64>, pass: bool) -> Self {
        Check { name: name.into(), value, bound, pass, witness: None }
    }

    fn at(mut self, witness: impl Into<String>) -> Self {
        self.witness = Some(witness.into());
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub schema_version: u32,
    pub suite: String,
    pub spec: StableSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub symbol: Option<String>,
    pub constants: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub pass: bool,
    pub runtime_seconds: f64,
}

impl VerificationReport {
    fn new(suite: &str, spec: &StableSpec, sym: Option<&MatrixSymbol>) -> Self {
        VerificationReport {
            schema_version: SCHEMA_VERSION,
            suite: suite.into(),
            spec: *spec,
            symbol: sym.map(|s| s.id().to_string()),
            constants: BTreeMap::new(),
            checks: Vec::new(),
            pass: false,
            runtime_seconds: 0.0,
        }
    }

    fn finish(mut self, start: Instant) -> Self {
        self.pass = self.checks.iter().all(|c| c.pass);
        self.runtime_seconds = start.elapsed().as_secs_f64();
        self
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn constant(&self, key: &str) -> Option<f64> {
        self.constants.get(key).copied()
    }
}

fn fmt_point(p: &[f64]) -> String {
    let parts: Vec<String> = p.iter().map(|v| format!("{v:.6}")).collect();
    format!("({})", parts.join(", "))
}

#[derive(Debug, Clone)]
pub struct CzOptions {
    /// Dyadic exponents of the base radius range.
    pub radii: (i32, i32),
    /// Most dyadic levels added on each side while the suprema still grow.
    pub max_extension: i32,
    pub directions: usize,
    /// A supremum counts as settled once one more level on each side raises
    /// it by at most this fraction.
    pub stability: f64,
}

impl Default for CzOptions {
    fn default() -> Self {
        CzOptions { radii: (-3, 3), max_extension: 10, directions: 8, stability: 0.01 }
    }
}

#[derive(Debug, Clone, Copy)]
struct Sample {
    size: f64,
    smooth: f64,
}

fn directions(n: usize, count: usize) -> Vec<Vec<f64>> {
    if n == 1 {
        return vec![vec![1.0], vec![-1.0]];
    }
    // Off the lattice axes so axis-aligned cancellations are not all we see.
    (0..count)
        .map(|k| {
            let t = 2.0 * PI * (k as f64 + 0.137) / count as f64;
            vec![t.cos(), t.sin()]
        })
        .collect()
}

/// Base points `x̃`: the origin alone for x-independent symbols, a spread of
/// points otherwise.
fn base_points(n: usize, sym: &MatrixSymbol) -> Vec<Vec<f64>> {
    if sym.is_x_independent() {
        return vec![vec![0.0; n]];
    }
    [0.0, 0.37, -1.1, 2.3].iter().map(|&s| (0..n).map(|k| s * (1.0 - 0.4 * k as f64)).collect()).collect()
}

type Sampled = Vec<(Vec<f64>, Sample)>;

fn sample_level(spec: &StableSpec, sym: &MatrixSymbol, k: i32, dirs: &[Vec<f64>], bases: &[Vec<f64>]) -> Result<Sampled> {
    let n = spec.dim;
    let r = 2f64.powi(k);
    let jobs: Vec<(Vec<f64>, Vec<f64>)> = dirs
        .iter()
        .flat_map(|d| bases.iter().map(move |b| (b.iter().zip(d).map(|(bi, di)| bi + r * di).collect(), b.clone())))
        .collect();
    jobs.into_par_iter()
        .map(|(x, b)| {
            if sym.is_zero() {
                return Ok((x, Sample { size: 0.0, smooth: 0.0 }));
            }
            let kv = kernel_full(spec, sym, &x, &b)?.value;
            let g = kernel_gradient_fd(spec, sym, &x, &b)?;
            let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            Ok((x, Sample { size: r.powi(n as i32) * kv.abs(), smooth: r.powi(n as i32 + 1) * gn }))
        })
        .collect()
}

fn supremum<'a>(samples: impl Iterator<Item = &'a (Vec<f64>, Sample)>, pick: fn(&Sample) -> f64) -> (f64, Option<&'a Vec<f64>>) {
    samples.fold((0.0, None), |(m, w), (x, s)| if pick(s) > m { (pick(s), Some(x)) } else { (m, w) })
}

/// Measured `κ_size = sup |u|ⁿ|K|` and `κ_smooth = sup |u|^{n+1}|∇_xK|` over
/// dyadic radii and directions.
///
/// The radius range grows one level per side until neither supremum rises by
/// more than the stability fraction; a supremum still rising after
/// `max_extension` levels fails the suite.
pub fn suite_cz_bounds(spec: &StableSpec, sym: &MatrixSymbol, opts: &CzOptions) -> Result<VerificationReport> {
    let start = Instant::now();
    let n = spec.dim;
    if sym.dim() != n {
        return Err(Error::Geometry("symbol and spec dimensions differ".into()));
    }
    if opts.radii.0 > opts.radii.1 || opts.max_extension < 1 {
        return Err(invalid("radius range must be nonempty and the extension at least one level"));
    }
    let mut report = VerificationReport::new("cz_bounds", spec, Some(sym));
    let dirs = directions(n, opts.directions);
    let bases = base_points(n, sym);
    let bounds = if sym.is_x_independent() && !sym.is_zero() { Some(symbol_constants(spec, sym)?) } else { None };
    // Kernels that vanish off the diagonal leave quadrature noise only.
    let floor = 1e-7 * bounds.map_or(sym.norm(), |b| b.0.max(b.1));
    let mut samples: Sampled = Vec::new();
    for k in opts.radii.0..=opts.radii.1 {
        samples.extend(sample_level(spec, sym, k, &dirs, &bases)?);
    }
    let size = |s: &Sample| s.size;
    let smooth = |s: &Sample| s.smooth;
    let base = (supremum(samples.iter(), size).0, supremum(samples.iter(), smooth).0);
    let mut current = base;
    let mut levels = 0;
    let mut settled = false;
    while levels < opts.max_extension {
        levels += 1;
        samples.extend(sample_level(spec, sym, opts.radii.0 - levels, &dirs, &bases)?);
        samples.extend(sample_level(spec, sym, opts.radii.1 + levels, &dirs, &bases)?);
        let next = (supremum(samples.iter(), size).0, supremum(samples.iter(), smooth).0);
        let grew = |a: f64, b: f64| b > a * (1.0 + opts.stability) + floor;
        let done = !grew(current.0, next.0) && !grew(current.1, next.1);
        current = next;
        if done {
            settled = true;
            break;
        }
    }
    report.constants.insert("extension_levels".into(), levels as f64);
    for (label, pick, b) in [("kappa_size", size as fn(&Sample) -> f64, base.0), ("kappa_smooth", smooth, base.1)] {
        let (wide, witness) = supremum(samples.iter(), pick);
        report.constants.insert(format!("{label}_base_range"), b);
        report.constants.insert(label.into(), wide);
        let mut c = Check::new(format!("{label}_range_stable"), wide, None, wide.is_finite() && settled);
        if let Some(w) = witness {
            c = c.at(fmt_point(w));
        }
        report.checks.push(c);
    }
    if let Some((bound_size, bound_smooth)) = bounds {
        // The entry constants bound every sample.
        report.constants.insert("kappa_size_bound".into(), bound_size);
        report.constants.insert("kappa_smooth_bound".into(), bound_smooth);
        let ms = current.0;
        let mg = current.1;
        report.checks.push(Check::new("kappa_size_below_entry_bound", ms, Some(bound_size), ms <= bound_size * (1.0 + 1e-3)));
        report.checks.push(Check::new("kappa_smooth_below_entry_bound", mg, Some(bound_smooth), mg <= bound_smooth * (1.0 + 1e-3)));
    }
    Ok(report.finish(start))
}

/// Littlewood–Paley constants, the implied `L²` constant, the multiplier
/// supremum and the measured `‖T_Af‖₂/‖f‖₂` over the battery.
pub fn suite_l2(spec: &StableSpec, sym: &MatrixSymbol, fields: &[SampledField]) -> Result<VerificationReport> {
    let start = Instant::now();
    let mut report = VerificationReport::new("l2", spec, Some(sym));
    let lp = lp_integrals(spec)?;
    let implied = lp.bound();
    let norm = sym.norm();
    report.constants.insert("lp_integral_ss".into(), lp.ss);
    report.constants.insert("lp_integral_sv".into(), lp.sv);
    report.constants.insert("lp_integral_vv".into(), lp.vv);
    report.constants.insert("lp_spatial_ray_integral".into(), check_fourierray(spec)?);
    report.constants.insert("implied_c".into(), implied);
    report.constants.insert("symbol_norm".into(), norm);
    let Some(first) = fields.first() else {
        return Err(invalid("empty battery"));
    };
    let table = tabulate(spec, sym, &first.geometry)?;
    let m_sup = table.sup();
    report.constants.insert("multiplier_sup".into(), m_sup);
    report.checks.push(Check::new("multiplier_sup_bound", m_sup, Some(implied * norm), m_sup <= implied * norm * (1.0 + 1e-9)));
    let mut worst: f64 = 0.0;
    for f in fields {
        let table = if f.geometry == first.geometry { table.clone() } else { tabulate(spec, sym, &f.geometry)? };
        let tf = apply_multiplier(f, &table)?;
        let ratio = lp_ratio(&tf, f, 2.0)?;
        worst = worst.max(ratio);
        report.checks.push(
            Check::new(format!("l2_ratio_{}", f.name), ratio, Some(implied * norm), ratio <= implied * norm * (1.0 + 1e-9))
                .at(f.name.clone()),
        );
    }
    report.constants.insert("l2_ratio_max".into(), worst);
    Ok(report.finish(start))
}

#[derive(Debug, Clone)]
pub struct StrongWeakOptions {
    pub p_list: Vec<f64>,
    pub lambda_grid: Vec<f64>,
    /// Discretization slack on the `(p∗−1)‖A‖` bound.
    pub slack: f64,
    pub weak_widths: Vec<f64>,
    pub weak_geometry: Geometry,
    /// Allowed growth between consecutive widths.
    pub noise_band: f64,
}

impl StrongWeakOptions {
    pub fn for_dim(dim: usize) -> Result<Self> {
        let weak_geometry = if dim == 1 { Geometry::new(1, 64.0, 16384)? } else { Geometry::new(2, 4.0, 1024)? };
        Ok(StrongWeakOptions {
            p_list: vec![1.5, 2.0, 3.0, 4.0],
            lambda_grid: geomspace(0.05, 100.0, 60),
            slack: 0.05,
            weak_widths: vec![0.2, 0.1, 0.05],
            weak_geometry,
            noise_band: 0.1,
        })
    }
}

pub fn suite_strong_weak(
    spec: &StableSpec,
    sym: &MatrixSymbol,
    fields: &[SampledField],
    opts: &StrongWeakOptions,
) -> Result<VerificationReport> {
    let start = Instant::now();
    let mut report = VerificationReport::new("strong_weak", spec, Some(sym));
    let norm = sym.norm();
    for &p in &opts.p_list {
        report.constants.insert(format!("p_star_minus_one_{p}"), p_star(p)? - 1.0);
    }
    let images: Vec<SampledField> = fields
        .iter()
        .map(|f| apply_multiplier(f, &*tabulate(spec, sym, &f.geometry)?))
        .collect::<Result<_>>()?;
    for &p in &opts.p_list {
        let bound = (p_star(p)? - 1.0) * norm * (1.0 + opts.slack);
        let mut worst = (0.0f64, String::new());
        for (f, tf) in fields.iter().zip(&images) {
            let r = lp_ratio(tf, f, p)?;
            if r >= worst.0 {
                worst = (r, f.name.clone());
            }
        }
        report.constants.insert(format!("lp_ratio_max_{p}"), worst.0);
        report.checks.push(Check::new(format!("strong_type_p{p}"), worst.0, Some(bound), worst.0 <= bound).at(worst.1));
    }
    let table = tabulate(spec, sym, &opts.weak_geometry)?;
    let mut sups = Vec::with_capacity(opts.weak_widths.len());
    for &w in &opts.weak_widths {
        let f = normalized_bump(&opts.weak_geometry, w)?;
        let tf = apply_multiplier(&f, &table)?;
        let profile = weak_profile(&tf, &f, &opts.lambda_grid)?;
        let v = profile.iter().cloned().fold(0.0, f64::max);
        report.constants.insert(format!("weak_sup_w{w}"), v);
        sups.push(v);
    }
    for k in 1..sups.len() {
        let limit = sups[k - 1] * (1.0 + opts.noise_band);
        report.checks.push(
            Check::new(format!("weak_no_growth_w{}", opts.weak_widths[k]), sups[k], Some(limit), sups[k] <= limit + 1e-300)
                .at(format!("width {}", opts.weak_widths[k])),
        );
    }
    Ok(report.finish(start))
}

/// Decay constants (and their stability under doubling the table radius),
/// subordinator tail and growth, and the Fourier-ray integral.
pub fn suite_corollaries(spec: &StableSpec) -> Result<VerificationReport> {
    let start = Instant::now();
    let mut report = VerificationReport::new("corollaries", spec, None);
    let opts = ProfileOptions::default();
    let base = decay_constants(&RadialProfile::build_with(spec, opts)?)?;
    let wide = decay_constants(&RadialProfile::build_with(spec, ProfileOptions { r_max: 2.0 * opts.r_max, ..opts })?)?;
    for (k, (a, b)) in [(base.c0, wide.c0), (base.c1, wide.c1), (base.c2, wide.c2)].into_iter().enumerate() {
        report.constants.insert(format!("decay_c{k}"), a);
        let rel = (b - a).abs() / a.abs().max(1e-300);
        report.checks.push(
            Check::new(format!("decay_c{k}_stable"), rel, Some(0.01), a.is_finite() && a > 0.0 && rel <= 0.01)
                .at(format!("r_max {} vs {}", opts.r_max, 2.0 * opts.r_max)),
        );
    }
    let ray = check_fourierray(spec)?;
    report.constants.insert("fourierray".into(), ray);
    report.checks.push(Check::new("fourierray_finite", ray, None, ray.is_finite() && ray > 0.0));
    if spec.is_self_similar() && (spec.alpha == 1.0 || spec.alpha == 2.0) {
        let exact = 1.0 / (16.0 * PI * PI);
        let rel = (ray - exact).abs() / exact;
        report.checks.push(Check::new("fourierray_closed_form", rel, Some(1e-8), rel <= 1e-8));
    }
    if let Some(sub) = spec.subordinator() {
        let eta = check_etabound(&sub, &default_s_grid())?;
        let growth = check_growth(&sub);
        report.constants.insert("etabound".into(), eta);
        report.constants.insert("growth_slope".into(), growth);
        report.checks.push(Check::new("etabound_finite", eta, None, eta.is_finite() && eta > 0.0));
        report.checks.push(Check::new("growth_positive", growth, None, growth.is_finite() && growth > 0.0));
        if let StableKind::Relativistic { mass } = spec.kind {
            let pure = StableSpec::pure(spec.alpha, spec.dim)?;
            let pure_eta = check_etabound(&pure.subordinator().ok_or_else(|| invalid("no subordinator"))?, &default_s_grid())?;
            report.constants.insert("etabound_pure".into(), pure_eta);
            // The tempering factor only lowers the tail.
            report.checks.push(
                Check::new("etabound_tempered_below_pure", eta, Some(pure_eta * (1.0 + 1e-9)), eta <= pure_eta * (1.0 + 1e-9))
                    .at(format!("mass {mass}")),
            );
            let massless = StableSpec::relativistic(spec.alpha, spec.dim, 0.0)?;
            let d = (check_fourierray(&massless)? - check_fourierray(&pure)?).abs();
            report.checks.push(Check::new("massless_reduction", d, Some(0.0), d == 0.0));
        }
    } else {
        report.constants.insert("gaussian_case".into(), 1.0);
    }
    Ok(report.finish(start))
}

/// Every suite that applies to `(spec, sym)`; the operator suites need an
/// x-independent symbol.
pub fn verify_all(spec: &StableSpec, sym: &MatrixSymbol, seed: u64) -> Result<Vec<VerificationReport>> {
    let mut out = vec![suite_cz_bounds(spec, sym, &CzOptions::default())?];
    if sym.is_x_independent() && spec.is_self_similar() {
        let geo = Geometry::default_for(spec.dim)?;
        let fields = battery(&geo, seed)?;
        out.push(suite_l2(spec, sym, &fields)?);
        out.push(suite_strong_weak(spec, sym, &fields, &StrongWeakOptions::for_dim(spec.dim)?)?);
    }
    out.push(suite_corollaries(spec)?);
    Ok(out)
}
