//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::Instant;

use num_complex::Complex64;

use stable_cz::density::{decay_constants, eval_density_fourier, eval_density_subordination, ProfileOptions, RadialProfile};
use stable_cz::kernel::kernel_full;
use stable_cz::montecarlo::{check_duality, check_norm_preservation, run_paths, PathConfig};
use stable_cz::multiplier::{beurling_multiplier, compute_multiplier, riesz_multiplier, MultiplierTable, SIGMA};
use stable_cz::operator::{apply_multiplier, battery, beurling_apply, beurling_table};
use stable_cz::quad::geomspace;
use stable_cz::subordinator::{check_etabound, check_fourierray, laplace_residuals, SubordinatorSpec};
use stable_cz::symbol::{Entry, FxyExpr, FyExpr};
use stable_cz::verify::{suite_cz_bounds, suite_strong_weak, CzOptions, StrongWeakOptions, VerificationReport};
use stable_cz::{Geometry, MatrixSymbol, SampledField, StableSpec};

/// Pass flag plus a one-line summary of the measured numbers.
struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn pure(alpha: f64, n: usize) -> StableSpec {
    StableSpec::pure(alpha, n).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Points at radius `r` for the given dimension, turning with the index so
/// that n = 2 samples many directions.
fn point(n: usize, r: f64, k: usize) -> Vec<f64> {
    if n == 1 {
        vec![if k % 2 == 0 { r } else { -r }]
    } else {
        let t = 0.37 * k as f64;
        vec![r * t.cos(), r * t.sin()]
    }
}

fn gaussian_density(n: usize, r: f64) -> f64 {
    (4.0 * PI).powf(-(n as f64) / 2.0) * (-r * r / 4.0).exp()
}

fn cauchy_density(n: usize, r: f64) -> f64 {
    let h = (n as f64 + 1.0) / 2.0;
    let c = if n == 1 { 1.0 / PI } else { 1.0 / (2.0 * PI) };
    c * (1.0 + r * r).powf(-h)
}

fn density_closed_forms() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for n in [1, 2] {
        for k in 0..100 {
            let r = 6.0 * k as f64 / 99.0;
            let x = point(n, r, k);
            worst = worst.max(rel(eval_density_fourier(&pure(2.0, n), &x).unwrap(), gaussian_density(n, r)));
            worst = worst.max(rel(eval_density_fourier(&pure(1.0, n), &x).unwrap(), cauchy_density(n, r)));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst <= 1e-8 && secs < 10.0, format!("max rel err {worst:.2e} (tol 1e-8), {secs:.1}s (limit 10s)"))
}

fn route_agreement() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for alpha in [0.5, 1.0, 1.5] {
        for n in [1, 2] {
            let s = pure(alpha, n);
            for k in 0..41 {
                let x = point(n, 10.0 * k as f64 / 40.0, k);
                let a = eval_density_subordination(&s, &x).unwrap();
                let b = eval_density_fourier(&s, &x).unwrap();
                worst = worst.max(rel(a, b));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst <= 1e-6 && secs < 120.0, format!("max rel gap {worst:.2e} (tol 1e-6), {secs:.1}s (limit 120s)"))
}

fn decay() -> Outcome {
    let mut pass = true;
    let mut worst: f64 = 0.0;
    let mut cauchy_c0 = f64::NAN;
    for alpha in [0.7, 1.0, 1.5] {
        for n in [1, 2] {
            let s = pure(alpha, n);
            let opts = ProfileOptions::default();
            let a = decay_constants(&RadialProfile::build_with(&s, opts).unwrap()).unwrap();
            let b = decay_constants(&RadialProfile::build_with(&s, ProfileOptions { r_max: 2.0 * opts.r_max, ..opts }).unwrap())
                .unwrap();
            for (x, y) in [(a.c0, b.c0), (a.c1, b.c1), (a.c2, b.c2)] {
                let d = rel(y, x);
                pass &= x.is_finite() && x > 0.0 && d <= 0.01;
                worst = worst.max(d);
            }
            if alpha == 1.0 && n == 1 {
                cauchy_c0 = a.c0;
            }
        }
    }
    let c0_err = rel(cauchy_c0, 1.0 / PI);
    pass &= c0_err <= 1e-6;
    outcome(pass, format!("max change under r_max doubling {worst:.2e} (tol 1e-2); Cauchy c0 rel err {c0_err:.2e} (tol 1e-6)"))
}

fn frequencies(n: usize) -> Vec<Vec<f64>> {
    let radii = geomspace(1e-2, 3e2, 20);
    radii.iter().enumerate().map(|(k, &r)| point(n, r, 2 * k + 1)).chain(radii.iter().enumerate().map(|(k, &r)| point(n, r, 2 * k))).collect()
}

fn multiplier_closed_forms() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut sigmas = Vec::new();
    for n in [1, 2] {
        let s1 = pure(1.0, n);
        let id = MatrixSymbol::identity(n).unwrap();
        for xi in frequencies(n) {
            worst = worst.max((compute_multiplier(&s1, &id, &xi).unwrap() - 1.0).norm());
            for j in 1..=n {
                if xi[j - 1].abs() < 1e-3 * xi.iter().map(|v| v.abs()).fold(0.0, f64::max) {
                    continue;
                }
                let m = compute_multiplier(&s1, &MatrixSymbol::riesz(j, n).unwrap(), &xi).unwrap();
                let base = riesz_multiplier(j, &xi).unwrap();
                // Fit the sign point by point, then demand a single one.
                sigmas.push((m / base).re);
                worst = worst.max((m - base * SIGMA).norm());
            }
        }
        let s2 = pure(2.0, n);
        for i in 1..=n {
            for j in 1..=n {
                let a = MatrixSymbol::riesz2(i, j, n).unwrap();
                for xi in frequencies(n) {
                    let r2: f64 = xi.iter().map(|v| v * v).sum();
                    let want = Complex64::new(-xi[i - 1] * xi[j - 1] / (2.0 * r2), 0.0);
                    worst = worst.max((compute_multiplier(&s2, &a, &xi).unwrap() - want).norm());
                }
            }
        }
    }
    let spread = sigmas.iter().map(|s| (s - sigmas[0]).abs()).fold(0.0, f64::max);
    let sigma = sigmas[0].round();
    let pass = worst <= 1e-8 && spread <= 1e-8 && sigma == SIGMA;
    outcome(pass, format!("max abs err {worst:.2e} (tol 1e-8); global sigma {sigma:+} from {} fits, spread {spread:.1e}", sigmas.len()))
}

fn constant_symbols(n: usize) -> Vec<MatrixSymbol> {
    let v = n;
    let mix = MatrixSymbol::new(
        n,
        &[(0, v, Entry::Const(1.0)), (v, 0, Entry::Const(0.5)), (0, 0, Entry::Const(-0.3)), (v, v, Entry::Const(0.8))],
        "mixed",
    )
    .unwrap();
    let mut out = vec![MatrixSymbol::riesz(1, n).unwrap(), mix];
    if n == 2 {
        out.push(MatrixSymbol::riesz2(1, 2, 2).unwrap());
        out.push(MatrixSymbol::riesz2(2, 2, 2).unwrap());
    }
    out
}

fn kernel_homogeneity() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for alpha in [0.7, 1.0, 1.5, 2.0] {
        for n in [1, 2] {
            let s = pure(alpha, n);
            for sym in constant_symbols(n) {
                for d in 0..3 {
                    let u = point(n, 1.0, 3 * d + 1);
                    let at = |r: f64| {
                        let x: Vec<f64> = u.iter().map(|c| r * c).collect();
                        r.powi(n as i32) * kernel_full(&s, &sym, &x, &vec![0.0; n]).unwrap().value
                    };
                    let base = at(1.0);
                    if base.abs() < 1e-9 {
                        continue;
                    }
                    cases += 1;
                    for k in -3..=3 {
                        worst = worst.max(rel(at(2f64.powi(k)), base));
                    }
                }
            }
        }
    }
    let cz = suite_cz_bounds(&pure(1.0, 1), &MatrixSymbol::riesz(1, 1).unwrap(), &CzOptions::default()).unwrap();
    let kappa = cz.constant("kappa_size").unwrap();
    let k_err = rel(kappa, 1.0 / PI);
    outcome(
        worst <= 1e-5 && k_err <= 1e-3,
        format!("max rel spread {worst:.2e} over {cases} rays (tol 1e-5); kappa_size(A1) {kappa:.7} rel err {k_err:.1e} (tol 1e-3)"),
    )
}

fn y_dependent(n: usize) -> MatrixSymbol {
    let mut t: Vec<(usize, usize, Entry)> =
        (0..n).map(|i| (i, i, Entry::Fy { expr: FyExpr::YOverOnePlusY, scale: 1.0 })).collect();
    t.push((n, n, Entry::Fy { expr: FyExpr::ExpNegY, scale: 1.0 }));
    MatrixSymbol::new(n, &t, "ydep").unwrap()
}

fn indicator(n: usize) -> MatrixSymbol {
    MatrixSymbol::new(n, &[(0, n, Entry::Fy { expr: FyExpr::IndicatorYLt1, scale: 1.0 })], "indicator").unwrap()
}

fn cz_bounds() -> Outcome {
    let opts = CzOptions::default();
    let mut failed = Vec::new();
    let mut runs = 0;
    let mut check = |spec: &StableSpec, sym: &MatrixSymbol, need_stable_kappa: bool| {
        runs += 1;
        let r = suite_cz_bounds(spec, sym, &opts).unwrap();
        let ks = r.constant("kappa_size").unwrap();
        let kg = r.constant("kappa_smooth").unwrap();
        let finite = ks.is_finite() && kg.is_finite();
        if !(r.pass && finite && (!need_stable_kappa || ks > 0.0)) {
            let names: Vec<&str> = r.failures().map(|c| c.name.as_str()).collect();
            failed.push(format!("a={} n={} {} [{}]", spec.alpha, spec.dim, sym.id(), names.join(",")));
        }
    };
    for alpha in [0.7, 1.0, 1.5, 2.0] {
        for n in [1, 2] {
            let s = pure(alpha, n);
            let mut syms = constant_symbols(n);
            syms.push(MatrixSymbol::identity(n).unwrap());
            syms.push(y_dependent(n));
            syms.push(indicator(n));
            for sym in &syms {
                check(&s, sym, sym.id() != "identity");
            }
        }
        let lorentz = MatrixSymbol::new(1, &[(0, 0, Entry::Fxy { expr: FxyExpr::LorentzX1, scale: 1.0 })], "lorentz_x1").unwrap();
        check(&pure(alpha, 1), &lorentz, true);
    }
    outcome(failed.is_empty(), format!("{} of {runs} suites pass {}", runs - failed.len(), failed.join("; ")))
}

struct StrongWeakRun {
    label: String,
    in_scope: bool,
    report: VerificationReport,
}

fn strong_weak_runs() -> &'static [StrongWeakRun] {
    static RUNS: OnceLock<Vec<StrongWeakRun>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let mut out = Vec::new();
        for n in [1, 2] {
            let fields = battery(&Geometry::default_for(n).unwrap(), 11).unwrap();
            let opts = StrongWeakOptions::for_dim(n).unwrap();
            let mut syms: Vec<(f64, MatrixSymbol, bool)> = Vec::new();
            for j in 1..=n {
                syms.push((1.0, MatrixSymbol::riesz(j, n).unwrap(), true));
            }
            for (i, j) in [(1, 1), (1, n), (n, n)] {
                syms.push((1.0, MatrixSymbol::riesz2(i, j, n).unwrap(), true));
                syms.push((2.0, MatrixSymbol::riesz2(i, j, n).unwrap(), true));
            }
            syms.push((1.0, MatrixSymbol::identity(n).unwrap(), true));
            syms.push((2.0, MatrixSymbol::spatial_identity(n).unwrap(), true));
            // Vertical entries at α = 2 sit outside the space-time bound.
            syms.push((2.0, MatrixSymbol::riesz(1, n).unwrap(), false));
            syms.push((2.0, MatrixSymbol::identity(n).unwrap(), false));
            syms.dedup_by(|a, b| a.0 == b.0 && a.1.id() == b.1.id());
            for (alpha, sym, in_scope) in syms {
                let report = suite_strong_weak(&pure(alpha, n), &sym, &fields, &opts).unwrap();
                out.push(StrongWeakRun { label: format!("a={alpha} n={n} {}", sym.id()), in_scope, report });
            }
        }
        out
    })
}

fn strong_type() -> Outcome {
    let mut failed = Vec::new();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for run in strong_weak_runs() {
        for c in run.report.checks.iter().filter(|c| c.name.starts_with("strong_type")) {
            let ratio = c.value / c.bound.unwrap();
            if run.in_scope {
                count += 1;
                worst = worst.max(ratio * 1.05);
                if !c.pass {
                    failed.push(format!("{} {}", run.label, c.name));
                }
            } else if !c.pass {
                println!("      info: {} {} = {:.4} exceeds {:.4} (out of scope)", run.label, c.name, c.value, c.bound.unwrap());
            }
        }
    }
    outcome(
        failed.is_empty(),
        format!("{count} checks, worst ratio / ((p*-1)|A|) = {worst:.4} (limit 1.05) {}", failed.join("; ")),
    )
}

fn weak_type() -> Outcome {
    let mut failed = Vec::new();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for run in strong_weak_runs() {
        for c in run.report.checks.iter().filter(|c| c.name.starts_with("weak_no_growth")) {
            count += 1;
            worst = worst.max(c.value / (c.bound.unwrap() / 1.1));
            if !c.pass {
                failed.push(format!("{} {}", run.label, c.name));
            }
        }
    }
    outcome(failed.is_empty(), format!("{count} width steps, worst growth factor {worst:.4} (limit 1.10) {}", failed.join("; ")))
}

fn beurling() -> Outcome {
    let g = Geometry::new(2, 32.0, 512).unwrap();
    let s = pure(1.0, 2);
    let fields = battery(&g, 5).unwrap();
    let table = beurling_table(&s, &g).unwrap();
    let mut comp: f64 = 0.0;
    for f in &fields {
        let a = beurling_apply(f).unwrap();
        let b = apply_multiplier(f, &table).unwrap();
        let scale = f.sup().max(1e-300);
        comp = comp.max(a.values.iter().zip(&b.values).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max) / scale);
    }
    let mut wave: f64 = 0.0;
    for k in [[3.0, 0.0], [0.0, 3.0], [2.0, 5.0], [-7.0, 3.0], [11.0, -11.0], [1.0, 40.0]] {
        let f = SampledField::from_complex_fn(g, "wave", |x| Complex64::from_polar(1.0, 2.0 * PI * (k[0] * x[0] + k[1] * x[1]) / 32.0))
            .unwrap();
        let z = Complex64::new(k[0], -k[1]);
        let eig = z * z / z.norm_sqr();
        wave = wave.max((beurling_multiplier(&[k[0] / 32.0, k[1] / 32.0]).unwrap() - eig).norm());
        let out = beurling_apply(&f).unwrap();
        wave = wave.max(out.values.iter().zip(&f.values).map(|(o, v)| (o - v * eig).norm()).fold(0.0, f64::max));
    }
    outcome(
        comp <= 1e-10 && wave <= 1e-10,
        format!("composition vs direct {comp:.1e}, plane-wave eigenvalues {wave:.1e} on 512^2 (tol 1e-10)"),
    )
}

fn monte_carlo() -> Outcome {
    let g = Geometry::new(1, 64.0, 1024).unwrap();
    let s = pure(1.0, 1);
    let f = SampledField::from_fn(g, "f", |x| (-x[0] * x[0] / 2.0).exp()).unwrap();
    let h = SampledField::from_fn(g, "g", |x| (-(x[0] - 0.7) * (x[0] - 0.7) / 2.0).exp()).unwrap();
    let mut pass = true;
    let mut lines = Vec::new();
    for (seed, sym) in [MatrixSymbol::zero(1), MatrixSymbol::identity(1), MatrixSymbol::riesz(1, 1)].into_iter().enumerate() {
        let sym = sym.unwrap();
        let start = Instant::now();
        let cfg = PathConfig::background_radiation(16.0, 32.0, 100_000, 2024 + seed as u64);
        let e = run_paths(&cfg, &s, &sym, &f).unwrap();
        let d = check_duality(&e, &f, &h, &s, &sym).unwrap();
        let norm = check_norm_preservation(&e, &f, 2.0).unwrap();
        let secs = start.elapsed().as_secs_f64();
        let norm_z = (norm.monte_carlo - norm.grid) / norm.standard_error;
        pass &= d.pass && norm.pass && secs < 300.0;
        let mut line =
            format!("{}: z {:+.2}, norm z {:+.2}, {:.0}s", sym.id(), d.z_score, norm_z, secs);
        if sym.id() == "identity" {
            line += &format!(", calibration mc/quad {:.4}", d.monte_carlo / d.quadrature);
        }
        if sym.id().starts_with("riesz") {
            // Pin the sign against σ·iξ/|ξ| on the grid, independently of the
            // path multiplier. The flipped sign must be rejected.
            let table = MultiplierTable::from_fn(g, s, "sigma_riesz", |xi| Ok(riesz_multiplier(1, xi)? * SIGMA)).unwrap();
            let tf = apply_multiplier(&f, &table).unwrap();
            let pairing: f64 = tf.values.iter().zip(&h.values).map(|(a, b)| (a * b.conj()).re).sum::<f64>() * g.cell();
            let finite_height = (d.quadrature - d.full_range).abs();
            let z_sigma = (d.monte_carlo - pairing).abs() / d.standard_error;
            let z_flip = (d.monte_carlo + pairing).abs() / d.standard_error;
            let ok = (d.monte_carlo - pairing).abs() <= 3.0 * d.standard_error + finite_height && z_flip > 3.0;
            pass &= ok;
            line += &format!(", sigma {SIGMA:+} z {z_sigma:.2} vs flipped z {z_flip:.1}");
        }
        lines.push(line);
    }
    outcome(pass, lines.join("; "))
}

fn subordinator() -> Outcome {
    let mut lap: f64 = 0.0;
    for a in [0.25, 0.5, 0.75] {
        let s = SubordinatorSpec::pure(a).unwrap();
        for r in laplace_residuals(&s, &[0.1, 0.5, 1.0, 2.0, 4.0, 10.0]).unwrap() {
            lap = lap.max(r.residual);
        }
    }
    let half = SubordinatorSpec::pure(0.5).unwrap();
    let closed = |s: f64| 0.5 / PI.sqrt() * s.powf(-1.5) * (-0.25 / s).exp();
    let cf = geomspace(1e-2, 1e3, 200).into_iter().map(|s| rel(half.eta(s).unwrap(), closed(s))).fold(0.0, f64::max);
    // The supremum is approached as s grows, so the grid reaches far past 1e3.
    let eta = check_etabound(&half, &geomspace(1e-3, 1e7, 1000)).unwrap();
    let eta_wide = check_etabound(&half, &geomspace(1e-3, 1e8, 1100)).unwrap();
    let eta_err = rel(eta, 0.5 / PI.sqrt());
    let eta_stable = rel(eta_wide, eta) <= 1e-6;
    let mut massless = true;
    for a in [0.25, 0.5, 0.75] {
        let p = SubordinatorSpec::pure(a).unwrap();
        let r = SubordinatorSpec::new(a, 0.0).unwrap();
        for s in [0.01, 0.5, 3.0, 50.0] {
            massless &= p.eta(s).unwrap().to_bits() == r.eta(s).unwrap().to_bits();
            massless &= p.laplace_exponent(s).unwrap().to_bits() == r.laplace_exponent(s).unwrap().to_bits();
        }
    }
    for alpha in [0.5, 1.0, 1.5] {
        let p = pure(alpha, 2);
        let r = StableSpec::relativistic(alpha, 2, 0.0).unwrap();
        for x in [[0.0, 0.0], [0.3, 1.2], [4.0, -2.0]] {
            massless &= eval_density_subordination(&p, &x).unwrap().to_bits() == eval_density_subordination(&r, &x).unwrap().to_bits();
        }
    }
    let mut ray: f64 = 0.0;
    for alpha in [1.0, 2.0] {
        for n in [1, 2] {
            ray = ray.max(rel(check_fourierray(&pure(alpha, n)).unwrap(), 1.0 / (16.0 * PI * PI)));
        }
    }
    let pass = lap <= 1e-6 && cf <= 1e-10 && eta_err <= 1e-6 && eta_stable && massless && ray <= 1e-8;
    outcome(
        pass,
        format!(
            "laplace residual {lap:.1e} (tol 1e-6), index 1/2 closed form {cf:.1e} (tol 1e-10), etabound rel err {eta_err:.1e} (tol 1e-6, stable {eta_stable}), massless exact {massless}, fourierray rel err {ray:.1e} (tol 1e-8)"
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("density closed forms", density_closed_forms),
        ("subordination vs Fourier densities", route_agreement),
        ("decay constants", decay),
        ("multiplier closed forms", multiplier_closed_forms),
        ("kernel homogeneity", kernel_homogeneity),
        ("CZ bounds", cz_bounds),
        ("strong type (p,p)", strong_type),
        ("weak type (1,1)", weak_type),
        ("Beurling-Ahlfors decomposition", beurling),
        ("Monte Carlo duality", monte_carlo),
        ("subordinator", subordinator),
    ];
    let filter: Vec<usize> = std::env::var("ACCEPTANCE_ONLY")
        .map(|v| v.split(',').filter_map(|t| t.trim().parse().ok()).collect())
        .unwrap_or_default();
    let mut failures = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let id = k + 1;
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let out = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            outcome(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        if !out.pass {
            failures += 1;
        }
        println!(
            "{} criterion {id:>2} {name}: {} [{:.1}s]",
            if out.pass { "PASS" } else { "FAIL" },
            out.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
