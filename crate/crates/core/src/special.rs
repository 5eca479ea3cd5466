//! Spherical Bessel helpers for odd-dimensional radial transforms.

use num_complex::Complex64;

/// `z^{-l} j_l(z)`, entire in `z`.
pub(crate) fn reduced_spherical_j(l: usize, z: f64) -> f64 {
    let z = z.abs();
    if z < l as f64 + 2.0 {
        let lf = l as f64;
        let mut df = 1.0;
        let mut k = 3.0;
        while k <= 2.0 * lf + 1.0 {
            df *= k;
            k += 2.0;
        }
        let mut term = 1.0 / df;
        let mut sum = term;
        let q = -0.5 * z * z;
        for k in 0..200 {
            let kf = k as f64;
            term *= q / ((kf + 1.0) * (2.0 * lf + 2.0 * kf + 3.0));
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        let (s, c) = z.sin_cos();
        let mut jm = s / z;
        if l == 0 {
            return jm;
        }
        let mut j = s / (z * z) - c / z;
        for m in 1..l {
            let next = (2 * m + 1) as f64 / z * j - jm;
            jm = j;
            j = next;
        }
        j / z.powi(l as i32)
    }
}

/// Coefficients of `P_l(z) = z^{l+1} h_l^{(1)}(z) e^{-iz}`, highest power
/// first, so `P_l(z) = Σ_m c[m] z^{l-m}`.
pub(crate) fn hankel_poly(l: usize) -> Vec<Complex64> {
    let i = Complex64::i();
    let lead = (-i).powu(l as u32 + 1);
    let mut out = Vec::with_capacity(l + 1);
    for m in 0..=l {
        // (l+m)! / (m! (l-m)! 2^m)
        let mut c = 1.0;
        for k in (l - m + 1)..=(l + m) {
            c *= k as f64;
        }
        for k in 1..=m {
            c /= k as f64 * 2.0;
        }
        out.push(lead * i.powu(m as u32) * c);
    }
    out
}

pub(crate) fn horner(coeffs: &[Complex64], z: Complex64) -> Complex64 {
    coeffs.iter().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn j_direct(l: usize, z: f64) -> f64 {
        let (s, c) = z.sin_cos();
        match l {
            0 => s / z,
            1 => s / (z * z) - c / z,
            2 => (3.0 / (z * z) - 1.0) * s / z - 3.0 * c / (z * z),
            _ => unreachable!(),
        }
    }

    #[test]
    fn matches_closed_forms() {
        for l in 0..3 {
            for &z in &[0.3, 1.7, 2.9, 4.5, 12.0] {
                let want = j_direct(l, z) / z.powi(l as i32);
                assert_relative_eq!(reduced_spherical_j(l, z), want, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn origin_values() {
        assert_relative_eq!(reduced_spherical_j(0, 0.0), 1.0);
        assert_relative_eq!(reduced_spherical_j(2, 0.0), 1.0 / 15.0);
    }

    #[test]
    fn series_and_recurrence_agree_at_switch() {
        for l in 0..5 {
            let z = l as f64 + 2.0;
            let a = reduced_spherical_j(l, z - 1e-9);
            let b = reduced_spherical_j(l, z);
            assert_relative_eq!(a, b, max_relative = 1e-7);
        }
    }

    #[test]
    fn hankel_matches_real_part() {
        // Re h_l = j_l on the real axis.
        for l in 0..3 {
            let c = hankel_poly(l);
            for &x in &[0.7, 3.1] {
                let z = Complex64::new(x, 0.0);
                let h = horner(&c, z) * (Complex64::i() * z).exp() / z.powu(l as u32 + 1);
                assert_relative_eq!(h.re, j_direct(l, x), max_relative = 1e-12);
            }
        }
    }
}
