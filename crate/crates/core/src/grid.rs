//! Uniform periodic grids, sampled fields and their discrete transforms.

use std::path::Path;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Box `[-L/2, L/2)^n` sampled at `N` points per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub dim: usize,
    #[serde(rename = "L")]
    pub length: f64,
    #[serde(rename = "N")]
    pub points: usize,
}

impl Geometry {
    pub fn new(dim: usize, length: f64, points: usize) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(invalid(format!("grid dimension must be 1 or 2, got {dim}")));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(invalid(format!("box length must be positive, got {length}")));
        }
        if points < 4 || !points.is_power_of_two() {
            return Err(invalid(format!("points per axis must be a power of two >= 4, got {points}")));
        }
        Ok(Geometry { dim, length, points })
    }

    /// Default grid per dimension.
    pub fn default_for(dim: usize) -> Result<Self> {
        match dim {
            1 => Geometry::new(1, 64.0, 4096),
            2 => Geometry::new(2, 32.0, 512),
            _ => Err(invalid(format!("no default grid for dimension {dim}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        Geometry::new(self.dim, self.length, self.points).map(|_| ())
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.points as f64
    }

    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Volume element `h^n`.
    pub fn cell(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Per-axis indices of a flat (row-major) index.
    pub fn multi_index(&self, flat: usize) -> [usize; 2] {
        if self.dim == 1 {
            [flat, 0]
        } else {
            [flat / self.points, flat % self.points]
        }
    }

    pub fn coordinate(&self, k: usize) -> f64 {
        -0.5 * self.length + k as f64 * self.spacing()
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        let m = self.multi_index(flat);
        (0..self.dim).map(|a| self.coordinate(m[a])).collect()
    }

    /// Signed frequency index of an FFT-ordered bin.
    pub fn signed(&self, k: usize) -> i64 {
        if k < self.points / 2 {
            k as i64
        } else {
            k as i64 - self.points as i64
        }
    }

    /// Frequency `ξ = k/L` of a flat FFT-ordered index.
    pub fn frequency(&self, flat: usize) -> Vec<f64> {
        let m = self.multi_index(flat);
        (0..self.dim).map(|a| self.signed(m[a]) as f64 / self.length).collect()
    }

    pub fn ensure_same(&self, other: &Geometry) -> Result<()> {
        if self != other {
            return Err(Error::Geometry(format!(
                "dim {} L {} N {} vs dim {} L {} N {}",
                self.dim, self.length, self.points, other.dim, other.length, other.points
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledField {
    pub geometry: Geometry,
    pub values: Vec<Complex64>,
    pub name: String,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ValueRepr {
    Real(f64),
    Pair([f64; 2]),
}

#[derive(Serialize, Deserialize)]
struct FieldFile {
    dim: usize,
    #[serde(rename = "L")]
    length: f64,
    #[serde(rename = "N")]
    points: usize,
    #[serde(default)]
    name: String,
    values: Vec<ValueRepr>,
}

impl SampledField {
    pub fn new(geometry: Geometry, values: Vec<Complex64>, name: impl Into<String>) -> Result<Self> {
        geometry.validate()?;
        if values.len() != geometry.len() {
            return Err(Error::Geometry(format!(
                "expected {} samples, got {}",
                geometry.len(),
                values.len()
            )));
        }
        Ok(SampledField { geometry, values, name: name.into() })
    }

    pub fn zeros(geometry: Geometry, name: impl Into<String>) -> Result<Self> {
        SampledField::new(geometry, vec![Complex64::new(0.0, 0.0); geometry.len()], name)
    }

    pub fn from_fn(geometry: Geometry, name: impl Into<String>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = (0..geometry.len())
            .map(|k| Complex64::new(f(&geometry.point(k)), 0.0))
            .collect();
        SampledField::new(geometry, values, name)
    }

    pub fn from_complex_fn(
        geometry: Geometry,
        name: impl Into<String>,
        f: impl Fn(&[f64]) -> Complex64,
    ) -> Result<Self> {
        let values = (0..geometry.len()).map(|k| f(&geometry.point(k))).collect();
        SampledField::new(geometry, values, name)
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    pub fn max_imag(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.im.abs()))
    }

    pub fn is_real(&self) -> bool {
        self.values.iter().all(|v| v.im == 0.0)
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    /// `(h^n Σ |f|^p)^{1/p}`.
    pub fn lp_norm(&self, p: f64) -> f64 {
        let s: f64 = self.values.iter().map(|v| v.norm().powf(p)).sum();
        (self.geometry.cell() * s).powf(1.0 / p)
    }

    pub fn integral(&self) -> Complex64 {
        self.values.iter().sum::<Complex64>() * self.geometry.cell()
    }

    pub fn mean(&self) -> Complex64 {
        self.values.iter().sum::<Complex64>() / self.values.len() as f64
    }

    pub fn map(&self, name: impl Into<String>, f: impl Fn(Complex64) -> Complex64) -> SampledField {
        SampledField {
            geometry: self.geometry,
            values: self.values.iter().map(|&v| f(v)).collect(),
            name: name.into(),
        }
    }

    pub fn relative_l2_distance(&self, other: &SampledField) -> Result<f64> {
        self.geometry.ensure_same(&other.geometry)?;
        let num: f64 = self.values.iter().zip(&other.values).map(|(a, b)| (a - b).norm_sqr()).sum();
        let den: f64 = other.values.iter().map(|b| b.norm_sqr()).sum();
        if den == 0.0 {
            return Ok(num.sqrt());
        }
        Ok((num / den).sqrt())
    }

    /// Largest `|f|` in the strip within `L/4` of the boundary, relative to `sup |f|`.
    pub fn boundary_ratio(&self) -> f64 {
        let g = self.geometry;
        let sup = self.sup();
        if sup == 0.0 {
            return 0.0;
        }
        let edge = 0.25 * g.length;
        let mut worst: f64 = 0.0;
        for (k, v) in self.values.iter().enumerate() {
            let x = g.point(k);
            if x.iter().any(|&c| c.abs() >= edge) {
                worst = worst.max(v.norm());
            }
        }
        worst / sup
    }

    pub fn check_decay(&self) -> Result<()> {
        let r = self.boundary_ratio();
        if r >= 1e-12 {
            return Err(Error::Precondition(format!(
                "field '{}' is {r:.2e} of its maximum within L/4 of the boundary (needs < 1e-12)",
                self.name
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let values = if self.is_real() {
            self.values.iter().map(|v| ValueRepr::Real(v.re)).collect()
        } else {
            self.values.iter().map(|v| ValueRepr::Pair([v.re, v.im])).collect()
        };
        let file = FieldFile {
            dim: self.geometry.dim,
            length: self.geometry.length,
            points: self.geometry.points,
            name: self.name.clone(),
            values,
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: FieldFile = serde_json::from_str(text)?;
        let geometry = Geometry::new(file.dim, file.length, file.points)?;
        let values = file
            .values
            .into_iter()
            .map(|v| match v {
                ValueRepr::Real(x) => Complex64::new(x, 0.0),
                ValueRepr::Pair([a, b]) => Complex64::new(a, b),
            })
            .collect();
        SampledField::new(geometry, values, file.name)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        SampledField::from_json(&std::fs::read_to_string(path)?)
    }
}

/// In-place n-dimensional transform; `inverse` includes the `1/N^n` factor.
pub fn fft_nd(geometry: &Geometry, data: &mut [Complex64], inverse: bool) {
    let n = geometry.points;
    let mut planner = FftPlanner::<f64>::new();
    let plan = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
    match geometry.dim {
        1 => plan.process(data),
        _ => {
            plan.process(data);
            transpose_square(data, n);
            plan.process(data);
            transpose_square(data, n);
        }
    }
    if inverse {
        let scale = 1.0 / geometry.len() as f64;
        data.iter_mut().for_each(|v| *v *= scale);
    }
}

fn transpose_square(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

/// Forward transform followed by a pointwise multiply and the inverse.
pub fn convolve_spectrum(field: &SampledField, spectrum: impl Fn(usize) -> Complex64) -> Vec<Complex64> {
    let mut data = field.values.clone();
    fft_nd(&field.geometry, &mut data, false);
    data.iter_mut().enumerate().for_each(|(k, v)| *v *= spectrum(k));
    fft_nd(&field.geometry, &mut data, true);
    data
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn geometry_rejects_bad_sizes() {
        assert!(Geometry::new(1, 10.0, 100).is_err());
        assert!(Geometry::new(3, 10.0, 64).is_err());
        assert!(Geometry::new(1, 0.0, 64).is_err());
        assert!(Geometry::new(2, 32.0, 512).is_ok());
    }

    #[test]
    fn frequencies_follow_fft_order() {
        let g = Geometry::new(1, 8.0, 8).unwrap();
        let f: Vec<f64> = (0..8).map(|k| g.frequency(k)[0]).collect();
        assert_eq!(f, vec![0.0, 0.125, 0.25, 0.375, -0.5, -0.375, -0.25, -0.125]);
    }

    #[test]
    fn transform_round_trip_2d() {
        let g = Geometry::new(2, 4.0, 16).unwrap();
        let f = SampledField::from_fn(g, "f", |x| (x[0] * 1.3).sin() + x[1] * x[0]).unwrap();
        let mut d = f.values.clone();
        fft_nd(&g, &mut d, false);
        fft_nd(&g, &mut d, true);
        for (a, b) in d.iter().zip(&f.values) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn single_harmonic_lands_on_its_bin() {
        let g = Geometry::new(2, 8.0, 16).unwrap();
        let f = SampledField::from_complex_fn(g, "wave", |x| {
            Complex64::from_polar(1.0, 2.0 * PI * (3.0 * x[0] - 2.0 * x[1]) / 8.0)
        })
        .unwrap();
        let mut d = f.values.clone();
        fft_nd(&g, &mut d, false);
        let (best, _) = d
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap())
            .unwrap();
        let xi = g.frequency(best);
        assert!((xi[0] - 3.0 / 8.0).abs() < 1e-12 && (xi[1] + 2.0 / 8.0).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip_keeps_complex_values() {
        let g = Geometry::new(1, 4.0, 8).unwrap();
        let f = SampledField::from_complex_fn(g, "z", |x| Complex64::new(x[0], -x[0] * x[0])).unwrap();
        let back = SampledField::from_json(&f.to_json().unwrap()).unwrap();
        assert_eq!(back, f);
        let real = SampledField::from_fn(g, "r", |x| x[0]).unwrap();
        assert!(real.to_json().unwrap().contains("\"values\":[-2.0,"));
    }

    #[test]
    fn decay_check_flags_wide_fields() {
        let g = Geometry::new(1, 64.0, 1024).unwrap();
        let narrow = SampledField::from_fn(g, "n", |x| (-x[0] * x[0] / 2.0).exp()).unwrap();
        let wide = SampledField::from_fn(g, "w", |x| (-x[0] * x[0] / 50.0).exp()).unwrap();
        assert!(narrow.check_decay().is_ok());
        assert!(matches!(wide.check_decay(), Err(Error::Precondition(_))));
    }

    #[test]
    fn norms_by_riemann_sums() {
        let g = Geometry::new(1, 40.0, 4096).unwrap();
        let f = SampledField::from_fn(g, "g", |x| (-PI * x[0] * x[0]).exp()).unwrap();
        assert!((f.lp_norm(1.0) - 1.0).abs() < 1e-12);
        assert!((f.lp_norm(2.0) - 0.5f64.powf(0.25)).abs() < 1e-12);
    }
}
