//! Matrix symbols `A(x, y)` of size `(n+1)×(n+1)`.
//!
//! Index `n` (zero-based) is the vertical direction. Entries are constants,
//! named functions of `y`, or named functions of `(x, y)` from a fixed catalog;
//! functions of `x` are only allowed in the spatial block.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quad::geomspace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FyExpr {
    /// `1` for `y < 1`, else `0`.
    IndicatorYLt1,
    ExpNegY,
    /// `y / (1 + y)`.
    YOverOnePlusY,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FxyExpr {
    /// `cos(x_1)`.
    CosX1,
    /// `cos(x_1) e^{-y}`.
    CosX1ExpNegY,
    /// `(1 + x_1²)^{-1}`.
    LorentzX1,
}

impl FyExpr {
    pub const ALL: [FyExpr; 3] = [FyExpr::IndicatorYLt1, FyExpr::ExpNegY, FyExpr::YOverOnePlusY];

    pub fn eval(self, y: f64) -> f64 {
        match self {
            FyExpr::IndicatorYLt1 => {
                if y < 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            FyExpr::ExpNegY => (-y).exp(),
            FyExpr::YOverOnePlusY => y / (1.0 + y),
        }
    }

    /// Points in `y` where the function is not smooth.
    pub fn kinks(self) -> &'static [f64] {
        match self {
            FyExpr::IndicatorYLt1 => &[1.0],
            _ => &[],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FyExpr::IndicatorYLt1 => "indicator_y_lt_1",
            FyExpr::ExpNegY => "exp_neg_y",
            FyExpr::YOverOnePlusY => "y_over_1_plus_y",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| invalid(format!("unknown function of y: {s:?}")))
    }
}

impl FxyExpr {
    pub const ALL: [FxyExpr; 3] = [FxyExpr::CosX1, FxyExpr::CosX1ExpNegY, FxyExpr::LorentzX1];

    pub fn eval(self, x: &[f64], y: f64) -> f64 {
        match self {
            FxyExpr::CosX1 => x[0].cos(),
            FxyExpr::CosX1ExpNegY => x[0].cos() * (-y).exp(),
            FxyExpr::LorentzX1 => 1.0 / (1.0 + x[0] * x[0]),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FxyExpr::CosX1 => "cos_x1",
            FxyExpr::CosX1ExpNegY => "cos_x1_exp_neg_y",
            FxyExpr::LorentzX1 => "lorentz_x1",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| invalid(format!("unknown function of (x, y): {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Entry {
    Const(f64),
    Fy { expr: FyExpr, scale: f64 },
    Fxy { expr: FxyExpr, scale: f64 },
}

impl Entry {
    pub fn eval(&self, x: &[f64], y: f64) -> f64 {
        match *self {
            Entry::Const(c) => c,
            Entry::Fy { expr, scale } => scale * expr.eval(y),
            Entry::Fxy { expr, scale } => scale * expr.eval(x, y),
        }
    }

    /// Value for an `x`-independent entry.
    pub fn eval_y(&self, y: f64) -> f64 {
        match *self {
            Entry::Const(c) => c,
            Entry::Fy { expr, scale } => scale * expr.eval(y),
            Entry::Fxy { .. } => panic!("eval_y called on an x-dependent entry"),
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            Entry::Const(c) => c == 0.0,
            Entry::Fy { scale, .. } | Entry::Fxy { scale, .. } => scale == 0.0,
        }
    }

    pub fn depends_on_x(&self) -> bool {
        matches!(self, Entry::Fxy { .. }) && !self.is_zero()
    }

    /// Oscillation period in `x`, for entries that oscillate.
    pub fn x_period(&self) -> Option<f64> {
        match self {
            Entry::Fxy {
                expr: FxyExpr::CosX1 | FxyExpr::CosX1ExpNegY,
                ..
            } => Some(2.0 * std::f64::consts::PI),
            _ => None,
        }
    }

    pub fn kinks(&self) -> &'static [f64] {
        match self {
            Entry::Fy { expr, .. } => expr.kinks(),
            _ => &[],
        }
    }
}

/// `(n+1)×(n+1)` matrix function with its norm `sup_{x,y} |A(x,y)|_op`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSymbol {
    dim: usize,
    entries: Vec<Entry>,
    norm: f64,
    id: String,
}

impl MatrixSymbol {
    /// Build from `(i, j, entry)` triples with zero-based indices; unlisted
    /// entries are zero.
    pub fn new(dim: usize, triples: &[(usize, usize, Entry)], id: impl Into<String>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        let m = dim + 1;
        let mut entries = vec![Entry::Const(0.0); m * m];
        for &(i, j, e) in triples {
            if i >= m || j >= m {
                return Err(invalid(format!("entry ({i},{j}) outside a {m}x{m} matrix")));
            }
            if (i == dim || j == dim) && e.depends_on_x() {
                return Err(Error::Unsupported(format!(
                    "entry ({},{}) touches the vertical index and depends on x",
                    i + 1,
                    j + 1
                )));
            }
            let (Entry::Const(c) | Entry::Fy { scale: c, .. } | Entry::Fxy { scale: c, .. }) = e;
            if !c.is_finite() {
                return Err(invalid(format!("entry ({},{}) is not finite", i + 1, j + 1)));
            }
            entries[i * m + j] = e;
        }
        let mut sym = MatrixSymbol {
            dim,
            entries,
            norm: 0.0,
            id: id.into(),
        };
        sym.norm = sym.sampled_norm();
        Ok(sym)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    /// Raise the recorded norm (a declared bound may exceed the sampled one).
    pub fn with_norm_at_least(mut self, norm: f64) -> Self {
        self.norm = self.norm.max(norm);
        self
    }

    pub fn entry(&self, i: usize, j: usize) -> &Entry {
        &self.entries[i * (self.dim + 1) + j]
    }

    pub fn nonzero_entries(&self) -> impl Iterator<Item = (usize, usize, &Entry)> {
        let m = self.dim + 1;
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| !e.is_zero())
            .map(move |(k, e)| (k / m, k % m, e))
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(Entry::is_zero)
    }

    pub fn is_constant(&self) -> bool {
        self.entries
            .iter()
            .all(|e| matches!(e, Entry::Const(_)) || e.is_zero())
    }

    pub fn is_x_independent(&self) -> bool {
        !self.entries.iter().any(Entry::depends_on_x)
    }

    /// True when every entry touching the vertical index vanishes.
    pub fn all_spatial(&self) -> bool {
        let n = self.dim;
        (0..=n).all(|k| self.entry(k, n).is_zero() && self.entry(n, k).is_zero())
    }

    /// Row-major values at `(x, y)`.
    pub fn eval(&self, x: &[f64], y: f64) -> Vec<f64> {
        self.entries.iter().map(|e| e.eval(x, y)).collect()
    }

    pub fn kinks(&self) -> Vec<f64> {
        let mut k: Vec<f64> = self.entries.iter().flat_map(|e| e.kinks().iter().copied()).collect();
        k.sort_by(f64::total_cmp);
        k.dedup();
        k
    }

    fn op_norm(&self, vals: &[f64]) -> f64 {
        let m = self.dim + 1;
        let a = DMatrix::from_row_slice(m, m, vals);
        a.singular_values().iter().cloned().fold(0.0, f64::max)
    }

    fn sampled_norm(&self) -> f64 {
        if self.is_constant() {
            return self.op_norm(&self.eval(&vec![0.0; self.dim], 0.0));
        }
        let mut ys = vec![0.0];
        ys.extend(geomspace(1e-4, 1e4, 81));
        for k in self.kinks() {
            ys.push(k * (1.0 - 1e-12));
            ys.push(k);
        }
        let xs: Vec<Vec<f64>> = if self.is_x_independent() {
            vec![vec![0.0; self.dim]]
        } else {
            (0..=64)
                .map(|k| {
                    let mut x = vec![0.0; self.dim];
                    x[0] = -std::f64::consts::PI + k as f64 * std::f64::consts::PI / 32.0;
                    x
                })
                .collect()
        };
        let mut best: f64 = 0.0;
        for x in &xs {
            for &y in &ys {
                best = best.max(self.op_norm(&self.eval(x, y)));
            }
        }
        best
    }

    // --- catalog -----------------------------------------------------------

    pub fn zero(dim: usize) -> Result<Self> {
        Self::new(dim, &[], "zero")
    }

    pub fn identity(dim: usize) -> Result<Self> {
        let t: Vec<_> = (0..=dim).map(|k| (k, k, Entry::Const(1.0))).collect();
        Self::new(dim, &t, "identity")
    }

    /// Identity on the spatial block, zero in the vertical direction.
    pub fn spatial_identity(dim: usize) -> Result<Self> {
        let t: Vec<_> = (0..dim).map(|k| (k, k, Entry::Const(1.0))).collect();
        Self::new(dim, &t, "spatial_identity")
    }

    /// The antisymmetric matrix with `a_{n+1,j} = 1`, `a_{j,n+1} = -1`
    /// (`j` one-based).
    pub fn riesz(j: usize, dim: usize) -> Result<Self> {
        if j == 0 || j > dim {
            return Err(invalid(format!("riesz index {j} outside 1..={dim}")));
        }
        Self::new(
            dim,
            &[(dim, j - 1, Entry::Const(1.0)), (j - 1, dim, Entry::Const(-1.0))],
            format!("riesz_{j}"),
        )
    }

    /// `a_{ij} = -1` and all other entries zero (one-based spatial `i, j`).
    pub fn riesz2(i: usize, j: usize, dim: usize) -> Result<Self> {
        if i == 0 || j == 0 || i > dim || j > dim {
            return Err(invalid(format!("second-order riesz indices ({i},{j}) outside 1..={dim}")));
        }
        Self::new(dim, &[(i - 1, j - 1, Entry::Const(-1.0))], format!("riesz2_{i}{j}"))
    }

    /// Named catalog entries: `zero`, `identity`, `spatial_identity`,
    /// `riesz_J`, `riesz2_IJ`.
    pub fn by_name(name: &str, dim: usize) -> Result<Self> {
        match name {
            "zero" => Self::zero(dim),
            "identity" => Self::identity(dim),
            "spatial_identity" => Self::spatial_identity(dim),
            _ => {
                let bad = || invalid(format!("cannot parse symbol name {name:?}"));
                if let Some(rest) = name.strip_prefix("riesz2_") {
                    // "riesz2_12" or "riesz2_1_2"
                    let parts: Vec<&str> = if rest.contains('_') {
                        rest.split('_').collect()
                    } else if rest.len() == 2 {
                        vec![&rest[..1], &rest[1..]]
                    } else {
                        return Err(bad());
                    };
                    let idx: Vec<usize> = parts
                        .iter()
                        .map(|p| p.parse().map_err(|_| bad()))
                        .collect::<Result<_>>()?;
                    if idx.len() != 2 {
                        return Err(bad());
                    }
                    Self::riesz2(idx[0], idx[1], dim)
                } else if let Some(rest) = name.strip_prefix("riesz_") {
                    let j = rest.parse().map_err(|_| bad())?;
                    Self::riesz(j, dim)
                } else {
                    Err(invalid(format!("unknown symbol {name:?}")))
                }
            }
        }
    }

    pub fn to_file(&self) -> MatrixFile {
        let entries = self
            .nonzero_entries()
            .map(|(i, j, e)| {
                let (kind, value, expr, scale) = match *e {
                    Entry::Const(c) => (EntryKind::Const, Some(c), None, None),
                    Entry::Fy { expr, scale } => {
                        (EntryKind::Fy, None, Some(expr.name().to_string()), Some(scale))
                    }
                    Entry::Fxy { expr, scale } => {
                        (EntryKind::Fxy, None, Some(expr.name().to_string()), Some(scale))
                    }
                };
                EntryFile {
                    i: i + 1,
                    j: j + 1,
                    kind,
                    value,
                    expr,
                    scale,
                }
            })
            .collect();
        MatrixFile {
            dim: self.dim,
            entries,
            norm: Some(self.norm),
            id: Some(self.id.clone()),
        }
    }

    pub fn from_file(f: &MatrixFile) -> Result<Self> {
        let mut triples = Vec::with_capacity(f.entries.len());
        for e in &f.entries {
            if e.i == 0 || e.j == 0 {
                return Err(invalid("matrix file indices are one-based"));
            }
            let scale = e.scale.unwrap_or(1.0);
            let entry = match e.kind {
                EntryKind::Const => Entry::Const(
                    e.value
                        .ok_or_else(|| invalid(format!("const entry ({},{}) needs a value", e.i, e.j)))?,
                ),
                EntryKind::Fy => Entry::Fy {
                    expr: FyExpr::parse(e.expr.as_deref().unwrap_or(""))?,
                    scale,
                },
                EntryKind::Fxy => Entry::Fxy {
                    expr: FxyExpr::parse(e.expr.as_deref().unwrap_or(""))?,
                    scale,
                },
            };
            triples.push((e.i - 1, e.j - 1, entry));
        }
        let id = f.id.clone().unwrap_or_else(|| "file".to_string());
        let sym = Self::new(f.dim, &triples, id)?;
        Ok(match f.norm {
            Some(n) => sym.with_norm_at_least(n),
            None => sym,
        })
    }
}

impl fmt::Display for MatrixSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (n={}, |A|={:.6})", self.id, self.dim, self.norm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    Const,
    Fy,
    Fxy,
}

/// One-based entry record of the matrix JSON format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryFile {
    pub i: usize,
    pub j: usize,
    #[serde(rename = "type")]
    pub kind: EntryKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expr: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixFile {
    pub dim: usize,
    pub entries: Vec<EntryFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
}
