//! Operator-valued covariance fields `Q(t, t')` and their regularity
//! seminorms.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hilbert::{op_norm_of, HOperator};
use crate::par;
use crate::paths::{subsample, Grid, GridPath, SEMINORM_CAP};

pub type CovFn = dyn Fn(f64, f64) -> Result<HOperator> + Send + Sync;

/// Evaluator `(t, t') ↦ Q(t, t')` on `[0, domain]²` with declared regularity.
#[derive(Clone)]
pub struct CovarianceField {
    f: Arc<CovFn>,
    alpha: f64,
    label: String,
    dim: usize,
    domain: f64,
}

impl fmt::Debug for CovarianceField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CovarianceField")
            .field("label", &self.label)
            .field("alpha", &self.alpha)
            .field("dim", &self.dim)
            .field("domain", &self.domain)
            .finish()
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("regularity alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

impl CovarianceField {
    /// `domain` is the right end of the time interval (may be infinite).
    pub fn new<F>(dim: usize, alpha: f64, label: impl Into<String>, domain: f64, f: F) -> Result<Self>
    where
        F: Fn(f64, f64) -> Result<HOperator> + Send + Sync + 'static,
    {
        check_alpha(alpha)?;
        Ok(Self { f: Arc::new(f), alpha, label: label.into(), dim, domain })
    }

    pub fn eval(&self, t: f64, tp: f64) -> Result<HOperator> {
        for x in [t, tp] {
            if !(x >= 0.0 && x <= self.domain * (1.0 + 1e-12)) {
                return Err(Error::Domain(format!("covariance evaluated at {x} outside [0, {}]", self.domain)));
            }
        }
        let m = (self.f)(t, tp)?;
        if m.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: m.dim() });
        }
        Ok(m)
    }

    /// `Q(t₁,t₂) − Q(t₁,s₂) − Q(s₁,t₂) + Q(s₁,s₂)`.
    pub fn rect_increment(&self, s: (f64, f64), t: (f64, f64)) -> Result<HOperator> {
        for (a, b) in [(s.0, t.0), (s.1, t.1)] {
            if !(0.0 <= a && a <= b) {
                return Err(Error::Domain(format!("rectangle side [{a}, {b}] is not ordered")));
            }
        }
        let mut m = self.eval(t.0, t.1)?;
        m -= &self.eval(t.0, s.1)?;
        m -= &self.eval(s.0, t.1)?;
        m += &self.eval(s.0, s.1)?;
        Ok(m)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> f64 {
        self.domain
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self { alpha, ..self.clone() })
    }

    /// `c Q`
    pub fn scaled(&self, c: f64) -> CovarianceField {
        let f = self.f.clone();
        Self {
            f: Arc::new(move |t, s| Ok(f(t, s)?.scale(c))),
            label: format!("{c}*({})", self.label),
            ..self.clone()
        }
    }

    /// `Q − R`, declared with the smaller of the two regularities.
    pub fn difference(&self, other: &CovarianceField) -> Result<CovarianceField> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        let (f, g) = (self.f.clone(), other.f.clone());
        Ok(Self {
            f: Arc::new(move |t, s| Ok(&f(t, s)? - &g(t, s)?)),
            alpha: self.alpha.min(other.alpha),
            label: format!("({}) - ({})", self.label, other.label),
            dim: self.dim,
            domain: self.domain.min(other.domain),
        })
    }
}

/// `Q(t, t') = min(t, t') Q0`.
pub fn wiener_cov(q0: HOperator) -> Result<CovarianceField> {
    q0.check_psd()?;
    let dim = q0.dim();
    CovarianceField::new(dim, 0.5, "wiener", f64::INFINITY, move |t, s| Ok(q0.scale(t.min(s))))
}

/// `R^h(s, t) = (s^{2h} + t^{2h} − |t − s|^{2h}) / 2`.
pub fn fbm_kernel(h: f64, s: f64, t: f64) -> f64 {
    0.5 * (s.powf(2.0 * h) + t.powf(2.0 * h) - (t - s).abs().powf(2.0 * h))
}

/// `Q(t, t') = R^h(t, t') Q0`, declared with `alpha = min(h, 1/2)`.
pub fn fbm_cov(h: f64, q0: HOperator) -> Result<CovarianceField> {
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::InvalidParameter(format!("Hurst parameter must lie in (0, 1), got {h}")));
    }
    q0.check_psd()?;
    let dim = q0.dim();
    CovarianceField::new(dim, h.min(0.5), format!("fbm:h={h}"), f64::INFINITY, move |t, s| {
        Ok(q0.scale(fbm_kernel(h, t, s)))
    })
}

/// `Q(t, t') = Qbase(Z(t), Z(t'))` for a scalar path `Z`, linearly
/// interpolated. `alpha` is supplied by the caller.
pub fn composed_cov(base: &CovarianceField, z: &GridPath, alpha: f64) -> Result<CovarianceField> {
    if z.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, found: z.dim() });
    }
    for (i, v) in z.values().iter().enumerate() {
        let x = v.coords()[0];
        if !(x >= 0.0 && x <= base.domain()) {
            return Err(Error::Domain(format!(
                "time change leaves [0, {}] at grid index {i} (value {x})",
                base.domain()
            )));
        }
    }
    let (b, z) = (base.clone(), z.clone());
    let domain = z.grid().horizon();
    CovarianceField::new(base.dim(), alpha, format!("composed({})", base.label()), domain, move |t, s| {
        let zt = z.interpolate(t)?.coords()[0];
        let zs = z.interpolate(s)?.coords()[0];
        b.eval(zt, zs)
    })
}

/// Sample covariance `(1/K) Σ_k X_k(t) X_k(t')ᵀ` with grid-snapped
/// arguments, symmetrized as `(Q(t,t') + Q(t',t)*) / 2`. Declared regularity
/// defaults to 1/2; use [`CovarianceField::with_alpha`] to change it.
pub fn empirical_cov(samples: &[GridPath]) -> Result<CovarianceField> {
    if samples.len() < 2 {
        return Err(Error::InvalidParameter("empirical covariance needs at least two samples".into()));
    }
    let grid = *samples[0].grid();
    let dim = samples[0].dim();
    for p in samples {
        if *p.grid() != grid {
            return Err(Error::GridMismatch("samples live on different grids".into()));
        }
        if p.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: p.dim() });
        }
    }
    let samples: Arc<Vec<GridPath>> = Arc::new(samples.to_vec());
    CovarianceField::new(dim, 0.5, "empirical", grid.horizon(), move |t, s| {
        let i = grid.nearest_index(t);
        let j = grid.nearest_index(s);
        let a = empirical_moment(&samples, i, j);
        let b = empirical_moment(&samples, j, i);
        Ok((&a + &b.adjoint()).scale(0.5))
    })
}

/// `(1/K) Σ_k X_k(t_i) X_k(t_j)ᵀ`.
pub fn empirical_moment(samples: &[GridPath], i: usize, j: usize) -> HOperator {
    let d = samples[0].dim();
    let mut m = vec![0.0; d * d];
    for p in samples {
        let x = p.value(i).coords();
        let y = p.value(j).coords();
        for a in 0..d {
            for b in 0..d {
                m[a * d + b] += x[a] * y[b];
            }
        }
    }
    let k = samples.len() as f64;
    HOperator::from_vec_unchecked(d, m.into_iter().map(|v| v / k).collect())
}

/// A covariance field tabulated on all pairs of grid points.
#[derive(Clone, Debug)]
pub struct GridCovField {
    grid: Grid,
    dim: usize,
    values: Vec<f64>,
}

#[derive(Serialize)]
struct FieldEntry<'a> {
    t: f64,
    #[serde(rename = "t'")]
    tp: f64,
    operator: &'a HOperator,
}

impl GridCovField {
    pub fn zeros(grid: Grid, dim: usize) -> Self {
        let np = grid.n_points();
        Self { grid, dim, values: vec![0.0; np * np * dim * dim] }
    }

    pub fn from_fn<F>(grid: Grid, dim: usize, f: F) -> Result<Self>
    where
        F: Fn(usize, usize) -> Result<HOperator> + Sync + Send,
    {
        let np = grid.n_points();
        let rows = par::try_map_range(np, |i| {
            let mut row = Vec::with_capacity(np * dim * dim);
            for j in 0..np {
                let m = f(i, j)?;
                if m.dim() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, found: m.dim() });
                }
                row.extend_from_slice(m.entries());
            }
            Ok(row)
        })?;
        Ok(Self { grid, dim, values: rows.concat() })
    }

    pub(crate) fn from_raw(grid: Grid, dim: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n_points() * grid.n_points() * dim * dim);
        Self { grid, dim, values }
    }

    pub fn tabulate(q: &CovarianceField, grid: Grid) -> Result<Self> {
        Self::from_fn(grid, q.dim(), |i, j| q.eval(grid.time(i), grid.time(j)))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub(crate) fn slot(&self, i: usize, j: usize) -> &[f64] {
        let d2 = self.dim * self.dim;
        let o = (i * self.grid.n_points() + j) * d2;
        &self.values[o..o + d2]
    }

    pub fn get(&self, i: usize, j: usize) -> HOperator {
        HOperator::from_vec_unchecked(self.dim, self.slot(i, j).to_vec())
    }

    pub fn at(&self, t: f64, tp: f64) -> Result<HOperator> {
        Ok(self.get(self.grid.index_of(t)?, self.grid.index_of(tp)?))
    }

    pub fn difference(&self, other: &GridCovField) -> Result<GridCovField> {
        if self.grid != other.grid || self.dim != other.dim {
            return Err(Error::GridMismatch("tabulated fields differ in grid or dimension".into()));
        }
        Ok(GridCovField {
            grid: self.grid,
            dim: self.dim,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn scale(&self, c: f64) -> GridCovField {
        GridCovField { grid: self.grid, dim: self.dim, values: self.values.iter().map(|x| c * x).collect() }
    }

    /// Largest entrywise difference.
    pub fn max_abs_diff(&self, other: &GridCovField) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Bilinear interpolation between grid points, exact at grid points.
    pub fn to_field(&self, alpha: f64, label: impl Into<String>) -> Result<CovarianceField> {
        let tab = self.clone();
        let g = self.grid;
        CovarianceField::new(self.dim, alpha, label, g.horizon(), move |t, s| {
            let n = g.n() as f64;
            let x = (t / g.horizon() * n).clamp(0.0, n);
            let y = (s / g.horizon() * n).clamp(0.0, n);
            let (i, j) = ((x.floor() as usize).min(g.n()), (y.floor() as usize).min(g.n()));
            let (wx, wy) = (x - i as f64, y - j as f64);
            let i1 = (i + 1).min(g.n());
            let j1 = (j + 1).min(g.n());
            let mut m = tab.get(i, j).scale((1.0 - wx) * (1.0 - wy));
            if wx > 0.0 {
                m.axpy(wx * (1.0 - wy), &tab.get(i1, j));
            }
            if wy > 0.0 {
                m.axpy((1.0 - wx) * wy, &tab.get(i, j1));
            }
            if wx > 0.0 && wy > 0.0 {
                m.axpy(wx * wy, &tab.get(i1, j1));
            }
            Ok(m)
        })
    }

    /// JSON array of `{"t", "t'", "operator"}` objects.
    pub fn to_json(&self) -> Result<String> {
        let ops: Vec<(f64, f64, HOperator)> = (0..self.grid.n_points())
            .flat_map(|i| (0..self.grid.n_points()).map(move |j| (i, j)))
            .map(|(i, j)| (self.grid.time(i), self.grid.time(j), self.get(i, j)))
            .collect();
        let entries: Vec<FieldEntry<'_>> =
            ops.iter().map(|(t, tp, m)| FieldEntry { t: *t, tp: *tp, operator: m }).collect();
        Ok(serde_json::to_string_pretty(&entries)?)
    }
}

/// The three regularity seminorms of a covariance field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CovSeminorms {
    pub q10: f64,
    pub q01: f64,
    pub q11: f64,
}

impl CovSeminorms {
    pub fn total(&self) -> f64 {
        self.q10 + self.q01 + self.q11
    }
}

/// Largest increment numerators grouped by index gap, from which the
/// seminorms for any exponent follow cheaply.
#[derive(Clone, Debug)]
pub struct CovGapProfile {
    step: f64,
    d10: Vec<f64>,
    d01: Vec<f64>,
    // d11[p * m + q], p, q = index gaps
    d11: Vec<f64>,
    m: usize,
}

impl CovGapProfile {
    /// Builds the profile of a field sampled on `times` (uniform, from 0)
    /// with `value(a, b)` returning the flattened operator at `(times[a], times[b])`.
    fn build(step: f64, m: usize, dim: usize, table: &[f64]) -> Self {
        let d2 = dim * dim;
        let at = |a: usize, b: usize| &table[(a * m + b) * d2..(a * m + b + 1) * d2];
        let nrm = |buf: &[f64]| op_norm_of(dim, buf);
        let partial10 = par::map_range(m, |i| {
            let mut local = vec![0.0f64; m];
            let mut buf = vec![0.0; d2];
            for j in 0..i {
                for b in 0..m {
                    for ((o, x), y) in buf.iter_mut().zip(at(i, b)).zip(at(j, b)) {
                        *o = x - y;
                    }
                    local[i - j] = local[i - j].max(nrm(&buf));
                }
            }
            local
        });
        let partial01 = par::map_range(m, |a| {
            let mut local = vec![0.0f64; m];
            let mut buf = vec![0.0; d2];
            for k in 0..m {
                for l in 0..k {
                    for ((o, x), y) in buf.iter_mut().zip(at(a, k)).zip(at(a, l)) {
                        *o = x - y;
                    }
                    local[k - l] = local[k - l].max(nrm(&buf));
                }
            }
            local
        });
        let partial11 = par::map_range(m, |i| {
            let mut local = vec![0.0f64; m * m];
            let mut row = vec![0.0; m * d2];
            let mut buf = vec![0.0; d2];
            for j in 0..i {
                for k in 0..m {
                    for ((o, x), y) in row[k * d2..(k + 1) * d2].iter_mut().zip(at(i, k)).zip(at(j, k)) {
                        *o = x - y;
                    }
                }
                let p = i - j;
                for k in 1..m {
                    for l in 0..k {
                        for ((o, x), y) in buf.iter_mut().zip(&row[k * d2..(k + 1) * d2]).zip(&row[l * d2..(l + 1) * d2]) {
                            *o = x - y;
                        }
                        let v = nrm(&buf);
                        let slot = &mut local[p * m + (k - l)];
                        if v > *slot {
                            *slot = v;
                        }
                    }
                }
            }
            local
        });
        let merge = |parts: Vec<Vec<f64>>, len: usize| {
            parts.into_iter().fold(vec![0.0f64; len], |mut acc, p| {
                for (a, b) in acc.iter_mut().zip(p) {
                    *a = a.max(b);
                }
                acc
            })
        };
        Self {
            step,
            d10: merge(partial10, m),
            d01: merge(partial01, m),
            d11: merge(partial11, m * m),
            m,
        }
    }

    pub fn seminorms(&self, alpha: f64) -> CovSeminorms {
        let w = |p: usize| (p as f64 * self.step).powf(alpha);
        let m = self.m;
        let q10 = (1..m).map(|p| self.d10[p] / w(p)).fold(0.0, f64::max);
        let q01 = (1..m).map(|p| self.d01[p] / w(p)).fold(0.0, f64::max);
        let mut q11: f64 = 0.0;
        for p in 1..m {
            for q in 1..m {
                let v = self.d11[p * m + q];
                if v > 0.0 {
                    q11 = q11.max(v / (w(p) * w(q)));
                }
            }
        }
        CovSeminorms { q10, q01, q11 }
    }
}

/// Gap profile of `q` on `grid`, subsampled to at most `cap` intervals.
pub fn cov_gap_profile(q: &CovarianceField, grid: &Grid, cap: usize) -> Result<CovGapProfile> {
    let idx = subsample(grid.n(), cap.max(1));
    let m = idx.len();
    let d2 = q.dim() * q.dim();
    let rows = par::try_map_range(m, |a| {
        let mut row = Vec::with_capacity(m * d2);
        for &b in &idx {
            row.extend_from_slice(q.eval(grid.time(idx[a]), grid.time(b))?.entries());
        }
        Ok(row)
    })?;
    let step = grid.time(idx[1]) - grid.time(idx[0]);
    Ok(CovGapProfile::build(step, m, q.dim(), &rows.concat()))
}

/// Gap profile of a tabulated field, subsampled to at most `cap` intervals.
pub fn grid_gap_profile(q: &GridCovField, cap: usize) -> CovGapProfile {
    let idx = subsample(q.grid.n(), cap.max(1));
    let m = idx.len();
    let mut table = Vec::with_capacity(m * m * q.dim * q.dim);
    for &a in &idx {
        for &b in &idx {
            table.extend_from_slice(q.slot(a, b));
        }
    }
    let step = q.grid.time(idx[1]) - q.grid.time(idx[0]);
    CovGapProfile::build(step, m, q.dim, &table)
}

/// Discrete regularity seminorms of `q` at exponent `alpha` on `grid`.
pub fn cov_seminorms(q: &CovarianceField, alpha: f64, grid: &Grid) -> Result<CovSeminorms> {
    cov_seminorms_capped(q, alpha, grid, SEMINORM_CAP)
}

pub fn cov_seminorms_capped(q: &CovarianceField, alpha: f64, grid: &Grid, cap: usize) -> Result<CovSeminorms> {
    check_alpha(alpha)?;
    Ok(cov_gap_profile(q, grid, cap)?.seminorms(alpha))
}

pub fn grid_cov_seminorms(q: &GridCovField, alpha: f64, cap: usize) -> Result<CovSeminorms> {
    check_alpha(alpha)?;
    Ok(grid_gap_profile(q, cap).seminorms(alpha))
}
