//! Uniform dyadic time grids, H-valued paths on them, and the discrete
//! Hölder and Volterra-Hölder seminorm estimators.

use std::io::{Read, Write};
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{norm, HVector};
use crate::par;

/// Largest number of intervals used by the O(N³) and O(N⁴) seminorm sups;
/// finer grids are subsampled uniformly.
pub const SEMINORM_CAP: usize = 128;

/// Uniform partition `t_i = i T / N` of `[0, T]` with `N` a power of two.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    horizon: f64,
    n: usize,
}

impl Grid {
    /// `n` is the number of intervals.
    pub fn new(horizon: f64, n: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidParameter(format!("grid horizon must be positive, got {horizon}")));
        }
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::InvalidParameter(format!("grid size must be a power of two, got {n}")));
        }
        Ok(Self { horizon, n })
    }

    pub fn unit(n: usize) -> Result<Self> {
        Self::new(1.0, n)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of intervals.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_points(&self) -> usize {
        self.n + 1
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.n as f64
    }

    /// Grid time `t_i`. Nested grids produce bit-identical times.
    #[inline]
    pub fn time(&self, i: usize) -> f64 {
        self.horizon * (i as f64 / self.n as f64)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n).map(|i| self.time(i)).collect()
    }

    /// Finest dyadic level, `log2 N`.
    pub fn levels(&self) -> u32 {
        self.n.trailing_zeros()
    }

    /// Index of a grid time, accepting a relative mismatch of `1e-12`.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        if !(t.is_finite() && t >= -1e-12 * self.horizon && t <= self.horizon * (1.0 + 1e-12)) {
            return Err(Error::Domain(format!("time {t} outside [0, {}]", self.horizon)));
        }
        let i = (t / self.horizon * self.n as f64).round() as usize;
        if (self.time(i) - t).abs() > 1e-12 * self.horizon {
            return Err(Error::GridMismatch(format!("time {t} is not a grid point")));
        }
        Ok(i)
    }

    /// Nearest grid index, clamped into range.
    pub fn nearest_index(&self, t: f64) -> usize {
        let x = (t / self.horizon * self.n as f64).round();
        x.clamp(0.0, self.n as f64) as usize
    }

    /// The grid of dyadic level `level` on the same horizon.
    pub fn at_level(&self, level: u32) -> Result<Grid> {
        Grid::new(self.horizon, 1usize << level)
    }

    pub fn refined(&self) -> Grid {
        Grid { horizon: self.horizon, n: self.n * 2 }
    }

    /// Index stride between consecutive points of level `level`.
    pub fn stride(&self, level: u32) -> Result<usize> {
        if level > self.levels() {
            return Err(Error::InvalidParameter(format!(
                "level {level} exceeds grid resolution {}",
                self.levels()
            )));
        }
        Ok(self.n >> level)
    }

    pub(crate) fn check_time(&self, t: f64) -> Result<()> {
        if !(t.is_finite() && t >= 0.0 && t <= self.horizon * (1.0 + 1e-12)) {
            return Err(Error::Domain(format!("time {t} outside [0, {}]", self.horizon)));
        }
        Ok(())
    }
}

/// Uniform subsample of `0..=n` with at most `cap` intervals.
pub(crate) fn subsample(n: usize, cap: usize) -> Vec<usize> {
    let stride = if n > cap { n / cap } else { 1 };
    (0..=n).step_by(stride).collect()
}

/// An H-valued path sampled at every point of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridPath {
    grid: Grid,
    values: Vec<HVector>,
}

impl GridPath {
    pub fn new(grid: Grid, values: Vec<HVector>) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(Error::DimensionMismatch { expected: grid.n_points(), found: values.len() });
        }
        let d = values[0].dim();
        for v in &values {
            if v.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, found: v.dim() });
            }
            if !v.is_finite() {
                return Err(Error::NonFinite("path"));
            }
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_values_unchecked(grid: Grid, values: Vec<HVector>) -> Self {
        Self { grid, values }
    }

    pub fn from_fn<F: Fn(f64) -> HVector>(grid: Grid, f: F) -> Result<Self> {
        Self::new(grid, grid.times().into_iter().map(f).collect())
    }

    /// One-dimensional path from a scalar function.
    pub fn scalar_fn<F: Fn(f64) -> f64>(grid: Grid, f: F) -> Result<Self> {
        Self::from_fn(grid, |t| HVector::from_vec_unchecked(vec![f(t)]))
    }

    /// The path `t ↦ g(t) e_0` in dimension `dim`.
    pub fn along_first_axis<F: Fn(f64) -> f64>(grid: Grid, dim: usize, f: F) -> Result<Self> {
        Self::from_fn(grid, |t| {
            let mut v = HVector::zeros(dim);
            v.coords_mut()[0] = f(t);
            v
        })
    }

    pub fn zeros(grid: Grid, dim: usize) -> Self {
        Self { grid, values: vec![HVector::zeros(dim); grid.n_points()] }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.values[0].dim()
    }

    pub fn values(&self) -> &[HVector] {
        &self.values
    }

    pub fn value(&self, i: usize) -> &HVector {
        &self.values[i]
    }

    /// First coordinate at index `i`; convenient for scalar paths.
    pub fn scalar(&self, i: usize) -> f64 {
        self.values[i].coords()[0]
    }

    /// Linear interpolation between grid points.
    pub fn interpolate(&self, t: f64) -> Result<HVector> {
        self.grid.check_time(t)?;
        let x = (t / self.grid.horizon * self.grid.n as f64).min(self.grid.n as f64);
        let i = (x.floor() as usize).min(self.grid.n);
        let w = x - i as f64;
        if w == 0.0 || i == self.grid.n {
            return Ok(self.values[i].clone());
        }
        let mut v = self.values[i].scale(1.0 - w);
        v.axpy(w, &self.values[i + 1]);
        Ok(v)
    }

    pub fn scale(&self, c: f64) -> GridPath {
        GridPath { grid: self.grid, values: self.values.iter().map(|v| v.scale(c)).collect() }
    }

    fn zip_with(&self, other: &GridPath, f: impl Fn(&HVector, &HVector) -> HVector) -> Result<GridPath> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch("paths live on different grids".into()));
        }
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        Ok(GridPath {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| f(a, b)).collect(),
        })
    }

    pub fn try_add(&self, other: &GridPath) -> Result<GridPath> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn try_sub(&self, other: &GridPath) -> Result<GridPath> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Restriction to the coarser grid of dyadic level `level`.
    pub fn restrict(&self, level: u32) -> Result<GridPath> {
        let stride = self.grid.stride(level)?;
        let grid = self.grid.at_level(level)?;
        Ok(GridPath { grid, values: self.values.iter().step_by(stride).cloned().collect() })
    }

    /// Largest `|f(t) - f(s)|` over all grid pairs.
    pub fn max_abs_diff(&self, other: &GridPath) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim()).map(|k| format!("c_{k}")));
        wr.write_record(&header)?;
        for (i, v) in self.values.iter().enumerate() {
            let mut rec = vec![format!("{}", self.grid.time(i))];
            rec.extend(v.coords().iter().map(|x| format!("{x}")));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<GridPath> {
        let mut paths = read_samples_csv(r)?;
        if paths.len() != 1 {
            return Err(Error::Parse(format!("expected a single path, found {}", paths.len())));
        }
        Ok(paths.remove(0))
    }
}

/// Writes several paths on a common grid as one CSV with a leading `sample`
/// column.
pub fn write_samples_csv<W: Write>(paths: &[GridPath], w: W) -> Result<()> {
    if paths.len() == 1 {
        return paths[0].write_csv(w);
    }
    let mut wr = csv::Writer::from_writer(w);
    let dim = paths.first().map(|p| p.dim()).unwrap_or(1);
    let mut header = vec!["sample".to_string(), "t".to_string()];
    header.extend((1..=dim).map(|k| format!("c_{k}")));
    wr.write_record(&header)?;
    for (k, p) in paths.iter().enumerate() {
        for (i, v) in p.values.iter().enumerate() {
            let mut rec = vec![k.to_string(), format!("{}", p.grid.time(i))];
            rec.extend(v.coords().iter().map(|x| format!("{x}")));
            wr.write_record(&rec)?;
        }
    }
    wr.flush()?;
    Ok(())
}

/// Reads the CSV layouts produced by [`GridPath::write_csv`] and
/// [`write_samples_csv`].
pub fn read_samples_csv<R: Read>(r: R) -> Result<Vec<GridPath>> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header = rd.headers()?.clone();
    let has_sample = header.get(0) == Some("sample");
    let offset = usize::from(has_sample);
    if header.get(offset) != Some("t") || header.len() < offset + 2 {
        return Err(Error::Parse("CSV header must be `t,c_1,..,c_n` (optionally preceded by `sample`)".into()));
    }
    let dim = header.len() - offset - 1;
    let mut groups: Vec<(Vec<f64>, Vec<HVector>)> = Vec::new();
    let mut current: Option<String> = None;
    for rec in rd.records() {
        let rec = rec?;
        let key = if has_sample { rec.get(0).unwrap_or("").to_string() } else { String::new() };
        if current.as_deref() != Some(key.as_str()) {
            groups.push((Vec::new(), Vec::new()));
            current = Some(key);
        }
        let parse = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("bad number `{s}`: {e}")));
        let t = parse(rec.get(offset).unwrap_or(""))?;
        let coords = (0..dim)
            .map(|k| parse(rec.get(offset + 1 + k).unwrap_or("")))
            .collect::<Result<Vec<f64>>>()?;
        let g = groups.last_mut().expect("group pushed above");
        g.0.push(t);
        g.1.push(HVector::new(coords)?);
    }
    groups
        .into_iter()
        .map(|(times, values)| {
            let n = times.len().saturating_sub(1);
            let horizon = *times.last().ok_or_else(|| Error::Parse("empty path".into()))?;
            let grid = Grid::new(horizon, n)?;
            for (i, t) in times.iter().enumerate() {
                if (grid.time(i) - t).abs() > 1e-9 * horizon {
                    return Err(Error::GridMismatch(format!("row {i}: time {t} is not on a uniform grid")));
                }
            }
            GridPath::new(grid, values)
        })
        .collect()
}

/// Two-parameter path `f^τ(t)` on the discrete simplex `t ≤ τ`.
#[derive(Clone, Debug, PartialEq)]
pub struct VolterraGridPath {
    grid: Grid,
    dim: usize,
    data: Vec<f64>,
}

#[inline]
fn tri(i: usize) -> usize {
    i * (i + 1) / 2
}

impl VolterraGridPath {
    pub fn zeros(grid: Grid, dim: usize) -> Self {
        let np = grid.n_points();
        Self { grid, dim, data: vec![0.0; tri(np) * dim] }
    }

    pub fn from_fn<F>(grid: Grid, dim: usize, f: F) -> Result<Self>
    where
        F: Fn(usize, usize) -> HVector + Sync + Send,
    {
        let rows = par::map_range(grid.n_points(), |i| {
            let mut row = Vec::with_capacity((i + 1) * dim);
            for j in 0..=i {
                row.extend_from_slice(f(i, j).coords());
            }
            row
        });
        Self::from_rows(grid, dim, rows)
    }

    /// Rows of coefficients, row `i` holding `(i + 1) * dim` values.
    pub(crate) fn from_rows(grid: Grid, dim: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        let mut data = Vec::with_capacity(tri(grid.n_points()) * dim);
        for (i, r) in rows.into_iter().enumerate() {
            if r.len() != (i + 1) * dim {
                return Err(Error::DimensionMismatch { expected: (i + 1) * dim, found: r.len() });
            }
            data.extend(r);
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("Volterra path"));
        }
        Ok(Self { grid, dim, data })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Coefficients of `f^{t_tau}(t_t)`; requires `t <= tau`.
    #[inline]
    pub fn coords(&self, tau: usize, t: usize) -> &[f64] {
        debug_assert!(t <= tau);
        let o = (tri(tau) + t) * self.dim;
        &self.data[o..o + self.dim]
    }

    pub fn value(&self, tau: usize, t: usize) -> Result<HVector> {
        if t > tau || tau > self.grid.n {
            return Err(Error::Domain(format!("({tau}, {t}) is outside the discrete simplex")));
        }
        Ok(HVector::from_vec_unchecked(self.coords(tau, t).to_vec()))
    }
}

/// `f(t₁,t₂) − f(t₁,s₂) − f(s₁,t₂) + f(s₁,s₂)` for a two-parameter field on
/// `[0, horizon]²`.
pub fn rect_increment<V, F>(f: F, horizon: f64, s: (f64, f64), t: (f64, f64)) -> Result<V>
where
    F: Fn(f64, f64) -> V,
    V: Add<Output = V> + Sub<Output = V>,
{
    for (a, b) in [(s.0, t.0), (s.1, t.1)] {
        if !(0.0 <= a && a <= b && b <= horizon) {
            return Err(Error::Domain(format!("rectangle [{a}, {b}] not ordered inside [0, {horizon}]")));
        }
    }
    Ok(f(t.0, t.1) - f(t.0, s.1) - f(s.0, t.1) + f(s.0, s.1))
}

/// Hölder seminorm `max |f(t) − f(s)| / (t − s)^γ` over all grid pairs.
pub fn holder_seminorm(f: &GridPath, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidParameter(format!("Hölder exponent must lie in (0, 1], got {gamma}")));
    }
    let g = f.grid;
    let n = g.n;
    let d = f.dim();
    let h = g.step();
    let weights: Vec<f64> = (0..=n).map(|lag| (lag as f64 * h).powf(gamma)).collect();
    Ok(par::max_range(n, |s| {
        let fs = f.values[s].coords();
        let mut best: f64 = 0.0;
        let mut diff = vec![0.0; d];
        for t in (s + 1)..=n {
            for (k, x) in diff.iter_mut().enumerate() {
                *x = f.values[t].coords()[k] - fs[k];
            }
            best = best.max(norm(&diff) / weights[t - s]);
        }
        best
    }))
}

/// Default 11-point exponent grid on `[0, 1]`.
pub fn default_theta_grid() -> Vec<f64> {
    (0..=10).map(|k| k as f64 / 10.0).collect()
}

/// Default 11-point exponent grid on `[0, gamma − eta)`.
pub fn default_zeta_grid(gamma: f64, eta: f64) -> Vec<f64> {
    let top = gamma - eta;
    (0..=10).map(|k| top * k as f64 / 11.0).collect()
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// First Volterra-Hölder seminorm, sup over `(τ, t, s)` with `s < t ≤ τ`.
pub fn volterra_seminorm_1(f: &VolterraGridPath, gamma: f64, eta: f64) -> Result<f64> {
    if gamma - eta <= 0.0 {
        return Err(Error::Inadmissible(format!("gamma - eta must be positive (gamma={gamma}, eta={eta})")));
    }
    let idx = subsample(f.grid.n, SEMINORM_CAP);
    let g = f.grid;
    Ok(par::max_range(idx.len(), |a| {
        let tau = idx[a];
        let tt = g.time(tau);
        let mut best: f64 = 0.0;
        for (b, &t) in idx.iter().enumerate().take(a + 1) {
            let ti = g.time(t);
            for &s in &idx[..b] {
                let si = g.time(s);
                let num = diff_norm(f.coords(tau, t), f.coords(tau, s));
                if num == 0.0 {
                    continue;
                }
                let second = (tt - si).powf(gamma - eta);
                let w = if tau > t {
                    ((tt - ti).powf(-eta) * (ti - si).powf(gamma)).min(second)
                } else {
                    second
                };
                best = best.max(num / w);
            }
        }
        best
    }))
}

/// Mixed Volterra-Hölder seminorm, sup over `(τ', τ, t, s)` with
/// `s < t ≤ τ < τ'` and over the supplied exponent grids.
pub fn volterra_seminorm_12(
    f: &VolterraGridPath,
    gamma: f64,
    eta: f64,
    theta_grid: &[f64],
    zeta_grid: &[f64],
) -> Result<f64> {
    if theta_grid.is_empty() || zeta_grid.is_empty() {
        return Err(Error::InvalidParameter("exponent grids must be non-empty".into()));
    }
    if gamma - eta <= 0.0 {
        return Err(Error::Inadmissible(format!("gamma - eta must be positive (gamma={gamma}, eta={eta})")));
    }
    if theta_grid.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
        return Err(Error::InvalidParameter("theta grid must lie in [0, 1]".into()));
    }
    if zeta_grid.iter().any(|&x| !(x >= 0.0 && x < gamma - eta)) {
        return Err(Error::InvalidParameter("zeta grid must lie in [0, gamma - eta)".into()));
    }
    let th_min = theta_grid.iter().copied().fold(f64::INFINITY, f64::min);
    let th_max = theta_grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z_max = zeta_grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let common: Vec<f64> = theta_grid.iter().copied().filter(|x| zeta_grid.contains(x)).collect();
    let idx = subsample(f.grid.n, SEMINORM_CAP);
    let g = f.grid;
    let d = f.dim;
    Ok(par::max_range(idx.len(), |a| {
        let tau_p = idx[a];
        let tp = g.time(tau_p);
        let mut best: f64 = 0.0;
        let mut dtab = vec![0.0; idx.len() * d];
        for (b, &tau) in idx.iter().enumerate().take(a) {
            let tt = g.time(tau);
            for (c, &t) in idx.iter().enumerate().take(b + 1) {
                for k in 0..d {
                    dtab[c * d + k] = f.coords(tau_p, t)[k] - f.coords(tau, t)[k];
                }
            }
            for c in 1..=b {
                let t = idx[c];
                let ti = g.time(t);
                let dt = &dtab[c * d..(c + 1) * d];
                for (e, &s) in idx.iter().enumerate().take(c) {
                    let num = diff_norm(dt, &dtab[e * d..(e + 1) * d]);
                    if num == 0.0 {
                        continue;
                    }
                    let si = g.time(s);
                    if tau > t {
                        // Both exponent sups are attained at grid endpoints:
                        // x^θ is monotone in θ and the ζ-weight is monotone in ζ.
                        let x = (tt - ti) / (tp - tt);
                        let th = x.powf(th_min).max(x.powf(th_max));
                        let first = (tt - ti).powf(-eta) * (ti - si).powf(gamma);
                        let second = (tt - ti).powf(z_max) * (tt - si).powf(gamma - eta - z_max);
                        best = best.max(num * th / first.min(second));
                    } else {
                        // τ = t: only θ = ζ gives a finite non-zero weight.
                        for &c0 in &common {
                            let w = (tp - tt).powf(c0) * (tt - si).powf(gamma - eta - c0);
                            best = best.max(num / w);
                        }
                    }
                }
            }
        }
        best
    }))
}

/// The diagonal `t ↦ f^t(t)`.
pub fn diagonal_restriction(f: &VolterraGridPath) -> GridPath {
    let values = (0..f.grid.n_points()).map(|i| HVector::from_vec_unchecked(f.coords(i, i).to_vec())).collect();
    GridPath::from_values_unchecked(f.grid, values)
}
