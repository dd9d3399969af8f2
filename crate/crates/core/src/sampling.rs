//! Reproducible simulation of Q-Wiener, Q-fBm and time-changed paths.
//!
//! Sample `k` of a configuration draws from `ChaCha8(seed)` on stream `k`,
//! so samples are independent, reproducible and order free.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::covariance::fbm_kernel;
use crate::error::{Error, Result};
use crate::hilbert::{dot, HOperator, HVector};
use crate::par;
use crate::paths::{Grid, GridPath};
use crate::stats::ls_slope;

#[derive(Clone, Debug)]
pub enum SamplerKind {
    Wiener,
    Fbm { h: f64 },
    /// A Q-Wiener path run along the time change `z` (or `|z|`).
    Composed { z: GridPath, absolute: bool },
}

#[derive(Clone, Debug)]
pub struct SamplerConfig {
    pub seed: u64,
    pub grid: Grid,
    pub q0: HOperator,
    pub kind: SamplerKind,
}

/// Lower-triangular Cholesky factor of the fBm Gram matrix on `t_1..t_N`.
#[derive(Debug)]
pub struct FbmFactor {
    rows: Vec<Vec<f64>>,
}

impl FbmFactor {
    pub fn new(grid: &Grid, h: f64) -> Result<Self> {
        if !(h > 0.0 && h < 1.0) {
            return Err(Error::InvalidParameter(format!("Hurst parameter must lie in (0, 1), got {h}")));
        }
        let gram = |i: usize, j: usize| fbm_kernel(h, grid.time(i + 1), grid.time(j + 1));
        let max_diag = grid.horizon().powf(2.0 * h);
        match cholesky(grid.n(), &gram, 0.0) {
            Ok(rows) => Ok(Self { rows }),
            Err(_) => {
                let jitter = 1e-12 * max_diag;
                cholesky(grid.n(), &gram, jitter).map(|rows| Self { rows }).map_err(|pivot| Error::Cholesky {
                    pivot,
                    suggested_jitter: 1e-9 * max_diag,
                })
            }
        }
    }

    /// Values at `t_1..t_N` of the fBm driven by the standard normals `z`.
    fn apply(&self, z: &[f64], out: &mut [f64]) {
        for (k, row) in self.rows.iter().enumerate() {
            out[k] = dot(row, &z[..=k]);
        }
    }
}

/// Row-oriented Cholesky of `A + jitter I`, parallel over rows below each
/// pivot. Returns the failing pivot on breakdown.
fn cholesky<F>(n: usize, a: &F, jitter: f64) -> std::result::Result<Vec<Vec<f64>>, usize>
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    let mut rows: Vec<Vec<f64>> = (0..n).map(|i| vec![0.0; i + 1]).collect();
    for j in 0..n {
        let (head, tail) = rows.split_at_mut(j + 1);
        let rj = &mut head[j];
        let s = a(j, j) + jitter - dot(&rj[..j], &rj[..j]);
        if !(s > 0.0) || !s.is_finite() {
            return Err(j);
        }
        let d = s.sqrt();
        rj[j] = d;
        let rj: &[f64] = rj;
        par::for_each_mut(tail, |k, ri| {
            let i = j + 1 + k;
            ri[j] = (a(i, j) - dot(&ri[..j], &rj[..j])) / d;
        });
    }
    Ok(rows)
}

/// Prepared sampler: eigen-decomposition of `Q0` and, for fBm, the Gram
/// factor, both reused across samples.
pub struct Sampler {
    cfg: SamplerConfig,
    roots: Vec<f64>,
    vectors: HOperator,
    factor: Option<Arc<FbmFactor>>,
}

impl Sampler {
    pub fn new(cfg: SamplerConfig) -> Result<Self> {
        let eig = cfg.q0.check_psd()?;
        let roots = eig.values.iter().map(|l| l.max(0.0).sqrt()).collect();
        let factor = match &cfg.kind {
            SamplerKind::Fbm { h } => Some(Arc::new(FbmFactor::new(&cfg.grid, *h)?)),
            SamplerKind::Composed { z, .. } => {
                if z.dim() != 1 {
                    return Err(Error::DimensionMismatch { expected: 1, found: z.dim() });
                }
                None
            }
            SamplerKind::Wiener => None,
        };
        Ok(Self { cfg, roots, vectors: eig.vectors, factor })
    }

    /// Reuses an existing fBm factor for another seed or `Q0`.
    pub fn with_factor(cfg: SamplerConfig, factor: Arc<FbmFactor>) -> Result<Self> {
        let eig = cfg.q0.check_psd()?;
        let roots = eig.values.iter().map(|l| l.max(0.0).sqrt()).collect();
        Ok(Self { cfg, roots, vectors: eig.vectors, factor: Some(factor) })
    }

    pub fn factor(&self) -> Option<Arc<FbmFactor>> {
        self.factor.clone()
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.cfg
    }

    fn rng(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(index);
        rng
    }

    /// Rotates eigen-coordinates back into the working basis.
    fn rotate(&self, c: &[f64]) -> HVector {
        let mut out = vec![0.0; c.len()];
        self.vectors.apply_slice(c, &mut out);
        HVector::from_vec_unchecked(out)
    }

    /// Sample number `index`.
    pub fn sample(&self, index: u64) -> Result<GridPath> {
        let mut rng = self.rng(index);
        match &self.cfg.kind {
            SamplerKind::Wiener => Ok(self.wiener(&self.cfg.grid, &mut rng)),
            SamplerKind::Fbm { .. } => Ok(self.fbm(&mut rng)),
            SamplerKind::Composed { z, absolute } => {
                let top = z.values().iter().map(|v| v.coords()[0].abs()).fold(0.0, f64::max);
                let base_grid = Grid::new(if top > 0.0 { top } else { 1.0 }, self.cfg.grid.n())?;
                let b = self.wiener(&base_grid, &mut rng);
                shift_compose(&b, z, *absolute)
            }
        }
    }

    pub fn samples(&self, count: usize) -> Result<Vec<GridPath>> {
        par::try_map_range(count, |k| self.sample(k as u64))
    }

    fn wiener(&self, grid: &Grid, rng: &mut ChaCha8Rng) -> GridPath {
        let d = self.roots.len();
        let h = grid.step();
        let scale: Vec<f64> = self.roots.iter().map(|r| r * h.sqrt()).collect();
        let mut c = vec![0.0; d];
        let mut values = Vec::with_capacity(grid.n_points());
        values.push(HVector::zeros(d));
        for _ in 0..grid.n() {
            for (ci, s) in c.iter_mut().zip(&scale) {
                let z: f64 = StandardNormal.sample(rng);
                *ci += s * z;
            }
            values.push(self.rotate(&c));
        }
        GridPath::from_values_unchecked(*grid, values)
    }

    fn fbm(&self, rng: &mut ChaCha8Rng) -> GridPath {
        let factor = self.factor.as_ref().expect("fBm sampler has a factor");
        let n = self.cfg.grid.n();
        let d = self.roots.len();
        let mut coords = vec![vec![0.0; n]; d];
        let mut z = vec![0.0; n];
        for (i, col) in coords.iter_mut().enumerate() {
            for zi in z.iter_mut() {
                *zi = StandardNormal.sample(rng);
            }
            factor.apply(&z, col);
            col.iter_mut().for_each(|x| *x *= self.roots[i]);
        }
        let mut values = Vec::with_capacity(n + 1);
        values.push(HVector::zeros(d));
        let mut c = vec![0.0; d];
        for k in 0..n {
            for i in 0..d {
                c[i] = coords[i][k];
            }
            values.push(self.rotate(&c));
        }
        GridPath::from_values_unchecked(self.cfg.grid, values)
    }
}

pub fn sample_qwiener(cfg: &SamplerConfig) -> Result<GridPath> {
    if !matches!(cfg.kind, SamplerKind::Wiener) {
        return Err(Error::InvalidParameter("sample_qwiener needs kind = wiener".into()));
    }
    Sampler::new(cfg.clone())?.sample(0)
}

pub fn sample_qfbm(cfg: &SamplerConfig) -> Result<GridPath> {
    if !matches!(cfg.kind, SamplerKind::Fbm { .. }) {
        return Err(Error::InvalidParameter("sample_qfbm needs kind = fbm".into()));
    }
    Sampler::new(cfg.clone())?.sample(0)
}

/// Regression slope of log sup-increment against log lag, over dyadic lags
/// `1, 2, 4, …` up to `min(64, N/2)` grid steps.
pub fn empirical_holder_exponent(p: &GridPath) -> Result<f64> {
    let g = p.grid();
    let n = g.n();
    if n < 4 {
        return Err(Error::InvalidParameter("need at least 4 grid intervals".into()));
    }
    let max_lag = 64.min(n / 2);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut lag = 1;
    while lag <= max_lag {
        let sup = (0..=n - lag).map(|i| (p.value(i + lag) - p.value(i)).norm()).fold(0.0, f64::max);
        if sup > 0.0 {
            xs.push((lag as f64 * g.step()).ln());
            ys.push(sup.ln());
        }
        lag *= 2;
    }
    if xs.len() < 2 {
        return Err(Error::InvalidParameter("path is constant; Hölder exponent undefined".into()));
    }
    Ok(ls_slope(&xs, &ys))
}

/// `t ↦ B(Z(t))` (or `B(|Z(t)|)`), with `B` linearly interpolated.
pub fn shift_compose(b: &GridPath, z: &GridPath, absolute: bool) -> Result<GridPath> {
    if z.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, found: z.dim() });
    }
    let values = z
        .values()
        .iter()
        .map(|v| {
            let x = v.coords()[0];
            b.interpolate(if absolute { x.abs() } else { x })
        })
        .collect::<Result<Vec<_>>>()?;
    GridPath::new(*z.grid(), values)
}
