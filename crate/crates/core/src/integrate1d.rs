//! The pathwise Volterra integral `X^τ(t) = ∫₀ᵗ K(τ, s) dW(s)` as a limit of
//! left-endpoint Riemann sums over nested dyadic partitions.

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{norm, HVector};
use crate::kernels::{KernelTable, VolterraKernel};
use crate::par;
use crate::paths::{Grid, GridPath, VolterraGridPath};
use crate::stats::ls_slope;

/// Kernel, driver and the driver's declared Hölder regularity.
#[derive(Clone, Debug)]
pub struct IntegrandSpec {
    kernel: VolterraKernel,
    driver: GridPath,
    gamma: f64,
}

impl IntegrandSpec {
    pub fn new(kernel: VolterraKernel, driver: GridPath, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidParameter(format!("driver regularity must lie in (0, 1], got {gamma}")));
        }
        if gamma <= kernel.eta() {
            return Err(Error::Inadmissible(format!(
                "driver regularity {gamma} must exceed kernel order {}",
                kernel.eta()
            )));
        }
        if kernel.dim() != driver.dim() {
            return Err(Error::DimensionMismatch { expected: kernel.dim(), found: driver.dim() });
        }
        Ok(Self { kernel, driver, gamma })
    }

    pub fn kernel(&self) -> &VolterraKernel {
        &self.kernel
    }

    pub fn driver(&self) -> &GridPath {
        &self.driver
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn grid(&self) -> &Grid {
        self.driver.grid()
    }

    pub fn with_driver(&self, driver: GridPath) -> Result<Self> {
        Self::new(self.kernel.clone(), driver, self.gamma)
    }
}

/// One refinement level: the probe values (concatenated coefficients) and
/// the largest change from the previous level.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LevelEntry {
    pub level: u32,
    /// Second level index for two-parameter refinement, when it differs.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub level2: Option<u32>,
    pub values: Vec<f64>,
    pub difference: Option<f64>,
}

/// Refinement history of an integrator.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RefinementReport {
    pub levels: Vec<LevelEntry>,
    #[serde(with = "rate_serde")]
    pub fitted_rate: f64,
    pub target_rate: f64,
    pub converged: bool,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub off_diagonal: Vec<LevelEntry>,
}

/// Rates are finite numbers or the sentinels `"inf"` / `null`.
mod rate_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else if *x == f64::INFINITY {
            s.serialize_str("inf")
        } else {
            s.serialize_none()
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Str(String),
        Null,
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(x),
            Raw::Str(s) if s == "inf" => Ok(f64::INFINITY),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("unknown rate sentinel `{s}`"))),
            Raw::Null => Ok(f64::NAN),
        }
    }
}

impl RefinementReport {
    pub fn from_levels(levels: Vec<LevelEntry>, target_rate: f64, converged: bool) -> Self {
        let fitted_rate = fit_rate(&levels);
        Self { levels, fitted_rate, target_rate, converged, off_diagonal: Vec::new() }
    }

    pub fn differences(&self) -> Vec<(u32, f64)> {
        self.levels.iter().filter_map(|e| e.difference.map(|d| (e.level, d))).collect()
    }

    /// True when the successive differences strictly decrease from `from`
    /// on (ties of exact zeros allowed).
    pub fn monotone_beyond(&self, from: u32) -> bool {
        let d: Vec<f64> = self.differences().into_iter().filter(|(l, _)| *l > from).map(|(_, d)| d).collect();
        d.windows(2).all(|w| w[1] < w[0] || (w[0] == 0.0 && w[1] == 0.0))
    }
}

/// `−slope` of `log₂(difference)` against level; `+∞` when every difference
/// vanishes.
pub fn fit_rate(levels: &[LevelEntry]) -> f64 {
    let pts: Vec<(f64, f64)> = levels
        .iter()
        .filter_map(|e| e.difference.map(|d| (e.level as f64, d)))
        .collect();
    let pos: Vec<(f64, f64)> = pts.iter().copied().filter(|(_, d)| *d > 0.0).collect();
    if pos.is_empty() && !pts.is_empty() {
        return f64::INFINITY;
    }
    if pos.len() < 2 {
        return f64::NAN;
    }
    let x: Vec<f64> = pos.iter().map(|p| p.0).collect();
    let y: Vec<f64> = pos.iter().map(|p| p.1.log2()).collect();
    -ls_slope(&x, &y)
}

/// `β − 1` with `β = γ + θ*`, `θ* = min(1, 1.01 − γ)`.
pub fn target_rate(gamma: f64) -> f64 {
    gamma + (1.01 - gamma).min(1.0) - 1.0
}

fn check_level(grid: &Grid, level: u32) -> Result<usize> {
    grid.stride(level)
}

/// Left-endpoint sum of `K(τ, u)(W(v) − W(u))` over the level-`level`
/// dyadic partition of `[0, t]` (level points below `t`, then `t`).
pub fn riemann_sum(spec: &IntegrandSpec, tau: f64, t: f64, level: u32) -> Result<HVector> {
    riemann_sum_between(spec, tau, 0.0, t, level)
}

/// As [`riemann_sum`] over `[s, t]`: `s`, the level points strictly inside,
/// then `t`.
pub fn riemann_sum_between(spec: &IntegrandSpec, tau: f64, s: f64, t: f64, level: u32) -> Result<HVector> {
    let g = spec.grid();
    let stride = check_level(g, level)?;
    let js = g.index_of(s)?;
    let jt = g.index_of(t)?;
    if js > jt {
        return Err(Error::Domain(format!("interval [{s}, {t}] is reversed")));
    }
    if tau < t {
        return Err(Error::Domain(format!("tau={tau} must not precede t={t}")));
    }
    let w = &spec.driver;
    let mut acc = HVector::zeros(w.dim());
    let mut u = js;
    while u < jt {
        let v = ((u / stride + 1) * stride).min(jt);
        let k = spec.kernel.eval(tau, g.time(u))?;
        let dw = w.value(v) - w.value(u);
        k.apply_add_slice(dw.coords(), acc.coords_mut());
        u = v;
    }
    Ok(acc)
}

/// Outcome of [`volterra_integral`].
#[derive(Clone, Debug)]
pub struct VolterraIntegral {
    pub path: VolterraGridPath,
    pub converged: bool,
    pub unconverged_pairs: usize,
    pub worst_difference: f64,
    pub max_level: u32,
}

impl VolterraIntegral {
    /// `I(τ)(t, s) = I(τ)(t, 0) − I(τ)(s, 0)`.
    pub fn increment(&self, tau: usize, t: usize, s: usize) -> Result<HVector> {
        Ok(self.path.value(tau, t)? - self.path.value(tau, s)?)
    }
}

/// Chooses the coarsest level from which every later successive difference
/// stays below `tol`; returns `(level, last difference)`.
fn settle(diffs: &[f64], tol: f64) -> (usize, f64) {
    let top = diffs.len() - 1;
    let mut l = top;
    while l > 0 && diffs[l] < tol {
        l -= 1;
    }
    (l, diffs[top])
}

/// The integral at every discrete simplex point `(τ, t)`, `t ≤ τ`, each
/// value taken at the level where the dyadic sums have settled within `tol`.
pub fn volterra_integral(spec: &IntegrandSpec, max_level: u32, tol: f64) -> Result<VolterraIntegral> {
    let g = *spec.grid();
    check_level(&g, max_level)?;
    let d = spec.driver.dim();
    let n = g.n();
    let table = KernelTable::new(&spec.kernel, g)?;
    let w = &spec.driver;
    let nl = max_level as usize + 1;
    let rows = par::try_map_range(n + 1, |i| {
        // per level: values S_l(i, j) for j = 0..=i
        let mut lv = vec![vec![0.0; (i + 1) * d]; nl];
        let mut dw = vec![0.0; d];
        for (l, vals) in lv.iter_mut().enumerate() {
            let stride = n >> l;
            let mut prefix = vec![0.0; d];
            let mut m = 0;
            for j in 1..=i {
                // advance the prefix over complete cells below j
                while (m + 1) * stride < j {
                    let (u, v) = (m * stride, (m + 1) * stride);
                    for k in 0..d {
                        dw[k] = w.value(v).coords()[k] - w.value(u).coords()[k];
                    }
                    table.get(i, u)?.apply_add_slice(&dw, &mut prefix);
                    m += 1;
                }
                let u = m * stride;
                for k in 0..d {
                    dw[k] = w.value(j).coords()[k] - w.value(u).coords()[k];
                }
                let out = &mut vals[j * d..(j + 1) * d];
                out.copy_from_slice(&prefix);
                table.get(i, u)?.apply_add_slice(&dw, out);
            }
        }
        let mut row = vec![0.0; (i + 1) * d];
        let mut bad = 0usize;
        let mut worst: f64 = 0.0;
        let mut diffs = vec![0.0; nl];
        for j in 0..=i {
            for l in 1..nl {
                diffs[l] = diff_norm(&lv[l][j * d..(j + 1) * d], &lv[l - 1][j * d..(j + 1) * d]);
            }
            let (l, last) = if nl > 1 { settle(&diffs, tol) } else { (0, 0.0) };
            if last >= tol {
                bad += 1;
            }
            worst = worst.max(last);
            row[j * d..(j + 1) * d].copy_from_slice(&lv[l][j * d..(j + 1) * d]);
        }
        Ok((row, bad, worst))
    })?;
    let mut data = Vec::with_capacity(rows.len());
    let mut bad = 0;
    let mut worst: f64 = 0.0;
    for (r, b, w) in rows {
        data.push(r);
        bad += b;
        worst = worst.max(w);
    }
    Ok(VolterraIntegral {
        path: VolterraGridPath::from_rows(g, d, data)?,
        converged: bad == 0,
        unconverged_pairs: bad,
        worst_difference: worst,
        max_level,
    })
}

/// The diagonal `t ↦ X^t(t)` only, with the same level selection as
/// [`volterra_integral`]. Returns the path and whether every point settled.
pub fn volterra_diagonal(spec: &IntegrandSpec, max_level: u32, tol: f64) -> Result<(GridPath, bool)> {
    let g = *spec.grid();
    check_level(&g, max_level)?;
    let d = spec.driver.dim();
    let n = g.n();
    let table = KernelTable::new(&spec.kernel, g)?;
    let w = &spec.driver;
    let nl = max_level as usize + 1;
    let pts = par::try_map_range(n + 1, |i| {
        let mut vals = vec![vec![0.0; d]; nl];
        let mut dw = vec![0.0; d];
        for (l, acc) in vals.iter_mut().enumerate() {
            let stride = n >> l;
            let mut u = 0;
            while u < i {
                let v = ((u / stride + 1) * stride).min(i);
                for k in 0..d {
                    dw[k] = w.value(v).coords()[k] - w.value(u).coords()[k];
                }
                table.get(i, u)?.apply_add_slice(&dw, acc);
                u = v;
            }
        }
        let diffs: Vec<f64> =
            (0..nl).map(|l| if l == 0 { 0.0 } else { diff_norm(&vals[l], &vals[l - 1]) }).collect();
        let (l, last) = if nl > 1 { settle(&diffs, tol) } else { (0, 0.0) };
        Ok((HVector::from_vec_unchecked(vals[l].clone()), last < tol))
    })?;
    let ok = pts.iter().all(|p| p.1);
    let values = pts.into_iter().map(|p| p.0).collect();
    Ok((GridPath::new(g, values)?, ok))
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    let v: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&v)
}

/// Sewing defect `|I(Ξ^τ)(t, s) − Ξ^τ(t, s)|` and the weight
/// `(τ−t)^{−κ}(t−s)^β ∧ (τ−s)^{β−κ}` it is bounded against.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SewingDefect {
    pub defect: f64,
    pub weight: f64,
}

impl SewingDefect {
    pub fn ratio(&self) -> f64 {
        if self.defect == 0.0 {
            0.0
        } else {
            self.defect / self.weight
        }
    }
}

pub fn sewing_defect(
    spec: &IntegrandSpec,
    tau: f64,
    t: f64,
    s: f64,
    level: u32,
    beta: f64,
    kappa: f64,
) -> Result<SewingDefect> {
    if !(s <= t && t <= tau) {
        return Err(Error::Domain(format!("need s <= t <= tau, got ({s}, {t}, {tau})")));
    }
    if s == t {
        return Ok(SewingDefect { defect: 0.0, weight: 0.0 });
    }
    let g = spec.grid();
    let integral = riemann_sum_between(spec, tau, s, t, level)?;
    let (is, it) = (g.index_of(s)?, g.index_of(t)?);
    let germ = spec.kernel.eval(tau, s)?.apply(&(spec.driver.value(it) - spec.driver.value(is)))?;
    let defect = (&integral - &germ).norm();
    let second = (tau - s).powf(beta - kappa);
    let weight = if tau > t { ((tau - t).powf(-kappa) * (t - s).powf(beta)).min(second) } else { second };
    Ok(SewingDefect { defect, weight })
}

/// Riemann sums at every probe `(τ, t)` over a range of levels.
pub fn convergence_study(
    spec: &IntegrandSpec,
    probes: &[(f64, f64)],
    levels: RangeInclusive<u32>,
) -> Result<RefinementReport> {
    let ls: Vec<u32> = levels.collect();
    if ls.len() < 3 {
        return Err(Error::InvalidParameter("a convergence study needs at least 3 levels".into()));
    }
    for &(tau, t) in probes {
        if t > tau {
            return Err(Error::Domain(format!("probe ({tau}, {t}) is outside the simplex")));
        }
    }
    let vals = par::try_map_range(ls.len(), |k| {
        let mut v = Vec::new();
        for &(tau, t) in probes {
            v.extend_from_slice(riemann_sum(spec, tau, t, ls[k])?.coords());
        }
        Ok(v)
    })?;
    let d = spec.driver.dim();
    let mut entries = Vec::with_capacity(ls.len());
    for (k, v) in vals.iter().enumerate() {
        let difference = (k > 0).then(|| {
            v.chunks(d).zip(vals[k - 1].chunks(d)).map(|(a, b)| diff_norm(a, b)).fold(0.0, f64::max)
        });
        entries.push(LevelEntry { level: ls[k], level2: None, values: v.clone(), difference });
    }
    Ok(RefinementReport::from_levels(entries, target_rate(spec.gamma), true))
}
