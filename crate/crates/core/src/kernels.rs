//! Operator-valued Volterra kernels `K(τ, s)`, `s < τ`, and their discrete
//! seminorm estimators.

use std::borrow::Cow;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fracou::mittag_leffler_op;
use crate::hilbert::{op_norm_of, HOperator};
use crate::par;
use crate::paths::{default_theta_grid, subsample, Grid, SEMINORM_CAP};

pub type KernelFn = dyn Fn(f64, f64) -> Result<HOperator> + Send + Sync;

/// A kernel evaluator together with its declared singularity order `eta`.
#[derive(Clone)]
pub struct VolterraKernel {
    f: Arc<KernelFn>,
    eta: f64,
    label: String,
    dim: usize,
    stationary: bool,
}

impl fmt::Debug for VolterraKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VolterraKernel")
            .field("label", &self.label)
            .field("eta", &self.eta)
            .field("dim", &self.dim)
            .field("stationary", &self.stationary)
            .finish()
    }
}

impl VolterraKernel {
    /// `stationary` declares that `K(τ, s)` depends only on `τ − s`, which
    /// lets grid integrators cache evaluations by lag.
    pub fn new<F>(dim: usize, eta: f64, label: impl Into<String>, stationary: bool, f: F) -> Result<Self>
    where
        F: Fn(f64, f64) -> Result<HOperator> + Send + Sync + 'static,
    {
        if !(0.0..1.0).contains(&eta) {
            return Err(Error::InvalidParameter(format!("kernel order eta must lie in [0, 1), got {eta}")));
        }
        Ok(Self { f: Arc::new(f), eta, label: label.into(), dim, stationary })
    }

    /// `K(τ, s)`. Evaluation on or above the diagonal is a contract violation.
    pub fn eval(&self, tau: f64, s: f64) -> Result<HOperator> {
        if !(s < tau) {
            return Err(Error::Domain(format!("kernel evaluated at s={s} >= tau={tau}")));
        }
        let m = (self.f)(tau, s)?;
        if m.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: m.dim() });
        }
        if !m.is_finite() {
            return Err(Error::NonFinite("kernel evaluation"));
        }
        Ok(m)
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_stationary(&self) -> bool {
        self.stationary
    }

    /// `c K`
    pub fn scaled(&self, c: f64) -> VolterraKernel {
        let f = self.f.clone();
        VolterraKernel {
            f: Arc::new(move |t, s| Ok(f(t, s)?.scale(c))),
            eta: self.eta,
            label: format!("{c}*({})", self.label),
            dim: self.dim,
            stationary: self.stationary,
        }
    }

    /// `K − L`, declared with the larger of the two orders.
    pub fn difference(&self, other: &VolterraKernel) -> Result<VolterraKernel> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        let (f, g) = (self.f.clone(), other.f.clone());
        Ok(VolterraKernel {
            f: Arc::new(move |t, s| Ok(&f(t, s)? - &g(t, s)?)),
            eta: self.eta.max(other.eta),
            label: format!("({}) - ({})", self.label, other.label),
            dim: self.dim,
            stationary: self.stationary && other.stationary,
        })
    }
}

/// Pointwise adjoint `K*(τ, s) = K(τ, s)*`.
pub fn kernel_adjoint(k: &VolterraKernel) -> VolterraKernel {
    let f = k.f.clone();
    VolterraKernel {
        f: Arc::new(move |t, s| Ok(f(t, s)?.adjoint())),
        eta: k.eta,
        label: format!("({})*", k.label),
        dim: k.dim,
        stationary: k.stationary,
    }
}

pub fn identity_kernel(dim: usize) -> VolterraKernel {
    VolterraKernel {
        f: Arc::new(move |_, _| Ok(HOperator::identity(dim))),
        eta: 0.0,
        label: "identity".into(),
        dim,
        stationary: true,
    }
}

pub fn zero_kernel(dim: usize) -> VolterraKernel {
    VolterraKernel {
        f: Arc::new(move |_, _| Ok(HOperator::zeros(dim))),
        eta: 0.0,
        label: "zero".into(),
        dim,
        stationary: true,
    }
}

/// `(τ − s)^p A`, of order `max(0, −p)`.
pub fn power_kernel(p: f64, a: HOperator) -> Result<VolterraKernel> {
    if !(p > -1.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!("power kernel exponent must exceed -1, got {p}")));
    }
    let dim = a.dim();
    VolterraKernel::new(dim, (-p).max(0.0), format!("power:p={p}"), true, move |t, s| {
        Ok(a.scale((t - s).powf(p)))
    })
}

/// `(τ − s)^{−η} A` with `η ∈ (0, 1)`.
pub fn fractional_kernel(eta: f64, a: HOperator) -> Result<VolterraKernel> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidParameter(format!("fractional kernel needs eta in (0, 1), got {eta}")));
    }
    let mut k = power_kernel(-eta, a)?;
    k.label = format!("frac:eta={eta}");
    Ok(k)
}

/// Riemann-Liouville kernel `(τ − s)^{H − 1/2} A`.
pub fn rl_kernel(h: f64, a: HOperator) -> Result<VolterraKernel> {
    if !(h > 0.0 && h < 1.5) {
        return Err(Error::InvalidParameter(format!("Hurst parameter must lie in (0, 1.5), got {h}")));
    }
    let mut k = power_kernel(h - 0.5, a)?;
    k.label = format!("rl:h={h}");
    Ok(k)
}

/// `(τ − s)^{α − 1} E_{α,β}(A (τ − s)^α)`, of order `1 − α`.
pub fn ml_kernel(alpha: f64, beta: f64, a: HOperator) -> Result<VolterraKernel> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!("Mittag-Leffler kernel needs alpha in (0, 1], got {alpha}")));
    }
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
    }
    let dim = a.dim();
    VolterraKernel::new(dim, 1.0 - alpha, format!("ml:alpha={alpha},beta={beta}"), true, move |t, s| {
        let x = t - s;
        let e = mittag_leffler_op(alpha, beta, &a.scale(x.powf(alpha)))?;
        Ok(e.scale(x.powf(alpha - 1.0)))
    })
}

/// `e^{−a(τ − s)} I`.
pub fn exp_kernel(a: f64, dim: usize) -> VolterraKernel {
    VolterraKernel {
        f: Arc::new(move |t, s| Ok(HOperator::scalar(dim, (-a * (t - s)).exp()))),
        eta: 0.0,
        label: format!("exp:a={a}"),
        dim,
        stationary: true,
    }
}

/// Kernel values on the points of a grid, cached by lag when the kernel is
/// stationary.
pub struct KernelTable {
    kernel: VolterraKernel,
    grid: Grid,
    lags: Option<Vec<HOperator>>,
}

impl KernelTable {
    pub fn new(kernel: &VolterraKernel, grid: Grid) -> Result<Self> {
        let lags = if kernel.is_stationary() {
            let n = grid.n();
            let mut v = par::try_map_range(n, |m| kernel.eval(grid.time(m + 1), 0.0))?;
            v.insert(0, HOperator::zeros(kernel.dim()));
            Some(v)
        } else {
            None
        };
        Ok(Self { kernel: kernel.clone(), grid, lags })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// `K(t_i, t_j)` for `j < i`.
    pub fn get(&self, i: usize, j: usize) -> Result<Cow<'_, HOperator>> {
        if j >= i {
            return Err(Error::Domain(format!("kernel table index ({i}, {j}) not below the diagonal")));
        }
        match &self.lags {
            Some(l) => Ok(Cow::Borrowed(&l[i - j])),
            None => Ok(Cow::Owned(self.kernel.eval(self.grid.time(i), self.grid.time(j))?)),
        }
    }
}

/// The four kernel seminorms and the exponent grids used for them.
#[derive(Clone, Debug, Serialize)]
pub struct KernelSeminorms {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub theta_grid: Vec<f64>,
    pub nu_grid: Vec<f64>,
}

impl KernelSeminorms {
    pub fn total(&self) -> f64 {
        self.k1 + self.k2 + self.k3 + self.k4
    }
}

/// Kernel values on the (subsampled) grid, lower triangle only.
struct SampledKernel {
    times: Vec<f64>,
    dim: usize,
    // vals[a][b] for b < a, flattened operator entries
    vals: Vec<Vec<Vec<f64>>>,
}

impl SampledKernel {
    fn new(k: &VolterraKernel, grid: &Grid) -> Result<Self> {
        let idx = subsample(grid.n(), SEMINORM_CAP);
        let times: Vec<f64> = idx.iter().map(|&i| grid.time(i)).collect();
        let vals = par::try_map_range(times.len(), |a| {
            (0..a).map(|b| Ok(k.eval(times[a], times[b])?.entries().to_vec())).collect::<Result<Vec<_>>>()
        })?;
        Ok(Self { times, dim: k.dim(), vals })
    }

    fn get(&self, a: usize, b: usize) -> &[f64] {
        &self.vals[a][b]
    }

    fn norm_of_diff(&self, x: &[f64], y: &[f64], buf: &mut [f64]) -> f64 {
        for ((o, a), b) in buf.iter_mut().zip(x).zip(y) {
            *o = a - b;
        }
        op_norm_of(self.dim, buf)
    }
}

fn endpoint_max(x: f64, grid: &[f64]) -> f64 {
    let lo = grid.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    x.powf(lo).max(x.powf(hi))
}

fn check_exponents(grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::InvalidParameter("exponent grid must be a non-empty subset of [0, 1]".into()));
    }
    Ok(())
}

/// `sup ‖K(t, s)‖ (t − s)^η`.
pub fn seminorm_k1(k: &VolterraKernel, grid: &Grid) -> Result<f64> {
    let sk = SampledKernel::new(k, grid)?;
    Ok(k1_sampled(&sk, k.eta))
}

fn k1_sampled(sk: &SampledKernel, eta: f64) -> f64 {
    par::max_range(sk.times.len(), |a| {
        (0..a)
            .map(|b| op_norm_of(sk.dim, sk.get(a, b)) * (sk.times[a] - sk.times[b]).powf(eta))
            .fold(0.0, f64::max)
    })
}

/// Upper-variable increments: `sup ‖K(t, s) − K(u, s)‖ / (|t − u|^θ |u − s|^{−θ−η})`.
pub fn seminorm_k2(k: &VolterraKernel, grid: &Grid, theta_grid: &[f64]) -> Result<f64> {
    check_exponents(theta_grid)?;
    let sk = SampledKernel::new(k, grid)?;
    Ok(k2_sampled(&sk, k.eta, theta_grid))
}

fn k2_sampled(sk: &SampledKernel, eta: f64, theta: &[f64]) -> f64 {
    let tm = &sk.times;
    par::max_range(tm.len(), |a| {
        let mut buf = vec![0.0; sk.dim * sk.dim];
        let mut best: f64 = 0.0;
        for u in 1..a {
            for s in 0..u {
                let num = sk.norm_of_diff(sk.get(a, s), sk.get(u, s), &mut buf);
                if num == 0.0 {
                    continue;
                }
                let us = tm[u] - tm[s];
                best = best.max(num * us.powf(eta) * endpoint_max(us / (tm[a] - tm[u]), theta));
            }
        }
        best
    })
}

/// Lower-variable increments: `sup ‖K(t, u) − K(t, s)‖ / (|u − s|^θ |t − u|^{−θ−η})`.
pub fn seminorm_k3(k: &VolterraKernel, grid: &Grid, theta_grid: &[f64]) -> Result<f64> {
    check_exponents(theta_grid)?;
    let sk = SampledKernel::new(k, grid)?;
    Ok(k3_sampled(&sk, k.eta, theta_grid))
}

fn k3_sampled(sk: &SampledKernel, eta: f64, theta: &[f64]) -> f64 {
    let tm = &sk.times;
    par::max_range(tm.len(), |a| {
        let mut buf = vec![0.0; sk.dim * sk.dim];
        let mut best: f64 = 0.0;
        for u in 1..a {
            for s in 0..u {
                let num = sk.norm_of_diff(sk.get(a, u), sk.get(a, s), &mut buf);
                if num == 0.0 {
                    continue;
                }
                let tu = tm[a] - tm[u];
                best = best.max(num * tu.powf(eta) * endpoint_max(tu / (tm[u] - tm[s]), theta));
            }
        }
        best
    })
}

/// Mixed increments over `r < s < τ < τ'`.
pub fn seminorm_k4(k: &VolterraKernel, grid: &Grid, theta_grid: &[f64], nu_grid: &[f64]) -> Result<f64> {
    check_exponents(theta_grid)?;
    check_exponents(nu_grid)?;
    let sk = SampledKernel::new(k, grid)?;
    Ok(k4_sampled(&sk, k.eta, theta_grid, nu_grid))
}

fn k4_sampled(sk: &SampledKernel, eta: f64, theta: &[f64], nu: &[f64]) -> f64 {
    let tm = &sk.times;
    let d2 = sk.dim * sk.dim;
    par::max_range(tm.len(), |a| {
        let mut best: f64 = 0.0;
        let mut diff = vec![0.0; tm.len() * d2];
        let mut buf = vec![0.0; d2];
        for b in 1..a {
            // diff[s] = K(τ', s) − K(τ, s)
            for s in 0..b {
                for ((o, x), y) in diff[s * d2..(s + 1) * d2].iter_mut().zip(sk.get(a, s)).zip(sk.get(b, s)) {
                    *o = x - y;
                }
            }
            let nu_fac = |r: usize| endpoint_max((tm[b] - tm[r]) / (tm[a] - tm[b]), nu);
            for s in 1..b {
                for r in 0..s {
                    let num = sk.norm_of_diff(&diff[s * d2..(s + 1) * d2], &diff[r * d2..(r + 1) * d2], &mut buf);
                    if num == 0.0 {
                        continue;
                    }
                    let tr = tm[b] - tm[r];
                    let w = tr.powf(eta) * nu_fac(r) * endpoint_max(tr / (tm[s] - tm[r]), theta);
                    best = best.max(num * w);
                }
            }
        }
        best
    })
}

/// All four seminorms on the default 11-point exponent grids.
pub fn kernel_seminorms(k: &VolterraKernel, grid: &Grid) -> Result<KernelSeminorms> {
    kernel_seminorms_with(k, grid, &default_theta_grid(), &default_theta_grid())
}

pub fn kernel_seminorms_with(
    k: &VolterraKernel,
    grid: &Grid,
    theta_grid: &[f64],
    nu_grid: &[f64],
) -> Result<KernelSeminorms> {
    check_exponents(theta_grid)?;
    check_exponents(nu_grid)?;
    let sk = SampledKernel::new(k, grid)?;
    Ok(KernelSeminorms {
        k1: k1_sampled(&sk, k.eta),
        k2: k2_sampled(&sk, k.eta, theta_grid),
        k3: k3_sampled(&sk, k.eta, theta_grid),
        k4: k4_sampled(&sk, k.eta, theta_grid, nu_grid),
        theta_grid: theta_grid.to_vec(),
        nu_grid: nu_grid.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fracou::mittag_leffler_scalar;
    use crate::hilbert::{tensor, HVector};

    fn close(a: &HOperator, b: &HOperator, tol: f64) -> bool {
        (a - b).max_abs() <= tol
    }

    #[test]
    fn fractional_kernel_values() {
        let a = HOperator::from_rows(&[vec![1.0, 2.0], vec![0.5, -1.0]]).unwrap();
        let k = fractional_kernel(0.37, a.clone()).unwrap();
        assert_eq!(k.eval(1.0, 0.0).unwrap(), a);
        let k = fractional_kernel(0.5, HOperator::identity(2)).unwrap();
        assert!(close(&k.eval(1.0, 0.75).unwrap(), &HOperator::scalar(2, 2.0), 1e-15));
        assert!(k.eval(0.5, 0.5).is_err());
        assert!(k.eval(0.5, 0.7).is_err());
        assert!(fractional_kernel(1.0, HOperator::identity(1)).is_err());
    }

    #[test]
    fn fractional_kernel_stationary() {
        let k = fractional_kernel(0.3, HOperator::diag(&[1.0, 2.0])).unwrap();
        for (t, s) in [(1.0, 0.5), (0.75, 0.25)] {
            let c = 0.25;
            assert_eq!(k.eval(t, s).unwrap(), k.eval(t + c, s + c).unwrap());
        }
    }

    #[test]
    fn fractional_k1_matches_op_norm() {
        let a = HOperator::from_rows(&[vec![1.0, 0.5], vec![-0.2, 0.8]]).unwrap();
        let g = Grid::unit(64).unwrap();
        let k = fractional_kernel(0.3, a.clone()).unwrap();
        let k1 = seminorm_k1(&k, &g).unwrap();
        assert!((k1 / a.op_norm().unwrap() - 1.0).abs() < 0.01);
        let id = fractional_kernel(0.3, HOperator::identity(1)).unwrap();
        assert!((seminorm_k1(&id, &g).unwrap() - 1.0).abs() < 0.01);
    }

    #[test]
    fn exp_kernel_values_and_seminorms() {
        let k = exp_kernel(0.0, 2);
        assert_eq!(k.eval(0.7, 0.1).unwrap(), HOperator::identity(2));
        let k = exp_kernel(1.0, 2);
        assert!(close(&k.eval(1.0, 0.0).unwrap(), &HOperator::scalar(2, (-1.0f64).exp()), 1e-16));
        let g = Grid::unit(64).unwrap();
        let s = kernel_seminorms(&k, &g).unwrap();
        assert!((s.k1 - (-1.0f64 / 64.0).exp()).abs() < 1e-12);
        assert!(s.k2.is_finite() && s.k2 > 0.0);
    }

    #[test]
    fn zero_kernel_all_zero() {
        let g = Grid::unit(32).unwrap();
        let s = kernel_seminorms(&zero_kernel(2), &g).unwrap();
        assert_eq!([s.k1, s.k2, s.k3, s.k4], [0.0; 4]);
    }

    #[test]
    fn ml_kernel_reductions() {
        let a = 0.7;
        let k = ml_kernel(1.0, 1.0, HOperator::scalar(2, a)).unwrap();
        for (t, s) in [(1.0, 0.0), (0.6, 0.35)] {
            let expect = HOperator::scalar(2, (a * (t - s)).exp());
            assert!(close(&k.eval(t, s).unwrap(), &expect, 1e-13));
        }
        let (alpha, beta) = (0.6, 0.8);
        let k = ml_kernel(alpha, beta, HOperator::zeros(3)).unwrap();
        let x: f64 = 0.3;
        let expect = x.powf(alpha - 1.0) / statrs::function::gamma::gamma(beta);
        assert!(close(&k.eval(1.0, 0.7).unwrap(), &HOperator::scalar(3, expect), 1e-13 * expect));
        assert!((k.eta() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn ml_kernel_extended_precision_value() {
        // E_{0.6,0.6}(0.5) summed to 200 terms with 50-digit arithmetic.
        const ORACLE: f64 = 1.627_332_275_119_611_2;
        let k = ml_kernel(0.6, 0.6, HOperator::scalar(1, 0.5)).unwrap();
        let v = k.eval(1.0, 0.0).unwrap().get(0, 0);
        assert!((v - ORACLE).abs() < 1e-14, "{v}");
        assert!((mittag_leffler_scalar(0.6, 0.6, 0.5).unwrap() - ORACLE).abs() < 1e-14);
    }

    #[test]
    fn ml_kernel_alpha_one_matches_matrix_exponential() {
        let a = HOperator::from_rows(&[vec![-1.0, 2.0], vec![0.5, 0.3]]).unwrap();
        let k = ml_kernel(1.0, 1.0, a.clone()).unwrap();
        let x = 1.5;
        // Matrix exponential by scaling and squaring of a long Taylor series.
        let m = a.scale(x / 1024.0);
        let mut e = HOperator::identity(2);
        let mut term = HOperator::identity(2);
        for i in 1..30 {
            term = (&term * &m).scale(1.0 / i as f64);
            e += &term;
        }
        for _ in 0..10 {
            e = &e * &e;
        }
        assert!((a.scale(x).op_norm().unwrap()) <= 5.0);
        assert!(close(&k.eval(x, 0.0).unwrap(), &e, 1e-10));
    }

    #[test]
    fn adjoint_kernel() {
        let sym = HOperator::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let k = fractional_kernel(0.2, sym).unwrap();
        let ks = kernel_adjoint(&k);
        assert_eq!(k.eval(0.9, 0.2).unwrap(), ks.eval(0.9, 0.2).unwrap());
        let e12 = tensor(&HVector::basis(2, 0), &HVector::basis(2, 1)).unwrap();
        let k = fractional_kernel(0.2, e12).unwrap();
        let ks = kernel_adjoint(&k);
        assert_eq!(ks.eval(0.9, 0.2).unwrap(), k.eval(0.9, 0.2).unwrap().adjoint());
        let g = Grid::unit(64).unwrap();
        let a = HOperator::from_rows(&[vec![1.0, 4.0], vec![0.0, 1.0]]).unwrap();
        let k = fractional_kernel(0.4, a).unwrap();
        let d = seminorm_k1(&k, &g).unwrap() - seminorm_k1(&kernel_adjoint(&k), &g).unwrap();
        assert!(d.abs() < 1e-10);
    }

    #[test]
    fn seminorms_bounded_under_refinement() {
        let kernels = vec![
            fractional_kernel(0.3, HOperator::identity(1)).unwrap(),
            ml_kernel(0.7, 0.7, HOperator::scalar(1, -0.5)).unwrap(),
            exp_kernel(1.0, 1),
        ];
        for k in kernels {
            let a = kernel_seminorms(&k, &Grid::unit(64).unwrap()).unwrap();
            let b = kernel_seminorms(&k, &Grid::unit(256).unwrap()).unwrap();
            let mut pairs = vec![(a.k1, b.k1), (a.k2, b.k2), (a.k3, b.k3)];
            if k.eta == 0.0 {
                pairs.push((a.k4, b.k4));
            }
            for (x, y) in pairs {
                assert!(x.is_finite() && y.is_finite());
                assert!(y < 2.0 * x.max(1e-300), "{}: {x} -> {y}", k.label());
            }
        }
    }

    #[test]
    fn mixed_seminorm_grows_for_singular_kernels() {
        // ν = 1, θ = 0 with τ − s = h and τ − r of order one: the ratio scales like h^{−1−η}
        let eta = 0.3;
        let k = fractional_kernel(eta, HOperator::identity(1)).unwrap();
        let k4 = |n| seminorm_k4(&k, &Grid::unit(n).unwrap(), &[0.0], &[1.0]).unwrap();
        let (a, b, c) = (k4(32), k4(64), k4(128));
        for r in [b / a, c / b] {
            assert!((r / 2f64.powf(1.0 + eta) - 1.0).abs() < 0.05, "{r}");
        }
    }

    #[test]
    fn seminorm_oracle_small_grid() {
        // Brute-force k2 over all triples and the full θ grid.
        let k = fractional_kernel(0.25, HOperator::identity(1)).unwrap();
        let g = Grid::unit(16).unwrap();
        let th = default_theta_grid();
        let mut oracle: f64 = 0.0;
        for t in 0..=16 {
            for u in 0..t {
                for s in 0..u {
                    let (tt, tu, ts) = (g.time(t), g.time(u), g.time(s));
                    let num = (k.eval(tt, ts).unwrap().get(0, 0) - k.eval(tu, ts).unwrap().get(0, 0)).abs();
                    for &th in &th {
                        let den = (tt - tu).powf(th) * (tu - ts).powf(-th - 0.25);
                        oracle = oracle.max(num / den);
                    }
                }
            }
        }
        let got = seminorm_k2(&k, &g, &th).unwrap();
        assert!((got - oracle).abs() < 1e-12 * oracle);
    }

    #[test]
    fn table_matches_direct_evaluation() {
        let k = fractional_kernel(0.3, HOperator::diag(&[1.0, 0.5])).unwrap();
        let g = Grid::unit(32).unwrap();
        let tab = KernelTable::new(&k, g).unwrap();
        for (i, j) in [(5, 2), (32, 0), (17, 16)] {
            let direct = k.eval(g.time(i), g.time(j)).unwrap();
            assert!(close(&tab.get(i, j).unwrap(), &direct, 1e-14));
        }
        assert!(tab.get(3, 3).is_err());
    }
}
