//! Mittag-Leffler functions and operators, Riemann-Liouville fractional
//! integrals, the fractional Ornstein-Uhlenbeck process and the
//! rough-volatility moment formulas.

use serde::Serialize;
use statrs::function::gamma::{gamma, ln_gamma};

use crate::covariance::CovarianceField;
use crate::error::{Error, Result};
use crate::hilbert::{HOperator, HVector};
use crate::integrate1d::{volterra_diagonal, IntegrandSpec};
use crate::integrate2d::{cov_integral, Cov2DSpec, CovIntegralResult};
use crate::kernels::{ml_kernel, KernelTable, VolterraKernel};
use crate::par;
use crate::paths::GridPath;

const MAX_TERMS: usize = 500;

fn series_done(term: f64, prev: f64, sum: f64) -> bool {
    term < 1e-300 || (term <= prev && term < 1e-16 * sum.abs())
}

/// `E_{α,β}(x) = Σ xⁱ / Γ(iα + β)`.
pub fn mittag_leffler_scalar(alpha: f64, beta: f64, x: f64) -> Result<f64> {
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(Error::InvalidParameter(format!("Mittag-Leffler needs alpha, beta > 0, got ({alpha}, {beta})")));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("Mittag-Leffler argument"));
    }
    let lx = x.abs().ln();
    let mut sum = (-ln_gamma(beta)).exp();
    let mut prev = sum;
    for i in 1..MAX_TERMS {
        let mag = (i as f64 * lx - ln_gamma(i as f64 * alpha + beta)).exp();
        let term = if x < 0.0 && i % 2 == 1 { -mag } else { mag };
        sum += term;
        if series_done(mag, prev, sum) {
            return Ok(sum);
        }
        prev = mag;
    }
    Err(Error::SeriesDivergence { terms: MAX_TERMS })
}

/// `E_{α,β}(M) = Σ M^{∘i} / Γ(iα + β)`.
pub fn mittag_leffler_op(alpha: f64, beta: f64, m: &HOperator) -> Result<HOperator> {
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(Error::InvalidParameter(format!("Mittag-Leffler needs alpha, beta > 0, got ({alpha}, {beta})")));
    }
    if !m.is_finite() {
        return Err(Error::NonFinite("Mittag-Leffler argument"));
    }
    let n = m.dim();
    let c0 = (-ln_gamma(beta)).exp();
    let scale = m.max_induced_norm();
    if scale == 0.0 {
        return Ok(HOperator::scalar(n, c0));
    }
    // powers of M / scale stay bounded; the scale goes into the coefficient
    let b = m.scale(1.0 / scale);
    let ls = scale.ln();
    let mut power = HOperator::identity(n);
    let mut sum = HOperator::scalar(n, c0);
    let mut prev = c0;
    for i in 1..MAX_TERMS {
        power = power.mul_unchecked(&b);
        let c = (i as f64 * ls - ln_gamma(i as f64 * alpha + beta)).exp();
        sum.axpy(c, &power);
        let size = c * power.max_abs();
        if series_done(size, prev, sum.max_abs()) {
            return Ok(sum);
        }
        prev = size;
    }
    Err(Error::SeriesDivergence { terms: MAX_TERMS })
}

/// `I^α f(t) = (1/Γ(α)) ∫₀ᵗ (t − s)^{α−1} f(s) ds` by the product-rectangle
/// rule: `f` frozen at left endpoints, the weight integrated exactly.
pub fn frac_integral(f: &GridPath, alpha: f64) -> Result<GridPath> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!("fractional order must be positive, got {alpha}")));
    }
    let g = *f.grid();
    let n = g.n();
    let c = g.step().powf(alpha) / gamma(alpha + 1.0);
    let w: Vec<f64> = (0..=n).map(|m| if m == 0 { 0.0 } else { c * ((m as f64).powf(alpha) - ((m - 1) as f64).powf(alpha)) }).collect();
    let d = f.dim();
    let values = par::map_range(n + 1, |k| {
        let mut acc = vec![0.0; d];
        for j in 0..k {
            let wj = w[k - j];
            for (a, x) in acc.iter_mut().zip(f.value(j).coords()) {
                *a += wj * x;
            }
        }
        HVector::from_vec_unchecked(acc)
    });
    GridPath::new(g, values)
}

/// Fractional Ornstein-Uhlenbeck problem `Y = y0 + A I^α(Y) + X`.
#[derive(Clone, Debug)]
pub struct FracOUSpec {
    alpha: f64,
    a: HOperator,
    y0: HVector,
    driver: GridPath,
    gamma: f64,
}

impl FracOUSpec {
    pub fn new(alpha: f64, a: HOperator, y0: HVector, driver: GridPath, gamma: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1], got {alpha}")));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidParameter(format!("driver regularity must lie in (0, 1], got {gamma}")));
        }
        if gamma + alpha <= 1.0 {
            return Err(Error::Inadmissible(format!("need gamma + alpha > 1, got {gamma} + {alpha}")));
        }
        for d in [y0.dim(), driver.dim()] {
            if d != a.dim() {
                return Err(Error::DimensionMismatch { expected: a.dim(), found: d });
            }
        }
        Ok(Self { alpha, a, y0, driver, gamma })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn a(&self) -> &HOperator {
        &self.a
    }

    pub fn y0(&self) -> &HVector {
        &self.y0
    }

    pub fn driver(&self) -> &GridPath {
        &self.driver
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `(t − s)^{α−1} E_{α,α}(A (t − s)^α)`.
    pub fn kernel(&self) -> Result<VolterraKernel> {
        ml_kernel(self.alpha, self.alpha, self.a.clone())
    }
}

/// The solution split into its mean and stochastic-convolution parts.
#[derive(Clone, Debug)]
pub struct FracOUSolution {
    pub path: GridPath,
    pub mean: GridPath,
    pub convolution: GridPath,
    pub converged: bool,
}

/// `E_{α,1}(A t^α) y0` on the driver grid.
pub fn frac_ou_mean(spec: &FracOUSpec) -> Result<GridPath> {
    let g = *spec.driver.grid();
    let values = par::try_map_range(g.n_points(), |k| {
        let t = g.time(k);
        mittag_leffler_op(spec.alpha, 1.0, &spec.a.scale(t.powf(spec.alpha)))?.apply(&spec.y0)
    })?;
    GridPath::new(g, values)
}

pub fn solve_frac_ou_report(spec: &FracOUSpec, tol: f64, max_level: u32) -> Result<FracOUSolution> {
    let mean = frac_ou_mean(spec)?;
    let ispec = IntegrandSpec::new(spec.kernel()?, spec.driver.clone(), spec.gamma)?;
    let (convolution, converged) = volterra_diagonal(&ispec, max_level, tol)?;
    let path = mean.try_add(&convolution)?;
    Ok(FracOUSolution { path, mean, convolution, converged })
}

/// `Y(t) = E_{α,1}(A t^α) y0 + ∫₀ᵗ (t − s)^{α−1} E_{α,α}(A (t − s)^α) dW(s)`.
pub fn solve_frac_ou(spec: &FracOUSpec, tol: f64, max_level: u32) -> Result<GridPath> {
    Ok(solve_frac_ou_report(spec, tol, max_level)?.path)
}

/// `max_t |Y − y0 − A I^α(Y) − X|` for a candidate solution `Y` and forcing `X`.
pub fn fixed_point_residual(spec: &FracOUSpec, y: &GridPath, forcing: &GridPath) -> Result<f64> {
    let iy = frac_integral(y, spec.alpha)?;
    let mut worst: f64 = 0.0;
    for k in 0..y.grid().n_points() {
        let r = y.value(k) - &spec.y0 - spec.a.apply(iy.value(k))? - forcing.value(k).clone();
        worst = worst.max(r.norm());
    }
    Ok(worst)
}

/// Covariance of the solution: the covariance integral of the
/// Mittag-Leffler kernel against `qw` on the driver grid.
pub fn frac_ou_covariance(spec: &FracOUSpec, qw: &CovarianceField, tol: f64, max_level: u32) -> Result<CovIntegralResult> {
    let k = spec.kernel()?;
    let cspec = Cov2DSpec::new(k.clone(), k, qw.clone(), *spec.driver.grid())?;
    cov_integral(&cspec, max_level, tol)
}

#[derive(Clone, Debug, Serialize)]
pub struct FubiniCheck {
    pub lhs: HVector,
    pub rhs: HVector,
    pub gap: f64,
}

/// Compares `∫₀ᵗ G(t, r) Z(r) dr`, `Z = ∫ K dW` computed at the driver's full
/// resolution, with `∫₀ᵗ L(t, s) dW(s)`, `L(t, s) = ∫ₛᵗ G(t, r) K(r, s) dr`,
/// both discretised on the level-`level` partition. The inner sum of `L`
/// skips the cell touching `r = s`.
pub fn fubini_check(g: &VolterraKernel, k: &VolterraKernel, w: &GridPath, t: f64, level: u32) -> Result<FubiniCheck> {
    if g.eta() + k.eta() >= 1.0 {
        return Err(Error::Inadmissible(format!(
            "combined kernel orders {} + {} must stay below 1",
            g.eta(),
            k.eta()
        )));
    }
    if g.dim() != w.dim() || k.dim() != w.dim() {
        return Err(Error::DimensionMismatch { expected: w.dim(), found: g.dim().max(k.dim()) });
    }
    let grid = *w.grid();
    let stride = grid.stride(level)?;
    let it = grid.index_of(t)?;
    if it % stride != 0 {
        return Err(Error::GridMismatch(format!("t={t} is not a level-{level} point")));
    }
    let d = w.dim();
    let m = it / stride;
    let h = grid.step() * stride as f64;
    // the declared regularity only feeds rate reporting, unused here
    let spec = IntegrandSpec::new(k.clone(), w.clone(), 1.0)?;
    let (z, _) = volterra_diagonal(&spec, grid.levels(), 0.0)?;
    let gt: Vec<HOperator> = (0..m).map(|j| g.eval(t, grid.time(j * stride))).collect::<Result<_>>()?;
    let mut lhs = HVector::zeros(d);
    for (j, gj) in gt.iter().enumerate() {
        lhs += &gj.apply(z.value(j * stride))?.scale(h);
    }
    let table = KernelTable::new(k, grid)?;
    let terms = par::try_map_range(m, |i| {
        let mut l = HOperator::zeros(d);
        for (j, gj) in gt.iter().enumerate().skip(i + 1) {
            l.axpy(h, &gj.mul_unchecked(&*table.get(j * stride, i * stride)?));
        }
        l.apply(&(w.value((i + 1) * stride) - w.value(i * stride)))
    })?;
    let mut rhs = HVector::zeros(d);
    for v in &terms {
        rhs += v;
    }
    let gap = (&lhs - &rhs).norm();
    Ok(FubiniCheck { lhs, rhs, gap })
}

/// Rough-volatility data: the functional's representer `l`, the unit
/// direction `z` and the Brownian covariance `qb`.
#[derive(Clone, Debug)]
pub struct RoughVolSpec {
    l: HVector,
    z: HVector,
    qb: HOperator,
    c: f64,
}

impl RoughVolSpec {
    pub fn new(l: HVector, z: HVector, qb: HOperator) -> Result<Self> {
        if (z.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("z must have unit norm, got {}", z.norm())));
        }
        for d in [l.dim(), z.dim()] {
            if d != qb.dim() {
                return Err(Error::DimensionMismatch { expected: qb.dim(), found: d });
            }
        }
        let c = qb.sqrt_psd()?.apply(&z)?.norm_sq();
        Ok(Self { l, z, qb, c })
    }

    pub fn l(&self) -> &HVector {
        &self.l
    }

    pub fn z(&self) -> &HVector {
        &self.z
    }

    pub fn qb(&self) -> &HOperator {
        &self.qb
    }

    /// `|Q_B^{1/2} z|²`.
    pub fn scaling(&self) -> f64 {
        self.c
    }
}

/// `σ²(t) = ⟨l, Y(t)⟩² |Q_B^{1/2} z|²`.
pub fn instantaneous_variance(spec: &RoughVolSpec, y: &HVector) -> Result<f64> {
    if y.dim() != spec.l.dim() {
        return Err(Error::DimensionMismatch { expected: spec.l.dim(), found: y.dim() });
    }
    let p = spec.l.dot(y);
    Ok(p * p * spec.c)
}

/// `E[σ^{2k}(t)] = c^k (2k − 1)!! v^k` with `v = ⟨Q_Y(t, t) l, l⟩`.
pub fn variance_moment(spec: &RoughVolSpec, qy: &HOperator, k: u32) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParameter("moment order must be at least 1".into()));
    }
    qy.check_same_dim(&spec.qb)?;
    qy.check_psd()?;
    let v = qy.apply(&spec.l)?.dot(&spec.l);
    let xi: f64 = (1..=k).map(|j| (2 * j - 1) as f64).product();
    Ok(spec.c.powi(k as i32) * xi * v.powi(k as i32))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::tensor;
    use crate::kernels::{identity_kernel, power_kernel};
    use crate::paths::Grid;

    #[test]
    fn scalar_identities() {
        for x in [-1.0, 0.0, 1.0, 3.0] {
            let e = mittag_leffler_scalar(1.0, 1.0, x).unwrap();
            assert!((e - f64::exp(x)).abs() < 1e-12 * f64::exp(x).max(1.0), "{x}");
        }
        for x in [0.25, 1.0, 4.0] {
            let e = mittag_leffler_scalar(2.0, 1.0, x).unwrap();
            assert!((e - f64::sqrt(x).cosh()).abs() < 1e-12, "{x}");
        }
        for beta in [0.5, 1.0, 2.5] {
            assert!((mittag_leffler_scalar(0.7, beta, 0.0).unwrap() - 1.0 / gamma(beta)).abs() < 1e-14);
        }
        assert!(matches!(mittag_leffler_scalar(0.5, 1.0, 400.0), Err(Error::SeriesDivergence { .. })));
    }

    #[test]
    fn operator_reductions() {
        let z = mittag_leffler_op(0.6, 1.7, &HOperator::zeros(3)).unwrap();
        assert_eq!(z, HOperator::scalar(3, 1.0 / gamma(1.7)));
        for a in [-10.0f64, -3.3, -0.5, 0.0, 0.01, 2.0, 10.0] {
            for (al, be) in [(0.8, 0.8), (1.0, 1.0), (0.3, 1.2)] {
                if al < 0.5 && a.abs() > 3.0 {
                    // the series peaks near i = |a|^{1/al} / al, past the term cap
                    assert!(mittag_leffler_op(al, be, &HOperator::scalar(3, a)).is_err());
                    continue;
                }
                let e = mittag_leffler_op(al, be, &HOperator::scalar(3, a)).unwrap();
                let s = mittag_leffler_scalar(al, be, a).unwrap();
                let want = HOperator::scalar(3, s);
                assert!((&e - &want).max_abs() <= 1e-12 * s.abs().max(1.0), "{a} {al} {be}");
            }
        }
    }

    #[test]
    fn matrix_exponential() {
        let m = HOperator::from_rows(&[vec![-1.0, 0.4, 0.1], vec![0.4, 0.5, -0.2], vec![0.1, -0.2, 0.3]]).unwrap();
        let eig = m.symmetric_eigen().unwrap();
        let mut want = HOperator::zeros(3);
        for (k, lam) in eig.values.iter().enumerate() {
            let v = HVector::new((0..3).map(|i| eig.vectors.get(i, k)).collect()).unwrap();
            want.axpy(lam.exp(), &tensor(&v, &v).unwrap());
        }
        let got = mittag_leffler_op(1.0, 1.0, &m).unwrap();
        assert!((&got - &want).max_abs() < 1e-10);
    }

    #[test]
    fn domination() {
        let m = HOperator::from_rows(&[vec![0.2, 1.5], vec![-0.7, 0.4]]).unwrap();
        for (a, b) in [(0.5, 0.5), (0.8, 1.0), (1.0, 2.0)] {
            let e = mittag_leffler_op(a, b, &m).unwrap().op_norm().unwrap();
            let bound = mittag_leffler_scalar(a, b, m.op_norm().unwrap()).unwrap();
            assert!(e <= bound + 1e-10);
        }
    }

    #[test]
    fn frac_integral_constant_and_running() {
        let g = Grid::unit(256).unwrap();
        let one = GridPath::along_first_axis(g, 2, |_| 1.0).unwrap();
        let i = frac_integral(&one, 0.4).unwrap();
        for k in [0, 1, 77, 256] {
            let t = g.time(k);
            assert!((i.value(k).coords()[0] - t.powf(0.4) / gamma(1.4)).abs() < 1e-8);
            assert_eq!(i.value(k).coords()[1], 0.0);
        }
        let g = Grid::unit(1024).unwrap();
        let f = GridPath::along_first_axis(g, 1, |s| s).unwrap();
        let i = frac_integral(&f, 1.0).unwrap();
        for k in [256, 1024] {
            let t = g.time(k);
            assert!((i.scalar(k) - t * t / 2.0).abs() < 1e-3);
        }
    }

    #[test]
    fn frac_integral_semigroup_converges() {
        // I^b I^a f = I^{a+b} f for f(s) = s; both sides are O(h) off.
        let (a, b) = (0.4, 0.7);
        let mut errs = Vec::new();
        for n in [1024, 2048] {
            let f = GridPath::along_first_axis(Grid::unit(n).unwrap(), 1, |s| s).unwrap();
            let lhs = frac_integral(&frac_integral(&f, a).unwrap(), b).unwrap();
            let rhs = frac_integral(&f, a + b).unwrap();
            errs.push(lhs.max_abs_diff(&rhs));
        }
        assert!(errs[1] < 3e-4, "{errs:?}");
        assert!((errs[0] / errs[1] - 2.0).abs() < 0.2, "{errs:?}");
    }

    #[test]
    fn frac_ou_with_zero_drift_is_y0_plus_forcing() {
        let g = Grid::unit(128).unwrap();
        let w = GridPath::from_fn(g, |t| HVector::new(vec![(5.0 * t).sin(), t * t]).unwrap()).unwrap();
        let y0 = HVector::new(vec![0.5, -1.0]).unwrap();
        let spec = FracOUSpec::new(1.0, HOperator::zeros(2), y0.clone(), w.clone(), 0.9).unwrap();
        let y = solve_frac_ou(&spec, 1e-12, 7).unwrap();
        for k in 0..=128 {
            let want = &y0 + &(w.value(k) - w.value(0));
            assert!((y.value(k) - &want).norm() < 1e-12);
        }
    }

    #[test]
    fn frac_ou_admissibility() {
        let w = GridPath::zeros(Grid::unit(8).unwrap(), 1);
        assert!(matches!(
            FracOUSpec::new(0.4, HOperator::zeros(1), HVector::zeros(1), w.clone(), 0.5),
            Err(Error::Inadmissible(_))
        ));
        assert!(FracOUSpec::new(0.6, HOperator::zeros(1), HVector::zeros(1), w, 0.5).is_ok());
    }

    #[test]
    fn fubini_identity_kernels() {
        let g = Grid::unit(256).unwrap();
        let w = GridPath::from_fn(g, |t| HVector::new(vec![(7.0 * t).cos(), t.sqrt()]).unwrap()).unwrap();
        let r = fubini_check(&identity_kernel(2), &identity_kernel(2), &w, 0.75, 6).unwrap();
        assert!(r.gap < 1e-12, "{}", r.gap);
    }

    #[test]
    fn fubini_smooth_beta_oracle() {
        let (alpha, eta) = (0.9, 0.1);
        let g = Grid::unit(2048).unwrap();
        let w = GridPath::along_first_axis(g, 1, |s| s).unwrap();
        let gk = power_kernel(alpha - 1.0, HOperator::identity(1)).unwrap();
        let kk = power_kernel(-eta, HOperator::identity(1)).unwrap();
        let r = fubini_check(&gk, &kk, &w, 1.0, 11).unwrap();
        let exact = statrs::function::beta::beta(alpha, 1.0 - eta) / (alpha - eta + 1.0);
        assert!(r.gap < 1e-3, "{}", r.gap);
        assert!((r.lhs.coords()[0] - exact).abs() < 2e-3);
        assert!((r.rhs.coords()[0] - exact).abs() < 2e-3);
    }

    #[test]
    fn rough_vol_formulas() {
        let l = HVector::new(vec![1.0, 2.0]).unwrap();
        let z = HVector::new(vec![0.6, 0.8]).unwrap();
        let spec = RoughVolSpec::new(l.clone(), z.clone(), HOperator::identity(2)).unwrap();
        assert_eq!(instantaneous_variance(&spec, &HVector::new(vec![2.0, -1.0]).unwrap()).unwrap(), 0.0);
        let y = HVector::new(vec![0.3, 0.1]).unwrap();
        assert!((instantaneous_variance(&spec, &y).unwrap() - 0.25).abs() < 1e-15);

        // brute force: ℒ Σ Q_B Σ* ℒ* with Σ = y ⊗ z as an operator on H
        let qb = HOperator::from_rows(&[vec![2.0, 0.3], vec![0.3, 0.5]]).unwrap();
        let spec = RoughVolSpec::new(l.clone(), z.clone(), qb.clone()).unwrap();
        let sigma = tensor(&z, &y).unwrap();
        let brute = sigma.compose(&qb).unwrap().compose(&sigma.adjoint()).unwrap().apply(&l).unwrap().dot(&l);
        assert!((instantaneous_variance(&spec, &y).unwrap() - brute).abs() < 1e-12);

        let qy = HOperator::from_rows(&[vec![1.0, 0.2], vec![0.2, 0.4]]).unwrap();
        let v = qy.apply(&l).unwrap().dot(&l);
        let c = spec.scaling();
        assert!((variance_moment(&spec, &qy, 1).unwrap() - c * v).abs() < 1e-12);
        assert!((variance_moment(&spec, &qy, 2).unwrap() - 3.0 * c * c * v * v).abs() < 1e-12);
        assert!(RoughVolSpec::new(l, HVector::new(vec![1.0, 1.0]).unwrap(), qb).is_err());
    }
}
