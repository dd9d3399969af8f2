//! Monte Carlo verification of the Gaussian law of a Volterra process:
//! covariance, characteristic functional and marginal shape checks against
//! the covariance integral.

use serde::Serialize;

use crate::covariance::{composed_cov, fbm_cov, wiener_cov, CovarianceField};
use crate::error::{Error, Result};
use crate::hilbert::HVector;
use crate::integrate1d::{volterra_diagonal, IntegrandSpec};
use crate::integrate2d::{cov_integral, Cov2DSpec};
use crate::kernels::VolterraKernel;
use crate::par;
use crate::paths::GridPath;
use crate::sampling::{empirical_holder_exponent, Sampler, SamplerConfig, SamplerKind};
use crate::stats::{excess_kurtosis, skewness, BandCheck, BAND};

#[derive(Clone, Debug)]
pub struct McConfig {
    pub kernel: VolterraKernel,
    pub sampler: SamplerConfig,
    pub samples: usize,
    /// Grid index pairs for the covariance check.
    pub cov_pairs: Vec<(usize, usize)>,
    /// Grid indices for the characteristic-functional and marginal checks.
    pub times: Vec<usize>,
    pub directions: Vec<HVector>,
    pub bands: f64,
}

impl McConfig {
    /// Five covariance pairs, three times and `e₁`, `e_d`, their normalised
    /// sum and two mixed directions.
    pub fn with_defaults(kernel: VolterraKernel, sampler: SamplerConfig, samples: usize) -> Self {
        let n = sampler.grid.n();
        let d = kernel.dim();
        let cov_pairs = vec![(n, n), (n / 2, n / 2), (n, n / 2), (n / 4, 3 * n / 4), (n / 8, n)];
        let times = vec![n / 4, n / 2, n];
        let mut directions = vec![HVector::basis(d, 0), HVector::basis(d, d - 1)];
        let ones = HVector::new(vec![1.0; d]).expect("finite");
        directions.push(ones.scale(1.0 / (d as f64).sqrt()));
        directions.push(ones.scale(0.5));
        let alt = HVector::new((0..d).map(|i| if i % 2 == 0 { 1.5 } else { -0.5 }).collect()).expect("finite");
        directions.push(alt);
        Self { kernel, sampler, samples, cov_pairs, times, directions, bands: BAND }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct McReport {
    pub samples: usize,
    pub checks: Vec<BandCheck>,
    pub pass: bool,
    pub unconverged_samples: usize,
}

impl McReport {
    pub fn failures(&self) -> Vec<&BandCheck> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    pub fn by_prefix(&self, prefix: &str) -> Vec<&BandCheck> {
        self.checks.iter().filter(|c| c.name.starts_with(prefix)).collect()
    }
}

/// Covariance field of the sampler's driver, with its declared regularity.
pub fn driver_covariance(cfg: &SamplerConfig) -> Result<CovarianceField> {
    match &cfg.kind {
        SamplerKind::Wiener => wiener_cov(cfg.q0.clone()),
        SamplerKind::Fbm { h } => fbm_cov(*h, cfg.q0.clone()),
        SamplerKind::Composed { z, absolute } => {
            let z = if *absolute {
                let values = z.values().iter().map(|v| HVector::new(vec![v.coords()[0].abs()])).collect::<Result<_>>()?;
                GridPath::new(*z.grid(), values)?
            } else {
                z.clone()
            };
            let base = wiener_cov(cfg.q0.clone())?;
            let rho = empirical_holder_exponent(&z).unwrap_or(1.0).clamp(0.02, 1.0);
            composed_cov(&base, &z, (0.5 * rho).min(0.99))
        }
    }
}

fn regularity(cfg: &SamplerConfig) -> Result<f64> {
    Ok(match &cfg.kind {
        SamplerKind::Fbm { h } => *h,
        _ => driver_covariance(cfg)?.alpha(),
    })
}

/// Integrates `samples` independent driver paths against the kernel and
/// compares sample statistics with the covariance integral computed at the
/// sampling resolution.
pub fn mc_verify(cfg: &McConfig) -> Result<McReport> {
    if cfg.samples < 2 {
        return Err(Error::InvalidParameter("need at least 2 samples".into()));
    }
    let grid = cfg.sampler.grid;
    let n = grid.n();
    for &(i, j) in &cfg.cov_pairs {
        if i > n || j > n {
            return Err(Error::Domain(format!("probe pair ({i}, {j}) outside the grid")));
        }
    }
    if let Some(&t) = cfg.times.iter().find(|&&t| t > n) {
        return Err(Error::Domain(format!("probe index {t} outside the grid")));
    }
    let qw = driver_covariance(&cfg.sampler)?;
    let spec2 = Cov2DSpec::symmetric(cfg.kernel.clone(), qw, grid)?;
    let predicted = cov_integral(&spec2, grid.levels(), f64::INFINITY)?.field;
    let gamma = regularity(&cfg.sampler)?;
    let sampler = Sampler::new(cfg.sampler.clone())?;
    let level = grid.levels();
    let paths = par::try_map_range(cfg.samples, |k| {
        let w = sampler.sample(k as u64)?;
        let spec = IntegrandSpec::new(cfg.kernel.clone(), w, gamma)?;
        volterra_diagonal(&spec, level, 0.0)
    })?;
    let unconverged_samples = paths.iter().filter(|p| !p.1).count();
    let xs: Vec<GridPath> = paths.into_iter().map(|p| p.0).collect();
    let d = cfg.kernel.dim();
    let mut checks = Vec::new();
    for &(i, j) in &cfg.cov_pairs {
        let q = predicted.get(i, j);
        for p in 0..d {
            for r in 0..d {
                let prod: Vec<f64> =
                    xs.iter().map(|x| x.value(i).coords()[p] * x.value(j).coords()[r]).collect();
                let name = format!("cov[t={},t'={}][{p},{r}]", grid.time(i), grid.time(j));
                checks.push(BandCheck::of_samples(name, &prod, q.get(p, r), cfg.bands));
            }
        }
    }
    for &t in &cfg.times {
        let q = predicted.get(t, t);
        for (fi, f) in cfg.directions.iter().enumerate() {
            let proj: Vec<f64> = xs.iter().map(|x| x.value(t).dot(f)).collect();
            let var = q.apply(f)?.dot(f);
            let cos: Vec<f64> = proj.iter().map(|p| p.cos()).collect();
            let sin: Vec<f64> = proj.iter().map(|p| p.sin()).collect();
            let tag = format!("t={},f{fi}", grid.time(t));
            checks.push(BandCheck::of_samples(format!("charfn-re[{tag}]"), &cos, (-0.5 * var).exp(), cfg.bands));
            checks.push(BandCheck::of_samples(format!("charfn-im[{tag}]"), &sin, 0.0, cfg.bands));
        }
        let proj: Vec<f64> = xs.iter().map(|x| x.value(t).dot(&cfg.directions[0])).collect();
        let m = cfg.samples as f64;
        let degenerate = proj.iter().all(|p| *p == proj[0]);
        let (sk, ku) = if degenerate { (0.0, 0.0) } else { (skewness(&proj), excess_kurtosis(&proj)) };
        let tag = format!("t={}", grid.time(t));
        checks.push(BandCheck::new(format!("skewness[{tag}]"), sk, 0.0, (6.0 / m).sqrt(), cfg.bands));
        checks.push(BandCheck::new(format!("kurtosis[{tag}]"), ku, 0.0, (24.0 / m).sqrt(), cfg.bands));
    }
    let pass = checks.iter().all(|c| c.pass);
    Ok(McReport { samples: cfg.samples, checks, pass, unconverged_samples })
}
