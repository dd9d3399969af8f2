//! The operator-valued covariance integral `∫₀ᵗ∫₀ᵗ' K(τ, r) d²Q(r, r') K'(τ', r')*`
//! by nested dyadic Riemann sums, its boundary integrals, the stability
//! comparator and the rough-path admissibility scan.

use serde::Serialize;

use crate::covariance::{
    cov_gap_profile, cov_seminorms, grid_cov_seminorms, CovSeminorms, CovarianceField, GridCovField,
};
use crate::error::{Error, Result};
use crate::hilbert::{op_norm_of, HOperator};
use crate::integrate1d::{target_rate, LevelEntry, RefinementReport};
use crate::kernels::{kernel_seminorms, KernelTable, VolterraKernel};
use crate::par;
use crate::paths::{Grid, SEMINORM_CAP};

/// Kernels `K`, `K'`, covariance `Q` and the output grid.
#[derive(Clone, Debug)]
pub struct Cov2DSpec {
    k: VolterraKernel,
    kp: VolterraKernel,
    q: CovarianceField,
    grid: Grid,
}

impl Cov2DSpec {
    pub fn new(k: VolterraKernel, kp: VolterraKernel, q: CovarianceField, grid: Grid) -> Result<Self> {
        for d in [kp.dim(), q.dim()] {
            if d != k.dim() {
                return Err(Error::DimensionMismatch { expected: k.dim(), found: d });
            }
        }
        let eta = k.eta().max(kp.eta());
        if q.alpha() <= eta {
            return Err(Error::Inadmissible(format!(
                "covariance regularity {} must exceed kernel order {eta}",
                q.alpha()
            )));
        }
        if grid.horizon() > q.domain() * (1.0 + 1e-12) {
            return Err(Error::Domain(format!("grid horizon {} exceeds covariance domain {}", grid.horizon(), q.domain())));
        }
        Ok(Self { k, kp, q, grid })
    }

    /// `K' = K`.
    pub fn symmetric(k: VolterraKernel, q: CovarianceField, grid: Grid) -> Result<Self> {
        Self::new(k.clone(), k, q, grid)
    }

    pub fn k(&self) -> &VolterraKernel {
        &self.k
    }

    pub fn kp(&self) -> &VolterraKernel {
        &self.kp
    }

    pub fn q(&self) -> &CovarianceField {
        &self.q
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.k.dim()
    }

    pub fn alpha(&self) -> f64 {
        self.q.alpha()
    }

    pub fn eta(&self) -> f64 {
        self.k.eta().max(self.kp.eta())
    }

    /// The same integral with `K` and `K'` exchanged.
    pub fn swapped(&self) -> Self {
        Self { k: self.kp.clone(), kp: self.k.clone(), ..self.clone() }
    }

    pub fn with_q(&self, q: CovarianceField) -> Result<Self> {
        Self::new(self.k.clone(), self.kp.clone(), q, self.grid)
    }

    pub fn with_kernels(&self, k: VolterraKernel, kp: VolterraKernel) -> Result<Self> {
        Self::new(k, kp, self.q.clone(), self.grid)
    }
}

/// Output of [`cov_integral`].
#[derive(Clone, Debug)]
pub struct CovIntegralResult {
    /// `(t, t') ↦ I(K, Q)^{t,t'}(t, t')` on the output grid.
    pub field: GridCovField,
    pub report: RefinementReport,
    pub unconverged_pairs: usize,
    /// Boundary integrals at `τ = τ' = T`, `[s, t] = [s', t'] = [T/4, T/2]`, per level.
    pub boundary1: Vec<LevelEntry>,
    pub boundary2: Vec<LevelEntry>,
}

impl CovIntegralResult {
    pub fn converged(&self) -> bool {
        self.unconverged_pairs == 0
    }

    pub fn to_field(&self, alpha: f64) -> Result<CovarianceField> {
        self.field.to_field(alpha, "covariance integral")
    }
}

/// `out += a b`
fn mm_acc(d: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    for i in 0..d {
        for k in 0..d {
            let aik = a[i * d + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..d {
                out[i * d + j] += aik * b[k * d + j];
            }
        }
    }
}

/// `out += a b*`
fn mmt_acc(d: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    for i in 0..d {
        for j in 0..d {
            let mut s = 0.0;
            for k in 0..d {
                s += a[i * d + k] * b[j * d + k];
            }
            out[i * d + j] += s;
        }
    }
}

/// `s`, the level points of `[0, horizon]` strictly inside `(s, t)`, then `t`.
fn partition(horizon: f64, level: u32, s: f64, t: f64) -> Result<Vec<f64>> {
    let lg = Grid::new(horizon, 1usize << level)?;
    let mut pts = vec![s];
    if t <= s {
        return Ok(pts);
    }
    let mut k = (s / horizon * lg.n() as f64).floor() as usize;
    while k <= lg.n() && lg.time(k) <= s {
        k += 1;
    }
    while k <= lg.n() && lg.time(k) < t {
        pts.push(lg.time(k));
        k += 1;
    }
    pts.push(t);
    Ok(pts)
}

fn check_order(label: &str, s: f64, t: f64, tau: f64) -> Result<()> {
    if !(0.0 <= s && s <= t && t <= tau) {
        return Err(Error::Domain(format!("{label}: need 0 <= s <= t <= tau, got ({s}, {t}, {tau})")));
    }
    Ok(())
}

/// `Σ K(τ, u) □Q[(u, u'), (v, v')] K'(τ', u')*` over the level-`l` partition
/// of `[s, t]` and the level-`l'` partition of `[s', t']`.
pub fn rect_sum(
    spec: &Cov2DSpec,
    tau: (f64, f64),
    first: (f64, f64),
    second: (f64, f64),
    levels: (u32, u32),
) -> Result<HOperator> {
    check_order("first interval", first.0, first.1, tau.0)?;
    check_order("second interval", second.0, second.1, tau.1)?;
    let horizon = spec.grid.horizon();
    let p = partition(horizon, levels.0, first.0, first.1)?;
    let pp = partition(horizon, levels.1, second.0, second.1)?;
    let d = spec.dim();
    let right: Vec<HOperator> = pp[..pp.len() - 1].iter().map(|&u| spec.kp.eval(tau.1, u)).collect::<Result<_>>()?;
    let rows = par::try_map_range(p.len() - 1, |a| {
        let left = spec.k.eval(tau.0, p[a])?;
        let mut row = vec![0.0; d * d];
        let mut tmp = vec![0.0; d * d];
        for (b, kb) in right.iter().enumerate() {
            let cell = spec.q.rect_increment((p[a], pp[b]), (p[a + 1], pp[b + 1]))?;
            tmp.iter_mut().for_each(|x| *x = 0.0);
            mm_acc(d, left.entries(), cell.entries(), &mut tmp);
            mmt_acc(d, &tmp, kb.entries(), &mut row);
        }
        Ok(row)
    })?;
    let mut acc = vec![0.0; d * d];
    for r in rows {
        for (a, x) in acc.iter_mut().zip(r) {
            *a += x;
        }
    }
    HOperator::new(d, acc)
}

/// The approximating double sum over `[0, t] × [0, t']`.
pub fn double_sum(spec: &Cov2DSpec, tau: f64, taup: f64, t: f64, tp: f64, levels: (u32, u32)) -> Result<HOperator> {
    rect_sum(spec, (tau, taup), (0.0, t), (0.0, tp), levels)
}

/// `Σ_{[u,v] ⊂ [s,t]} K(τ, u) □Q[(u, s'), (v, t')] K'(τ', s')*`
#[allow(clippy::too_many_arguments)]
pub fn boundary_integral_1(
    spec: &Cov2DSpec,
    tau: f64,
    taup: f64,
    s: f64,
    sp: f64,
    t: f64,
    tp: f64,
    level: u32,
) -> Result<HOperator> {
    check_order("boundary integral", s, t, tau)?;
    check_order("boundary integral", sp, tp, taup)?;
    let p = partition(spec.grid.horizon(), level, s, t)?;
    let d = spec.dim();
    let right = spec.kp.eval(taup, sp)?;
    let mut acc = vec![0.0; d * d];
    let mut tmp = vec![0.0; d * d];
    for w in p.windows(2) {
        let cell = spec.q.rect_increment((w[0], sp), (w[1], tp))?;
        tmp.iter_mut().for_each(|x| *x = 0.0);
        mm_acc(d, spec.k.eval(tau, w[0])?.entries(), cell.entries(), &mut tmp);
        mmt_acc(d, &tmp, right.entries(), &mut acc);
    }
    HOperator::new(d, acc)
}

/// `Σ_{[u',v'] ⊂ [s',t']} K(τ, s) □Q[(s, u'), (t, v')] K'(τ', u')*`
#[allow(clippy::too_many_arguments)]
pub fn boundary_integral_2(
    spec: &Cov2DSpec,
    tau: f64,
    taup: f64,
    s: f64,
    sp: f64,
    t: f64,
    tp: f64,
    level: u32,
) -> Result<HOperator> {
    check_order("boundary integral", s, t, tau)?;
    check_order("boundary integral", sp, tp, taup)?;
    let p = partition(spec.grid.horizon(), level, sp, tp)?;
    let d = spec.dim();
    let left = spec.k.eval(tau, s)?;
    let mut acc = vec![0.0; d * d];
    let mut tmp = vec![0.0; d * d];
    for w in p.windows(2) {
        let cell = spec.q.rect_increment((s, w[0]), (t, w[1]))?;
        tmp.iter_mut().for_each(|x| *x = 0.0);
        mm_acc(d, left.entries(), cell.entries(), &mut tmp);
        mmt_acc(d, &tmp, spec.kp.eval(taup, w[0])?.entries(), &mut acc);
    }
    HOperator::new(d, acc)
}

/// `‖I − I₁ − I₂ + K(τ, s) □Q K'(τ', s')*‖` on `[s, t] × [s', t']` at level `level`.
#[allow(clippy::too_many_arguments)]
pub fn sewing_remainder_2d(
    spec: &Cov2DSpec,
    tau: f64,
    taup: f64,
    s: f64,
    sp: f64,
    t: f64,
    tp: f64,
    level: u32,
) -> Result<f64> {
    let full = rect_sum(spec, (tau, taup), (s, t), (sp, tp), (level, level))?;
    let b1 = boundary_integral_1(spec, tau, taup, s, sp, t, tp, level)?;
    let b2 = boundary_integral_2(spec, tau, taup, s, sp, t, tp, level)?;
    let germ = spec
        .k
        .eval(tau, s)?
        .mul_unchecked(&spec.q.rect_increment((s, sp), (t, tp))?)
        .mul_adjoint_unchecked(&spec.kp.eval(taup, sp)?);
    (&(&(&full - &b1) - &b2) + &germ).op_norm()
}

/// The field `(a, b) ↦ Σ_{i < i_a} Σ_{j < j_b} K(t_a, r_i) □Q(i, j) K'(t_b, r_j)*`
/// on the output grid, with `r` the level-`level` points.
fn assemble(spec: &Cov2DSpec, level: u32) -> Result<Vec<f64>> {
    let out = spec.grid;
    let m = 1usize << level;
    let s = m / out.n();
    let np = out.n_points();
    let d = spec.dim();
    let d2 = d * d;
    let lg = Grid::new(out.horizon(), m)?;
    let qtab = GridCovField::tabulate(&spec.q, lg)?;
    let cells: Vec<Vec<f64>> = par::map_range(m, |i| {
        let mut row = vec![0.0; m * d2];
        for j in 0..m {
            let (a, b, c, e) = (qtab.slot(i + 1, j + 1), qtab.slot(i + 1, j), qtab.slot(i, j + 1), qtab.slot(i, j));
            for k in 0..d2 {
                row[j * d2 + k] = a[k] - b[k] - c[k] + e[k];
            }
        }
        row
    });
    drop(qtab);
    let cell = |i: usize, j: usize| &cells[i][j * d2..(j + 1) * d2];
    // nonzero cells per column, ascending in i
    let nz: Vec<Vec<usize>> =
        par::map_range(m, |j| (0..m).filter(|&i| cell(i, j).iter().any(|&x| x != 0.0)).collect());
    let kt = KernelTable::new(&spec.k, lg)?;
    let kpt = KernelTable::new(&spec.kp, lg)?;
    let right: Vec<Vec<f64>> = par::try_map_range(np, |b| {
        let jb = b * s;
        let mut v = Vec::with_capacity(jb * d2);
        for j in 0..jb {
            v.extend_from_slice(kpt.get(jb, j)?.entries());
        }
        Ok(v)
    })?;
    let rows = par::try_map_range(np, |a| {
        let ia = a * s;
        let mut row = vec![0.0; np * d2];
        if ia == 0 {
            return Ok(row);
        }
        let left: Vec<_> = (0..ia).map(|i| kt.get(ia, i)).collect::<Result<_>>()?;
        let mut r = vec![0.0; m * d2];
        for j in 0..m {
            let rj = &mut r[j * d2..(j + 1) * d2];
            for &i in &nz[j] {
                if i >= ia {
                    break;
                }
                mm_acc(d, left[i].entries(), cell(i, j), rj);
            }
        }
        for b in 1..np {
            let out = &mut row[b * d2..(b + 1) * d2];
            for j in 0..b * s {
                mmt_acc(d, &r[j * d2..(j + 1) * d2], &right[b][j * d2..(j + 1) * d2], out);
            }
        }
        Ok(row)
    })?;
    Ok(rows.concat())
}

fn op_entry(level: u32, m: &HOperator, prev: Option<&HOperator>) -> Result<LevelEntry> {
    let difference = match prev {
        Some(p) => Some((m - p).op_norm()?),
        None => None,
    };
    Ok(LevelEntry { level, level2: None, values: m.entries().to_vec(), difference })
}

/// Largest level used for the off-diagonal `(ℓ, ℓ + 1)` probes of the report.
const OFF_DIAGONAL_MAX_LEVEL: u32 = 9;

/// The covariance integral at every pair of output grid points with
/// `τ = t`, `τ' = t'`, refined over diagonal level pairs from the output
/// resolution up to `max_level`. Each pair keeps the value from which all
/// later successive differences (operator norm) stay below `tol`.
pub fn cov_integral(spec: &Cov2DSpec, max_level: u32, tol: f64) -> Result<CovIntegralResult> {
    let out = spec.grid;
    let l0 = out.levels();
    if max_level < l0 {
        return Err(Error::InvalidParameter(format!(
            "max level {max_level} is below the output grid level {l0}"
        )));
    }
    let d = spec.dim();
    let d2 = d * d;
    let np = out.n_points();
    let horizon = out.horizon();
    let mut chosen: Vec<f64> = Vec::new();
    let mut unsettled = vec![false; np * np];
    let mut prev: Option<Vec<f64>> = None;
    let mut entries = Vec::new();
    let mut boundary1 = Vec::new();
    let mut boundary2 = Vec::new();
    let probe = |f: &dyn Fn() -> Result<HOperator>, list: &mut Vec<LevelEntry>, level: u32| -> Result<()> {
        let m = f()?;
        let last = list.last().map(|e: &LevelEntry| HOperator::from_vec_unchecked(d, e.values.clone()));
        list.push(op_entry(level, &m, last.as_ref())?);
        Ok(())
    };
    let (bs, bt) = (horizon / 4.0, horizon / 2.0);
    for level in l0..=max_level {
        let cur = assemble(spec, level)?;
        let mut difference = None;
        match &prev {
            None => chosen = cur.clone(),
            Some(p) => {
                let diffs = par::map_range(np * np, |k| {
                    let buf: Vec<f64> =
                        cur[k * d2..(k + 1) * d2].iter().zip(&p[k * d2..(k + 1) * d2]).map(|(a, b)| a - b).collect();
                    op_norm_of(d, &buf)
                });
                for (k, &df) in diffs.iter().enumerate() {
                    unsettled[k] = df >= tol;
                    if df >= tol {
                        chosen[k * d2..(k + 1) * d2].copy_from_slice(&cur[k * d2..(k + 1) * d2]);
                    }
                }
                difference = Some(diffs.iter().copied().fold(0.0, f64::max));
            }
        }
        let last = (np * np - 1) * d2;
        entries.push(LevelEntry { level, level2: None, values: cur[last..last + d2].to_vec(), difference });
        probe(&|| boundary_integral_1(spec, horizon, horizon, bs, bs, bt, bt, level), &mut boundary1, level)?;
        probe(&|| boundary_integral_2(spec, horizon, horizon, bs, bs, bt, bt, level), &mut boundary2, level)?;
        prev = Some(cur);
    }
    let mut off_diagonal = Vec::new();
    for e in entries.iter().skip(1) {
        let l = e.level - 1;
        if l + 1 > OFF_DIAGONAL_MAX_LEVEL {
            break;
        }
        let m = double_sum(spec, horizon, horizon, horizon, horizon, (l, l + 1))?;
        let diag = HOperator::from_vec_unchecked(d, e.values.clone());
        off_diagonal.push(LevelEntry {
            level: l,
            level2: Some(l + 1),
            values: m.entries().to_vec(),
            difference: Some((&m - &diag).op_norm()?),
        });
    }
    let unconverged_pairs = unsettled.iter().filter(|&&u| u).count();
    let mut report = RefinementReport::from_levels(entries, target_rate(spec.alpha()), unconverged_pairs == 0);
    report.off_diagonal = off_diagonal;
    Ok(CovIntegralResult {
        field: GridCovField::from_raw(out, d, chosen),
        report,
        unconverged_pairs,
        boundary1,
        boundary2,
    })
}

/// Regularity seminorms of the covariance integral on its output grid.
pub fn output_seminorms(result: &CovIntegralResult, zeta: f64, cap: usize) -> Result<CovSeminorms> {
    grid_cov_seminorms(&result.field, zeta, cap)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct StabilityGap {
    pub gap: f64,
    pub input_dist: f64,
}

impl StabilityGap {
    pub fn ratio(&self) -> f64 {
        self.gap / self.input_dist
    }
}

/// Seminorm size of `I(K, Q) − I(K̃, Q̃)` at exponent `zeta` against the
/// input distance `‖K − K̃‖ + ‖K' − K̃'‖ + ‖Q − Q̃‖`. Both integrals are
/// assembled at level `level` on the common output grid.
pub fn stability_gap(a: &Cov2DSpec, b: &Cov2DSpec, zeta: f64, level: u32) -> Result<StabilityGap> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch("stability comparison needs a common output grid".into()));
    }
    let bound = (a.alpha() - a.eta()).min(b.alpha() - b.eta());
    if !(zeta > 0.0 && zeta < bound) {
        return Err(Error::InvalidParameter(format!("zeta must lie in (0, {bound}), got {zeta}")));
    }
    let ia = cov_integral(a, level, f64::INFINITY)?;
    let ib = cov_integral(b, level, f64::INFINITY)?;
    let diff = ia.field.difference(&ib.field)?;
    let gap = grid_cov_seminorms(&diff, zeta, SEMINORM_CAP)?.total();
    let grid = a.grid;
    let alpha = a.alpha().min(b.alpha());
    let input_dist = kernel_seminorms(&a.k.difference(&b.k)?, &grid)?.total()
        + kernel_seminorms(&a.kp.difference(&b.kp)?, &grid)?.total()
        + cov_seminorms(&a.q.difference(&b.q)?, alpha, &grid)?.total();
    Ok(StabilityGap { gap, input_dist })
}

#[derive(Clone, Debug, Serialize)]
pub struct GateRow {
    pub gamma: f64,
    pub coarse: CovSeminorms,
    pub fine: CovSeminorms,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct RoughGate {
    pub admissible: bool,
    pub certified_exponent: f64,
    pub scan: Vec<GateRow>,
}

/// Largest relative growth of any seminorm under grid doubling that still
/// counts as bounded.
pub const GATE_GROWTH: f64 = 1.005;

fn bounded(coarse: f64, fine: f64) -> bool {
    if coarse == 0.0 {
        fine == 0.0
    } else {
        fine <= GATE_GROWTH * coarse
    }
}

/// Scans `γ = 0.01, 0.02, …, 0.99`; a `γ` passes when none of the three
/// seminorms grows by more than [`GATE_GROWTH`] from `grid` to its doubling
/// (no subsampling). The certified exponent is the last `γ` of the passing
/// prefix and admissibility requires it to exceed `1/2` strictly.
pub fn rough_admissible(q: &CovarianceField, grid: &Grid) -> Result<RoughGate> {
    let fine_grid = grid.refined();
    if fine_grid.horizon() > q.domain() * (1.0 + 1e-12) {
        return Err(Error::Domain("grid exceeds covariance domain".into()));
    }
    let coarse = cov_gap_profile(q, grid, grid.n())?;
    let fine = cov_gap_profile(q, &fine_grid, fine_grid.n())?;
    let mut scan = Vec::new();
    let mut certified = 0.0;
    let mut prefix = true;
    for k in 1..=99 {
        let gamma = k as f64 / 100.0;
        let c = coarse.seminorms(gamma);
        let f = fine.seminorms(gamma);
        let pass = bounded(c.q10, f.q10) && bounded(c.q01, f.q01) && bounded(c.q11, f.q11);
        if pass && prefix {
            certified = gamma;
        }
        prefix &= pass;
        scan.push(GateRow { gamma, coarse: c, fine: f, pass });
    }
    Ok(RoughGate { admissible: certified > 0.5 + 1e-9, certified_exponent: certified, scan })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::{fbm_cov, fbm_kernel, wiener_cov};
    use crate::kernels::{fractional_kernel, identity_kernel, rl_kernel, zero_kernel};

    fn q0() -> HOperator {
        HOperator::from_rows(&[vec![1.0, 0.2], vec![0.2, 0.5]]).unwrap()
    }

    #[test]
    fn identity_kernels_telescope() {
        let g = Grid::unit(16).unwrap();
        let spec = Cov2DSpec::symmetric(identity_kernel(2), wiener_cov(q0()).unwrap(), g).unwrap();
        let r = cov_integral(&spec, 6, 1e-12).unwrap();
        for i in 0..=16 {
            for j in 0..=16 {
                let want = q0().scale(g.time(i).min(g.time(j)));
                assert!((&r.field.get(i, j) - &want).max_abs() < 1e-12);
            }
        }
        assert!(r.converged());
        let ds = double_sum(&spec, 1.0, 1.0, 1.0, 1.0, (3, 5)).unwrap();
        assert!((&ds - &q0()).max_abs() < 1e-14);
        assert_eq!(double_sum(&spec, 1.0, 1.0, 0.0, 0.5, (3, 3)).unwrap(), HOperator::zeros(2));

        let h = 0.3;
        let spec = Cov2DSpec::symmetric(identity_kernel(1), fbm_cov(h, HOperator::identity(1)).unwrap(), g).unwrap();
        let r = cov_integral(&spec, 5, 1e-12).unwrap();
        for (i, j) in [(3, 9), (16, 16), (11, 2)] {
            let want = fbm_kernel(h, g.time(i), g.time(j));
            assert!((r.field.get(i, j).get(0, 0) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn brute_force_agreement() {
        let g = Grid::unit(16).unwrap();
        let k = fractional_kernel(0.3, q0()).unwrap();
        let spec = Cov2DSpec::symmetric(k.clone(), fbm_cov(0.4, HOperator::identity(2)).unwrap(), g).unwrap();
        let r = cov_integral(&spec, 4, 0.0).unwrap();
        for (a, b) in [(16, 16), (5, 12), (9, 3), (0, 7)] {
            let mut want = HOperator::zeros(2);
            for i in 0..a {
                for j in 0..b {
                    let cell = spec.q().rect_increment((g.time(i), g.time(j)), (g.time(i + 1), g.time(j + 1))).unwrap();
                    let l = k.eval(g.time(a), g.time(i)).unwrap();
                    let rr = k.eval(g.time(b), g.time(j)).unwrap();
                    want = &want + &(&(&l * &cell) * &rr.adjoint());
                }
            }
            assert!((&r.field.get(a, b) - &want).max_abs() < 1e-12, "{a} {b}");
            let ds = double_sum(&spec, g.time(a), g.time(b), g.time(a), g.time(b), (4, 4)).unwrap();
            assert!((&ds - &want).max_abs() < 1e-12);
        }
    }

    #[test]
    fn rl_variance_oracle() {
        let hurst = 0.75;
        let g = Grid::unit(8).unwrap();
        let spec = Cov2DSpec::symmetric(
            rl_kernel(hurst, HOperator::identity(1)).unwrap(),
            wiener_cov(HOperator::identity(1)).unwrap(),
            g,
        )
        .unwrap();
        let r = cov_integral(&spec, 10, 1e-12).unwrap();
        for (i, t) in [(2, 0.25f64), (4, 0.5), (8, 1.0)] {
            let want = t.powf(2.0 * hurst) / (2.0 * hurst);
            assert!((r.field.get(i, i).get(0, 0) - want).abs() < 1e-2);
        }
    }

    #[test]
    fn axes_vanish_and_adjoint_symmetry() {
        let g = Grid::unit(8).unwrap();
        let k = fractional_kernel(0.2, q0()).unwrap();
        let kp = fractional_kernel(0.1, HOperator::identity(2)).unwrap();
        let spec = Cov2DSpec::new(k, kp, fbm_cov(0.4, q0()).unwrap(), g).unwrap();
        let r = cov_integral(&spec, 5, 1e-3).unwrap();
        let s = cov_integral(&spec.swapped(), 5, 1e-3).unwrap();
        for i in 0..=8 {
            assert_eq!(r.field.get(0, i), HOperator::zeros(2));
            assert_eq!(r.field.get(i, 0), HOperator::zeros(2));
            for j in 0..=8 {
                assert!((&r.field.get(i, j).adjoint() - &s.field.get(j, i)).max_abs() < 1e-12);
            }
        }
    }

    #[test]
    fn admissibility() {
        let g = Grid::unit(8).unwrap();
        let q = fbm_cov(0.3, HOperator::identity(1)).unwrap();
        let k = fractional_kernel(0.3, HOperator::identity(1)).unwrap();
        assert!(matches!(Cov2DSpec::symmetric(k, q, g), Err(Error::Inadmissible(_))));
    }

    #[test]
    fn boundary_integrals() {
        let g = Grid::unit(64).unwrap();
        let spec = Cov2DSpec::symmetric(identity_kernel(1), wiener_cov(HOperator::identity(1)).unwrap(), g).unwrap();
        let b = boundary_integral_1(&spec, 1.0, 1.0, 0.25, 0.4, 0.75, 0.4, 5).unwrap();
        assert_eq!(b, HOperator::zeros(1));
        for (s, t, sp, tp) in [(0.25f64, 0.75f64, 0.5f64, 1.0f64), (0.0, 0.5, 0.5, 0.75), (0.1, 0.6, 0.2, 0.3)] {
            let overlap = (t.min(tp) - s.max(sp)).max(0.0);
            let b1 = boundary_integral_1(&spec, 1.0, 1.0, s, sp, t, tp, 5).unwrap();
            let b2 = boundary_integral_2(&spec, 1.0, 1.0, s, sp, t, tp, 5).unwrap();
            assert!((b1.get(0, 0) - overlap).abs() < 1e-14);
            assert!((b2.get(0, 0) - overlap).abs() < 1e-14);
            assert!(sewing_remainder_2d(&spec, 1.0, 1.0, s, sp, t, tp, 5).unwrap() < 1e-14);
        }
    }

    #[test]
    fn sewing_remainder_decays() {
        let g = Grid::unit(64).unwrap();
        let k = fractional_kernel(0.2, HOperator::identity(1)).unwrap();
        let spec = Cov2DSpec::symmetric(k, fbm_cov(0.4, HOperator::identity(1)).unwrap(), g).unwrap();
        let r: Vec<f64> = [0.5, 0.25, 0.125, 0.0625]
            .iter()
            .map(|d| sewing_remainder_2d(&spec, 1.0, 1.0, 0.25, 0.25, 0.25 + d, 0.25 + d, 8).unwrap())
            .collect();
        assert!(r.windows(2).all(|w| w[1] < w[0]), "{r:?}");
    }

    #[test]
    fn stability_zero_and_linearity() {
        let g = Grid::unit(16).unwrap();
        let k = fractional_kernel(0.1, HOperator::identity(1)).unwrap();
        let q = fbm_cov(0.4, HOperator::identity(1)).unwrap();
        let a = Cov2DSpec::symmetric(k.clone(), q.clone(), g).unwrap();
        let z = stability_gap(&a, &a, 0.1, 6).unwrap();
        assert_eq!(z.gap, 0.0);
        assert_eq!(z.input_dist, 0.0);
        let c = 0.7;
        let b = a.with_q(q.scaled(c)).unwrap();
        let zero = a.with_kernels(zero_kernel(1), zero_kernel(1)).unwrap();
        let full = stability_gap(&a, &zero, 0.1, 6).unwrap().gap;
        let gap = stability_gap(&a, &b, 0.1, 6).unwrap().gap;
        assert!((gap - (1.0 - c) * full).abs() < 1e-10 * full.max(1.0));
    }

    #[test]
    fn rough_gate() {
        let g = Grid::unit(32).unwrap();
        let w = rough_admissible(&wiener_cov(HOperator::identity(1)).unwrap(), &g).unwrap();
        assert!(!w.admissible);
        assert!((w.certified_exponent - 0.5).abs() < 0.011, "{}", w.certified_exponent);
        let hi = rough_admissible(&fbm_cov(0.75, HOperator::identity(1)).unwrap(), &g).unwrap();
        assert!(hi.admissible, "{}", hi.certified_exponent);
        let lo = rough_admissible(&fbm_cov(0.25, HOperator::identity(1)).unwrap(), &g).unwrap();
        assert!(!lo.admissible, "{}", lo.certified_exponent);
    }
}
