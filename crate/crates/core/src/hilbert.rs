//! Finite truncations of a separable Hilbert space: coefficient vectors in a
//! fixed orthonormal basis and dense operators acting on them.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 100_000;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Element of the truncated space, stored by its basis coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct HVector {
    coords: Vec<f64>,
}

impl TryFrom<Vec<f64>> for HVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        HVector::new(v)
    }
}

impl From<HVector> for Vec<f64> {
    fn from(v: HVector) -> Self {
        v.coords
    }
}

impl HVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidParameter("vector dimension must be at least 1".into()));
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("vector"));
        }
        Ok(Self { coords })
    }

    pub(crate) fn from_vec_unchecked(coords: Vec<f64>) -> Self {
        Self { coords }
    }

    pub fn zeros(n: usize) -> Self {
        Self { coords: vec![0.0; n] }
    }

    /// Unit basis vector `e_i` (zero-based).
    pub fn basis(n: usize, i: usize) -> Self {
        let mut v = Self::zeros(n);
        v.coords[i] = 1.0;
        v
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.coords
    }

    pub fn dot(&self, other: &HVector) -> f64 {
        dot(&self.coords, &other.coords)
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn scale(&self, c: f64) -> HVector {
        HVector { coords: self.coords.iter().map(|x| c * x).collect() }
    }

    /// `self += c * x`
    pub fn axpy(&mut self, c: f64, x: &HVector) {
        for (a, b) in self.coords.iter_mut().zip(&x.coords) {
            *a += c * b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|x| x.is_finite())
    }

    fn check_dim(&self, other: &HVector) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        Ok(())
    }
}

impl Add<&HVector> for &HVector {
    type Output = HVector;
    fn add(self, rhs: &HVector) -> HVector {
        HVector { coords: self.coords.iter().zip(&rhs.coords).map(|(a, b)| a + b).collect() }
    }
}

impl Sub<&HVector> for &HVector {
    type Output = HVector;
    fn sub(self, rhs: &HVector) -> HVector {
        HVector { coords: self.coords.iter().zip(&rhs.coords).map(|(a, b)| a - b).collect() }
    }
}

impl Add for HVector {
    type Output = HVector;
    fn add(self, rhs: HVector) -> HVector {
        &self + &rhs
    }
}

impl Sub for HVector {
    type Output = HVector;
    fn sub(self, rhs: HVector) -> HVector {
        &self - &rhs
    }
}

impl AddAssign<&HVector> for HVector {
    fn add_assign(&mut self, rhs: &HVector) {
        for (a, b) in self.coords.iter_mut().zip(&rhs.coords) {
            *a += b;
        }
    }
}

impl SubAssign<&HVector> for HVector {
    fn sub_assign(&mut self, rhs: &HVector) {
        for (a, b) in self.coords.iter_mut().zip(&rhs.coords) {
            *a -= b;
        }
    }
}

impl Mul<f64> for &HVector {
    type Output = HVector;
    fn mul(self, c: f64) -> HVector {
        self.scale(c)
    }
}

impl Neg for &HVector {
    type Output = HVector;
    fn neg(self) -> HVector {
        self.scale(-1.0)
    }
}

/// Bounded operator on the truncated space as a dense row-major matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawOperator")]
pub struct HOperator {
    dim: usize,
    entries: Vec<f64>,
}

#[derive(Deserialize)]
struct RawOperator {
    dim: usize,
    entries: Vec<f64>,
}

impl TryFrom<RawOperator> for HOperator {
    type Error = Error;
    fn try_from(raw: RawOperator) -> Result<Self> {
        HOperator::new(raw.dim, raw.entries)
    }
}

/// Eigen-decomposition of a symmetric operator, eigenvalues in descending
/// order, eigenvectors stored as the columns of `vectors`.
#[derive(Clone, Debug)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: HOperator,
}

impl HOperator {
    pub fn new(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("operator dimension must be at least 1".into()));
        }
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, found: entries.len() });
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("operator"));
        }
        Ok(Self { dim, entries })
    }

    pub(crate) fn from_vec_unchecked(dim: usize, entries: Vec<f64>) -> Self {
        debug_assert_eq!(entries.len(), dim * dim);
        Self { dim, entries }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut entries = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: r.len() });
            }
            entries.extend_from_slice(r);
        }
        Self::new(n, entries)
    }

    pub fn zeros(n: usize) -> Self {
        Self { dim: n, entries: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        Self::scalar(n, 1.0)
    }

    /// `c * I`
    pub fn scalar(n: usize, c: f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.entries[i * n + i] = c;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n);
        for (i, v) in values.iter().enumerate() {
            m.entries[i * n + i] = *v;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [f64] {
        &mut self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.entries[i * self.dim + j] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|x| x.is_finite())
    }

    pub fn apply(&self, f: &HVector) -> Result<HVector> {
        if f.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: f.dim() });
        }
        let mut out = vec![0.0; self.dim];
        self.apply_slice(f.coords(), &mut out);
        Ok(HVector::from_vec_unchecked(out))
    }

    /// `out = M x` on raw coefficient slices.
    pub(crate) fn apply_slice(&self, x: &[f64], out: &mut [f64]) {
        let n = self.dim;
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(&self.entries[i * n..(i + 1) * n], x);
        }
    }

    /// `out += M x` on raw coefficient slices.
    pub(crate) fn apply_add_slice(&self, x: &[f64], out: &mut [f64]) {
        let n = self.dim;
        for (i, o) in out.iter_mut().enumerate() {
            *o += dot(&self.entries[i * n..(i + 1) * n], x);
        }
    }

    pub fn adjoint(&self) -> HOperator {
        let n = self.dim;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[j * n + i] = self.entries[i * n + j];
            }
        }
        HOperator { dim: n, entries: out }
    }

    /// Operator composition `self ∘ rhs`.
    pub fn compose(&self, rhs: &HOperator) -> Result<HOperator> {
        if rhs.dim != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: rhs.dim });
        }
        Ok(self.mul_unchecked(rhs))
    }

    pub(crate) fn mul_unchecked(&self, rhs: &HOperator) -> HOperator {
        let n = self.dim;
        let mut out = vec![0.0; n * n];
        matmul_into(n, &self.entries, &rhs.entries, &mut out);
        HOperator { dim: n, entries: out }
    }

    /// `self ∘ rhs*`.
    pub(crate) fn mul_adjoint_unchecked(&self, rhs: &HOperator) -> HOperator {
        let n = self.dim;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            let a = &self.entries[i * n..(i + 1) * n];
            for j in 0..n {
                out[i * n + j] = dot(a, &rhs.entries[j * n..(j + 1) * n]);
            }
        }
        HOperator { dim: n, entries: out }
    }

    pub fn scale(&self, c: f64) -> HOperator {
        HOperator { dim: self.dim, entries: self.entries.iter().map(|x| c * x).collect() }
    }

    /// `self += c * x`
    pub fn axpy(&mut self, c: f64, x: &HOperator) {
        for (a, b) in self.entries.iter_mut().zip(&x.entries) {
            *a += c * b;
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.entries.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Largest absolute deviation from symmetry, `max |M_ij - M_ji|`.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.dim;
        let mut d: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                d = d.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        d
    }

    /// Spectral norm by power iteration on `MᵀM`.
    pub fn op_norm(&self) -> Result<f64> {
        let n = self.dim;
        match n {
            1 => return Ok(self.entries[0].abs()),
            2 => return Ok(op_norm_2x2(&self.entries)),
            _ => {}
        }
        let scale = self.max_abs();
        if scale == 0.0 {
            return Ok(0.0);
        }
        // Work with M / max|M_ij| to keep the iteration well scaled.
        let m: Vec<f64> = self.entries.iter().map(|x| x / scale).collect();
        let mut b = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += m[k * n + i] * m[k * n + j];
                }
                b[i * n + j] = s;
                b[j * n + i] = s;
            }
        }
        // Deterministic start with irregular weights, mapped once through B so
        // it has a component along every dominant direction of B.
        let u: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.618_033_988_749_895).fract()).collect();
        let mut x = vec![0.0; n];
        sym_apply(n, &b, &u, &mut x);
        let nx = norm(&x);
        if nx == 0.0 {
            // u is orthogonal to the range; fall back to the best basis vector.
            let j = (0..n).max_by(|&a, &c| b[a * n + a].total_cmp(&b[c * n + c])).unwrap_or(0);
            x.iter_mut().for_each(|v| *v = 0.0);
            x[j] = 1.0;
        } else {
            x.iter_mut().for_each(|v| *v /= nx);
        }
        let mut y = vec![0.0; n];
        let mut lambda_prev = f64::NAN;
        for _ in 0..POWER_MAX_ITER {
            sym_apply(n, &b, &x, &mut y);
            let lambda = dot(&x, &y);
            if lambda <= 0.0 {
                return Ok(0.0);
            }
            let res = y.iter().zip(&x).map(|(yi, xi)| (yi - lambda * xi).powi(2)).sum::<f64>().sqrt();
            let ny = norm(&y);
            let converged = (lambda - lambda_prev).abs() <= 1e-12 * lambda && res <= 1e-6 * lambda;
            if converged {
                return Ok(scale * lambda.sqrt());
            }
            lambda_prev = lambda;
            for (xi, yi) in x.iter_mut().zip(&y) {
                *xi = yi / ny;
            }
        }
        Err(Error::NotConverged { what: "operator norm power iteration", iterations: POWER_MAX_ITER })
    }

    /// Eigen-decomposition by cyclic Jacobi rotations. The input must be
    /// symmetric within `1e-10`.
    pub fn symmetric_eigen(&self) -> Result<SymmetricEigen> {
        let defect = self.symmetry_defect();
        if defect > SYMMETRY_TOL {
            return Err(Error::NotSymmetric { defect });
        }
        let n = self.dim;
        let mut a = self.entries.clone();
        for i in 0..n {
            for j in (i + 1)..n {
                let s = 0.5 * (a[i * n + j] + a[j * n + i]);
                a[i * n + j] = s;
                a[j * n + i] = s;
            }
        }
        let mut v = HOperator::identity(n).entries;
        let scale = self.frobenius();
        let mut converged = scale == 0.0 || n == 1;
        for _ in 0..JACOBI_MAX_SWEEPS {
            if converged {
                break;
            }
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[i * n + j].powi(2))
                .sum::<f64>()
                .sqrt();
            if off <= 1e-15 * scale {
                converged = true;
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[p * n + q];
                    if apq.abs() <= f64::MIN_POSITIVE {
                        continue;
                    }
                    let app = a[p * n + p];
                    let aqq = a[q * n + q];
                    let theta = (aqq - app) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[k * n + p];
                        let akq = a[k * n + q];
                        a[k * n + p] = c * akp - s * akq;
                        a[k * n + q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p * n + k];
                        let aqk = a[q * n + k];
                        a[p * n + k] = c * apk - s * aqk;
                        a[q * n + k] = s * apk + c * aqk;
                    }
                    for k in 0..n {
                        let vkp = v[k * n + p];
                        let vkq = v[k * n + q];
                        v[k * n + p] = c * vkp - s * vkq;
                        v[k * n + q] = s * vkp + c * vkq;
                    }
                }
            }
        }
        if !converged {
            return Err(Error::NotConverged { what: "Jacobi eigenvalue sweeps", iterations: JACOBI_MAX_SWEEPS });
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]));
        let values = order.iter().map(|&i| a[i * n + i]).collect();
        let mut vectors = vec![0.0; n * n];
        for (col, &src) in order.iter().enumerate() {
            for k in 0..n {
                vectors[k * n + col] = v[k * n + src];
            }
        }
        Ok(SymmetricEigen { values, vectors: HOperator { dim: n, entries: vectors } })
    }

    /// Checks symmetry and positive semi-definiteness within `1e-10`
    /// (relative to the largest eigenvalue when that exceeds one).
    pub fn check_psd(&self) -> Result<SymmetricEigen> {
        let eig = self.symmetric_eigen()?;
        let top = eig.values.first().copied().unwrap_or(0.0).abs().max(1.0);
        let min = eig.values.last().copied().unwrap_or(0.0);
        if min < -SYMMETRY_TOL * top {
            return Err(Error::NotPsd { min_eigenvalue: min });
        }
        Ok(eig)
    }

    /// Symmetric square root; negative eigenvalues are clamped to zero.
    pub fn sqrt_psd(&self) -> Result<HOperator> {
        let eig = self.symmetric_eigen()?;
        let n = self.dim;
        let roots: Vec<f64> = eig.values.iter().map(|l| l.max(0.0).sqrt()).collect();
        let v = &eig.vectors;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let s: f64 = (0..n).map(|k| v.get(i, k) * roots[k] * v.get(j, k)).sum();
                out[i * n + j] = s;
                out[j * n + i] = s;
            }
        }
        Ok(HOperator { dim: n, entries: out })
    }

    /// Induced 1-norm and ∞-norm maximum; an upper bound for the spectral norm.
    pub(crate) fn max_induced_norm(&self) -> f64 {
        let n = self.dim;
        let mut row_max: f64 = 0.0;
        let mut col = vec![0.0; n];
        for i in 0..n {
            let mut r = 0.0;
            for j in 0..n {
                let a = self.entries[i * n + j].abs();
                r += a;
                col[j] += a;
            }
            row_max = row_max.max(r);
        }
        col.into_iter().fold(row_max, f64::max)
    }

    pub(crate) fn check_same_dim(&self, other: &HOperator) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        Ok(())
    }
}

impl Add<&HOperator> for &HOperator {
    type Output = HOperator;
    fn add(self, rhs: &HOperator) -> HOperator {
        HOperator {
            dim: self.dim,
            entries: self.entries.iter().zip(&rhs.entries).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub<&HOperator> for &HOperator {
    type Output = HOperator;
    fn sub(self, rhs: &HOperator) -> HOperator {
        HOperator {
            dim: self.dim,
            entries: self.entries.iter().zip(&rhs.entries).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Add for HOperator {
    type Output = HOperator;
    fn add(self, rhs: HOperator) -> HOperator {
        &self + &rhs
    }
}

impl Sub for HOperator {
    type Output = HOperator;
    fn sub(self, rhs: HOperator) -> HOperator {
        &self - &rhs
    }
}

impl AddAssign<&HOperator> for HOperator {
    fn add_assign(&mut self, rhs: &HOperator) {
        for (a, b) in self.entries.iter_mut().zip(&rhs.entries) {
            *a += b;
        }
    }
}

impl SubAssign<&HOperator> for HOperator {
    fn sub_assign(&mut self, rhs: &HOperator) {
        for (a, b) in self.entries.iter_mut().zip(&rhs.entries) {
            *a -= b;
        }
    }
}

impl Mul<f64> for &HOperator {
    type Output = HOperator;
    fn mul(self, c: f64) -> HOperator {
        self.scale(c)
    }
}

impl Mul<&HOperator> for &HOperator {
    type Output = HOperator;
    /// Composition; panics on mismatched dimensions.
    fn mul(self, rhs: &HOperator) -> HOperator {
        assert_eq!(self.dim, rhs.dim, "operator dimension mismatch");
        self.mul_unchecked(rhs)
    }
}

impl Neg for &HOperator {
    type Output = HOperator;
    fn neg(self) -> HOperator {
        self.scale(-1.0)
    }
}

/// The rank-one operator `x ↦ ⟨g, x⟩ h`.
pub fn tensor(g: &HVector, h: &HVector) -> Result<HOperator> {
    g.check_dim(h)?;
    let n = g.dim();
    let mut e = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            e[i * n + j] = h.coords[i] * g.coords[j];
        }
    }
    Ok(HOperator { dim: n, entries: e })
}

pub fn apply(m: &HOperator, f: &HVector) -> Result<HVector> {
    m.apply(f)
}

pub fn adjoint(m: &HOperator) -> HOperator {
    m.adjoint()
}

pub fn trace(m: &HOperator) -> f64 {
    m.trace()
}

pub fn op_norm(m: &HOperator) -> Result<f64> {
    m.op_norm()
}

pub fn sqrt_psd(m: &HOperator) -> Result<HOperator> {
    m.sqrt_psd()
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn matmul_into(n: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    for i in 0..n {
        let row = &mut out[i * n..(i + 1) * n];
        row.iter_mut().for_each(|x| *x = 0.0);
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            let bk = &b[k * n..(k + 1) * n];
            for (o, bkj) in row.iter_mut().zip(bk) {
                *o += aik * bkj;
            }
        }
    }
}

fn sym_apply(n: usize, b: &[f64], x: &[f64], out: &mut [f64]) {
    for i in 0..n {
        out[i] = dot(&b[i * n..(i + 1) * n], x);
    }
}

/// Largest singular value of a 2×2 matrix in closed form.
fn op_norm_2x2(m: &[f64]) -> f64 {
    let (a, b, c, d) = (m[0], m[1], m[2], m[3]);
    let s1 = a * a + b * b + c * c + d * d;
    let det = (a * d - b * c).abs();
    // σ_max = (sqrt(s1 + 2|det|) + sqrt(s1 - 2|det|)) / 2
    let p = (s1 + 2.0 * det).max(0.0).sqrt();
    let q = (s1 - 2.0 * det).max(0.0).sqrt();
    0.5 * (p + q)
}

/// Operator norm with dimension-specific fast paths; panics only if power
/// iteration fails, which is reserved for pathological inputs.
pub(crate) fn op_norm_of(n: usize, e: &[f64]) -> f64 {
    match n {
        1 => e[0].abs(),
        2 => op_norm_2x2(e),
        _ => HOperator::from_vec_unchecked(n, e.to_vec())
            .op_norm()
            .unwrap_or_else(|_| HOperator::from_vec_unchecked(n, e.to_vec()).frobenius()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_op(rng: &mut ChaCha8Rng, n: usize) -> HOperator {
        HOperator::new(n, (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> HVector {
        HVector::new((0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn apply_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_op(&mut rng, 3);
        let f = random_vec(&mut rng, 3);
        let got = m.apply(&f).unwrap();
        for i in 0..3 {
            let mut s = 0.0;
            for j in 0..3 {
                s += m.get(i, j) * f.coords()[j];
            }
            assert!((got.coords()[i] - s).abs() < 1e-15);
        }
        let id = HOperator::identity(3).apply(&HVector::new(vec![1.0, 2.0, 3.0]).unwrap()).unwrap();
        assert_eq!(id.coords(), &[1.0, 2.0, 3.0]);
        assert_eq!(HOperator::zeros(3).apply(&f).unwrap(), HVector::zeros(3));
        assert!(m.apply(&HVector::zeros(2)).is_err());
    }

    #[test]
    fn adjoint_inner_product_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random_op(&mut rng, 4);
        let f = random_vec(&mut rng, 4);
        let g = random_vec(&mut rng, 4);
        let lhs = m.apply(&f).unwrap().dot(&g);
        let rhs = f.dot(&m.adjoint().apply(&g).unwrap());
        assert!((lhs - rhs).abs() < 1e-12);
        assert_eq!(m.adjoint().adjoint(), m);
        let d = HOperator::diag(&[1.0, 2.0, 3.0]);
        assert_eq!(d.adjoint(), d);
    }

    #[test]
    fn tensor_defining_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = random_vec(&mut rng, 5);
        let h = random_vec(&mut rng, 5);
        let x = random_vec(&mut rng, 5);
        let t = tensor(&g, &h).unwrap();
        let lhs = t.apply(&x).unwrap();
        let rhs = h.scale(g.dot(&x));
        assert!((&lhs - &rhs).norm() < 1e-12);
        assert!((tensor(&g, &g).unwrap().trace() - g.norm_sq()).abs() < 1e-14);
        let e1 = HVector::basis(3, 0);
        let e2 = HVector::basis(3, 1);
        assert_eq!(tensor(&e1, &e2).unwrap().apply(&e1).unwrap(), e2);
    }

    #[test]
    fn trace_and_norm_basics() {
        assert_eq!(HOperator::identity(4).trace(), 4.0);
        assert_eq!(HOperator::diag(&[1.0, 2.0, 3.5]).trace(), 6.5);
        assert_eq!(HOperator::identity(5).op_norm().unwrap(), 1.0);
        assert!((HOperator::diag(&[1.0, -3.0, 2.0]).op_norm().unwrap() - 3.0).abs() < 1e-10);
        assert_eq!(HOperator::zeros(3).op_norm().unwrap(), 0.0);
    }

    #[test]
    fn op_norm_dominates_random_directions() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = random_op(&mut rng, 6);
        let norm = m.op_norm().unwrap();
        let mut best: f64 = 0.0;
        for _ in 0..10_000 {
            let mut v = random_vec(&mut rng, 6);
            let nv = v.norm();
            v = v.scale(1.0 / nv);
            best = best.max(m.apply(&v).unwrap().norm());
        }
        // The random search is a lower bound; the norm sits above it.
        assert!(best <= norm + 1e-3);
        assert!(norm - best < 0.05 * norm);
        // Cross-check against the eigenvalues of MᵀM.
        let eig = m.adjoint().compose(&m).unwrap().symmetric_eigen().unwrap();
        assert!((eig.values[0].sqrt() - norm).abs() < 1e-9 * norm);
    }

    #[test]
    fn op_norm_small_dimensions_agree_with_eigen() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 1..=4 {
            for _ in 0..20 {
                let m = random_op(&mut rng, n);
                let eig = m.adjoint().compose(&m).unwrap().symmetric_eigen().unwrap();
                let expect = eig.values[0].max(0.0).sqrt();
                assert!((m.op_norm().unwrap() - expect).abs() < 1e-10 * expect.max(1.0));
            }
        }
    }

    #[test]
    fn adjoint_preserves_norm_and_submultiplicative() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for n in [3, 5, 8] {
            let a = random_op(&mut rng, n);
            let b = random_op(&mut rng, n);
            let na = a.op_norm().unwrap();
            assert!((a.adjoint().op_norm().unwrap() - na).abs() < 1e-10);
            let nab = a.compose(&b).unwrap().op_norm().unwrap();
            assert!(nab <= na * b.op_norm().unwrap() + 1e-9);
            assert!(a.compose(&a.adjoint()).unwrap().trace() >= 0.0);
        }
    }

    #[test]
    fn sqrt_psd_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let r = random_op(&mut rng, 5);
        let m = r.adjoint().compose(&r).unwrap();
        let s = m.sqrt_psd().unwrap();
        assert!(s.symmetry_defect() < 1e-14);
        assert!((&(&s * &s) - &m).op_norm().unwrap() < 1e-8);
        let d = HOperator::diag(&[4.0, 9.0]).sqrt_psd().unwrap();
        assert!((&d - &HOperator::diag(&[2.0, 3.0])).max_abs() < 1e-14);
        assert_eq!(HOperator::identity(3).sqrt_psd().unwrap(), HOperator::identity(3));
        let asym = HOperator::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(asym.sqrt_psd(), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn psd_check_rejects_negative_eigenvalue() {
        assert!(HOperator::diag(&[1.0, -0.1]).check_psd().is_err());
        assert!(HOperator::diag(&[1.0, 0.0]).check_psd().is_ok());
    }

    #[test]
    fn json_roundtrip_and_validation() {
        let m = HOperator::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, r#"{"dim":2,"entries":[1.0,2.0,3.0,4.0]}"#);
        let back: HOperator = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<HOperator>(r#"{"dim":2,"entries":[1.0]}"#).is_err());
        assert!(HVector::new(vec![f64::NAN]).is_err());
        assert!(HVector::new(vec![]).is_err());
    }
}
