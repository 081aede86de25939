//! Dense complex-matrix kernels for a single fiber `M(ω) = ⊕_j Mat(n_j)`.
//!
//! A fiber element is kept as its list of diagonal blocks; every operation
//! acts blockwise, so the cost is `Σ n_j³` rather than `(Σ n_j)³`.
//!
//! The spectral routines (eigendecomposition, `|x|^p`, polar decomposition,
//! spectral projections) all go through [`herm_eig_block`], a cyclic Jacobi
//! solver with a fixed sweep order, so identical input bits always give
//! identical output bits.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Off-diagonal Frobenius threshold for Jacobi convergence, relative to
/// `max(1, ‖A‖_F)`.
pub const JACOBI_OFF_TOL: f64 = 1e-14;
pub const JACOBI_MAX_SWEEPS: usize = 100;
/// Largest `‖a − a*‖_maxabs` accepted as Hermitian input.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Singular values at or below this are treated as zero in the polar
/// decomposition (the pseudo-inverse cutoff).
pub const SINGULAR_CUTOFF: f64 = 1e-10;
/// Eigenvalues within this distance of a spectral threshold are clamped onto it.
pub const SPECTRAL_CLAMP: f64 = 1e-12;
/// Eigenvalues of `x*x` below `NOISE_FLOOR · n · ε · λ_max` are rounding noise
/// of a zero eigenvalue and are set to zero before taking roots.
const NOISE_FLOOR: f64 = 4.0;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// A square complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct MatrixBlock {
    dim: usize,
    data: Vec<Complex64>,
}

impl fmt::Debug for MatrixBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[Complex64]> = self.data.chunks(self.dim).collect();
        f.debug_struct("MatrixBlock")
            .field("dim", &self.dim)
            .field("rows", &rows)
            .finish()
    }
}

impl MatrixBlock {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "matrix blocks have dim >= 1");
        MatrixBlock {
            dim,
            data: vec![ZERO; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = ONE;
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m.data[i * dim + j] = f(i, j);
            }
        }
        m
    }

    /// Builds a block from row vectors. Fails unless the rows form a
    /// non-empty square array of finite entries.
    pub fn from_rows(rows: Vec<Vec<Complex64>>) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(Error::ShapeMismatch("empty matrix block".into()));
        }
        let mut data = Vec::with_capacity(dim * dim);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != dim {
                return Err(Error::ShapeMismatch(format!(
                    "row {i} has {} entries, expected {dim}",
                    row.len()
                )));
            }
            data.extend(row);
        }
        let m = MatrixBlock { dim, data };
        if !m.is_finite() {
            return Err(Error::ContractViolation("non-finite matrix entry".into()));
        }
        Ok(m)
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * m.dim + i] = Complex64::new(d, 0.0);
        }
        m
    }

    /// The matrix unit `E_ij`.
    pub fn unit(dim: usize, i: usize, j: usize) -> Self {
        let mut m = Self::zeros(dim);
        m.data[i * dim + j] = ONE;
        m
    }

    /// Entries drawn i.i.d. standard complex Gaussian, `(a + ib)/√2`.
    pub fn gaussian<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        let scale = std::f64::consts::FRAC_1_SQRT_2;
        Self::from_fn(dim, |_, _| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re * scale, im * scale)
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.dim + j] = v;
    }

    /// Row-major entries.
    pub fn entries(&self) -> &[Complex64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn adjoint(&self) -> Self {
        let n = self.dim;
        Self::from_fn(n, |i, j| self.data[j * n + i].conj())
    }

    pub fn scale(&self, s: Complex64) -> Self {
        MatrixBlock {
            dim: self.dim,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }

    /// Frobenius pairing `tr(other* · self) = Σ conj(other_ij) self_ij`.
    pub fn frobenius_inner(&self, other: &MatrixBlock) -> Complex64 {
        assert_eq!(self.dim, other.dim, "block dim mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| b.conj() * a)
            .sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &MatrixBlock) -> f64 {
        assert_eq!(self.dim, other.dim, "block dim mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// `‖a − a*‖_maxabs`.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    /// True when the stored entries are bitwise Hermitian.
    pub fn is_exactly_hermitian(&self) -> bool {
        let n = self.dim;
        (0..n).all(|i| (i..n).all(|j| self.get(i, j) == self.get(j, i).conj()))
    }

    /// `(a + a*)/2`.
    pub fn hermitian_part(&self) -> Self {
        let n = self.dim;
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = Complex64::new(self.get(i, i).re, 0.0);
            for j in (i + 1)..n {
                let v = (self.get(i, j) + self.get(j, i).conj()) * 0.5;
                m.data[i * n + j] = v;
                m.data[j * n + i] = v.conj();
            }
        }
        m
    }
}

impl Add for &MatrixBlock {
    type Output = MatrixBlock;
    fn add(self, rhs: &MatrixBlock) -> MatrixBlock {
        assert_eq!(self.dim, rhs.dim, "block dim mismatch");
        MatrixBlock {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &MatrixBlock {
    type Output = MatrixBlock;
    fn sub(self, rhs: &MatrixBlock) -> MatrixBlock {
        assert_eq!(self.dim, rhs.dim, "block dim mismatch");
        MatrixBlock {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &MatrixBlock {
    type Output = MatrixBlock;
    fn mul(self, rhs: &MatrixBlock) -> MatrixBlock {
        assert_eq!(self.dim, rhs.dim, "block dim mismatch");
        let n = self.dim;
        let mut out = MatrixBlock::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == ZERO {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        out
    }
}

/// Spectral data of one Hermitian block: `a = U · diag(λ) · U*`.
#[derive(Clone, Debug, PartialEq)]
pub struct HermEig {
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// Unitary; column `k` is the eigenvector of `eigenvalues[k]`.
    pub basis: MatrixBlock,
}

impl HermEig {
    /// `Σ_k f(λ_k) u_k u_k*`. The result is bitwise Hermitian.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> MatrixBlock {
        let n = self.basis.dim;
        let vals: Vec<f64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        let u = &self.basis;
        let mut out = MatrixBlock::zeros(n);
        for i in 0..n {
            for j in i..n {
                let mut s = ZERO;
                for (k, &v) in vals.iter().enumerate() {
                    if v != 0.0 {
                        s += u.get(i, k) * u.get(j, k).conj() * v;
                    }
                }
                if i == j {
                    s.im = 0.0;
                }
                out.set(i, j, s);
                out.set(j, i, s.conj());
            }
        }
        out
    }

    pub fn reconstruct(&self) -> MatrixBlock {
        self.map(|l| l)
    }
}

/// Eigendecomposition of every block of a Hermitian fiber element.
#[derive(Clone, Debug, PartialEq)]
pub struct FiberEig {
    pub blocks: Vec<HermEig>,
}

impl FiberEig {
    /// All eigenvalues of the fiber element, descending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self
            .blocks
            .iter()
            .flat_map(|b| b.eigenvalues.iter().copied())
            .collect();
        all.sort_by(|a, b| b.total_cmp(a));
        all
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.blocks
            .iter()
            .filter_map(|b| b.eigenvalues.last().copied())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.blocks
            .iter()
            .filter_map(|b| b.eigenvalues.first().copied())
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn off_diagonal_norm(a: &MatrixBlock) -> f64 {
    let n = a.dim;
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a.get(i, j).norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi eigendecomposition of a Hermitian block.
///
/// Rows are swept in the fixed order `(0,1), (0,2), …, (n-2,n-1)`. Each
/// rotation first removes the phase of `a_pq` and then applies the real
/// symmetric Jacobi rotation to the resulting 2×2 problem.
pub fn herm_eig_block(a: &MatrixBlock) -> Result<HermEig> {
    let defect = a.hermitian_defect();
    if defect.is_nan() || defect > HERMITIAN_TOL {
        return Err(Error::ContractViolation(format!(
            "eigensolver input is not Hermitian (‖a − a*‖ = {defect:e})"
        )));
    }
    let n = a.dim;
    let mut m = a.hermitian_part();
    let mut v = MatrixBlock::identity(n);
    let thresh = JACOBI_OFF_TOL * m.frobenius_norm().max(1.0);

    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_diagonal_norm(&m) <= thresh {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut m, &mut v, p, q);
            }
        }
    }
    if !converged {
        let off = off_diagonal_norm(&m);
        if off > thresh {
            return Err(Error::NotConverged {
                sweeps: JACOBI_MAX_SWEEPS,
                off,
            });
        }
    }

    let diag: Vec<f64> = (0..n).map(|i| m.get(i, i).re).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| diag[j].total_cmp(&diag[i]));
    let eigenvalues = order.iter().map(|&k| diag[k]).collect();
    let basis = MatrixBlock::from_fn(n, |i, c| v.get(i, order[c]));
    Ok(HermEig { eigenvalues, basis })
}

/// One complex Jacobi rotation annihilating `m[p][q]`; accumulates into `v`.
fn rotate(m: &mut MatrixBlock, v: &mut MatrixBlock, p: usize, q: usize) {
    let n = m.dim;
    let apq = m.get(p, q);
    let mag = apq.norm();
    if mag == 0.0 {
        return;
    }
    // e^{-iφ} where a_pq = |a_pq| e^{iφ}
    let phase_conj = apq.conj() / mag;
    let app = m.get(p, p).re;
    let aqq = m.get(q, q).re;
    let theta = (aqq - app) / (2.0 * mag);
    let t = if theta >= 0.0 {
        1.0 / (theta + (theta * theta + 1.0).sqrt())
    } else {
        -1.0 / (-theta + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let s_ph = phase_conj * s;
    let c_ph = phase_conj * c;

    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = m.get(k, p);
        let akq = m.get(k, q);
        let new_kp = akp * c - akq * s_ph;
        let new_kq = akp * s + akq * c_ph;
        m.set(k, p, new_kp);
        m.set(p, k, new_kp.conj());
        m.set(k, q, new_kq);
        m.set(q, k, new_kq.conj());
    }
    m.set(p, p, Complex64::new(app - t * mag, 0.0));
    m.set(q, q, Complex64::new(aqq + t * mag, 0.0));
    m.set(p, q, ZERO);
    m.set(q, p, ZERO);

    for k in 0..n {
        let vkp = v.get(k, p);
        let vkq = v.get(k, q);
        v.set(k, p, vkp * c - vkq * s_ph);
        v.set(k, q, vkp * s + vkq * c_ph);
    }
}

/// Eigendecomposition of `x* x` with eigenvalues that are indistinguishable
/// from rounding noise set to exactly zero (all others are clamped to ≥ 0).
fn gram_eig(x: &MatrixBlock) -> Result<HermEig> {
    let g = &x.adjoint() * x;
    let mut eig = herm_eig_block(&g)?;
    let top = eig.eigenvalues.first().copied().unwrap_or(0.0).max(0.0);
    let floor = NOISE_FLOOR * x.dim as f64 * f64::EPSILON * top;
    for l in eig.eigenvalues.iter_mut() {
        if *l <= floor {
            *l = 0.0;
        }
    }
    Ok(eig)
}

/// `|x|^p = (x*x)^{p/2}` for one block, `p > 0`.
///
/// Bitwise-Hermitian blocks are diagonalized directly (`|x|^p = U|Λ|^p U*`),
/// which keeps small singular values accurate; other blocks go through the
/// eigendecomposition of `x*x`.
pub fn abs_power_block(x: &MatrixBlock, p: f64) -> MatrixBlock {
    if x.is_exactly_hermitian() {
        let eig = herm_eig_block(x).expect("Hermitian input");
        eig.map(|l| l.abs().powf(p))
    } else {
        let eig = gram_eig(x).expect("x*x is Hermitian");
        eig.map(|l| if l > 0.0 { l.powf(0.5 * p) } else { 0.0 })
    }
}

/// `tr |x|^p` for one block, computed from the spectrum without forming
/// `|x|^p`. Same spectral path as [`abs_power_block`].
pub fn abs_power_trace_block(x: &MatrixBlock, p: f64) -> f64 {
    if x.is_exactly_hermitian() {
        let eig = herm_eig_block(x).expect("Hermitian input");
        eig.eigenvalues.iter().map(|l| l.abs().powf(p)).sum()
    } else {
        let eig = gram_eig(x).expect("x*x is Hermitian");
        eig.eigenvalues
            .iter()
            .map(|&l| if l > 0.0 { l.powf(0.5 * p) } else { 0.0 })
            .sum()
    }
}

/// Polar decomposition `x = u·h` of one block with `h = |x|` and `u` a
/// partial isometry vanishing on `ker h`.
pub fn polar_block(x: &MatrixBlock) -> (MatrixBlock, MatrixBlock) {
    if x.is_exactly_hermitian() {
        let eig = herm_eig_block(x).expect("Hermitian input");
        let h = eig.map(f64::abs);
        let u = eig.map(|l| {
            if l.abs() <= SINGULAR_CUTOFF {
                0.0
            } else {
                l.signum()
            }
        });
        return (u, h);
    }
    let eig = gram_eig(x).expect("x*x is Hermitian");
    let h = eig.map(|l| if l > 0.0 { l.sqrt() } else { 0.0 });
    let h_pinv = eig.map(|l| {
        let s = if l > 0.0 { l.sqrt() } else { 0.0 };
        if s > SINGULAR_CUTOFF {
            1.0 / s
        } else {
            0.0
        }
    });
    (x * &h_pinv, h)
}

/// A list of matrix blocks; an element of `⊕_j Mat(n_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FiberElement {
    blocks: Vec<MatrixBlock>,
}

impl FiberElement {
    pub fn new(blocks: Vec<MatrixBlock>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::ShapeMismatch("fiber element with no blocks".into()));
        }
        if let Some(b) = blocks.iter().find(|b| !b.is_finite()) {
            return Err(Error::ContractViolation(format!(
                "non-finite entry in block of dim {}",
                b.dim
            )));
        }
        Ok(FiberElement { blocks })
    }

    pub(crate) fn from_blocks_unchecked(blocks: Vec<MatrixBlock>) -> Self {
        FiberElement { blocks }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        FiberElement {
            blocks: shape.iter().map(|&n| MatrixBlock::zeros(n)).collect(),
        }
    }

    pub fn identity(shape: &[usize]) -> Self {
        FiberElement {
            blocks: shape.iter().map(|&n| MatrixBlock::identity(n)).collect(),
        }
    }

    /// The matrix unit `E_ij` placed in block `block`, zero elsewhere.
    pub fn unit(shape: &[usize], block: usize, i: usize, j: usize) -> Self {
        let mut f = Self::zeros(shape);
        f.blocks[block] = MatrixBlock::unit(shape[block], i, j);
        f
    }

    pub fn gaussian<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Self {
        FiberElement {
            blocks: shape.iter().map(|&n| MatrixBlock::gaussian(n, rng)).collect(),
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.dim).collect()
    }

    pub fn blocks(&self) -> &[MatrixBlock] {
        &self.blocks
    }

    pub fn block(&self, j: usize) -> &MatrixBlock {
        &self.blocks[j]
    }

    /// `Σ_j n_j²`, the complex dimension of the fiber algebra.
    pub fn algebra_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.dim * b.dim).sum()
    }

    fn check_shape(&self, other: &FiberElement) -> Result<()> {
        let same = self.blocks.len() == other.blocks.len()
            && self.blocks.iter().zip(&other.blocks).all(|(a, b)| a.dim == b.dim);
        if same {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "fiber shapes {:?} and {:?}",
                self.shape(),
                other.shape()
            )))
        }
    }

    fn zip_with(
        &self,
        other: &FiberElement,
        f: impl Fn(&MatrixBlock, &MatrixBlock) -> MatrixBlock,
    ) -> Result<FiberElement> {
        self.check_shape(other)?;
        Ok(FiberElement {
            blocks: self.blocks.iter().zip(&other.blocks).map(|(a, b)| f(a, b)).collect(),
        })
    }

    fn map_blocks(&self, f: impl Fn(&MatrixBlock) -> MatrixBlock) -> FiberElement {
        FiberElement {
            blocks: self.blocks.iter().map(f).collect(),
        }
    }

    pub fn add(&self, other: &FiberElement) -> Result<FiberElement> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &FiberElement) -> Result<FiberElement> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &FiberElement) -> Result<FiberElement> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, s: Complex64) -> FiberElement {
        self.map_blocks(|b| b.scale(s))
    }

    pub fn scale_real(&self, s: f64) -> FiberElement {
        self.scale(Complex64::new(s, 0.0))
    }

    pub fn adjoint(&self) -> FiberElement {
        self.map_blocks(MatrixBlock::adjoint)
    }

    /// `a + s·b`, the accumulation step used by projections and averages.
    pub fn add_scaled(&self, s: Complex64, b: &FiberElement) -> Result<FiberElement> {
        self.zip_with(b, |x, y| {
            let mut out = x.clone();
            for (o, v) in out.data.iter_mut().zip(&y.data) {
                *o += s * v;
            }
            out
        })
    }

    /// Weighted trace `Σ_j c_j · tr(x_j)`.
    pub fn weighted_trace(&self, weights: &[f64]) -> Complex64 {
        assert_eq!(weights.len(), self.blocks.len(), "trace weight count");
        self.blocks
            .iter()
            .zip(weights)
            .map(|(b, &c)| b.trace() * c)
            .sum()
    }

    /// Trace inner product `⟨self, other⟩ = Σ_j c_j tr(other_j* self_j)`.
    pub fn trace_inner(&self, other: &FiberElement, weights: &[f64]) -> Complex64 {
        assert_eq!(weights.len(), self.blocks.len(), "trace weight count");
        self.blocks
            .iter()
            .zip(&other.blocks)
            .zip(weights)
            .map(|((a, b), &c)| a.frobenius_inner(b) * c)
            .sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks.iter().map(MatrixBlock::max_abs).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &FiberElement) -> Result<f64> {
        self.check_shape(other)?;
        Ok(self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max))
    }

    pub fn hermitian_defect(&self) -> f64 {
        self.blocks
            .iter()
            .map(MatrixBlock::hermitian_defect)
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().all(MatrixBlock::is_finite)
    }
}

/// Eigendecomposition of a Hermitian fiber element, block by block.
pub fn herm_eig(a: &FiberElement) -> Result<FiberEig> {
    Ok(FiberEig {
        blocks: a.blocks.iter().map(herm_eig_block).collect::<Result<_>>()?,
    })
}

/// `|x|^p = (x*x)^{p/2}`, blockwise. Total for `p > 0`; the result is
/// Hermitian positive.
pub fn abs_power(x: &FiberElement, p: f64) -> FiberElement {
    assert!(p > 0.0, "abs_power exponent must be positive, got {p}");
    x.map_blocks(|b| abs_power_block(b, p))
}

/// Polar decomposition `x = u·|x|`, blockwise.
pub fn polar(x: &FiberElement) -> (FiberElement, FiberElement) {
    let (us, hs) = x.blocks.iter().map(polar_block).unzip();
    (
        FiberElement::from_blocks_unchecked(us),
        FiberElement::from_blocks_unchecked(hs),
    )
}

/// Projection onto the eigenspaces of `x` with eigenvalue strictly above
/// `lambda`. Eigenvalues within [`SPECTRAL_CLAMP`] of `lambda` count as equal
/// to it and are excluded.
pub fn spectral_projection(x: &FiberElement, lambda: f64) -> Result<FiberElement> {
    let eig = herm_eig(x)?;
    Ok(FiberElement::from_blocks_unchecked(
        eig.blocks
            .iter()
            .map(|e| spectral_projection_from(e, lambda))
            .collect(),
    ))
}

pub(crate) fn spectral_projection_from(eig: &HermEig, lambda: f64) -> MatrixBlock {
    eig.map(|l| {
        let l = if (l - lambda).abs() <= SPECTRAL_CLAMP { lambda } else { l };
        if l > lambda {
            1.0
        } else {
            0.0
        }
    })
}

/// Largest singular value of `x`, maximized over blocks.
pub fn spectral_norm(x: &FiberElement) -> f64 {
    x.blocks
        .iter()
        .map(|b| {
            let eig = gram_eig(b).expect("x*x is Hermitian");
            eig.eigenvalues[0].max(0.0).sqrt()
        })
        .fold(0.0, f64::max)
}
