//! Discrete action functional, its Hessian, and index by Hessian signature.
//!
//! Each step psi_j of a path is encoded by a quadratic generating function
//! V_j(x, y) = <x, P x> + <y, Q x> + <y, R y>. The discrete action
//! Phi(z) = sum_j <y_j, x_{j+1} - x_j> - V_j(x_{j+1}, y_j) on
//! z = (x_0..x_N, y_0..y_{N-1}) is quadratic, so its Hessian is a constant
//! symmetric matrix. For n = 1 that matrix is tridiagonal after interleaving
//! the variables and its inertia is read off by a Sturm count.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, dense_inertia, max_abs, Inertia, Mat};
use crate::sampling::{DiscretePath, ProductOrder};
use crate::symplectic::{cayley_m, SymplecticMatrix};

/// Coefficients of one generating function
/// V(x, y) = <x, xx x> + <y, yx x> + <y, yy y>, with
/// xx = -1/2 C A^{-1}, yx = I - A^{-1}, yy = 1/2 A^{-1} B.
/// For n = 1 these are the scalars (a, b, d).
#[derive(Debug, Clone, PartialEq)]
pub struct GenCoeffs {
    pub xx: Mat,
    pub yx: Mat,
    pub yy: Mat,
}

impl GenCoeffs {
    pub fn scalar(a: f64, b: f64, d: f64) -> Self {
        GenCoeffs {
            xx: Mat::from_element(1, 1, a),
            yx: Mat::from_element(1, 1, b),
            yy: Mat::from_element(1, 1, d),
        }
    }

    pub fn n(&self) -> usize {
        self.xx.nrows()
    }

    /// (a, b, d) for n = 1.
    pub fn abd(&self) -> (f64, f64, f64) {
        (self.xx[(0, 0)], self.yx[(0, 0)], self.yy[(0, 0)])
    }

    pub fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        let (x, y) = (nalgebra::DVector::from_column_slice(x), nalgebra::DVector::from_column_slice(y));
        x.dot(&(&self.xx * &x)) + y.dot(&(&self.yx * &x)) + y.dot(&(&self.yy * &y))
    }

    /// The step (x1, y0) -> (x0, y1) encoded by V:
    /// x0 = x1 - dV/dy, y1 = y0 - dV/dx, both evaluated at (x1, y0).
    pub fn reconstruct(&self, x1: &[f64], y0: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (x, y) = (nalgebra::DVector::from_column_slice(x1), nalgebra::DVector::from_column_slice(y0));
        let dv_dy = &self.yx * &x + &self.yy * &y * 2.0;
        let dv_dx = &self.xx * &x * 2.0 + self.yx.transpose() * &y;
        ((&x - dv_dy).as_slice().to_vec(), (&y - dv_dx).as_slice().to_vec())
    }
}

/// Generating function of type V for a symplectic matrix, defined when the
/// A-block is invertible.
pub fn generating_coeffs(m: &SymplecticMatrix) -> Result<GenCoeffs> {
    generating_coeffs_at(m, 0)
}

fn generating_coeffs_at(m: &SymplecticMatrix, step: usize) -> Result<GenCoeffs> {
    let mat = m.matrix();
    if m.n() == 1 {
        let (p, q, r) = (mat[(0, 0)], mat[(0, 1)], mat[(1, 0)]);
        if !(p.abs() > 1e-14 * max_abs(mat).max(1.0)) {
            return Err(Error::NoGeneratingFunction { step, det: p });
        }
        return Ok(GenCoeffs::scalar(-r / (2.0 * p), 1.0 - 1.0 / p, q / (2.0 * p)));
    }
    let (a, b, c, _) = m.blocks();
    let n = m.n();
    let det = a.determinant();
    let a_inv = a
        .clone()
        .try_inverse()
        .filter(|inv| max_abs(inv) * max_abs(&a).max(1.0) < 1e14)
        .ok_or(Error::NoGeneratingFunction { step, det })?;
    let sym = |x: Mat| (&x + x.transpose()) * 0.5;
    Ok(GenCoeffs {
        xx: sym(&c * &a_inv * -0.5),
        yx: Mat::identity(n, n) - &a_inv,
        yy: sym(&a_inv * b * 0.5),
    })
}

/// psi_j = S_{j+1} S_j^{-1}, j = 0..N-1.
///
/// For left-ordered paths these are the increments themselves and are
/// returned as stored, which avoids forming S_{j+1} S_j^{-1} from two large
/// matrices.
pub fn discrete_isotopies(path: &DiscretePath) -> Vec<SymplecticMatrix> {
    match path.order() {
        ProductOrder::Left => path.increments().to_vec(),
        ProductOrder::Right => path.points().windows(2).map(|w| w[1].compose(&w[0].inverse())).collect(),
    }
}

/// Phi(z) for z = (x_0..x_N, y_0..y_{N-1}) in blocks of n.
pub fn discrete_action(z: &[f64], coeffs: &[GenCoeffs]) -> Result<f64> {
    let steps = coeffs.len();
    let n = coeffs.first().map(GenCoeffs::n).unwrap_or(1);
    if z.len() != (2 * steps + 1) * n {
        return Err(Error::Dimension(format!(
            "z has length {}, expected {} for N = {steps}, n = {n}",
            z.len(),
            (2 * steps + 1) * n
        )));
    }
    let x = |j: usize| &z[j * n..(j + 1) * n];
    let y = |j: usize| &z[(steps + 1 + j) * n..(steps + 2 + j) * n];
    let mut total = 0.0;
    for (j, v) in coeffs.iter().enumerate() {
        let kinetic: f64 = y(j).iter().zip(x(j + 1).iter().zip(x(j))).map(|(y, (x1, x0))| y * (x1 - x0)).sum();
        total += kinetic - v.value(x(j + 1), y(j));
    }
    Ok(total)
}

/// Which diagonal the Hessian is assembled with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagonalScaling {
    /// The true second derivatives of Phi: -2a and -2d on the diagonal.
    #[default]
    Exact,
    /// -a and -d on the diagonal, the form the Mobius recursion and its
    /// diffusion limit are usually written in.
    Halved,
}

impl DiagonalScaling {
    pub(crate) fn factor(self) -> f64 {
        match self {
            DiagonalScaling::Exact => 2.0,
            DiagonalScaling::Halved => 1.0,
        }
    }
}

/// The dense Hessian of [`discrete_action`], of size (2N + 1) n.
pub fn hessian_dense(coeffs: &[GenCoeffs]) -> Result<Mat> {
    let steps = coeffs.len();
    let n = coeffs.first().map(GenCoeffs::n).ok_or_else(|| Error::InvalidParams("no steps".into()))?;
    let size = (2 * steps + 1) * n;
    let mut h = Mat::zeros(size, size);
    let xo = |j: usize| j * n;
    let yo = |j: usize| (steps + 1 + j) * n;
    for (j, v) in coeffs.iter().enumerate() {
        for r in 0..n {
            for c in 0..n {
                h[(xo(j + 1) + r, xo(j + 1) + c)] -= 2.0 * v.xx[(r, c)];
                h[(yo(j) + r, yo(j) + c)] -= 2.0 * v.yy[(r, c)];
                let cross = if r == c { 1.0 } else { 0.0 } - v.yx[(r, c)];
                h[(yo(j) + r, xo(j + 1) + c)] += cross;
                h[(xo(j + 1) + c, yo(j) + r)] += cross;
            }
            h[(yo(j) + r, xo(j) + r)] -= 1.0;
            h[(xo(j) + r, yo(j) + r)] -= 1.0;
        }
    }
    Ok(h)
}

/// The n = 1 Hessian as blocks [[A, B], [B^T, D]].
#[derive(Debug, Clone, PartialEq)]
pub struct HessianBlocks {
    /// Diagonal of A (length N + 1); the x_0 entry is always zero.
    pub a_diag: Vec<f64>,
    /// Diagonal of D (length N).
    pub d_diag: Vec<f64>,
    /// B[x_{j+1}, y_j] = 1 - b_j (length N); B[x_j, y_j] = -1 implicitly.
    pub b_sub: Vec<f64>,
}

impl HessianBlocks {
    pub fn from_coeffs(coeffs: &[GenCoeffs], scaling: DiagonalScaling) -> Result<Self> {
        if coeffs.iter().any(|c| c.n() != 1) {
            return Err(Error::Dimension("Hessian blocks are assembled for n = 1".into()));
        }
        let f = scaling.factor();
        let mut a_diag = vec![0.0];
        let mut d_diag = Vec::with_capacity(coeffs.len());
        let mut b_sub = Vec::with_capacity(coeffs.len());
        for c in coeffs {
            let (a, b, d) = c.abd();
            a_diag.push(-f * a);
            d_diag.push(-f * d);
            b_sub.push(1.0 - b);
        }
        Ok(HessianBlocks { a_diag, d_diag, b_sub })
    }

    /// Blocks straight from a noise sequence: the triangular step with noise
    /// (X, Y, Z) has (a, b, d) = (-Z/2, 1 - e^{-X}, Y/2).
    pub fn from_noise(noise: &[crate::sampling::NoiseTriple], scaling: DiagonalScaling) -> Self {
        let f = scaling.factor() * 0.5;
        HessianBlocks {
            a_diag: std::iter::once(0.0).chain(noise.iter().map(|t| f * t.z)).collect(),
            d_diag: noise.iter().map(|t| -f * t.y).collect(),
            b_sub: noise.iter().map(|t| (-t.x).exp()).collect(),
        }
    }

    pub fn steps(&self) -> usize {
        self.d_diag.len()
    }

    pub fn to_dense(&self) -> Mat {
        let steps = self.steps();
        let mut h = Mat::zeros(2 * steps + 1, 2 * steps + 1);
        for (j, &a) in self.a_diag.iter().enumerate() {
            h[(j, j)] = a;
        }
        for j in 0..steps {
            let y = steps + 1 + j;
            h[(y, y)] = self.d_diag[j];
            h[(j, y)] = -1.0;
            h[(y, j)] = -1.0;
            h[(j + 1, y)] = self.b_sub[j];
            h[(y, j + 1)] = self.b_sub[j];
        }
        h
    }
}

/// A general tridiagonal matrix: `upper[i]` = T[i][i+1], `lower[i]` = T[i+1][i].
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
}

impl Tridiagonal {
    pub fn size(&self) -> usize {
        self.diag.len()
    }

    pub fn to_dense(&self) -> Mat {
        let m = self.size();
        let mut t = Mat::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = self.diag[i];
        }
        for i in 0..m.saturating_sub(1) {
            t[(i, i + 1)] = self.upper[i];
            t[(i + 1, i)] = self.lower[i];
        }
        t
    }
}

/// The Hessian reordered as (x_0, y_0, x_1, y_1, ..., x_N, y_N) with an
/// extra variable y_N. The appended row is zero, so the spectrum is that of
/// the Hessian plus one zero eigenvalue.
pub fn interleave_tridiagonal(blocks: &HessianBlocks) -> Tridiagonal {
    let steps = blocks.steps();
    let m = 2 * steps + 2;
    let mut diag = vec![0.0; m];
    let mut upper = vec![0.0; m - 1];
    let mut lower = vec![0.0; m - 1];
    for j in 0..steps {
        diag[2 * j + 1] = blocks.d_diag[j];
        diag[2 * j + 2] = blocks.a_diag[j + 1];
        upper[2 * j] = -1.0;
        lower[2 * j] = -1.0;
        upper[2 * j + 1] = blocks.b_sub[j];
        lower[2 * j + 1] = blocks.b_sub[j];
    }
    upper[2 * steps] = -1.0;
    Tridiagonal { diag, upper, lower }
}

/// The diagonal similarity that turns each (y_j, x_{j+1}) pair from
/// (1 - b_j, 1 - b_j) into (-(1 - b_j)^2, -1), leaving the (x_j, y_j) pairs
/// at (-1, -1). Only the transformed entries are computed; the diagonal
/// scaling itself would overflow for long paths.
pub fn k_conjugate(t: &Tridiagonal) -> Tridiagonal {
    let mut out = t.clone();
    for i in (1..t.size().saturating_sub(1)).step_by(2) {
        let w = t.upper[i];
        if w != 0.0 {
            out.upper[i] = -w * w;
            out.lower[i] = t.lower[i] * (-1.0 / w);
        }
    }
    out
}

/// A symmetric tridiagonal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub fn size(&self) -> usize {
        self.diag.len()
    }

    pub fn to_dense(&self) -> Mat {
        let m = self.size();
        let mut t = Mat::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = self.diag[i];
        }
        for (i, &e) in self.off.iter().enumerate() {
            t[(i, i + 1)] = e;
            t[(i + 1, i)] = e;
        }
        t
    }

    /// Gershgorin bound on the spectral radius.
    pub fn norm_bound(&self) -> f64 {
        (0..self.size())
            .map(|i| {
                let left = if i > 0 { self.off[i - 1].abs() } else { 0.0 };
                let right = self.off.get(i).map_or(0.0, |e| e.abs());
                self.diag[i].abs() + left + right
            })
            .fold(0.0, f64::max)
    }
}

/// Symmetric tridiagonal with the same spectrum: each off-diagonal pair
/// (u, l) becomes sign(u) sqrt(u l). Pairs with a zero entry decouple the
/// matrix (it is block triangular there) and become 0.
pub fn conjugate_and_symmetrize(t: &Tridiagonal) -> Result<SymTridiag> {
    let mut off = Vec::with_capacity(t.upper.len());
    for (i, (&u, &l)) in t.upper.iter().zip(&t.lower).enumerate() {
        let product = u * l;
        if product > 0.0 {
            off.push(u.signum() * product.sqrt());
        } else if product == 0.0 {
            off.push(0.0);
        } else {
            return Err(Error::Symmetrization { index: i, product });
        }
    }
    Ok(SymTridiag { diag: t.diag.clone(), off })
}

const PIVOT_EPS: f64 = 1e-300;

/// Inertia of T - shift I from the LDL^T pivots
/// d_1 = a_1 - shift, d_i = a_i - shift - e_{i-1}^2 / d_{i-1}.
///
/// A zero pivot followed by a nonzero coupling is replaced by a tiny positive
/// value; a zero pivot at a decoupling point is a genuine zero eigenvalue.
pub fn signature_sturm(t: &SymTridiag, shift: f64) -> Inertia {
    let m = t.size();
    let mut out = Inertia::default();
    let mut prev = 1.0;
    for i in 0..m {
        let coupling = if i > 0 && t.off[i - 1] != 0.0 { t.off[i - 1] * t.off[i - 1] / prev } else { 0.0 };
        let mut d = t.diag[i] - shift - coupling;
        if d == 0.0 {
            let next_coupled = t.off.get(i).is_some_and(|&e| e != 0.0);
            if next_coupled {
                d = PIVOT_EPS;
                out.pos += 1;
            } else {
                out.zero += 1;
            }
        } else if d > 0.0 {
            out.pos += 1;
        } else if d < 0.0 {
            out.neg += 1;
        } else {
            // NaN pivots only arise from non-finite input.
            out.zero += 1;
        }
        prev = d;
    }
    out
}

/// Result of the Hessian route to the index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HessianIndex {
    /// The Conley-Zehnder index.
    pub index: i64,
    /// Signature of d^2 Phi (always of the parity of n).
    pub signature: i64,
    /// Signature of the x-block of M(S_N).
    pub endpoint_correction: i64,
}

/// Relative width of the band around zero in which Hessian eigenvalues are
/// treated as degenerate.
const HESSIAN_BAND: f64 = 1e-10;

/// Signature of the symmetrised interleaved Hessian, excluding the zero
/// eigenvalue introduced by interleaving.
pub fn tridiagonal_signature(blocks: &HessianBlocks) -> Result<i64> {
    let sym = conjugate_and_symmetrize(&interleave_tridiagonal(blocks))?;
    let band = HESSIAN_BAND * sym.norm_bound().max(1.0);
    let below_hi = signature_sturm(&sym, band);
    let below_lo = signature_sturm(&sym, -band);
    let in_band = (below_hi.neg + below_hi.zero) - below_lo.neg;
    if in_band != 1 {
        return Err(Error::DegenerateHessian { band, count: in_band.saturating_sub(1) });
    }
    let at_zero = signature_sturm(&sym, 0.0);
    Ok(at_zero.signature())
}

/// Signature of d^2 Phi for a path: Sturm count for n = 1, dense inertia otherwise.
pub fn hessian_signature(path: &DiscretePath) -> Result<i64> {
    let coeffs = path_coeffs(path)?;
    if path.n() == 1 {
        let blocks = HessianBlocks::from_coeffs(&coeffs, DiagonalScaling::Exact)?;
        return tridiagonal_signature(&blocks);
    }
    let h = hessian_dense(&coeffs)?;
    let eig = nalgebra::SymmetricEigen::new(h.clone());
    let scale = eig.eigenvalues.iter().fold(0.0_f64, |a, l| a.max(l.abs()));
    let band = HESSIAN_BAND * scale.max(1.0);
    let inertia = dense_inertia(&h, band);
    if inertia.zero > 0 {
        return Err(Error::DegenerateHessian { band, count: inertia.zero });
    }
    Ok(inertia.signature())
}

fn path_coeffs(path: &DiscretePath) -> Result<Vec<GenCoeffs>> {
    discrete_isotopies(path)
        .iter()
        .enumerate()
        .map(|(j, psi)| generating_coeffs_at(psi, j))
        .collect()
}

/// Signature of the x-block of M(S) for the endpoint S. For n = 1 this is
/// the sign of M_11 = C / (tr S - 2).
pub fn endpoint_correction(end: &crate::linalg::Mat) -> Result<i64> {
    let n = linalg::half_dim(end)?;
    if n == 1 {
        let value = end[(1, 0)] * (end[(0, 0)] + end[(1, 1)] - 2.0);
        if value == 0.0 || !value.is_finite() {
            return Err(Error::DegenerateHessian { band: 0.0, count: 1 });
        }
        return Ok(value.signum() as i64);
    }
    let m = cayley_m(end, 0.0)?;
    let block = m.view((0, 0), (n, n)).into_owned();
    linalg::nondegenerate_signature(&block, 1e-10).map_err(|_| Error::DegenerateHessian { band: 0.0, count: 1 })
}

/// Conley-Zehnder index from the Hessian of the discrete action.
///
/// Critical points of Phi are trajectories with y_0 = y_N = 0, which is a
/// Lagrangian boundary condition rather than a periodic one; the signature
/// relates to the Conley-Zehnder index through the endpoint:
/// signature = -2 mu_CZ + signature(M(S_N)_xx).
pub fn cz_index_hessian(path: &DiscretePath) -> Result<HessianIndex> {
    let signature = hessian_signature(path)?;
    let endpoint_correction = endpoint_correction(path.endpoint().matrix())?;
    let twice = endpoint_correction - signature;
    if twice % 2 != 0 {
        return Err(Error::Consistency(format!(
            "signature {signature} and endpoint term {endpoint_correction} have different parity"
        )));
    }
    Ok(HessianIndex { index: twice / 2, signature, endpoint_correction })
}
