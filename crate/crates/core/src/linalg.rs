//! Dense linear-algebra helpers shared by the index modules.
//!
//! Factorisations come from nalgebra; the matrix logarithm, fractional powers
//! and inertia counting are assembled here from those primitives.

use nalgebra::{Complex, DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type CMat = DMatrix<Complex<f64>>;

/// The standard complex structure J0 = [[0, I], [-I, 0]] on R^{2n}.
pub fn j0(n: usize) -> Mat {
    let mut j = Mat::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = 1.0;
        j[(n + i, i)] = -1.0;
    }
    j
}

pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Half the dimension of a square even-sized matrix.
pub fn half_dim(m: &Mat) -> Result<usize> {
    if m.nrows() != m.ncols() || m.nrows() == 0 || m.nrows() % 2 != 0 {
        return Err(Error::Dimension(format!(
            "expected a square 2n x 2n matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m.nrows() / 2)
}

/// Inverse of a symplectic matrix, [[A, B], [C, D]]^{-1} = [[D^T, -B^T], [-C^T, A^T]].
/// Exact up to rounding and far better conditioned than a general inverse.
pub fn symplectic_inverse(m: &Mat) -> Mat {
    let n = m.nrows() / 2;
    let mut out = Mat::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = m[(n + j, n + i)];
            out[(i, n + j)] = -m[(j, n + i)];
            out[(n + i, j)] = -m[(n + j, i)];
            out[(n + i, n + j)] = m[(j, i)];
        }
    }
    out
}

pub fn expm(x: &Mat) -> Mat {
    x.clone().exp()
}

/// Principal square root by the product form of the Denman-Beavers iteration.
pub fn sqrtm(a: &Mat) -> Result<Mat> {
    let n = a.nrows();
    let id = Mat::identity(n, n);
    let mut m = a.clone();
    let mut y = a.clone();
    let mut prev = f64::INFINITY;
    for _ in 0..100 {
        let minv = m
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Decomposition("singular iterate in square root".into()))?;
        y = &y * (&id + &minv) * 0.5;
        m = (&id * 2.0 + &m + &minv) * 0.25;
        let err = (&m - &id).norm();
        // Stop at full accuracy, or once rounding stalls the iteration.
        if err <= 1e-14 * (n as f64) || (err >= prev && err <= 1e-8) {
            return Ok(y);
        }
        prev = err;
    }
    Err(Error::Decomposition("square root iteration did not converge".into()))
}

/// Principal logarithm by inverse scaling and squaring.
///
/// Fails when the matrix has eigenvalues on or too close to the closed
/// negative real axis, where the principal branch does not exist.
pub fn logm(a: &Mat) -> Result<Mat> {
    let n = a.nrows();
    let id = Mat::identity(n, n);
    let mut x = a.clone();
    let mut squarings = 0;
    while (&x - &id).norm() > 0.25 {
        x = sqrtm(&x)?;
        squarings += 1;
        if squarings > 64 {
            return Err(Error::Decomposition("logarithm scaling did not converge".into()));
        }
    }
    // log X = 2 atanh(Z) with Z = (X - I)(X + I)^{-1}, which converges fast for small Z.
    let denom = (&x + &id)
        .try_inverse()
        .ok_or_else(|| Error::Decomposition("singular Cayley denominator in logarithm".into()))?;
    let z = (&x - &id) * denom;
    let z2 = &z * &z;
    let mut term = z.clone();
    let mut sum = z;
    for k in 1..60 {
        term = &term * &z2;
        let add = &term / (2 * k + 1) as f64;
        sum += &add;
        if add.norm() <= 1e-17 * sum.norm().max(1e-300) {
            break;
        }
    }
    Ok(sum * 2.0 * 2f64.powi(squarings))
}

/// Project a matrix onto sp(2n): the closest X with X^T J0 + J0 X = 0.
pub fn project_hamiltonian(x: &Mat) -> Mat {
    let n = x.nrows() / 2;
    let j = j0(n);
    // X = J0 S with S symmetric; take S = sym(-J0 X).
    let s = -(&j * x);
    let s = (&s + s.transpose()) * 0.5;
    j * s
}

/// Fractional power of a symmetric positive definite matrix.
pub fn spd_power(p: &Mat, s: f64) -> Mat {
    let eig = SymmetricEigen::new(p.clone());
    let d = Mat::from_diagonal(&eig.eigenvalues.map(|l| l.max(f64::MIN_POSITIVE).powf(s)));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// Counts of negative, zero and positive eigenvalues of a symmetric matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub struct Inertia {
    pub neg: usize,
    pub zero: usize,
    pub pos: usize,
}

impl Inertia {
    pub fn signature(&self) -> i64 {
        self.pos as i64 - self.neg as i64
    }

    pub fn size(&self) -> usize {
        self.neg + self.zero + self.pos
    }
}

/// Inertia of a dense symmetric matrix; eigenvalues with |lambda| <= `zero_band`
/// count as zero.
pub fn dense_inertia(h: &Mat, zero_band: f64) -> Inertia {
    let eig = SymmetricEigen::new(h.clone());
    let mut out = Inertia::default();
    for &l in eig.eigenvalues.iter() {
        if l.abs() <= zero_band {
            out.zero += 1;
        } else if l > 0.0 {
            out.pos += 1;
        } else {
            out.neg += 1;
        }
    }
    out
}

/// Signature of a symmetric matrix that must be nonsingular; `rel_tol` is
/// relative to the spectral radius.
pub fn nondegenerate_signature(h: &Mat, rel_tol: f64) -> Result<i64> {
    let eig = SymmetricEigen::new(h.clone());
    let scale = eig.eigenvalues.iter().fold(0.0_f64, |a, l| a.max(l.abs()));
    let smallest = eig.eigenvalues.iter().fold(f64::INFINITY, |a, l| a.min(l.abs()));
    if !(smallest > rel_tol * scale.max(1.0)) {
        return Err(Error::SignatureDegenerate(smallest));
    }
    Ok(eig.eigenvalues.iter().map(|l| if *l > 0.0 { 1 } else { -1 }).sum())
}

/// Complex n x n matrix X + iY for a 2n x 2n matrix [[X, Y], [-Y, X]]
/// (symmetrised over the two copies of each block).
pub fn complexify(u: &Mat) -> CMat {
    let n = u.nrows() / 2;
    CMat::from_fn(n, n, |i, j| {
        let re = 0.5 * (u[(i, j)] + u[(n + i, n + j)]);
        let im = 0.5 * (u[(i, n + j)] - u[(n + i, j)]);
        Complex::new(re, im)
    })
}

/// Inverse of [`complexify`].
pub fn realify(w: &CMat) -> Mat {
    let n = w.nrows();
    let mut u = Mat::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = w[(i, j)];
            u[(i, j)] = z.re;
            u[(n + i, n + j)] = z.re;
            u[(i, n + j)] = z.im;
            u[(n + i, j)] = -z.im;
        }
    }
    u
}
