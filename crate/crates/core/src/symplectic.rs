//! The symplectic group Sp(2n, R), its Lie algebra, the polar/rho map and
//! the Cayley-type map M used by the product formula.

use std::fmt;

use nalgebra::{Complex, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, complexify, half_dim, j0, max_abs, Mat};

/// Numerical tolerances used across the library.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Max-norm bound on M^T J0 M - J0.
    pub symplectic: f64,
    /// |det(M - I)| at or below this counts as Sp0.
    pub degeneracy: f64,
    /// Accepted distance (in turns) of a winding from the nearest integer.
    pub integer: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { symplectic: 1e-9, degeneracy: 1e-9, integer: 1e-6 }
    }
}

/// Max-norm of M^T J0 M - J0.
pub fn symplectic_defect(m: &Mat) -> Result<f64> {
    let n = half_dim(m)?;
    let j = j0(n);
    Ok(max_abs(&(m.transpose() * &j * m - &j)))
}

pub fn is_symplectic(m: &Mat, tol: f64) -> Result<bool> {
    Ok(symplectic_defect(m)? <= tol)
}

/// The defect divided by max(1, |M|_max^2), the scale at which rounding
/// errors of a product of symplectic matrices appear.
pub fn relative_symplectic_defect(m: &Mat) -> Result<f64> {
    Ok(symplectic_defect(m)? / max_abs(m).powi(2).max(1.0))
}

/// A 2n x 2n matrix known to be symplectic up to rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticMatrix {
    m: Mat,
}

impl SymplecticMatrix {
    /// Validates M^T J0 M = J0 to `tol` in the max norm.
    pub fn new(m: Mat, tol: f64) -> Result<Self> {
        let defect = symplectic_defect(&m)?;
        if defect > tol {
            return Err(Error::NotSymplectic { defect, tol });
        }
        Ok(SymplecticMatrix { m })
    }

    /// Wraps a matrix that is symplectic by construction (products, exponentials).
    pub fn from_matrix_unchecked(m: Mat) -> Self {
        debug_assert!(m.nrows() == m.ncols() && m.nrows() % 2 == 0);
        SymplecticMatrix { m }
    }

    pub fn identity(n: usize) -> Self {
        SymplecticMatrix { m: Mat::identity(2 * n, 2 * n) }
    }

    pub fn n(&self) -> usize {
        self.m.nrows() / 2
    }

    pub fn matrix(&self) -> &Mat {
        &self.m
    }

    pub fn into_matrix(self) -> Mat {
        self.m
    }

    pub fn defect(&self) -> f64 {
        symplectic_defect(&self.m).unwrap_or(f64::INFINITY)
    }

    pub fn compose(&self, rhs: &SymplecticMatrix) -> SymplecticMatrix {
        SymplecticMatrix { m: &self.m * &rhs.m }
    }

    pub fn inverse(&self) -> SymplecticMatrix {
        SymplecticMatrix { m: linalg::symplectic_inverse(&self.m) }
    }

    /// The n x n blocks (A, B, C, D) of [[A, B], [C, D]].
    pub fn blocks(&self) -> (Mat, Mat, Mat, Mat) {
        let n = self.n();
        (
            self.m.view((0, 0), (n, n)).into_owned(),
            self.m.view((0, n), (n, n)).into_owned(),
            self.m.view((n, 0), (n, n)).into_owned(),
            self.m.view((n, n), (n, n)).into_owned(),
        )
    }
}

/// An element X of sp(2n): X^T J0 + J0 X = 0, equivalently X = J0 S with S symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SpAlgebraElement {
    x: Mat,
}

impl SpAlgebraElement {
    pub fn new(x: Mat) -> Result<Self> {
        let n = half_dim(&x)?;
        let j = j0(n);
        let defect = max_abs(&(x.transpose() * &j + &j * &x));
        if defect > 1e-9 * max_abs(&x).max(1.0) {
            return Err(Error::NotHamiltonian { defect });
        }
        Ok(SpAlgebraElement { x })
    }

    pub fn from_matrix_unchecked(x: Mat) -> Self {
        SpAlgebraElement { x }
    }

    /// The n = 1 element a1*e1 + a2*e2 + a3*e3 with e1 = diag(1, -1),
    /// e2 = [[0, 1], [0, 0]], e3 = [[0, 0], [1, 0]].
    pub fn from_coords_n1(a1: f64, a2: f64, a3: f64) -> Self {
        SpAlgebraElement { x: Mat::from_row_slice(2, 2, &[a1, a2, a3, -a1]) }
    }

    /// X = J0 S for a symmetric S; `S` is symmetrised first.
    pub fn from_symmetric(s: &Mat) -> Result<Self> {
        let n = half_dim(s)?;
        let sym = (s + s.transpose()) * 0.5;
        Ok(SpAlgebraElement { x: j0(n) * sym })
    }

    pub fn n(&self) -> usize {
        self.x.nrows() / 2
    }

    pub fn matrix(&self) -> &Mat {
        &self.x
    }

    pub fn scaled(&self, t: f64) -> SpAlgebraElement {
        SpAlgebraElement { x: &self.x * t }
    }
}

/// Closed-form exponential of [[a1, a2], [a3, -a1]].
///
/// X^2 = q I with q = a1^2 + a2 a3, so exp X = C(q) I + S(q) X where C and S
/// are cosh/sinh (q > 0) or cos/sin (q < 0) evaluated at sqrt|q|.
pub fn exp_n1(a1: f64, a2: f64, a3: f64) -> [[f64; 2]; 2] {
    let q = a1 * a1 + a2 * a3;
    let (c, s) = if q.abs() < 1e-8 {
        (1.0 + q / 2.0 + q * q / 24.0, 1.0 + q / 6.0 + q * q / 120.0)
    } else if q > 0.0 {
        let r = q.sqrt();
        (r.cosh(), r.sinh() / r)
    } else {
        let r = (-q).sqrt();
        (r.cos(), r.sin() / r)
    };
    [[c + s * a1, s * a2], [s * a3, c - s * a1]]
}

pub fn lie_exp(x: &SpAlgebraElement) -> SymplecticMatrix {
    let m = if x.n() == 1 {
        let e = exp_n1(x.x[(0, 0)], x.x[(0, 1)], x.x[(1, 0)]);
        Mat::from_row_slice(2, 2, &[e[0][0], e[0][1], e[1][0], e[1][1]])
    } else {
        linalg::expm(&x.x)
    };
    SymplecticMatrix { m }
}

/// The rotation angle of the polar factor of a 2x2 matrix with positive
/// determinant, in the convention R(phi) = [[cos, sin], [-sin, cos]].
fn polar_angle_2x2(m: &Mat) -> f64 {
    (m[(0, 1)] - m[(1, 0)]).atan2(m[(0, 0)] + m[(1, 1)])
}

/// The orthogonal factor U = W V^T of the polar decomposition M = U P.
/// For symplectic M this U lies in Sp(2n) ∩ O(2n) ≅ U(n).
pub fn polar_unitary_part(m: &Mat) -> Result<Mat> {
    half_dim(m)?;
    if m.nrows() == 2 {
        let phi = polar_angle_2x2(m);
        let (s, c) = phi.sin_cos();
        return Ok(Mat::from_row_slice(2, 2, &[c, s, -s, c]));
    }
    let svd = SVD::try_new(m.clone(), true, true, 1e-15, 500)
        .ok_or_else(|| Error::Decomposition("SVD did not converge".into()))?;
    let u = svd.u.ok_or_else(|| Error::Decomposition("missing U".into()))?;
    let v_t = svd.v_t.ok_or_else(|| Error::Decomposition("missing V^T".into()))?;
    Ok(u * v_t)
}

/// The positive factor P = V Σ V^T of M = U P, together with U.
pub fn polar_decomposition(m: &Mat) -> Result<(Mat, Mat)> {
    let svd = SVD::try_new(m.clone(), true, true, 1e-15, 500)
        .ok_or_else(|| Error::Decomposition("SVD did not converge".into()))?;
    let u = svd.u.ok_or_else(|| Error::Decomposition("missing U".into()))?;
    let v_t = svd.v_t.ok_or_else(|| Error::Decomposition("missing V^T".into()))?;
    let p = v_t.transpose() * Mat::from_diagonal(&svd.singular_values) * &v_t;
    Ok((u * &v_t, p))
}

/// A complex number of modulus one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitCircleValue(Complex<f64>);

impl UnitCircleValue {
    /// Normalises `z`; fails for zero or non-finite input.
    pub fn new(z: Complex<f64>) -> Result<Self> {
        let r = z.norm();
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::Decomposition(format!("cannot normalise {z}")));
        }
        Ok(UnitCircleValue(z / r))
    }

    pub fn from_angle(theta: f64) -> Self {
        UnitCircleValue(Complex::from_polar(1.0, theta))
    }

    pub fn value(&self) -> Complex<f64> {
        self.0
    }

    pub fn angle(&self) -> f64 {
        self.0.arg()
    }

    pub fn squared(&self) -> UnitCircleValue {
        UnitCircleValue(self.0 * self.0)
    }

    /// Signed angle from `self` to `next`, in (-pi, pi].
    pub fn angle_to(&self, next: &UnitCircleValue) -> f64 {
        (next.0 * self.0.conj()).arg()
    }
}

/// rho(M) = det_C(X + iY) where [[X, Y], [-Y, X]] is the polar factor of M.
///
/// Evaluated without the polar decomposition: the complex-linear part
/// (M - J0 M J0)/2 of M = U exp(S) is U cosh(S), and cosh(S) is Hermitian
/// positive definite, so det_C of the linear part has the phase of det_C(U).
/// This stays accurate for matrices far too ill-conditioned for an SVD.
pub fn rho(m: &Mat) -> Result<UnitCircleValue> {
    half_dim(m)?;
    if m.nrows() == 2 {
        return Ok(UnitCircleValue::from_angle(polar_angle_2x2(m)));
    }
    UnitCircleValue::new(complexify(m).determinant())
}

/// rho through an explicit polar decomposition; the definition [`rho`] is checked against.
pub fn rho_polar(m: &Mat) -> Result<UnitCircleValue> {
    let u = polar_unitary_part(m)?;
    UnitCircleValue::new(complexify(&u).determinant())
}

/// Which side of the singular hypersurface Sp0 = {det(M - I) = 0} M lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ComponentLabel {
    SpPlus,
    SpMinus,
    SpZero,
}

impl fmt::Display for ComponentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ComponentLabel::SpPlus => "Sp+",
            ComponentLabel::SpMinus => "Sp-",
            ComponentLabel::SpZero => "Sp0",
        })
    }
}

pub fn det_minus_identity(m: &Mat) -> f64 {
    if m.nrows() == 2 {
        // det(M - I) = det M - tr M + 1 = 2 - tr M for det M = 1.
        let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
        return det - m[(0, 0)] - m[(1, 1)] + 1.0;
    }
    let id = Mat::identity(m.nrows(), m.ncols());
    (m - id).determinant()
}

pub fn classify_endpoint(m: &Mat, degeneracy_tol: f64) -> ComponentLabel {
    let d = det_minus_identity(m);
    if !(d.abs() > degeneracy_tol) {
        ComponentLabel::SpZero
    } else if d > 0.0 {
        ComponentLabel::SpPlus
    } else {
        ComponentLabel::SpMinus
    }
}

/// M(X) = 1/2 J0 (X + I)(X - I)^{-1}, symmetric for symplectic X not in Sp0.
pub fn cayley_m(x: &Mat, degeneracy_tol: f64) -> Result<Mat> {
    let n = half_dim(x)?;
    let d = det_minus_identity(x);
    if !(d.abs() > degeneracy_tol) {
        return Err(Error::DegenerateEndpoint { value: d });
    }
    if n == 1 {
        let (a, b, c, dd) = (x[(0, 0)], x[(0, 1)], x[(1, 0)], x[(1, 1)]);
        let k = 1.0 / (2.0 * (2.0 - a - dd));
        let off = (a - dd) * k;
        return Ok(Mat::from_row_slice(2, 2, &[-2.0 * c * k, off, off, 2.0 * b * k]));
    }
    let id = Mat::identity(2 * n, 2 * n);
    let inv = (x - &id)
        .try_inverse()
        .ok_or(Error::DegenerateEndpoint { value: d })?;
    let m = j0(n) * (x + &id) * &inv * 0.5;
    // Rounding in the inverse scales with the condition of X - I.
    let asym = max_abs(&(&m - m.transpose()));
    let scale = max_abs(&m).max(1.0) * (max_abs(x) * max_abs(&inv)).max(1.0);
    if asym > 1e-8 * scale {
        return Err(Error::Asymmetric(asym));
    }
    Ok((&m + m.transpose()) * 0.5)
}

/// The reference endpoints W+ = -I in Sp+ and W- = diag(2, -1, .., -1, 1/2, -1, .., -1) in Sp-.
pub fn canonical_endpoints(n: usize) -> (SymplecticMatrix, SymplecticMatrix) {
    assert!(n >= 1, "dimension must be positive");
    let plus = -Mat::identity(2 * n, 2 * n);
    let mut minus = plus.clone();
    minus[(0, 0)] = 2.0;
    minus[(n, n)] = 0.5;
    (SymplecticMatrix { m: plus }, SymplecticMatrix { m: minus })
}
