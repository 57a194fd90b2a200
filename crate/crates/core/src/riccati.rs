//! Eigenvalue counting for the n = 1 Hessian by a lifted Mobius recursion.
//!
//! For the triangular scheme the interleaved Hessian is tridiagonal, and an
//! eigenvector (x_0, y_0, x_1, ...) with eigenvalue L satisfies a first-order
//! recursion for the ratios r_j = y_j / x_j:
//!
//! ```text
//! r_0 = -L,    r_{j+1} = (alpha_j - L) + beta_j^2 / (L - delta_j + 1/r_j),
//! ```
//!
//! with the boundary condition r_N = 0. Mapping ratios to the circle by
//! x -> 2 atan(x) and lifting to the real line turns "how many eigenvalues
//! exceed L" into "how many multiples of 2 pi the lifted angle has passed".

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::action::{endpoint_correction, DiagonalScaling};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::sampling::NoiseTriple;

/// A point of the universal cover of the circle.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
pub struct LiftedAngle(pub f64);

impl LiftedAngle {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// The Mobius map u -> (alpha u + beta) / (gamma u + delta) on the extended line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MobiusCoeffs {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl MobiusCoeffs {
    pub fn new(alpha: f64, beta: f64, gamma: f64, delta: f64) -> Result<Self> {
        let f = MobiusCoeffs { alpha, beta, gamma, delta };
        let det = f.det();
        if det == 0.0 || !det.is_finite() {
            return Err(Error::DegenerateMobius(det));
        }
        Ok(f)
    }

    pub fn identity() -> Self {
        MobiusCoeffs { alpha: 1.0, beta: 0.0, gamma: 0.0, delta: 1.0 }
    }

    pub fn det(&self) -> f64 {
        self.alpha * self.delta - self.beta * self.gamma
    }

    /// Image of `u`, with infinity allowed on both sides.
    pub fn apply(&self, u: f64) -> f64 {
        let (p, q) = if u.is_infinite() { (1.0, 0.0) } else { (u, 1.0) };
        let (p, q) = self.apply_projective(p, q);
        if q == 0.0 {
            f64::INFINITY
        } else {
            p / q
        }
    }

    /// The action on homogeneous coordinates u = p / q.
    pub fn apply_projective(&self, p: f64, q: f64) -> (f64, f64) {
        (self.alpha * p + self.beta * q, self.gamma * p + self.delta * q)
    }

    /// f'(u) = det / (gamma u + delta)^2.
    pub fn derivative(&self, u: f64) -> f64 {
        let den = self.gamma * u + self.delta;
        self.det() / (den * den)
    }

    /// g after self.
    pub fn then(&self, g: &MobiusCoeffs) -> MobiusCoeffs {
        MobiusCoeffs {
            alpha: g.alpha * self.alpha + g.beta * self.gamma,
            beta: g.alpha * self.beta + g.beta * self.delta,
            gamma: g.gamma * self.alpha + g.delta * self.gamma,
            delta: g.gamma * self.beta + g.delta * self.delta,
        }
    }
}

/// The per-step map in the coefficient form
/// r -> ((2e^{-2X} - (2L + Y)(2L - Z)/2) r - (2L - Z)) / ((2L + Y) r + 2).
pub fn mobius_step_coeffs(l: f64, x: f64, y: f64, z: f64) -> Result<MobiusCoeffs> {
    if !(l >= 0.0) {
        return Err(Error::InvalidParams(format!("L must be non-negative, got {l}")));
    }
    StepMap::new(l, &NoiseTriple::new(x, y, z), DiagonalScaling::Halved).coeffs()
}

/// One step r -> shift_out + scale / (shift_in + 1/r) of the ratio recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMap {
    pub shift_in: f64,
    pub scale: f64,
    pub shift_out: f64,
}

impl StepMap {
    /// The step at spectral parameter `l` for one noise triple. With the
    /// exact scaling the Hessian diagonal carries (Z, -Y), with the halved
    /// one (Z/2, -Y/2); the coupling is e^{-X} either way.
    pub fn new(l: f64, noise: &NoiseTriple, scaling: DiagonalScaling) -> Self {
        let f = 0.5 * scaling.factor();
        StepMap { shift_in: l + f * noise.y, scale: (-2.0 * noise.x).exp(), shift_out: f * noise.z - l }
    }

    pub fn coeffs(&self) -> Result<MobiusCoeffs> {
        // Normalised so that the L = 0, zero-noise step is 2 I.
        MobiusCoeffs::new(
            2.0 * (self.shift_out * self.shift_in + self.scale),
            2.0 * self.shift_out,
            2.0 * self.shift_in,
            2.0,
        )
    }

    pub fn apply(&self, r: f64) -> f64 {
        self.shift_out + self.scale / (self.shift_in + 1.0 / r)
    }

    /// The lift of the step on the angle line.
    ///
    /// The step factors as r -> -1/r, a translation by -shift_in, r -> -1/r,
    /// a positive scaling and a translation by shift_out. Each translation
    /// and scaling is lifted by continuity from the identity; the two
    /// half-turns are lifted as -pi and +pi, so the zero-noise L = 0 step
    /// lifts to the identity and the whole lift is continuous in L.
    pub fn lifted(&self, t: f64) -> f64 {
        let t = translate_lift(t - PI, -self.shift_in);
        let t = scale_lift(t + PI, self.scale);
        translate_lift(t, self.shift_out)
    }
}

/// Lift of r -> r + a at the angle t = 2 atan(r).
fn translate_lift(t: f64, a: f64) -> f64 {
    let (p, q) = (0.5 * t).sin_cos();
    t + 2.0 * (a * q * q).atan2(1.0 + a * p * q)
}

/// Lift of r -> s r (s > 0) at the angle t = 2 atan(r).
fn scale_lift(t: f64, s: f64) -> f64 {
    let (p, q) = (0.5 * t).sin_cos();
    t + 2.0 * ((s - 1.0) * p * q).atan2(s * p * p + q * q)
}

/// The Cayley-type map x -> arg((i - x) / (i + x)) = 2 atan(x), with infinity
/// sent to pi.
pub fn cayley_circle(x: f64) -> f64 {
    if x.is_infinite() {
        PI
    } else {
        2.0 * x.atan()
    }
}

/// Inverse of [`cayley_circle`]: tan(theta / 2).
pub fn cayley_circle_inverse(theta: f64) -> f64 {
    (0.5 * theta).tan()
}

/// Lift of a general Mobius map with positive determinant.
///
/// Acting on homogeneous vectors (q, p), the coefficient matrix factors as
/// R(phi) P with P symmetric positive definite and phi in (-pi, pi]. The lift
/// follows P^s and then the rotation, so it is pinned to the identity at
/// f = id and commutes with t -> t + 2 pi.
pub fn lifted_mobius_apply(f: &MobiusCoeffs, t: LiftedAngle) -> Result<LiftedAngle> {
    let det = f.det();
    if !(det > 0.0) {
        return Err(Error::DegenerateMobius(det));
    }
    // In coordinates (q, p): q' = delta q + gamma p, p' = beta q + alpha p.
    let (a, b, c, d) = (f.delta, f.gamma, f.beta, f.alpha);
    let phi = (c - b).atan2(a + d);
    let (s, co) = phi.sin_cos();
    // P = R(-phi) N.
    let (p11, p12, p21, p22) = (co * a + s * c, co * b + s * d, -s * a + co * c, -s * b + co * d);
    let (sp, cq) = (0.5 * t.0).sin_cos();
    let (nq, np) = (p11 * cq + p12 * sp, p21 * cq + p22 * sp);
    let turn = (cq * np - sp * nq).atan2(cq * nq + sp * np);
    Ok(LiftedAngle(t.0 + 2.0 * (turn + phi)))
}

/// The lifted angle F(k, L) after `k` steps started from the lift of
/// 2 atan(-L) in (-pi, 0].
pub fn f_evolution(noise: &[NoiseTriple], l: f64, k: usize, scaling: DiagonalScaling) -> Result<LiftedAngle> {
    if k > noise.len() {
        return Err(Error::InvalidParams(format!("k = {k} exceeds the {} available noise steps", noise.len())));
    }
    if l.is_nan() {
        return Err(Error::InvalidParams("L must be a number".into()));
    }
    let mut t = -cayley_circle(l);
    for step in &noise[..k] {
        t = StepMap::new(l, step, scaling).lifted(t);
    }
    Ok(LiftedAngle(t))
}

/// Relative distance from a multiple of 2 pi at which a count is ambiguous.
const COUNT_TOL: f64 = 1e-9;

fn turns_below(f: LiftedAngle) -> Result<i64> {
    let x = -f.0 / (2.0 * PI);
    if (x - x.round()).abs() < COUNT_TOL {
        return Err(Error::DegenerateCount(f.0));
    }
    Ok(x.floor() as i64)
}

/// -2 floor(-F / 2 pi) - 1, rejecting F at a multiple of 2 pi.
pub fn signature_from_f(f: LiftedAngle) -> Result<i64> {
    Ok(-2 * turns_below(f)? - 1)
}

/// The same formula without the boundary check.
pub fn signature_formula(f: LiftedAngle) -> i64 {
    -2 * (-f.0 / (2.0 * PI)).floor() as i64 - 1
}

/// Number of eigenvalues above `l` of the (2N + 1)-dimensional Hessian
/// built from `noise` with the given diagonal scaling.
pub fn eigenvalues_above(noise: &[NoiseTriple], l: f64, scaling: DiagonalScaling) -> Result<i64> {
    let f = f_evolution(noise, l, noise.len(), scaling)?;
    Ok(noise.len() as i64 - turns_below(f)?)
}

/// Signature of the Hessian from F(N, 0).
pub fn riccati_signature(noise: &[NoiseTriple], scaling: DiagonalScaling) -> Result<i64> {
    signature_from_f(f_evolution(noise, 0.0, noise.len(), scaling)?)
}

/// The endpoint X_N ... X_1 of the left-ordered triangular walk driven by `noise`.
pub fn noise_endpoint(noise: &[NoiseTriple]) -> Mat {
    noise.iter().fold(Mat::identity(2, 2), |acc, t| t.step_matrix() * acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RiccatiIndex {
    pub index: i64,
    pub signature: i64,
    pub endpoint_correction: i64,
}

/// Conley-Zehnder index of the left-ordered triangular walk driven by
/// `noise`, from the exact-Hessian signature and the endpoint term.
pub fn index_via_riccati(noise: &[NoiseTriple]) -> Result<RiccatiIndex> {
    if noise.is_empty() {
        return Err(Error::InvalidParams("empty noise sequence".into()));
    }
    let signature = riccati_signature(noise, DiagonalScaling::Exact)?;
    let correction = endpoint_correction(&noise_endpoint(noise))?;
    let twice = correction - signature;
    if twice % 2 != 0 {
        return Err(Error::Consistency(format!("signature {signature} and endpoint term {correction} differ in parity")));
    }
    Ok(RiccatiIndex { index: twice / 2, signature, endpoint_correction: correction })
}

/// Whether F(k, L) strictly decreases along an increasing grid of L values.
///
/// Every F(k, L) is evaluated independently through a lift that is
/// continuous in L, so no grid refinement is needed.
pub fn monotonicity_check(noise: &[NoiseTriple], k: usize, grid: &[f64], scaling: DiagonalScaling) -> Result<bool> {
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParams("the L grid must be strictly increasing".into()));
    }
    let values = grid
        .iter()
        .map(|&l| f_evolution(noise, l, k, scaling).map(|f| f.0))
        .collect::<Result<Vec<_>>>()?;
    Ok(values.windows(2).all(|w| w[1] < w[0]))
}

/// Drift and variance coefficients of the diffusion limit
/// d theta = drift c sin(2 theta) dt + sqrt(c (var_const - var_cos cos 2 theta)) dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitCoefficients {
    pub drift: f64,
    pub var_const: f64,
    pub var_cos: f64,
}

impl LimitCoefficients {
    /// The halved-diagonal recursion: drift 7c/8 sin 2t, variance (c/4)(11 - 7 cos 2t).
    pub const HALVED: LimitCoefficients = LimitCoefficients { drift: 7.0 / 8.0, var_const: 11.0 / 4.0, var_cos: 7.0 / 4.0 };
    /// The exact-Hessian recursion: drift c/2 sin 2t, variance c (5 - cos 2t).
    pub const EXACT: LimitCoefficients = LimitCoefficients { drift: 0.5, var_const: 5.0, var_cos: 1.0 };

    pub fn for_scaling(scaling: DiagonalScaling) -> Self {
        match scaling {
            DiagonalScaling::Exact => Self::EXACT,
            DiagonalScaling::Halved => Self::HALVED,
        }
    }

    pub fn drift_at(&self, t: f64, c: f64) -> f64 {
        self.drift * c * (2.0 * t).sin()
    }

    pub fn variance_at(&self, t: f64, c: f64) -> f64 {
        c * (self.var_const - self.var_cos * (2.0 * t).cos())
    }
}

/// Monte Carlo estimate of the one-step increment f(t) - t and its square.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneStepMoments {
    pub drift: f64,
    pub drift_se: f64,
    pub mean_square: f64,
    pub mean_square_se: f64,
    pub trials: usize,
}

/// One-step moments of the L = 0 lifted step at angle `t` with noise
/// variance c / N.
pub fn one_step_moments<R: Rng + ?Sized>(
    t: f64,
    c: f64,
    steps: usize,
    trials: usize,
    scaling: DiagonalScaling,
    rng: &mut R,
) -> Result<OneStepMoments> {
    if trials == 0 || steps == 0 || !(c >= 0.0) {
        return Err(Error::InvalidParams("need trials >= 1, N >= 1 and c >= 0".into()));
    }
    if c == 0.0 {
        return Ok(OneStepMoments { drift: 0.0, drift_se: 0.0, mean_square: 0.0, mean_square_se: 0.0, trials });
    }
    let variance = c / steps as f64;
    let (mut s1, mut s2, mut s4) = (0.0, 0.0, 0.0);
    for _ in 0..trials {
        let noise = NoiseTriple::sample(variance, rng);
        let d = StepMap::new(0.0, &noise, scaling).lifted(t) - t;
        let d2 = d * d;
        s1 += d;
        s2 += d2;
        s4 += d2 * d2;
    }
    let m = trials as f64;
    let (drift, mean_square) = (s1 / m, s2 / m);
    let se = |mean: f64, second: f64| ((second / m - mean * mean).max(0.0) / m).sqrt();
    Ok(OneStepMoments {
        drift,
        drift_se: se(drift, s2),
        mean_square,
        mean_square_se: se(mean_square, s4),
        trials,
    })
}
