//! Random walks on Sp(2n, R).
//!
//! Two step laws are provided. `ExpGaussian` exponentiates a Gaussian element
//! of sp(2n) with iid N(0, c/N) coordinates in a fixed basis. `Triangular`
//! (n = 1 only) multiplies three elementary factors driven by a noise triple
//! (X, Y, Z) and is the law the Riccati recursion is written for.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::symplectic::{exp_n1, SpAlgebraElement, SymplecticMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    ExpGaussian,
    Triangular,
}

/// How increments are accumulated into the path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProductOrder {
    /// S_j = S_{j-1} X_j, i.e. S_j = X_1 X_2 ... X_j.
    #[default]
    Right,
    /// S_j = X_j S_{j-1}; the increments are then the discrete isotopies
    /// S_j S_{j-1}^{-1} themselves.
    Left,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkParams {
    pub n: usize,
    pub steps: usize,
    pub c: f64,
    pub seed: u64,
    pub scheme: Scheme,
    #[serde(default)]
    pub order: ProductOrder,
}

impl WalkParams {
    pub fn new(n: usize, steps: usize, c: f64, seed: u64) -> Self {
        WalkParams { n, steps, c, seed, scheme: Scheme::ExpGaussian, order: ProductOrder::Right }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_order(mut self, order: ProductOrder) -> Self {
        self.order = order;
        self
    }

    /// Per-coordinate variance c / N of one step.
    pub fn step_variance(&self) -> f64 {
        self.c / self.steps as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParams("n must be at least 1".into()));
        }
        if self.steps == 0 {
            return Err(Error::InvalidParams("N must be at least 1".into()));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidParams(format!("c must be positive and finite, got {}", self.c)));
        }
        if self.scheme == Scheme::Triangular && self.n != 1 {
            return Err(Error::InvalidParams(format!(
                "the triangular scheme is defined for n = 1 only, got n = {}",
                self.n
            )));
        }
        Ok(())
    }
}

/// One draw (X, Y, Z) of the triangular scheme.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseTriple {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl NoiseTriple {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        NoiseTriple { x, y, z }
    }

    pub fn sample<R: Rng + ?Sized>(variance: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, variance.sqrt()).expect("variance is finite and non-negative");
        NoiseTriple { x: normal.sample(rng), y: normal.sample(rng), z: normal.sample(rng) }
    }

    /// [[e^X, e^X Y], [e^X Z, e^{-X} + e^X Y Z]].
    pub fn step_matrix(&self) -> Mat {
        let ex = self.x.exp();
        Mat::from_row_slice(
            2,
            2,
            &[ex, ex * self.y, ex * self.z, (-self.x).exp() + ex * self.y * self.z],
        )
    }
}

/// The sp(2n) basis used by the exp-Gaussian scheme, in order: the A-type
/// elements [[E_ij, 0], [0, -E_ji]], then [[0, S_ij], [0, 0]] and
/// [[0, 0], [S_ij, 0]] for i <= j, where S_ii = E_ii and S_ij = E_ij + E_ji.
/// For n = 1 this is exactly (e1, e2, e3).
pub fn sp_basis(n: usize) -> Vec<Mat> {
    let mut basis = Vec::with_capacity(2 * n * n + n);
    for i in 0..n {
        for j in 0..n {
            let mut e = Mat::zeros(2 * n, 2 * n);
            e[(i, j)] = 1.0;
            e[(n + j, n + i)] = -1.0;
            basis.push(e);
        }
    }
    for upper in [true, false] {
        for i in 0..n {
            for j in i..n {
                let mut e = Mat::zeros(2 * n, 2 * n);
                let (r, c) = if upper { (0, n) } else { (n, 0) };
                e[(r + i, c + j)] = 1.0;
                e[(r + j, c + i)] = 1.0;
                basis.push(e);
            }
        }
    }
    basis
}

/// A Gaussian element of sp(2n) with iid N(0, variance) coordinates in [`sp_basis`].
pub fn sample_algebra_element<R: Rng + ?Sized>(n: usize, variance: f64, rng: &mut R) -> SpAlgebraElement {
    let normal = Normal::new(0.0, variance.sqrt()).expect("variance is finite and non-negative");
    let mut x = Mat::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let a = normal.sample(rng);
            x[(i, j)] = a;
            x[(n + j, n + i)] = -a;
        }
    }
    for offset in [(0, n), (n, 0)] {
        for i in 0..n {
            for j in i..n {
                let a = normal.sample(rng);
                x[(offset.0 + i, offset.1 + j)] = a;
                x[(offset.0 + j, offset.1 + i)] = a;
            }
        }
    }
    SpAlgebraElement::from_matrix_unchecked(x)
}

/// One exp-Gaussian step and the algebra element it exponentiates.
pub fn sample_exp_gaussian_step<R: Rng + ?Sized>(
    n: usize,
    c: f64,
    steps: usize,
    rng: &mut R,
) -> (SymplecticMatrix, SpAlgebraElement) {
    let x = sample_algebra_element(n, c / steps as f64, rng);
    (crate::symplectic::lie_exp(&x), x)
}

pub fn sample_triangular_step<R: Rng + ?Sized>(c: f64, steps: usize, rng: &mut R) -> (SymplecticMatrix, NoiseTriple) {
    let noise = NoiseTriple::sample(c / steps as f64, rng);
    (SymplecticMatrix::from_matrix_unchecked(noise.step_matrix()), noise)
}

/// Principal logarithm of M in SL(2, R), for tr M > -2.
///
/// Uses log M = f(tr/2) (M - tr/2 I) with f(tau) = acos(tau)/sqrt(1 - tau^2)
/// (or its hyperbolic continuation), which is exact because (M - tau I)^2 is
/// a multiple of the identity.
pub fn log_n1(m: &Mat) -> Result<Mat> {
    let tau = 0.5 * (m[(0, 0)] + m[(1, 1)]);
    if tau <= -1.0 {
        return Err(Error::Decomposition(format!("trace {} <= -2 has no real logarithm", 2.0 * tau)));
    }
    let d = tau - 1.0;
    let f = if d.abs() < 1e-6 {
        // Series of acosh(tau)/sqrt(tau^2 - 1) around tau = 1.
        1.0 - d / 3.0 + 2.0 * d * d / 15.0
    } else if tau > 1.0 {
        tau.acosh() / (tau * tau - 1.0).sqrt()
    } else {
        tau.acos() / (1.0 - tau * tau).sqrt()
    };
    let mut x = m.clone() * f;
    x[(0, 0)] -= f * tau;
    x[(1, 1)] -= f * tau;
    Ok(x)
}

/// Coordinates (a1, a2, a3) of [[a1, a2], [a3, -a1]] in sl(2, R).
pub fn algebra_coords_n1(x: &Mat) -> [f64; 3] {
    [0.5 * (x[(0, 0)] - x[(1, 1)]), x[(0, 1)], x[(1, 0)]]
}

/// A discrete path S_0 = I, S_1, ..., S_N with the increments that built it.
#[derive(Debug, Clone)]
pub struct DiscretePath {
    points: Vec<SymplecticMatrix>,
    increments: Vec<SymplecticMatrix>,
    generators: Option<Vec<Mat>>,
    noise: Option<Vec<NoiseTriple>>,
    order: ProductOrder,
    params: Option<WalkParams>,
}

impl DiscretePath {
    /// Accumulates `increments` from the identity in the given order.
    pub fn from_increments(increments: Vec<SymplecticMatrix>, order: ProductOrder) -> Result<Self> {
        let first = increments
            .first()
            .ok_or_else(|| Error::InvalidParams("a path needs at least one step".into()))?;
        let n = first.n();
        if increments.iter().any(|s| s.n() != n) {
            return Err(Error::Dimension("increments of mixed dimension".into()));
        }
        let mut points = Vec::with_capacity(increments.len() + 1);
        points.push(SymplecticMatrix::identity(n));
        for inc in &increments {
            let last = points.last().expect("non-empty");
            points.push(match order {
                ProductOrder::Right => last.compose(inc),
                ProductOrder::Left => inc.compose(last),
            });
        }
        Ok(DiscretePath { points, increments, generators: None, noise: None, order, params: None })
    }

    /// A path through the given points; the first must be the identity.
    /// Increments are recovered as S_{j-1}^{-1} S_j (right order).
    pub fn from_points(points: Vec<SymplecticMatrix>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidParams("a path needs at least two points".into()));
        }
        let n = points[0].n();
        let id = Mat::identity(2 * n, 2 * n);
        if linalg::max_abs(&(points[0].matrix() - &id)) > 1e-12 {
            return Err(Error::InvalidParams("path must start at the identity".into()));
        }
        if points.iter().any(|s| s.n() != n) {
            return Err(Error::Dimension("points of mixed dimension".into()));
        }
        let increments = points.windows(2).map(|w| w[0].inverse().compose(&w[1])).collect();
        Ok(DiscretePath {
            points,
            increments,
            generators: None,
            noise: None,
            order: ProductOrder::Right,
            params: None,
        })
    }

    /// The flow t -> exp(t J0 S) of a symmetric S for t in [0, 1], taken in
    /// `samples` equal steps.
    pub fn sampled_flow(s: &Mat, samples: usize) -> Result<Self> {
        if samples == 0 {
            return Err(Error::InvalidParams("a flow needs at least one sample".into()));
        }
        let step = SpAlgebraElement::from_symmetric(&(s / samples as f64))?;
        let inc = crate::symplectic::lie_exp(&step);
        Self::from_increments(vec![inc; samples], ProductOrder::Right)?.with_generators(vec![step.matrix().clone(); samples])
    }

    /// This path followed by `other` translated to start at our endpoint.
    /// Both paths must accumulate on the right.
    pub fn followed_by(&self, other: &DiscretePath) -> Result<Self> {
        if self.order != ProductOrder::Right || other.order != ProductOrder::Right {
            return Err(Error::InvalidParams("only right-ordered paths can be concatenated".into()));
        }
        if self.n() != other.n() {
            return Err(Error::Dimension("paths of different dimension".into()));
        }
        let increments = self.increments.iter().chain(&other.increments).cloned().collect();
        let joined = Self::from_increments(increments, ProductOrder::Right)?;
        match (&self.generators, &other.generators) {
            (Some(a), Some(b)) => joined.with_generators(a.iter().chain(b).cloned().collect()),
            _ => Ok(joined),
        }
    }

    /// Attaches Lie algebra generators with exp(X_j) = increment j, used to
    /// refine the path between consecutive points.
    pub fn with_generators(mut self, generators: Vec<Mat>) -> Result<Self> {
        if generators.len() != self.increments.len() {
            return Err(Error::Dimension("one generator per increment is required".into()));
        }
        self.generators = Some(generators);
        Ok(self)
    }

    pub fn with_noise(mut self, noise: Vec<NoiseTriple>) -> Result<Self> {
        if noise.len() != self.increments.len() {
            return Err(Error::Dimension("one noise triple per increment is required".into()));
        }
        self.noise = Some(noise);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.points[0].n()
    }

    pub fn steps(&self) -> usize {
        self.increments.len()
    }

    pub fn points(&self) -> &[SymplecticMatrix] {
        &self.points
    }

    pub fn increments(&self) -> &[SymplecticMatrix] {
        &self.increments
    }

    pub fn generators(&self) -> Option<&[Mat]> {
        self.generators.as_deref()
    }

    pub fn noise(&self) -> Option<&[NoiseTriple]> {
        self.noise.as_deref()
    }

    pub fn order(&self) -> ProductOrder {
        self.order
    }

    pub fn params(&self) -> Option<&WalkParams> {
        self.params.as_ref()
    }

    pub fn endpoint(&self) -> &SymplecticMatrix {
        self.points.last().expect("paths are non-empty")
    }

    /// Largest symplectic defect along the path.
    pub fn max_defect(&self) -> f64 {
        self.points.iter().map(|s| s.defect()).fold(0.0, f64::max)
    }

    /// Largest defect relative to the squared size of each point.
    pub fn max_relative_defect(&self) -> f64 {
        self.points
            .iter()
            .map(|s| crate::symplectic::relative_symplectic_defect(s.matrix()).unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max)
    }

    /// Generator of increment j: the stored one or a principal logarithm.
    pub fn generator(&self, j: usize) -> Result<Mat> {
        if let Some(g) = &self.generators {
            return Ok(g[j].clone());
        }
        let inc = self.increments[j].matrix();
        if inc.nrows() == 2 {
            log_n1(inc)
        } else {
            linalg::logm(inc).map(|x| linalg::project_hamiltonian(&x))
        }
    }

    /// The point reached after moving a fraction `t` along increment j.
    pub fn interpolate(&self, j: usize, generator: &Mat, t: f64) -> Mat {
        let step = if generator.nrows() == 2 {
            let e = exp_n1(
                t * 0.5 * (generator[(0, 0)] - generator[(1, 1)]),
                t * generator[(0, 1)],
                t * generator[(1, 0)],
            );
            Mat::from_row_slice(2, 2, &[e[0][0], e[0][1], e[1][0], e[1][1]])
        } else {
            linalg::expm(&(generator * t))
        };
        let prev = self.points[j].matrix();
        match self.order {
            ProductOrder::Right => prev * step,
            ProductOrder::Left => step * prev,
        }
    }
}

pub fn random_walk<R: Rng + ?Sized>(params: &WalkParams, rng: &mut R) -> Result<DiscretePath> {
    params.validate()?;
    let mut path = match params.scheme {
        Scheme::ExpGaussian => {
            let (increments, generators): (Vec<_>, Vec<_>) = (0..params.steps)
                .map(|_| {
                    let (s, x) = sample_exp_gaussian_step(params.n, params.c, params.steps, rng);
                    (s, x.matrix().clone())
                })
                .unzip();
            DiscretePath::from_increments(increments, params.order)?.with_generators(generators)?
        }
        Scheme::Triangular => {
            let (increments, noise): (Vec<_>, Vec<_>) =
                (0..params.steps).map(|_| sample_triangular_step(params.c, params.steps, rng)).unzip();
            DiscretePath::from_increments(increments, params.order)?.with_noise(noise)?
        }
    };
    path.params = Some(*params);
    Ok(path)
}

/// Fraction of triangular steps lying in the image of exp: trace > -2, or -I.
pub fn fraction_in_exp_image<R: Rng + ?Sized>(params: &WalkParams, trials: usize, rng: &mut R) -> Result<f64> {
    params.validate()?;
    if params.n != 1 || params.scheme != Scheme::Triangular {
        return Err(Error::InvalidParams("exp-image fraction is defined for the n = 1 triangular scheme".into()));
    }
    if trials == 0 {
        return Err(Error::InvalidParams("at least one trial is required".into()));
    }
    let hits = (0..trials)
        .filter(|_| {
            let m = NoiseTriple::sample(params.step_variance(), rng).step_matrix();
            let tr = m[(0, 0)] + m[(1, 1)];
            let minus_id = linalg::max_abs(&(&m + Mat::identity(2, 2))) < 1e-12;
            tr > -2.0 || minus_id
        })
        .count();
    Ok(hits as f64 / trials as f64)
}
