//! Conley-Zehnder index by winding of rho^2.
//!
//! A path from the identity to a nondegenerate endpoint is extended inside
//! the endpoint's component of Sp(2n) \ Sp0 to the reference matrix W+ or W-;
//! the index is the degree of rho^2 along the concatenation. Long paths can be
//! cut into segments whose indices are recombined with the product formula.

use std::f64::consts::PI;

use nalgebra::{linalg::Schur, Complex, SymmetricEigen, SVD};

use crate::error::{Error, Result};
use crate::linalg::{self, complexify, j0, max_abs, realify, symplectic_inverse, CMat, Mat};
use crate::sampling::DiscretePath;
use crate::symplectic::{
    cayley_m, canonical_endpoints, classify_endpoint, det_minus_identity, polar_decomposition, rho, ComponentLabel,
    SymplecticMatrix, Tolerances, UnitCircleValue,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindingOptions {
    /// Consecutive rho^2 samples further apart than this are subdivided.
    pub max_gap: f64,
    /// Initial number of samples per extension stage.
    pub stage_samples: usize,
    /// How many times a sampling step may be halved before giving up.
    pub max_halvings: u32,
    pub tol: Tolerances,
}

impl Default for WindingOptions {
    fn default() -> Self {
        WindingOptions { max_gap: PI / 4.0, stage_samples: 64, max_halvings: 40, tol: Tolerances::default() }
    }
}

/// Winding numbers are integers or half-integers; this stores twice the value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HalfInteger(pub i64);

impl HalfInteger {
    pub fn value(self) -> f64 {
        self.0 as f64 / 2.0
    }

    pub fn as_integer(self) -> Option<i64> {
        (self.0 % 2 == 0).then_some(self.0 / 2)
    }
}

/// Values of a unit-circle valued function sampled along a path.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CircleSequence(pub Vec<UnitCircleValue>);

impl CircleSequence {
    /// Total continuous angle, requiring every gap to be below pi/2.
    pub fn accumulated_angle(&self) -> Result<f64> {
        let mut total = 0.0;
        for (i, w) in self.0.windows(2).enumerate() {
            let gap = w[0].angle_to(&w[1]);
            if gap.abs() >= PI / 2.0 {
                return Err(Error::RefinementNeeded { index: i, gap });
            }
            total += gap;
        }
        Ok(total)
    }
}

/// Degree of the sampled curve: accumulated angle / 2pi, rounded to the
/// nearest half-integer.
pub fn winding_degree(seq: &CircleSequence) -> Result<HalfInteger> {
    let turns = seq.accumulated_angle()? / (2.0 * PI);
    Ok(HalfInteger((2.0 * turns).round() as i64))
}

pub fn rho_squared(m: &Mat) -> Result<UnitCircleValue> {
    Ok(rho(m)?.squared())
}

/// Continuous angle of a circle-valued function fed one sample at a time.
struct AngleTracker {
    last: UnitCircleValue,
    total: f64,
}

impl AngleTracker {
    fn new(start: UnitCircleValue) -> Self {
        AngleTracker { last: start, total: 0.0 }
    }

    fn gap_to(&self, z: &UnitCircleValue) -> f64 {
        self.last.angle_to(z)
    }

    fn advance(&mut self, z: UnitCircleValue, gap: f64) {
        self.last = z;
        self.total += gap;
    }
}

/// Samples `f` on [0, 1] (excluding 0) with step control on the rho^2 gap.
/// When `component` is given every sample must stay in it.
fn trace_curve(
    f: &dyn Fn(f64) -> Mat,
    tracker: &mut AngleTracker,
    component: Option<ComponentLabel>,
    opts: &WindingOptions,
    samples: Option<&mut Vec<Mat>>,
    circle: fn(&Mat) -> Result<UnitCircleValue>,
) -> Result<()> {
    let h0 = 1.0 / opts.stage_samples.max(1) as f64;
    let h_min = h0 * 0.5f64.powi(opts.max_halvings as i32);
    let mut s = 0.0;
    let mut h = h0;
    let mut store = samples;
    while s < 1.0 {
        let s1 = if s + h >= 1.0 - 1e-12 { 1.0 } else { s + h };
        let m = f(s1);
        let z = circle(&m)?;
        let gap = tracker.gap_to(&z);
        if gap.abs() > opts.max_gap {
            if h > h_min {
                h *= 0.5;
                continue;
            }
            return Err(Error::RefinementNeeded { index: 0, gap });
        }
        if let Some(comp) = component {
            let found = classify_endpoint(&m, opts.tol.degeneracy);
            if found != comp {
                return Err(Error::Extension(format!(
                    "sample at s = {s1:.6} left {comp} (det(M - I) = {:.3e})",
                    det_minus_identity(&m)
                )));
            }
        }
        tracker.advance(z, gap);
        if let Some(v) = store.as_deref_mut() {
            v.push(m);
        }
        s = s1;
        h = (2.0 * h).min(h0);
    }
    Ok(())
}

/// Feeds the points of `path` into `tracker`, subdividing any step whose
/// gap exceeds the tolerance along exp(t X_j).
fn trace_path(
    path: &DiscretePath,
    tracker: &mut AngleTracker,
    opts: &WindingOptions,
    circle: fn(&Mat) -> Result<UnitCircleValue>,
) -> Result<()> {
    for j in 0..path.steps() {
        let next = path.points()[j + 1].matrix();
        let z = circle(next)?;
        let gap = tracker.gap_to(&z);
        if gap.abs() <= opts.max_gap {
            tracker.advance(z, gap);
            continue;
        }
        let generator = path.generator(j).map_err(|_| Error::RefinementNeeded { index: j, gap })?;
        let f = |t: f64| path.interpolate(j, &generator, t);
        trace_curve(&f, tracker, None, opts, None, circle).map_err(|e| match e {
            Error::RefinementNeeded { gap, .. } => Error::RefinementNeeded { index: j, gap },
            other => other,
        })?;
        // Land exactly on the stored point.
        let gap = tracker.gap_to(&z);
        tracker.advance(z, gap);
    }
    Ok(())
}

/// Maslov index deg(rho) of a path; an integer for loops.
pub fn maslov_index(path: &DiscretePath, opts: &WindingOptions) -> Result<HalfInteger> {
    let mut tracker = AngleTracker::new(rho(path.points()[0].matrix())?);
    trace_path(path, &mut tracker, opts, rho)?;
    Ok(HalfInteger((tracker.total / PI).round() as i64))
}

type Stage<'a> = Box<dyn Fn(f64) -> Mat + 'a>;

/// A path inside one component of Sp(2n) \ Sp0 from an endpoint to W+ or W-.
#[derive(Debug, Clone)]
pub struct Extension {
    /// Samples after the endpoint, ending at the reference matrix.
    pub samples: Vec<SymplecticMatrix>,
    pub target: ComponentLabel,
    /// Continuous change of arg rho^2 along the extension.
    pub angle: f64,
}

/// A path together with its extension to W+ or W-.
#[derive(Debug, Clone)]
pub struct ExtendedPath<'a> {
    pub original: &'a DiscretePath,
    pub extension: Vec<SymplecticMatrix>,
    pub target: ComponentLabel,
}

pub fn extend_path<'a>(path: &'a DiscretePath, opts: &WindingOptions) -> Result<ExtendedPath<'a>> {
    let ext = extend_endpoint(path.endpoint().matrix(), opts)?;
    Ok(ExtendedPath { original: path, extension: ext.samples, target: ext.target })
}

/// Builds and samples an extension from `m` to the reference endpoint of its component.
pub fn extend_endpoint(m: &Mat, opts: &WindingOptions) -> Result<Extension> {
    let (target, stages) = extension_stages(m, opts)?;
    let mut tracker = AngleTracker::new(rho_squared(m)?);
    let mut samples = Vec::new();
    for stage in &stages {
        trace_curve(stage.as_ref(), &mut tracker, Some(target), opts, Some(&mut samples), rho_squared)?;
    }
    Ok(Extension {
        samples: samples.into_iter().map(SymplecticMatrix::from_matrix_unchecked).collect(),
        target,
        angle: tracker.total,
    })
}

fn reference_endpoint(n: usize, target: ComponentLabel) -> Mat {
    let (plus, minus) = canonical_endpoints(n);
    match target {
        ComponentLabel::SpMinus => minus.into_matrix(),
        _ => plus.into_matrix(),
    }
}

/// Splits the route from `m` to W+/W- into continuous stages.
fn extension_stages<'a>(m: &'a Mat, opts: &WindingOptions) -> Result<(ComponentLabel, Vec<Stage<'a>>)> {
    let n = linalg::half_dim(m)?;
    let target = classify_endpoint(m, opts.tol.degeneracy);
    if target == ComponentLabel::SpZero {
        return Err(Error::Admissibility { value: det_minus_identity(m) });
    }
    let reference = reference_endpoint(n, target);
    if max_abs(&(m - &reference)) <= 1e-12 {
        return Ok((target, Vec::new()));
    }

    let pairs = real_eigenvalue_pairs(m)?;
    if pairs.is_empty() {
        let log = negative_log(m)?;
        return Ok((target, vec![Box::new(move |s: f64| -linalg::expm(&(&log * (1.0 - s))))]));
    }

    let basis = symplectic_eigenbasis(m, &pairs)?;
    let k = pairs.len();
    let positive = pairs.iter().filter(|&&l| l > 0.0).count();
    if (positive % 2 == 1) != (target == ComponentLabel::SpMinus) {
        return Err(Error::Extension(format!("{positive} positive real pairs contradict component {target}")));
    }
    let conj = symplectic_inverse(&basis) * m * &basis;
    let complement = if k < n { Some(extract_complement(&conj, k)?) } else { None };
    let complement_log = complement.as_ref().map(negative_log).transpose()?;

    let mut stages: Vec<Stage<'a>> = Vec::new();

    // Conjugate M into block form along G_s = U^s P^s.
    let (u, p) = polar_decomposition(&basis)?;
    let unitary = UnitaryPower::new(&u)?;
    stages.push(Box::new(move |s: f64| {
        let g = unitary.power(s) * linalg::spd_power(&p, s);
        symplectic_inverse(&g) * m * g
    }));

    // Positive pairs to (2, 1/2), negative pairs and the complement to -I.
    let lambdas = pairs.clone();
    stages.push(Box::new(move |s: f64| {
        let mut out = Mat::zeros(2 * n, 2 * n);
        for (i, &l) in lambdas.iter().enumerate() {
            let v = if l > 0.0 { l.powf(1.0 - s) * 2f64.powf(s) } else { -(-l).powf(1.0 - s) };
            out[(i, i)] = v;
            out[(n + i, n + i)] = 1.0 / v;
        }
        if let Some(log) = &complement_log {
            let block = -linalg::expm(&(log * (1.0 - s)));
            embed_complement(&mut out, &block, k);
        }
        out
    }));

    // Rotate pairs of hyperbolic planes through a quadruplet to (-2, -1/2) and
    // shrink those to -1. An odd leftover pair stays at index 0 as (2, 1/2).
    let first_merged = positive % 2;
    if positive - first_merged >= 2 {
        let fixed = {
            let mut base = -Mat::identity(2 * n, 2 * n);
            if first_merged == 1 {
                base[(0, 0)] = 2.0;
                base[(n, n)] = 0.5;
            }
            base
        };
        let merged: Vec<(usize, usize)> = (first_merged..positive).step_by(2).map(|a| (a, a + 1)).collect();
        let fixed_rot = fixed.clone();
        let merged_rot = merged.clone();
        stages.push(Box::new(move |s: f64| {
            let mut out = fixed_rot.clone();
            let (sn, cs) = (PI * s).sin_cos();
            for &(a, b) in &merged_rot {
                for (off, scale) in [(0, 2.0), (n, 0.5)] {
                    out[(off + a, off + a)] = scale * cs;
                    out[(off + a, off + b)] = -scale * sn;
                    out[(off + b, off + a)] = scale * sn;
                    out[(off + b, off + b)] = scale * cs;
                }
            }
            out
        }));
        stages.push(Box::new(move |s: f64| {
            let mut out = fixed.clone();
            let v = 2f64.powf(1.0 - s);
            for &(a, b) in &merged {
                for i in [a, b] {
                    out[(i, i)] = -v;
                    out[(n + i, n + i)] = -1.0 / v;
                }
            }
            out
        }));
    }
    Ok((target, stages))
}

/// Real eigenvalues of modulus greater than one, each with a matching
/// reciprocal partner: positive ones first (decreasing), then negative ones.
/// Negative eigenvalues next to -1 are left to the logarithm.
fn real_eigenvalue_pairs(m: &Mat) -> Result<Vec<f64>> {
    let eig = m.clone().complex_eigenvalues();
    let mut outer = Vec::new();
    let mut inner = [0usize; 2];
    for z in eig.iter() {
        if z.im.abs() > 1e-7 * z.norm().max(1.0) {
            continue;
        }
        let l = z.re;
        if (l - 1.0).abs() <= 1e-9 {
            return Err(Error::Extension(format!("eigenvalue {l} is too close to 1")));
        }
        if l < 0.0 && (l + 1.0).abs() <= 1e-3 {
            continue;
        }
        if l.abs() > 1.0 {
            outer.push(l);
        } else {
            inner[(l < 0.0) as usize] += 1;
        }
    }
    // The sign of a tiny partner eigenvalue can be lost to rounding, so pairs
    // are matched by count and take their sign from the large member.
    if outer.len() != inner[0] + inner[1] {
        return Err(Error::Extension("unpaired real eigenvalues".into()));
    }
    outer.sort_by(|a, b| {
        (b.signum(), b.abs()).partial_cmp(&(a.signum(), a.abs())).expect("finite eigenvalues")
    });
    for w in outer.windows(2) {
        if (w[0] - w[1]).abs() <= 1e-7 * w[0].abs() {
            return Err(Error::Extension("repeated real eigenvalue".into()));
        }
    }
    Ok(outer)
}

/// log(-M) projected onto sp(2n); requires M to have no positive real eigenvalues.
fn negative_log(m: &Mat) -> Result<Mat> {
    let neg = -m;
    let log = if m.nrows() == 2 { crate::sampling::log_n1(&neg)? } else { linalg::logm(&neg)? };
    Ok(linalg::project_hamiltonian(&log))
}

/// Unit vector spanning the (numerical) kernel of M - lambda I.
fn eigenvector(m: &Mat, lambda: f64) -> Result<nalgebra::DVector<f64>> {
    let shifted = m - Mat::identity(m.nrows(), m.ncols()) * lambda;
    let svd = SVD::try_new(shifted, false, true, 1e-15, 500)
        .ok_or_else(|| Error::Extension("SVD failed while computing an eigenvector".into()))?;
    let v_t = svd.v_t.expect("requested V^T");
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).expect("finite singular values"))
        .expect("non-empty");
    Ok(v_t.row(idx).transpose().into_owned())
}

fn omega(u: &nalgebra::DVector<f64>, v: &nalgebra::DVector<f64>, j: &Mat) -> f64 {
    (u.transpose() * j * v)[(0, 0)]
}

/// A symplectic basis G whose first k (q_i, p_i) pairs are eigenvectors for
/// (lambda_i, 1/lambda_i) and whose remaining pairs span their symplectic complement.
fn symplectic_eigenbasis(m: &Mat, xs: &[f64]) -> Result<Mat> {
    let n = m.nrows() / 2;
    let k = xs.len();
    let j = j0(n);
    let mut qs = Vec::with_capacity(n);
    let mut ps = Vec::with_capacity(n);
    for &x in xs {
        let u = eigenvector(m, x)?;
        // The small eigenvalue is resolved far better as a large one of M^{-1}.
        let v = eigenvector(&symplectic_inverse(m), x)?;
        let w = omega(&u, &v, &j);
        if w.abs() < 1e-10 {
            return Err(Error::Extension("eigenvectors are symplectically orthogonal".into()));
        }
        let scale = w.abs().sqrt();
        qs.push(u / scale);
        ps.push(v * (w.signum() / scale));
    }
    if k < n {
        // Kernel of w -> (omega(e, w))_e over the eigenvectors found so far.
        let mut constraints = Mat::zeros(2 * k, 2 * n);
        for (row, e) in qs.iter().chain(ps.iter()).enumerate() {
            let r = e.transpose() * &j;
            constraints.row_mut(row).copy_from(&r);
        }
        let gram = constraints.transpose() * constraints;
        let eig = SymmetricEigen::new(gram);
        let mut order: Vec<usize> = (0..2 * n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).expect("finite"));
        let mut pool: Vec<nalgebra::DVector<f64>> =
            order[..2 * (n - k)].iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();
        // Symplectic Gram-Schmidt on the complement.
        while !pool.is_empty() {
            let e = pool.remove(0);
            let (idx, w) = pool
                .iter()
                .enumerate()
                .map(|(i, f)| (i, omega(&e, f, &j)))
                .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).expect("finite"))
                .ok_or_else(|| Error::Extension("odd-dimensional complement".into()))?;
            if w.abs() < 1e-10 {
                return Err(Error::Extension("degenerate complement".into()));
            }
            let f = pool.remove(idx) / w;
            for g in pool.iter_mut() {
                let a = omega(g, &f, &j);
                let b = omega(g, &e, &j);
                *g = &*g - &e * a + &f * b;
            }
            let scale = e.norm();
            qs.push(e / scale);
            ps.push(f * scale);
        }
    }
    let mut g = Mat::zeros(2 * n, 2 * n);
    for i in 0..n {
        g.column_mut(i).copy_from(&qs[i]);
        g.column_mut(n + i).copy_from(&ps[i]);
    }
    let defect = max_abs(&(g.transpose() * &j * &g - &j));
    if defect > 1e-7 * max_abs(&g).powi(2).max(1.0) {
        return Err(Error::Extension(format!("eigenbasis is not symplectic (defect {defect:.2e})")));
    }
    Ok(g)
}

/// The complement block of a block-diagonalised matrix, after checking that
/// it decouples from the hyperbolic pairs.
fn extract_complement(conj: &Mat, k: usize) -> Result<Mat> {
    let n = conj.nrows() / 2;
    let m = n - k;
    let idx: Vec<usize> = (k..n).chain(n + k..2 * n).collect();
    let block = Mat::from_fn(2 * m, 2 * m, |r, c| conj[(idx[r], idx[c])]);
    let mut coupling: f64 = 0.0;
    for r in 0..2 * n {
        for c in 0..2 * n {
            let in_r = idx.contains(&r);
            let in_c = idx.contains(&c);
            if in_r != in_c {
                coupling = coupling.max(conj[(r, c)].abs());
            }
        }
    }
    if coupling > 1e-6 * max_abs(conj).max(1.0) {
        return Err(Error::Extension(format!("complement does not decouple (coupling {coupling:.2e})")));
    }
    Ok(block)
}

fn embed_complement(out: &mut Mat, block: &Mat, k: usize) {
    let n = out.nrows() / 2;
    let m = n - k;
    let idx: Vec<usize> = (k..n).chain(n + k..2 * n).collect();
    for r in 0..2 * m {
        for c in 0..2 * m {
            out[(idx[r], idx[c])] = block[(r, c)];
        }
    }
}

/// Fractional powers U^s of a matrix in Sp(2n) ∩ O(2n), via the unitary
/// diagonalisation of its complex form.
struct UnitaryPower {
    q: CMat,
    phases: Vec<f64>,
}

impl UnitaryPower {
    fn new(u: &Mat) -> Result<Self> {
        let w = complexify(u);
        let schur = Schur::try_new(w, 1e-15, 1000)
            .ok_or_else(|| Error::Extension("complex Schur decomposition failed".into()))?;
        let (q, t) = schur.unpack();
        let phases = (0..t.nrows()).map(|i| t[(i, i)].arg()).collect();
        Ok(UnitaryPower { q, phases })
    }

    fn power(&self, s: f64) -> Mat {
        let d = CMat::from_diagonal(&nalgebra::DVector::from_iterator(
            self.phases.len(),
            self.phases.iter().map(|&a| Complex::from_polar(1.0, s * a)),
        ));
        realify(&(&self.q * d * self.q.adjoint()))
    }
}

/// Conley-Zehnder index of an admissible path by winding of rho^2.
pub fn cz_index_winding(path: &DiscretePath, opts: &WindingOptions) -> Result<i64> {
    let end = path.endpoint().matrix();
    let label = classify_endpoint(end, opts.tol.degeneracy);
    if label == ComponentLabel::SpZero {
        return Err(Error::Admissibility { value: det_minus_identity(end) });
    }
    let start = rho_squared(path.points()[0].matrix())?;
    if (start.value() - Complex::new(1.0, 0.0)).norm() > 1e-8 {
        return Err(Error::Consistency("rho^2 of the starting point is not 1".into()));
    }
    let mut tracker = AngleTracker::new(start);
    trace_path(path, &mut tracker, opts, rho_squared)?;
    let ext = extend_endpoint(end, opts)?;
    let total = tracker.total + ext.angle;
    let finish = match ext.samples.last() {
        Some(s) => rho_squared(s.matrix())?,
        None => rho_squared(end)?,
    };
    if (finish.value() - Complex::new(1.0, 0.0)).norm() > 1e-8 {
        return Err(Error::Consistency(format!("rho^2 at the reference endpoint is {}", finish.value())));
    }
    let turns = total / (2.0 * PI);
    let index = turns.round();
    if (turns - index).abs() > opts.tol.integer {
        return Err(Error::Consistency(format!("winding {turns} is not an integer")));
    }
    Ok(index as i64)
}

/// Index of a concatenated product path from the indices and endpoints of
/// its two factors.
pub fn cz_product_combine(
    idx1: i64,
    idx2: i64,
    end1: &Mat,
    end2: &Mat,
    tol: &Tolerances,
) -> Result<i64> {
    let sum = cayley_m(end1, tol.degeneracy)? + cayley_m(end2, tol.degeneracy)?;
    let sig = linalg::nondegenerate_signature(&sum, 1e-10)?;
    if sig % 2 != 0 {
        return Err(Error::Consistency(format!("odd signature {sig} of a nonsingular even-sized matrix")));
    }
    Ok(idx1 + idx2 - sig / 2)
}

/// Result of a segmented index computation.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentedIndex {
    pub index: i64,
    /// Segment boundaries 0 = b_0 < b_1 < ... < b_m = N.
    pub boundaries: Vec<usize>,
    /// Largest symplectic defect over the segment products.
    pub max_defect: f64,
}

/// The sub-path made of increments a..b, restarted at the identity.
fn segment(path: &DiscretePath, a: usize, b: usize) -> Result<DiscretePath> {
    let incs = path.increments()[a..b].to_vec();
    let seg = DiscretePath::from_increments(incs, path.order())?;
    match path.generators() {
        Some(g) => seg.with_generators(g[a..b].to_vec()),
        None => Ok(seg),
    }
}

/// Segment endpoints closer than this to Sp0 (in |det(R - I)|) are avoided.
const SEGMENT_DEGENERACY: f64 = 1e-6;

/// Partial products whose Cayley image exceeds this are treated as nearly
/// degenerate and the segment boundary is moved.
const CAYLEY_BOUND: f64 = 1e8;

/// Cayley image of a product from the images of its factors:
/// M(E R) = A - (A + J/2)(A + B)^{-1}(A - J/2) with A = M(E), B = M(R).
///
/// This never forms E R, which matters because long walks reach norms far
/// beyond what double precision products can represent faithfully.
pub fn cayley_compose(a: &Mat, b: &Mat) -> Result<Mat> {
    let n = a.nrows() / 2;
    let half_j = j0(n) * 0.5;
    let sum = a + b;
    let lu = sum.clone().lu();
    let rhs = a - &half_j;
    let solved = lu.solve(&rhs).ok_or(Error::SignatureDegenerate(0.0))?;
    let c = a - (a + &half_j) * solved;
    Ok((&c + c.transpose()) * 0.5)
}

/// Index of a long path computed segment by segment and recombined with the
/// product formula. Segment boundaries move by up to half a segment when a
/// segment endpoint or a partial product is too close to degenerate.
///
/// Only the increments of `path` are used; the accumulated product is carried
/// through its Cayley image, so the method stays accurate when the path
/// itself grows too large to multiply out.
pub fn cz_index_segmented(path: &DiscretePath, segment_len: usize, opts: &WindingOptions) -> Result<SegmentedIndex> {
    if segment_len == 0 {
        return Err(Error::InvalidParams("segment length must be positive".into()));
    }
    let total = path.steps();
    if segment_len >= total {
        let index = cz_index_winding(path, opts)?;
        return Ok(SegmentedIndex { index, boundaries: vec![0, total], max_defect: path.endpoint().defect() });
    }

    let max_shift = (segment_len / 2).max(1) as i64;
    let mut boundaries = vec![0];
    let mut acc: Option<(i64, Mat)> = None;
    let mut max_defect: f64 = 0.0;
    let mut a = 0;
    while a < total {
        let nominal = (a + segment_len).min(total);
        let mut last_err = None;
        let mut accepted = None;
        for shift in (0..=max_shift).flat_map(|d| if d == 0 { vec![0] } else { vec![d, -d] }) {
            let b = nominal as i64 + shift;
            if b <= a as i64 || b > total as i64 {
                continue;
            }
            let b = b as usize;
            match try_segment(path, a, b, acc.as_ref(), opts) {
                Ok(step) => {
                    accepted = Some((b, step));
                    break;
                }
                Err(e) if e.is_degenerate() => last_err = Some(e),
                Err(e) => return Err(e),
            }
        }
        let (b, (index, cayley, defect)) = match accepted {
            Some(found) => found,
            None => {
                let err = last_err.unwrap_or(Error::SignatureDegenerate(0.0));
                // A final product on Sp0 means the path itself is not admissible.
                return Err(match err {
                    Error::DegenerateEndpoint { value } if nominal == total => Error::Admissibility { value },
                    other => other,
                });
            }
        };
        max_defect = max_defect.max(defect);
        acc = Some((index, cayley));
        boundaries.push(b);
        a = b;
    }
    let (index, _) = acc.expect("at least one segment");
    Ok(SegmentedIndex { index, boundaries, max_defect })
}

/// Index and Cayley image of the path up to b, given those of the path up to a.
fn try_segment(
    path: &DiscretePath,
    a: usize,
    b: usize,
    acc: Option<&(i64, Mat)>,
    opts: &WindingOptions,
) -> Result<(i64, Mat, f64)> {
    let seg = segment(path, a, b)?;
    let r = seg.endpoint().matrix();
    let d = det_minus_identity(r);
    if d.abs() < SEGMENT_DEGENERACY {
        return Err(Error::DegenerateEndpoint { value: d });
    }
    let idx = cz_index_winding(&seg, opts)?;
    let defect = seg.endpoint().defect();
    let m_seg = cayley_m(r, opts.tol.degeneracy)?;
    let Some((acc_idx, m_acc)) = acc else {
        return Ok((idx, m_seg, defect));
    };
    let sig = linalg::nondegenerate_signature(&(m_acc + &m_seg), 1e-9)?;
    let combined = acc_idx + idx - sig / 2;
    // The factor applied last plays the role of E in M(E R).
    let m_new = match path.order() {
        crate::sampling::ProductOrder::Right => cayley_compose(m_acc, &m_seg)?,
        crate::sampling::ProductOrder::Left => cayley_compose(&m_seg, m_acc)?,
    };
    let size = max_abs(&m_new);
    if b < path.steps() && !(size <= CAYLEY_BOUND) {
        return Err(Error::DegenerateEndpoint { value: 1.0 / size });
    }
    if !size.is_finite() {
        return Err(Error::Admissibility { value: 0.0 });
    }
    Ok((combined, m_new, defect))
}
