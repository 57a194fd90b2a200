//! The diffusion limit of the lifted recursion:
//! d theta = b(theta) dt + sigma(theta) dB with b = drift c sin 2 theta and
//! sigma^2 = c (var_const - var_cos cos 2 theta).
//!
//! Simulation is explicit Euler-Maruyama; the density is evolved with a
//! conservative finite-difference scheme for the forward equation
//! p_t = -(b p)_x + (sigma^2 p / 2)_xx.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::riccati::{signature_from_f, LiftedAngle, LimitCoefficients};
use crate::rng::trial_rng;
use crate::stats::{self, Estimate, KsTest, LineFit};

/// Drift (7c/8) sin 2x of the halved-diagonal limit.
pub fn drift_b(x: f64, c: f64) -> f64 {
    LimitCoefficients::HALVED.drift_at(x, c)
}

/// sqrt((c/4)(11 - 7 cos 2x)).
pub fn diffusion_sigma(x: f64, c: f64) -> f64 {
    LimitCoefficients::HALVED.variance_at(x, c).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdeParams {
    pub c: f64,
    pub t_end: f64,
    pub dt: f64,
    pub trials: usize,
    pub seed: u64,
    pub coeffs: LimitCoefficients,
}

impl SdeParams {
    /// Horizon `t_end` with the default step min(1e-4, 1e-2 / c) and the
    /// halved-diagonal coefficients.
    pub fn new(c: f64, t_end: f64, trials: usize, seed: u64) -> Self {
        SdeParams { c, t_end, dt: Self::default_dt(c), trials, seed, coeffs: LimitCoefficients::HALVED }
    }

    pub fn default_dt(c: f64) -> f64 {
        if c > 0.0 {
            (1e-2 / c).min(1e-4)
        } else {
            1e-4
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_coeffs(mut self, coeffs: LimitCoefficients) -> Self {
        self.coeffs = coeffs;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidParams(format!("c must be finite and non-negative, got {}", self.c)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidParams(format!("T must be positive, got {}", self.t_end)));
        }
        if !(self.dt > 0.0 && self.dt <= self.t_end) {
            return Err(Error::InvalidParams(format!("need 0 < dt <= T, got dt = {}", self.dt)));
        }
        if self.trials == 0 {
            return Err(Error::InvalidParams("at least one trial is required".into()));
        }
        Ok(())
    }

    /// Number of steps; the step is shrunk slightly so they end exactly at T.
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).ceil() as usize
    }
}

/// Terminal value of one Euler-Maruyama trajectory from theta = 0.
pub fn simulate_path<R: Rng + ?Sized>(params: &SdeParams, rng: &mut R) -> f64 {
    let steps = params.steps();
    let h = params.t_end / steps as f64;
    let (b, a0, a1) = (params.coeffs.drift * params.c * h, params.coeffs.var_const * params.c * h, params.coeffs.var_cos * params.c * h);
    let mut theta = 0.0_f64;
    for _ in 0..steps {
        let (s, co) = (2.0 * theta).sin_cos();
        let xi: f64 = rng.sample(StandardNormal);
        theta += b * s + (a0 - a1 * co).sqrt() * xi;
    }
    theta
}

/// Terminal values theta_T of `trials` independent trajectories; trial i
/// draws from its own stream derived from (seed, i).
pub fn euler_maruyama(params: &SdeParams) -> Result<Vec<f64>> {
    params.validate()?;
    Ok((0..params.trials as u64)
        .into_par_iter()
        .map(|i| simulate_path(params, &mut trial_rng(params.seed, i)))
        .collect())
}

/// The signature formula applied to a limiting angle: -2 floor(-theta / 2 pi) - 1.
pub fn index_from_theta(theta: f64) -> Result<i64> {
    signature_from_f(LiftedAngle(theta))
}

/// A density sampled at cell centres of a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    pub t: f64,
}

impl DensityGrid {
    pub fn spacing(&self) -> f64 {
        self.x[1] - self.x[0]
    }

    /// Trapezoid-rule mass.
    pub fn mass(&self) -> f64 {
        let m = self.p.len();
        let inner: f64 = self.p.iter().sum();
        self.spacing() * (inner - 0.5 * (self.p[0] + self.p[m - 1]))
    }

    /// max |p(x) - p(-x)|; the grid is symmetric about 0.
    pub fn symmetry_defect(&self) -> f64 {
        self.p.iter().zip(self.p.iter().rev()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Mass of the piecewise-constant density below `x`.
    pub fn cdf(&self, x: f64) -> f64 {
        let h = self.spacing();
        let left = self.x[0] - 0.5 * h;
        let pos = (x - left) / h;
        if pos <= 0.0 {
            return 0.0;
        }
        let full = (pos.floor() as usize).min(self.p.len());
        let mut total: f64 = self.p[..full].iter().sum::<f64>() * h;
        if full < self.p.len() {
            total += self.p[full] * (pos - full as f64) * h;
        }
        total
    }

    /// Integral of x^k p(x).
    pub fn moment(&self, k: i32) -> f64 {
        self.spacing() * self.x.iter().zip(&self.p).map(|(x, p)| x.powi(k) * p).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FokkerPlanckOptions {
    /// Number of cells (forced odd so that a cell is centred at 0).
    pub cells: usize,
    /// Half-width of the domain in units of sqrt(sigma_max^2 T).
    pub domain_factor: f64,
    /// Time step; defaults to `cfl_safety` times the stability limit.
    pub dt: Option<f64>,
    pub cfl_safety: f64,
    pub coeffs: LimitCoefficients,
}

impl Default for FokkerPlanckOptions {
    fn default() -> Self {
        FokkerPlanckOptions {
            cells: 2001,
            domain_factor: 8.0,
            dt: None,
            cfl_safety: 0.9,
            coeffs: LimitCoefficients::HALVED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FokkerPlanckSolution {
    pub density: DensityGrid,
    /// Largest |mass - 1| over all time steps.
    pub max_mass_error: f64,
    /// Mass in the outer 5% of the domain at the final time.
    pub boundary_mass: f64,
    pub dt: f64,
    pub steps: usize,
}

const BOUNDARY_MASS_LIMIT: f64 = 1e-8;

/// Solves the forward equation on [-X, X] with zero-flux walls, starting
/// from a Gaussian one cell wide in place of the point mass at 0.
pub fn fokker_planck_solve(c: f64, t_end: f64, opts: &FokkerPlanckOptions) -> Result<FokkerPlanckSolution> {
    if !(c > 0.0 && c.is_finite() && t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidParams(format!("need c > 0 and T > 0, got c = {c}, T = {t_end}")));
    }
    if opts.cells < 5 {
        return Err(Error::InvalidParams("at least 5 cells are required".into()));
    }
    let cells = opts.cells | 1;
    let co = opts.coeffs;
    let var_max = c * (co.var_const + co.var_cos.abs());
    let half_width = opts.domain_factor * (var_max * t_end).sqrt();
    let h = 2.0 * half_width / cells as f64;
    let mid = (cells / 2) as f64;
    let x: Vec<f64> = (0..cells).map(|i| (i as f64 - mid) * h).collect();

    // Diffusion D = sigma^2 / 2 at cell centres, drift at interfaces.
    let diff: Vec<f64> = x.iter().map(|&xi| 0.5 * co.variance_at(xi, c)).collect();
    let drift: Vec<f64> = (0..cells - 1).map(|i| co.drift_at(0.5 * (x[i] + x[i + 1]), c)).collect();
    let b_max = co.drift.abs() * c;
    let limit = h * h / (var_max + b_max * h);
    let dt_target = match opts.dt {
        Some(dt) if dt > limit => return Err(Error::StepTooLarge { dt, limit }),
        Some(dt) => dt,
        None => opts.cfl_safety * limit,
    };
    let steps = (t_end / dt_target).ceil().max(1.0) as usize;
    let dt = t_end / steps as f64;

    let mut p: Vec<f64> = x.iter().map(|xi| (-0.5 * (xi / h).powi(2)).exp()).collect();
    let norm: f64 = p.iter().sum::<f64>() * h;
    p.iter_mut().for_each(|v| *v /= norm);

    let mut flux = vec![0.0; cells + 1];
    let mut max_mass_error = 0.0_f64;
    let ratio = dt / h;
    for _ in 0..steps {
        for i in 0..cells - 1 {
            flux[i + 1] = drift[i] * 0.5 * (p[i] + p[i + 1]) - (diff[i + 1] * p[i + 1] - diff[i] * p[i]) / h;
        }
        for i in 0..cells {
            p[i] -= ratio * (flux[i + 1] - flux[i]);
        }
        let mass: f64 = p.iter().sum::<f64>() * h;
        max_mass_error = max_mass_error.max((mass - 1.0).abs());
    }
    let density = DensityGrid { x, p, t: t_end };
    let outer = (cells / 20).max(1);
    let boundary_mass = h * (density.p[..outer].iter().sum::<f64>() + density.p[cells - outer..].iter().sum::<f64>());
    if boundary_mass > BOUNDARY_MASS_LIMIT {
        return Err(Error::DomainTooSmall(boundary_mass));
    }
    Ok(FokkerPlanckSolution { density, max_mass_error, boundary_mass, dt, steps })
}

/// Bin-wise comparison of a density with a Monte Carlo sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramComparison {
    pub edges: Vec<f64>,
    pub empirical: Vec<f64>,
    pub predicted: Vec<f64>,
    /// Combined statistical and discretisation error per bin.
    pub error: Vec<f64>,
    pub max_difference: f64,
    pub max_error: f64,
}

impl HistogramComparison {
    /// Whether the sup-norm difference is below three times the sup-norm error.
    pub fn passes(&self) -> bool {
        self.max_difference < 3.0 * self.max_error
    }
}

/// Compares `samples` with `fine` on `bins` equal bins over +-4 sample
/// standard deviations. The discretisation error per bin is the difference
/// between `fine` and a coarser solution `coarse`.
pub fn compare_histogram(
    fine: &DensityGrid,
    coarse: &DensityGrid,
    samples: &[f64],
    bins: usize,
) -> Result<HistogramComparison> {
    if samples.len() < 2 || bins == 0 {
        return Err(Error::InsufficientData("need samples and at least one bin".into()));
    }
    let width = 4.0 * stats::variance(samples).sqrt();
    let w = 2.0 * width / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|k| -width + k as f64 * w).collect();
    let mut counts = vec![0usize; bins];
    for &s in samples {
        let k = ((s + width) / w).floor();
        if k >= 0.0 && (k as usize) < bins {
            counts[k as usize] += 1;
        }
    }
    let n = samples.len() as f64;
    let bin_mass = |d: &DensityGrid, k: usize| d.cdf(edges[k + 1]) - d.cdf(edges[k]);
    let empirical: Vec<f64> = counts.iter().map(|&k| k as f64 / (n * w)).collect();
    let predicted: Vec<f64> = (0..bins).map(|k| bin_mass(fine, k) / w).collect();
    let error: Vec<f64> = (0..bins)
        .map(|k| {
            let pk = bin_mass(fine, k).clamp(0.0, 1.0);
            let stat = (pk * (1.0 - pk) / n).sqrt() / w;
            let disc = (bin_mass(fine, k) - bin_mass(coarse, k)).abs() / w;
            stat.hypot(disc)
        })
        .collect();
    let max_difference = empirical.iter().zip(&predicted).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let max_error = error.iter().copied().fold(0.0, f64::max);
    Ok(HistogramComparison { edges, empirical, predicted, error, max_difference, max_error })
}

/// Two-sample comparison of the laws of theta under two parameter sets.
pub fn compare_laws(a: &SdeParams, b: &SdeParams, alpha: f64) -> Result<KsTest> {
    let sa = euler_maruyama(a)?;
    let sb = euler_maruyama(b)?;
    stats::ks_two_sample(&sa, &sb, alpha)
}

/// Checks that theta_t under diffusivity c has the law of theta_{ct} under
/// diffusivity 1, by a two-sample KS test at level 1e-3.
pub fn time_change_check(c: f64, t: f64, trials: usize, seed: u64) -> Result<KsTest> {
    let a = SdeParams::new(c, t, trials, seed);
    let b = SdeParams::new(1.0, c * t, trials, seed ^ 0x5EED_0F_C0FFEE);
    compare_laws(&a, &b, 1e-3)
}

/// Envelope constants of m e^{-x^2/(m t)} / sqrt t >= p >= e^{-M x^2 / t} / (M sqrt t).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatBoundConstants {
    pub m: f64,
    pub big_m: f64,
}

const BOUND_CAP: f64 = 1e6;
const BOUND_FACTOR: f64 = 1.05;
const BOUND_FLOOR: f64 = 1e-12;

/// Smallest constants on the grid 1, 1.05, 1.05^2, ... for which the
/// two-sided Gaussian envelope holds wherever p exceeds 1e-12.
pub fn heat_bound_fit(density: &DensityGrid) -> Result<HeatBoundConstants> {
    if let Some(v) = density.p.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::BoundViolation(format!("density takes the value {v}")));
    }
    let t = density.t;
    let support: Vec<(f64, f64)> =
        density.x.iter().zip(&density.p).filter(|(_, p)| **p > BOUND_FLOOR).map(|(x, p)| (*x, *p)).collect();
    if support.is_empty() {
        return Err(Error::BoundViolation("density vanishes everywhere".into()));
    }
    let upper = |m: f64| support.iter().all(|&(x, p)| m * (-x * x / (m * t)).exp() / t.sqrt() >= p);
    let lower = |big: f64| support.iter().all(|&(x, p)| (-big * x * x / t).exp() / (big * t.sqrt()) <= p);
    let search = |ok: &dyn Fn(f64) -> bool, name: &str| {
        let mut v = 1.0;
        while v <= BOUND_CAP {
            if ok(v) {
                return Ok(v);
            }
            v *= BOUND_FACTOR;
        }
        Err(Error::BoundViolation(format!("no {name} below {BOUND_CAP}")))
    };
    Ok(HeatBoundConstants { m: search(&upper, "m")?, big_m: search(&lower, "M")? })
}

/// Monte Carlo moments at one value of c.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub c: f64,
    /// E[theta_1^k] for k = 1 ..= k_max.
    pub theta: Vec<Estimate>,
    /// E[index^k] for k = 1 ..= k_max.
    pub index: Vec<Estimate>,
    pub degenerate: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentCurve {
    pub rows: Vec<MomentRow>,
    /// (k, fit of log E[theta^k] against log c) for even k.
    pub theta_fits: Vec<(u32, LineFit)>,
    pub index_fits: Vec<(u32, LineFit)>,
}

/// Moments of theta_1 and of index_from_theta(theta_1) across diffusivities,
/// with log-log slope fits of the even moments.
pub fn moment_curve(
    c_values: &[f64],
    k_max: u32,
    trials: usize,
    seed: u64,
    coeffs: LimitCoefficients,
) -> Result<MomentCurve> {
    if trials < 2 {
        return Err(Error::InsufficientData("moment curves need at least 2 trials".into()));
    }
    let mut rows = Vec::with_capacity(c_values.len());
    for (i, &c) in c_values.iter().enumerate() {
        let params = SdeParams::new(c, 1.0, trials, seed.wrapping_add(i as u64)).with_coeffs(coeffs);
        let theta = euler_maruyama(&params)?;
        let index: Vec<f64> = theta.iter().filter_map(|&t| index_from_theta(t).ok()).map(|v| v as f64).collect();
        rows.push(MomentRow {
            c,
            theta: (1..=k_max).map(|k| stats::raw_moment(&theta, k)).collect::<Result<_>>()?,
            index: (1..=k_max).map(|k| stats::raw_moment(&index, k)).collect::<Result<_>>()?,
            degenerate: theta.len() - index.len(),
        });
    }
    let fits = |pick: fn(&MomentRow) -> &Vec<Estimate>| -> Result<Vec<(u32, LineFit)>> {
        if rows.len() < 2 {
            return Ok(Vec::new());
        }
        (2..=k_max)
            .step_by(2)
            .map(|k| {
                let ys: Vec<f64> = rows.iter().map(|r| pick(r)[k as usize - 1].value).collect();
                stats::fit_log_log(c_values, &ys).map(|f| (k, f))
            })
            .collect()
    };
    let theta_fits = fits(|r| &r.theta)?;
    let index_fits = fits(|r| &r.index)?;
    Ok(MomentCurve { rows, theta_fits, index_fits })
}
