use std::fmt;
use std::path::PathBuf;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use sympwalk_core::rng::trial_seed;
use sympwalk_core::sampling::{ProductOrder, Scheme, WalkParams};

use crate::error::{LabError, LabResult};

/// How the index of a trial is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Winding of rho^2 along the path and its extension (any n).
    Winding,
    /// Signature of the discrete-action Hessian (n = 1).
    Hessian,
    /// Lifted Mobius recursion on the triangular noise (n = 1).
    Riccati,
    /// Signature formula at the endpoint of the limiting diffusion at time 1 (n = 1).
    Sde,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Winding => "winding",
            Method::Hessian => "hessian",
            Method::Riccati => "riccati",
            Method::Sde => "sde",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n: usize,
    pub steps: usize,
    pub c_values: Vec<f64>,
    pub trials: u64,
    pub seed: u64,
    pub method: Method,
    /// Segment length for the winding method; `None` computes the index in one piece.
    pub segment_len: Option<usize>,
    /// Step law; defaults to exp-Gaussian for winding and triangular otherwise.
    pub scheme: Option<Scheme>,
    pub out_dir: PathBuf,
    pub plot: bool,
}

impl ExperimentConfig {
    pub fn new(n: usize, steps: usize, c_values: Vec<f64>, trials: u64, method: Method) -> Self {
        ExperimentConfig {
            n,
            steps,
            c_values,
            trials,
            seed: 0,
            method,
            segment_len: None,
            scheme: None,
            out_dir: PathBuf::from("sympwalk-out"),
            plot: false,
        }
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme.unwrap_or(match self.method {
            Method::Winding => Scheme::ExpGaussian,
            _ => Scheme::Triangular,
        })
    }

    /// Hessian and Riccati trials multiply increments on the left so that
    /// the discrete isotopies are the sampled steps themselves.
    pub fn order(&self) -> ProductOrder {
        match self.method {
            Method::Hessian | Method::Riccati => ProductOrder::Left,
            _ => ProductOrder::Right,
        }
    }

    pub fn validate(&self) -> LabResult<()> {
        let fail = |msg: String| Err(LabError::Validation(msg));
        if self.n == 0 {
            return fail("n must be at least 1".into());
        }
        if self.steps == 0 {
            return fail("N must be at least 1".into());
        }
        if self.trials == 0 {
            return fail("at least one trial is required".into());
        }
        if self.c_values.is_empty() {
            return fail("at least one value of c is required".into());
        }
        if let Some(c) = self.c_values.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
            return fail(format!("c must be positive and finite, got {c}"));
        }
        if self.segment_len == Some(0) {
            return fail("segment length must be positive".into());
        }
        if self.method != Method::Winding && self.n != 1 {
            return fail(format!("method {} requires n = 1, got n = {}", self.method, self.n));
        }
        match (self.method, self.scheme()) {
            (Method::Riccati, Scheme::ExpGaussian) => fail("the riccati method needs the triangular scheme".into()),
            (_, Scheme::Triangular) if self.n != 1 => fail("the triangular scheme is defined for n = 1 only".into()),
            _ => Ok(()),
        }
    }

    /// The seed of trial `trial_id` at diffusivity `c`.
    pub fn trial_seed(&self, c: f64, trial_id: u64) -> u64 {
        trial_seed(trial_seed(self.seed, c.to_bits()), trial_id)
    }

    pub fn walk_params(&self, c: f64, seed: u64) -> WalkParams {
        WalkParams::new(self.n, self.steps, c, seed).with_scheme(self.scheme()).with_order(self.order())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_dimension_compatibility() {
        assert!(ExperimentConfig::new(3, 10, vec![1.0], 1, Method::Winding).validate().is_ok());
        for m in [Method::Hessian, Method::Riccati, Method::Sde] {
            assert!(ExperimentConfig::new(1, 10, vec![1.0], 1, m).validate().is_ok());
            assert!(matches!(ExperimentConfig::new(2, 10, vec![1.0], 1, m).validate(), Err(LabError::Validation(_))));
        }
        let mut cfg = ExperimentConfig::new(1, 10, vec![1.0], 1, Method::Riccati);
        cfg.scheme = Some(Scheme::ExpGaussian);
        assert!(cfg.validate().is_err());
        assert!(ExperimentConfig::new(1, 10, vec![-1.0], 1, Method::Winding).validate().is_err());
    }

    #[test]
    fn trial_seeds_differ_across_c_and_trials() {
        let cfg = ExperimentConfig::new(1, 10, vec![1.0, 2.0], 3, Method::Winding);
        let seeds: std::collections::HashSet<u64> =
            [1.0, 2.0].iter().flat_map(|&c| (0..3).map(move |t| (c, t))).map(|(c, t)| cfg.trial_seed(c, t)).collect();
        assert_eq!(seeds.len(), 6);
    }
}
