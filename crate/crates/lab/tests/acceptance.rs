//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs everything at full size by default. Set SYMPWALK_ACCEPTANCE_QUICK=1
//! to shrink the Monte Carlo budgets (the tolerances stay the same, so quick
//! runs of the statistical criteria are indicative only). Criterion numbers
//! given as arguments select a subset:
//! `cargo test -p sympwalk-lab --test acceptance -- 3 7`.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use sympwalk_core::action::{
    conjugate_and_symmetrize, generating_coeffs, hessian_dense, interleave_tridiagonal, signature_sturm,
    DiagonalScaling, HessianBlocks,
};
use sympwalk_core::linalg::{dense_inertia, Mat};
use sympwalk_core::riccati::{f_evolution, monotonicity_check, one_step_moments, LimitCoefficients};
use sympwalk_core::rng::rng_from_seed;
use sympwalk_core::sampling::{random_walk, DiscretePath, NoiseTriple, WalkParams};
use sympwalk_core::sde::{
    euler_maruyama, fokker_planck_solve, heat_bound_fit, compare_histogram, time_change_check, FokkerPlanckOptions,
    SdeParams,
};
use sympwalk_core::stats::{raw_moment, variance};
use sympwalk_core::winding::{cz_index_winding, WindingOptions};
use sympwalk_core::SymplecticMatrix;
use sympwalk_lab::appendix::{reproduce_appendix, AppendixOptions};
use sympwalk_lab::batch::{cross_method_trial, replay, run_batch};
use sympwalk_lab::moments::MomentTable;
use sympwalk_lab::record::{read_records, write_records};
use sympwalk_lab::{ExperimentConfig, Method, RecordFormat};

type Check = Result<String, String>;

fn verdict(pass: bool, detail: String) -> Check {
    if pass {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn random_symmetric<R: Rng>(dim: usize, rng: &mut R) -> Mat {
    let g = Mat::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    (&g + g.transpose()) * 0.5
}

/// 1. Flows exp(J0 S t) of small nondegenerate S have index sign(S) / 2.
fn axiom(_quick: bool) -> Check {
    let mut rng = rng_from_seed(101);
    let opts = WindingOptions::default();
    let mut mismatches = Vec::new();
    let mut seen = std::collections::BTreeMap::new();
    let mut done = 0;
    while done < 50 {
        let n = 1 + done % 2;
        let mut s = random_symmetric(2 * n, &mut rng);
        if rng.random_bool(0.3) {
            // Definite matrices reach the extreme indices +-n.
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            s = &s * &s * sign;
        }
        let eig = s.clone().symmetric_eigenvalues();
        let radius = eig.iter().fold(0.0_f64, |a, l| a.max(l.abs()));
        let smallest = eig.iter().fold(f64::INFINITY, |a, l| a.min(l.abs()));
        let s = s * (rng.random_range(0.2..6.0) / radius);
        if smallest / radius < 0.02 {
            continue;
        }
        done += 1;
        let expected = dense_inertia(&s, 0.0).signature() / 2;
        *seen.entry(expected).or_insert(0) += 1;
        let path = DiscretePath::sampled_flow(&s, 64).map_err(err)?;
        match cz_index_winding(&path, &opts) {
            Ok(i) if i == expected => {}
            other => mismatches.push(format!("n={n}: {other:?} vs {expected}")),
        }
    }
    verdict(mismatches.is_empty(), format!("50 flows with index counts {seen:?}, {} mismatches {mismatches:?}", mismatches.len()))
}

/// 2. Prepending the k-fold rotation loop in the first symplectic plane shifts the index by 2k.
fn loop_axiom(_quick: bool) -> Check {
    let opts = WindingOptions::default();
    let mut failures = Vec::new();
    let mut checked = 0;
    for b in 0..20u64 {
        let n = 1 + (b % 2) as usize;
        let base = random_walk(&WalkParams::new(n, 200, 2.0, b), &mut rng_from_seed(b)).map_err(err)?;
        let Ok(base_index) = cz_index_winding(&base, &opts) else {
            failures.push(format!("base path {b} is degenerate"));
            continue;
        };
        for k in -2i64..=2 {
            let mut s = Mat::zeros(2 * n, 2 * n);
            s[(0, 0)] = 2.0 * PI * k as f64;
            s[(n, n)] = 2.0 * PI * k as f64;
            let rotation = DiscretePath::sampled_flow(&s, 64 * k.unsigned_abs().max(1) as usize).map_err(err)?;
            let joined = rotation.followed_by(&base).map_err(err)?;
            checked += 1;
            match cz_index_winding(&joined, &opts) {
                Ok(i) if i == base_index + 2 * k => {}
                other => failures.push(format!("path {b}, k={k}: {other:?} vs {}", base_index + 2 * k)),
            }
        }
    }
    verdict(failures.is_empty(), format!("{checked} loop/path pairs, failures {failures:?}"))
}

/// 3. Winding, Hessian and Riccati indices of the same n = 1 walk agree.
fn cross_method(quick: bool) -> Check {
    let trials = if quick { 100 } else { 500 };
    let (mut defined, mut agree, mut disagree_near, mut disagree_far) = (0, 0, 0, 0);
    let mut seed = 0u64;
    let mut undefined = 0;
    while defined < trials {
        let t = cross_method_trial(2000, 5.0, 0xACCE_0000 + seed).map_err(err)?;
        seed += 1;
        if !t.all_defined() {
            undefined += 1;
            continue;
        }
        defined += 1;
        if t.agree() {
            agree += 1;
        } else if t.near_degenerate(1e-4) {
            disagree_near += 1;
        } else {
            disagree_far += 1;
        }
    }
    let rate = agree as f64 / defined as f64;
    verdict(
        rate >= 0.99 && disagree_far == 0,
        format!(
            "{agree}/{defined} agree ({:.2}%), {disagree_near} disagreements near a degeneracy, {disagree_far} away from one, {undefined} trials skipped as degenerate",
            100.0 * rate
        ),
    )
}

/// 4. The symmetrised interleaved tridiagonal has the Hessian spectrum plus a
/// zero, and its Sturm inertia equals the dense inertia.
fn tridiagonal(_quick: bool) -> Check {
    let mut rng = rng_from_seed(404);
    let mut worst: f64 = 0.0;
    let mut inertia_mismatch = 0;
    for _ in 0..100 {
        let steps = rng.random_range(1..=100usize);
        let c = rng.random_range(0.1..30.0);
        let noise: Vec<NoiseTriple> = (0..steps).map(|_| NoiseTriple::sample(c / steps as f64, &mut rng)).collect();
        let coeffs = noise
            .iter()
            .map(|t| generating_coeffs(&SymplecticMatrix::from_matrix_unchecked(t.step_matrix())))
            .collect::<Result<Vec<_>, _>>()
            .map_err(err)?;
        let dense = hessian_dense(&coeffs).map_err(err)?;
        let blocks = HessianBlocks::from_coeffs(&coeffs, DiagonalScaling::Exact).map_err(err)?;
        let sym = conjugate_and_symmetrize(&interleave_tridiagonal(&blocks)).map_err(err)?;
        let mut a: Vec<f64> = sym.to_dense().symmetric_eigenvalues().iter().copied().collect();
        let mut b: Vec<f64> = dense.clone().symmetric_eigenvalues().iter().copied().collect();
        b.push(0.0);
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        worst = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(worst, f64::max);
        let sturm = signature_sturm(&sym, 0.0);
        let direct = dense_inertia(&dense, 0.0);
        if (sturm.pos, sturm.neg, sturm.zero) != (direct.pos, direct.neg, direct.zero + 1) {
            inertia_mismatch += 1;
        }
    }
    verdict(
        worst < 1e-8 && inertia_mismatch == 0,
        format!("100 instances, max spectral difference {worst:.2e}, {inertia_mismatch} inertia mismatches"),
    )
}

/// 5. F(k, L) decreases in L, and F(k, 1e6) is within 1e-2 of -(2k + 1) pi.
fn mobius(_quick: bool) -> Check {
    let mut rng = rng_from_seed(505);
    let mut grid = vec![0.0];
    grid.extend((0..40).map(|i| 10f64.powf(-3.0 + 6.0 * i as f64 / 39.0)));
    let mut not_monotone = 0;
    for case in 0..1000 {
        let k = rng.random_range(1..=30usize);
        let var = 10f64.powf(rng.random_range(-3.0..-0.3));
        let noise: Vec<NoiseTriple> = (0..k).map(|_| NoiseTriple::sample(var, &mut rng)).collect();
        let scaling = if case % 2 == 0 { DiagonalScaling::Exact } else { DiagonalScaling::Halved };
        if !monotonicity_check(&noise, k, &grid, scaling).map_err(err)? {
            not_monotone += 1;
        }
    }
    let mut worst: f64 = 0.0;
    for k in 0..=20usize {
        for _ in 0..5 {
            let noise: Vec<NoiseTriple> = (0..k).map(|_| NoiseTriple::sample(0.01, &mut rng)).collect();
            for scaling in [DiagonalScaling::Exact, DiagonalScaling::Halved] {
                let f = f_evolution(&noise, 1e6, k, scaling).map_err(err)?.0;
                worst = worst.max((f + (2 * k + 1) as f64 * PI).abs());
            }
        }
    }
    verdict(
        not_monotone == 0 && worst < 1e-2,
        format!("{not_monotone}/1000 cases not monotone, max |F(k, 1e6) + (2k+1) pi| = {worst:.2e}"),
    )
}

/// 6. One-step drift and mean square of the recursion at c / N = 1e-3.
fn one_step(quick: bool) -> Check {
    let samples = if quick { 200_000 } else { 1_000_000 };
    let (c, steps) = (1.0, 1000);
    let coeffs = LimitCoefficients::HALVED;
    let mut rng = rng_from_seed(606);
    let mut pass = true;
    let mut lines = Vec::new();
    for t in [0.0, PI / 4.0, PI / 2.0] {
        let m = one_step_moments(t, c, steps, samples, DiagonalScaling::Halved, &mut rng).map_err(err)?;
        let drift = coeffs.drift_at(t, c) / steps as f64;
        let square = coeffs.variance_at(t, c) / steps as f64;
        let z = (m.drift - drift) / m.drift_se;
        let rel = m.mean_square / square - 1.0;
        pass &= z.abs() <= 4.0 && rel.abs() <= 0.05;
        lines.push(format!("t={t:.3}: drift z={z:+.2}, mean square rel. error {:+.2}%", 100.0 * rel));
    }
    verdict(pass, format!("{samples} samples; {}", lines.join("; ")))
}

/// 7. Properties of the limiting diffusion and its forward equation.
fn sde(quick: bool) -> Check {
    let mut lines = Vec::new();
    let mut pass = true;

    let short = euler_maruyama(&SdeParams::new(1.0, 1e-2, if quick { 200_000 } else { 1_000_000 }, 71)).map_err(err)?;
    let rel = variance(&short) / 1e-2 - 1.0;
    pass &= rel.abs() < 0.05;
    lines.push(format!("Var(theta_0.01)/cT - 1 = {:+.2}%", 100.0 * rel));

    let ks = time_change_check(4.0, 1.0, if quick { 5_000 } else { 20_000 }, 72).map_err(err)?;
    pass &= ks.passes();
    lines.push(format!("time change KS {:.4} (critical {:.4})", ks.statistic, ks.critical));

    let samples = euler_maruyama(&SdeParams::new(1.0, 1.0, if quick { 100_000 } else { 1_000_000 }, 73)).map_err(err)?;
    for k in [1, 3] {
        let m = raw_moment(&samples, k).map_err(err)?;
        pass &= m.value.abs() <= 4.0 * m.se;
        lines.push(format!("E[theta^{k}] = {:.4} +- {:.4}", m.value, m.se));
    }

    let fine = fokker_planck_solve(1.0, 1.0, &FokkerPlanckOptions::default()).map_err(err)?;
    let coarse = fokker_planck_solve(1.0, 1.0, &FokkerPlanckOptions { cells: 1001, ..Default::default() }).map_err(err)?;
    let d = &fine.density;
    let min_p = d.p.iter().copied().fold(f64::INFINITY, f64::min);
    pass &= fine.max_mass_error <= 1e-6 && d.symmetry_defect() <= 1e-10 && min_p >= 0.0;
    lines.push(format!(
        "FP mass error {:.1e}, symmetry defect {:.1e}, min density {:.1e}",
        fine.max_mass_error,
        d.symmetry_defect(),
        min_p
    ));
    let hist = compare_histogram(d, &coarse.density, &samples, 64).map_err(err)?;
    pass &= hist.passes();
    lines.push(format!("histogram sup difference {:.2e} vs 3x error {:.2e}", hist.max_difference, 3.0 * hist.max_error));

    match heat_bound_fit(d) {
        Ok(h) if h.m.is_finite() && h.big_m.is_finite() => lines.push(format!("heat bounds m = {:.3}, M = {:.3}", h.m, h.big_m)),
        other => {
            pass = false;
            lines.push(format!("heat bounds not found: {other:?}"));
        }
    }
    verdict(pass, lines.join("; "))
}

/// 8. Growth of the n = 1 index moments with c.
fn moment_growth(quick: bool) -> Check {
    let trials = if quick { 500 } else { 2000 };
    let mut cfg = ExperimentConfig::new(1, 2000, vec![5.0, 10.0, 15.0, 20.0, 25.0, 30.0], trials, Method::Riccati);
    cfg.seed = 808;
    let records = run_batch(&cfg, &HashSet::new(), |_| Ok(())).map_err(err)?;
    let table = MomentTable::from_records(&records).map_err(err)?;
    let fits = table.fit_slopes();
    let slope = |k| fits.iter().find(|f| f.k == k).map(|f| f.fit.slope).unwrap_or(f64::NAN);
    let (s2, s4) = (slope(2), slope(4));
    let mut pass = (s2 - 1.0).abs() <= 0.15 && (s4 - 2.0).abs() <= 0.25;
    let mut worst_odd: f64 = 0.0;
    for row in &table.rows {
        for k in [1, 3] {
            let m = row.moment(k);
            worst_odd = worst_odd.max((m.value / m.se).abs());
        }
    }
    pass &= worst_odd <= 4.0;
    verdict(
        pass,
        format!("{trials} riccati trials per c: slope M2 {s2:.3}, slope M4 {s4:.3}, largest |M1|,|M3| z-score {worst_odd:.2}"),
    )
}

/// 9. The published n = 3 M2 column.
fn appendix(quick: bool) -> Check {
    let dir = tempfile::tempdir().map_err(err)?;
    let opts = AppendixOptions { quick, plot: false, ..Default::default() };
    let report = reproduce_appendix(dir.path(), &opts).map_err(err)?;
    let zs: Vec<String> = report
        .comparisons
        .iter()
        .filter(|r| r.k == 2)
        .map(|r| format!("c={}: {:.3} vs {} (z {:+.2})", r.c, r.ours, r.published, r.z))
        .collect();
    let mode = if quick { "quick mode" } else { "500 trials per c" };
    verdict(report.m2_agrees, format!("{mode}; {}", zs.join(", ")))
}

/// 10. Every recorded trial replays to the same index from its seed.
fn determinism(_quick: bool) -> Check {
    let dir = tempfile::tempdir().map_err(err)?;
    let mut checked = 0;
    for (n, method) in [(2, Method::Winding), (1, Method::Hessian), (1, Method::Riccati), (1, Method::Sde)] {
        let mut cfg = ExperimentConfig::new(n, 300, vec![3.0], 8, method);
        cfg.seed = 1010;
        let first = run_batch(&cfg, &HashSet::new(), |_| Ok(())).map_err(err)?;
        let path = dir.path().join(format!("{method}.jsonl"));
        write_records(&path, RecordFormat::Jsonl, &first).map_err(err)?;
        for r in read_records(&path, RecordFormat::Jsonl).map_err(err)? {
            let again = replay(&cfg, &r).ok();
            if again != r.index {
                return Err(format!("{method} trial {} replayed to {again:?}, recorded {:?}", r.trial_id, r.index));
            }
            checked += 1;
        }
        let second = run_batch(&cfg, &HashSet::new(), |_| Ok(())).map_err(err)?;
        let strip = |v: &[sympwalk_lab::ExperimentRecord]| v.iter().map(|r| r.without_timing()).collect::<Vec<_>>();
        if strip(&first) != strip(&second) {
            return Err(format!("{method} batch differs between runs"));
        }
    }
    Ok(format!("{checked} records replayed from their seeds"))
}

fn main() -> ExitCode {
    let quick = std::env::var("SYMPWALK_ACCEPTANCE_QUICK").is_ok_and(|v| !v.is_empty() && v != "0");
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(&str, fn(bool) -> Check); 10] = [
        ("axiom reproduction", axiom),
        ("loop axiom", loop_axiom),
        ("cross-method agreement", cross_method),
        ("tridiagonal machinery", tridiagonal),
        ("Mobius properties", mobius),
        ("one-step estimates", one_step),
        ("SDE properties", sde),
        ("moment asymptotics", moment_growth),
        ("appendix table", appendix),
        ("determinism", determinism),
    ];
    if quick {
        println!("quick mode: reduced Monte Carlo budgets");
    }
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let number = i + 1;
        if !selected.is_empty() && !selected.contains(&number) {
            continue;
        }
        let start = Instant::now();
        let result = check(quick);
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {number:>2} {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {number:>2} {name} ({secs:.1}s): {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
