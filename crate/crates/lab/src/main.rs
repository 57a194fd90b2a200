use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use sympwalk_core::linalg::{dense_inertia, Mat};
use sympwalk_core::riccati::{f_evolution, LimitCoefficients};
use sympwalk_core::rng::rng_from_seed;
use sympwalk_core::sampling::{random_walk, DiscretePath, NoiseTriple};
use sympwalk_core::sde::{fokker_planck_solve, heat_bound_fit, moment_curve, FokkerPlanckOptions};
use sympwalk_core::symplectic::det_minus_identity;
use sympwalk_core::winding::{cz_index_winding, rho_squared, WindingOptions};
use sympwalk_core::action::DiagonalScaling;
use sympwalk_lab::appendix::{reproduce_appendix, AppendixOptions};
use sympwalk_lab::batch::{compute_index, cross_method_trial, run_batch_to_dir};
use sympwalk_lab::moments::{write_slopes_csv, MomentTable};
use sympwalk_lab::plot::{histogram_report, moment_plot_svg, write_svg};
use sympwalk_lab::record::read_records;
use sympwalk_lab::{ExperimentConfig, ExperimentRecord, LabError, LabResult, Method, RecordFormat};

/// Random walks on Sp(2n, R) and their Conley-Zehnder indices.
#[derive(Parser)]
#[command(name = "sympwalk", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample one walk and write its points.
    Walk(WalkArgs),
    /// Compute the index of one walk.
    Index(TrialArgs),
    /// Run a batch of trials for each c, resuming from existing records.
    Batch(BatchArgs),
    /// Build the moment table and slope fits from a records file.
    Moments(MomentsArgs),
    /// Monte Carlo moments of the limiting diffusion.
    Sde(SdeArgs),
    /// Solve the forward equation of the limiting diffusion.
    FokkerPlanck(FokkerPlanckArgs),
    /// Regenerate the n = 3 moment table and compare it with the published one.
    ReproduceAppendix(AppendixArgs),
    /// Fast internal consistency checks.
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct OutArgs {
    /// Output directory.
    #[arg(long, env = "SYMPWALK_OUT_DIR", default_value = "sympwalk-out")]
    out: PathBuf,
}

#[derive(Args)]
struct TrialArgs {
    #[arg(long, default_value_t = 1)]
    n: usize,
    /// Number of steps N.
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    c: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Method::Winding)]
    method: Method,
    #[arg(long)]
    segment_len: Option<usize>,
}

impl TrialArgs {
    fn config(&self) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(self.n, self.steps, vec![self.c], 1, self.method);
        cfg.seed = self.seed;
        cfg.segment_len = self.segment_len;
        cfg
    }
}

#[derive(Args)]
struct WalkArgs {
    #[command(flatten)]
    trial: TrialArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct BatchArgs {
    #[arg(long, default_value_t = 1)]
    n: usize,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    /// Comma-separated list of c values.
    #[arg(long, value_delimiter = ',', default_value = "1", allow_negative_numbers = true)]
    c: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Method::Winding)]
    method: Method,
    #[arg(long)]
    segment_len: Option<usize>,
    #[arg(long, value_enum, default_value_t = RecordFormat::Csv)]
    format: RecordFormat,
    /// Also write SVG histograms and a moment plot.
    #[arg(long)]
    plot: bool,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct MomentsArgs {
    /// Records file (CSV or JSON lines, by extension).
    records: PathBuf,
    #[arg(long)]
    plot: bool,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct SdeArgs {
    #[arg(long, value_delimiter = ',', default_value = "1", allow_negative_numbers = true)]
    c: Vec<f64>,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct FokkerPlanckArgs {
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    c: f64,
    /// Final time.
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    #[arg(long, default_value_t = 2001)]
    cells: usize,
    #[arg(long)]
    plot: bool,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct AppendixArgs {
    /// Three values of c with 100 trials each instead of six with 500.
    #[arg(long)]
    quick: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    segment_len: usize,
    #[arg(long, value_enum, default_value_t = RecordFormat::Csv)]
    format: RecordFormat,
    /// Also write SVG histograms and a moment plot.
    #[arg(long)]
    plot: bool,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> LabResult<()> {
    match command {
        Command::Walk(a) => walk(&a),
        Command::Index(a) => index(&a),
        Command::Batch(a) => batch(&a),
        Command::Moments(a) => moments(&a),
        Command::Sde(a) => sde(&a),
        Command::FokkerPlanck(a) => fokker_planck(&a),
        Command::ReproduceAppendix(a) => appendix(&a),
        Command::Selftest(a) => selftest(a.seed),
    }
}

fn walk(a: &WalkArgs) -> LabResult<()> {
    let cfg = a.trial.config();
    cfg.validate()?;
    let path = random_walk(&cfg.walk_params(a.trial.c, a.trial.seed), &mut rng_from_seed(a.trial.seed))?;
    std::fs::create_dir_all(&a.out.out)?;
    let file = a.out.out.join("walk.csv");
    let mut w = csv::Writer::from_path(&file)?;
    let dim = 2 * path.n();
    let mut header = vec!["j".to_string(), "det_minus_identity".into(), "rho_sq_angle".into()];
    header.extend((0..dim * dim).map(|k| format!("s{}{}", k / dim, k % dim)));
    w.write_record(&header)?;
    for (j, p) in path.points().iter().enumerate() {
        let m = p.matrix();
        let mut row = vec![j.to_string(), det_minus_identity(m).to_string(), rho_squared(m)?.angle().to_string()];
        row.extend((0..dim * dim).map(|k| m[(k / dim, k % dim)].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    println!("{}", file.display());
    Ok(())
}

fn index(a: &TrialArgs) -> LabResult<()> {
    let cfg = a.config();
    cfg.validate()?;
    let start = std::time::Instant::now();
    let result = compute_index(&cfg, a.c, a.seed);
    let record = ExperimentRecord {
        trial_id: 0,
        n: a.n,
        steps: a.steps,
        c: a.c,
        seed: a.seed,
        method: a.method,
        index: result.as_ref().ok().copied(),
        degenerate: result.as_ref().err().is_some_and(|e| e.is_degenerate()),
        millis: start.elapsed().as_secs_f64() * 1e3,
    };
    println!("{}", serde_json::to_string(&record)?);
    match result {
        Err(e) if !e.is_degenerate() => Err(e.into()),
        _ => Ok(()),
    }
}

fn batch(a: &BatchArgs) -> LabResult<()> {
    let mut cfg = ExperimentConfig::new(a.n, a.steps, a.c.clone(), a.trials, a.method);
    cfg.seed = a.seed;
    cfg.segment_len = a.segment_len;
    cfg.out_dir = a.out.out.clone();
    cfg.plot = a.plot;
    let outcome = run_batch_to_dir(&cfg, &cfg.out_dir, a.format)?;
    if outcome.resumed > 0 {
        eprintln!("resumed {} existing record(s)", outcome.resumed);
    }
    for s in &outcome.summaries {
        println!("c = {}: {} trials, {} degenerate, {} failed", s.c, s.trials, s.degenerate, s.failed);
    }
    write_tables(&outcome.records, &cfg.out_dir, a.plot)
}

fn moments(a: &MomentsArgs) -> LabResult<()> {
    let records = read_records(&a.records, RecordFormat::from_path(&a.records))?;
    if records.is_empty() {
        return Err(LabError::Validation(format!("no records in {}", a.records.display())));
    }
    std::fs::create_dir_all(&a.out.out)?;
    write_tables(&records, &a.out.out, a.plot)
}

/// Writes moments.csv and slopes.csv, plus SVG plots when asked, and prints the table.
fn write_tables(records: &[ExperimentRecord], dir: &Path, plot: bool) -> LabResult<()> {
    let table = MomentTable::from_records(records)?;
    table.write_csv(&dir.join("moments.csv"))?;
    let fits = table.fit_slopes();
    write_slopes_csv(&dir.join("slopes.csv"), &fits)?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "{:>8} {:>7} {:>16} {:>16} {:>16}", "c", "trials", "M1", "M2", "M4")?;
    for r in &table.rows {
        let f = |k| format!("{:.4}\u{b1}{:.4}", r.moment(k).value, r.moment(k).se);
        writeln!(out, "{:>8} {:>7} {:>16} {:>16} {:>16}", r.c, r.trials, f(1), f(2), f(4))?;
    }
    for fit in &fits {
        writeln!(out, "slope of M{}: {:.3} \u{b1} {:.3}", fit.k, fit.fit.slope, fit.fit.slope_se)?;
    }
    if plot {
        for r in &table.rows {
            let idx: Vec<i64> = records.iter().filter(|x| x.c == r.c).filter_map(|x| x.index).collect();
            let hist = histogram_report(&idx);
            write_svg(&dir.join(format!("histogram_c{}.svg", r.c)), &hist.to_svg(&format!("index histogram, c = {}", r.c)))?;
        }
        write_svg(&dir.join("moments.svg"), &moment_plot_svg(&table, &fits, &[2, 4]))?;
    }
    Ok(())
}

fn sde(a: &SdeArgs) -> LabResult<()> {
    if a.c.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
        return Err(LabError::Validation("c must be positive and finite".into()));
    }
    let curve = moment_curve(&a.c, 4, a.trials, a.seed, LimitCoefficients::HALVED)?;
    std::fs::create_dir_all(&a.out.out)?;
    let file = a.out.out.join("sde_moments.csv");
    let mut w = csv::Writer::from_path(&file)?;
    w.write_record(["c", "k", "theta", "theta_se", "index", "index_se", "degenerate"])?;
    for row in &curve.rows {
        for (k, (t, i)) in row.theta.iter().zip(&row.index).enumerate() {
            w.write_record([
                row.c.to_string(),
                (k + 1).to_string(),
                t.value.to_string(),
                t.se.to_string(),
                i.value.to_string(),
                i.se.to_string(),
                row.degenerate.to_string(),
            ])?;
        }
        println!(
            "c = {}: E[theta^2] = {:.4} \u{b1} {:.4}, E[theta^4] = {:.4} \u{b1} {:.4}",
            row.c, row.theta[1].value, row.theta[1].se, row.theta[3].value, row.theta[3].se
        );
    }
    w.flush()?;
    for (k, fit) in &curve.theta_fits {
        println!("slope of E[theta^{k}]: {:.3} \u{b1} {:.3}", fit.slope, fit.slope_se);
    }
    Ok(())
}

fn fokker_planck(a: &FokkerPlanckArgs) -> LabResult<()> {
    if !(a.c > 0.0 && a.t > 0.0 && a.c.is_finite() && a.t.is_finite()) || a.cells < 3 {
        return Err(LabError::Validation("need c > 0, t > 0 and at least 3 cells".into()));
    }
    let opts = FokkerPlanckOptions { cells: a.cells, ..Default::default() };
    let sol = fokker_planck_solve(a.c, a.t, &opts)?;
    let d = &sol.density;
    std::fs::create_dir_all(&a.out.out)?;
    let mut w = csv::Writer::from_path(a.out.out.join("density.csv"))?;
    w.write_record(["x", "p"])?;
    for (x, p) in d.x.iter().zip(&d.p) {
        w.write_record([x.to_string(), p.to_string()])?;
    }
    w.flush()?;
    println!("steps {} of dt {:.3e}", sol.steps, sol.dt);
    println!("max |mass - 1| {:.3e}", sol.max_mass_error);
    println!("symmetry defect {:.3e}", d.symmetry_defect());
    println!("boundary mass {:.3e}", sol.boundary_mass);
    println!("second moment {:.6}", d.moment(2));
    match heat_bound_fit(d) {
        Ok(h) => println!("heat bounds m = {:.4}, M = {:.4}", h.m, h.big_m),
        Err(e) => println!("heat bounds not found: {e}"),
    }
    if sol.max_mass_error > 1e-6 || d.symmetry_defect() > 1e-6 {
        return Err(LabError::Numerical("the density lost mass or symmetry".into()));
    }
    if a.plot {
        let hist = sympwalk_lab::plot::density_svg(&d.x, &d.p, &format!("density at t = {}, c = {}", a.t, a.c));
        write_svg(&a.out.out.join("density.svg"), &hist)?;
    }
    Ok(())
}

fn appendix(a: &AppendixArgs) -> LabResult<()> {
    let opts = AppendixOptions {
        quick: a.quick,
        seed: a.seed,
        segment_len: Some(a.segment_len),
        format: a.format,
        plot: a.plot,
    };
    let report = reproduce_appendix(&a.out.out, &opts)?;
    println!("{:>6} {:>4} {:>12} {:>10} {:>12} {:>10} {:>8}", "c", "k", "ours", "se", "published", "published_se", "z");
    for r in report.comparisons.iter().filter(|r| r.k <= 4) {
        println!(
            "{:>6} {:>4} {:>12.4} {:>10.4} {:>12.4} {:>10.4} {:>8.2}",
            r.c, r.k, r.ours, r.ours_se, r.published, r.published_se, r.z
        );
    }
    for f in report.fits.iter().filter(|f| f.k == 2 || f.k == 4) {
        println!("slope of M{}: {:.3} \u{b1} {:.3}", f.k, f.fit.slope, f.fit.slope_se);
    }
    println!("M2 within 3 combined standard errors: {}", report.m2_agrees);
    println!("M1, M3 within 4 standard errors of 0: {}", report.odd_vanish);
    if !a.quick && !report.passes() {
        return Err(LabError::Numerical("the regenerated table disagrees with the published one".into()));
    }
    Ok(())
}

fn selftest(seed: u64) -> LabResult<()> {
    let mut rng = rng_from_seed(seed);
    let mut failures = Vec::new();

    // A quadratic Hamiltonian flow with small nondegenerate S has index sign(S) / 2.
    let mut checked = 0;
    while checked < 10 {
        let n = 1 + checked % 2;
        let mut s = Mat::from_fn(2 * n, 2 * n, |_, _| rng.random_range(-2.0..2.0));
        s = (&s + s.transpose()) * 0.5;
        let eig = s.clone().symmetric_eigenvalues();
        if eig.iter().any(|e| e.abs() < 0.1 || e.abs() > 6.0) {
            continue;
        }
        checked += 1;
        let expected = dense_inertia(&s, 0.0).signature() / 2;
        let got = cz_index_winding(&DiscretePath::sampled_flow(&s, 64)?, &WindingOptions::default())?;
        if got != expected {
            failures.push(format!("flow index {got}, expected {expected}"));
        }
    }

    // The three n = 1 methods agree away from degeneracies.
    for t in 0..20 {
        let trial = cross_method_trial(500, 5.0, seed.wrapping_add(t))?;
        if trial.all_defined() && !trial.agree() && !trial.near_degenerate(1e-6) {
            failures.push(format!("methods disagree: {trial:?}"));
        }
    }

    // Large spectral shifts wind the lifted angle to -(2k + 1) pi.
    for k in 0..=5 {
        let noise: Vec<NoiseTriple> = (0..k).map(|_| NoiseTriple::sample(0.01, &mut rng)).collect();
        let f = f_evolution(&noise, 1e6, k, DiagonalScaling::Exact)?.0;
        if (f + (2 * k + 1) as f64 * std::f64::consts::PI).abs() > 1e-2 {
            failures.push(format!("F({k}, 1e6) = {f}"));
        }
    }

    if failures.is_empty() {
        println!("selftest passed");
        Ok(())
    } else {
        Err(LabError::Numerical(failures.join("; ")))
    }
}
