use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tumorstab::experiments::{
    config_hash, emit_report, fmt_float, initial_state, read_manifest, run_stability_experiment, scan_epsilon, sweep, trajectory_rows,
    write_table,
    ExperimentError, RunConfig, Shape, SolverChoice, StationaryCache, TRAJECTORY_HEADER,
};
use tumorstab::kinetics::validate_hypotheses;
use tumorstab::linearized::{build_operators, random_smooth_field, LinearOptions, LinearSolver, NormKind};
use tumorstab::nutrient::solve_nutrient;
use tumorstab::simmaps::{check_map_bounds, SamplePlan};
use tumorstab::transport::{simulate, TransportOptions, TumorState};
use tumorstab::{RadialField, RadialGrid};

#[derive(Parser)]
#[command(name = "tumorstab", version, about = "Stability experiments for a radial two-species tumor model")]
struct Cli {
    /// Run configuration (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sweeps and ensembles.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    X,
    X0,
}

#[derive(Subcommand)]
enum Command {
    /// Validate the kinetics and print the rates on a few nutrient levels.
    CheckKinetics,
    /// Solve the nutrient problem at a given log-radius.
    Nutrient {
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        z: f64,
    },
    /// Stationary solution and its residual checks.
    Stationary,
    /// Nonlinear evolution from a perturbed stationary state.
    Simulate {
        #[arg(long)]
        amplitude: Option<f64>,
        #[arg(long)]
        shape: Option<Shape>,
        #[arg(long, allow_hyphen_values = true)]
        z_offset: Option<f64>,
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Decay fits of the linearized evolution for random initial data.
    Linearize {
        #[arg(long, default_value_t = 20)]
        ensemble: usize,
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long, value_enum, default_value_t = NormArg::X)]
        norm: NormArg,
    },
    /// Similarity-map inequalities on a random sample plan.
    Maps {
        #[arg(long, value_delimiter = ',')]
        epsilon: Option<Vec<f64>>,
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Stability experiment for the configured perturbation.
    Stability,
    /// Runs over several amplitudes and grid sizes.
    Sweep {
        #[arg(long, value_delimiter = ',')]
        epsilons: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        grids: Option<Vec<usize>>,
        /// Walk the amplitudes downward and stop at the first passing run.
        #[arg(long)]
        scan: bool,
    },
    /// Check a persisted manifest, optionally re-running it.
    Report {
        manifest: PathBuf,
        #[arg(long)]
        rerun: bool,
    },
}

enum Failure {
    Experiment(String),
    Error(ExperimentError),
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        Failure::Error(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Experiment(msg)) => {
            eprintln!("FAIL: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(cli: &Cli, validate: bool) -> Result<RunConfig, ExperimentError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = &cli.out {
        cfg.output.dir = dir.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if validate {
        cfg.validate()?;
    }
    Ok(cfg)
}

fn io(path: &Path, e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Io { path: path.to_path_buf(), message: e.to_string() }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), ExperimentError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| io(path, e))?;
    std::fs::write(path, text).map_err(|e| io(path, e))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let checking = matches!(cli.command, Command::CheckKinetics);
    let cfg = load_config(&cli, !checking)?;
    let out = cfg.output.dir.clone();
    match cli.command {
        Command::CheckKinetics => {
            let spec = &cfg.kinetics;
            let report = validate_hypotheses(spec);
            println!("check,passed,worst_margin,worst_at");
            for c in &report.checks {
                println!("{},{},{},{}", c.name, c.passed, fmt_float(c.worst_margin), fmt_float(c.worst_at));
            }
            let rows = (0..=10).map(|k| {
                let c = k as f64 / 10.0;
                let r = spec.rates(c);
                vec![c, r.f_val, r.kb, r.kd, r.kp, r.kq, r.km, r.kn]
            });
            write_table(&out.join("kinetics.csv"), &["c", "F", "K_B", "K_D", "K_P", "K_Q", "K_M", "K_N"], rows)?;
            if !report.all_passed() {
                return Err(ExperimentError::Config("kinetics violate the structural hypotheses".into()).into());
            }
        }
        Command::Nutrient { z } => {
            let grid = RadialGrid::uniform(cfg.grid_size).map_err(ExperimentError::from)?;
            let sol = solve_nutrient(&cfg.kinetics, z, &grid).map_err(|e| ExperimentError::Config(e.to_string()))?;
            let path = out.join("nutrient.csv");
            let rows = (0..grid.len()).map(|i| vec![grid.nodes()[i], sol.c.values()[i], sol.c_prime.values()[i]]);
            write_table(&path, &["r", "c", "c_prime"], rows)?;
            println!("z = {z}: c(0) = {}, residual = {:e}, {} Newton steps", sol.c.values()[0], sol.residual, sol.iterations);
        }
        Command::Stationary => {
            let sol = StationaryCache::new().get(&cfg)?;
            let grid = sol.grid();
            let rows = (0..grid.len()).map(|i| {
                vec![grid.nodes()[i], sol.c_star.values()[i], sol.p_star.values()[i], sol.u_star.values()[i]]
            });
            write_table(&out.join("stationary.csv"), &["r", "c", "p", "u"], rows)?;
            let rep = &sol.residual_report;
            write_json(&out.join("stationary.json"), &serde_json::json!({ "z_star": sol.z_star, "residuals": rep }))?;
            println!("z_* = {:.12}, R_* = {:.12}, u_*(1) = {:e}", sol.z_star, sol.r_star, rep.u_boundary);
            for c in &rep.checks {
                println!("{:<40} {}", c.name, if c.passed { "ok" } else { "FAILED" });
            }
            if !rep.all_checks_passed() {
                return Err(Failure::Experiment("stationary checks failed".into()));
            }
        }
        Command::Simulate { amplitude, shape, z_offset, t_end, dt, output } => {
            let mut cfg = cfg.clone();
            if let Some(a) = amplitude {
                cfg.perturbation.amplitude = a;
            }
            if let Some(s) = shape {
                cfg.perturbation.shape = s;
            }
            if let Some(z) = z_offset {
                cfg.perturbation.z_offset = z;
            }
            if let Some(t) = t_end {
                cfg.horizon = t;
            }
            if let Some(d) = dt {
                cfg.dt = d;
            }
            cfg.validate()?;
            let sol = StationaryCache::new().get(&cfg)?;
            let init: TumorState = initial_state(&cfg, &sol)?;
            let opts = TransportOptions {
                dt: cfg.dt,
                dt_max: cfg.dt,
                output_interval: cfg.output_interval,
                record_deviations: false,
                ..Default::default()
            };
            let traj = simulate(&init, cfg.horizon, &cfg.kinetics, &sol, opts).map_err(ExperimentError::from)?;
            let path = output.unwrap_or_else(|| out.join("simulate.csv"));
            write_table(&path, &TRAJECTORY_HEADER, trajectory_rows(&traj))?;
            let manifest = path.with_extension("json");
            write_json(&manifest, &serde_json::json!({ "config": cfg, "config_hash": config_hash(&cfg), "regrids": traj.regrids }))?;
            println!("{} samples written to {}", traj.len(), path.display());
        }
        Command::Linearize { ensemble, t_end, norm } => {
            let sol = StationaryCache::new().get(&cfg)?;
            let ops = build_operators(&sol, &cfg.kinetics).map_err(ExperimentError::from)?;
            let opts = LinearOptions { dt: cfg.dt, output_interval: cfg.output_interval, ..Default::default() };
            let solver = LinearSolver::new(&ops, opts).map_err(ExperimentError::from)?;
            let kind = match norm {
                NormArg::X => NormKind::X,
                NormArg::X0 => NormKind::X0,
            };
            let horizon = t_end.unwrap_or(cfg.horizon);
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let inits: Vec<(RadialField, f64)> = (0..ensemble.max(1))
                .map(|_| {
                    let f = random_smooth_field(sol.grid(), 6, &mut rng);
                    let z = rand::Rng::gen_range(&mut rng, -1.0..1.0);
                    (f, z)
                })
                .collect();
            use rayon::prelude::*;
            let reports: Vec<_> = inits
                .par_iter()
                .map(|(f, z)| solver.solve(f, *z, horizon).and_then(|t| t.decay(kind)))
                .collect::<Result<_, _>>()
                .map_err(ExperimentError::from)?;
            let rows = reports.iter().enumerate().map(|(i, d)| vec![i as f64, d.mu_fit, d.k_fit, d.r2, d.valid as u8 as f64]);
            write_table(&out.join(format!("linearize_{kind}.csv")), &["run", "mu_fit", "k_fit", "r2", "valid"], rows)?;
            let mus: Vec<f64> = reports.iter().map(|d| d.mu_fit).collect();
            let lo = mus.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = mus.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            println!("{kind}: mu* estimate (ensemble minimum) {lo:.6}, spread {:.3e}, omega_0 {:.6}", hi - lo, ops.omega0);
            if !reports.iter().all(|d| d.valid && d.mu_fit > 0.0) {
                return Err(Failure::Experiment("some linearized runs did not decay cleanly".into()));
            }
        }
        Command::Maps { epsilon, mu, samples } => {
            let sol = StationaryCache::new().get(&cfg)?;
            let mut plan = SamplePlan { seed: cfg.seed, ..SamplePlan::default() };
            if let Some(e) = epsilon {
                plan.epsilons = e;
            }
            if let Some(m) = mu {
                plan.mu = m;
            }
            if let Some(n) = samples {
                plan.points = n;
            }
            let rep = check_map_bounds(&sol.theta_star, &plan).map_err(ExperimentError::from)?;
            let path = out.join("maps.csv");
            let mut text = String::from("id,epsilon,samples,worst_margin,constant,halving_ratio,stable\n");
            for e in &rep.entries {
                text.push_str(&format!(
                    "{},{:.16e},{},{:.16e},{:.16e},{:.16e},{}\n",
                    e.id, e.epsilon, e.samples, e.worst_margin, e.constant, e.halving_ratio, e.stable
                ));
            }
            std::fs::create_dir_all(&out).map_err(|e| io(&out, e))?;
            std::fs::write(&path, text).map_err(|e| io(&path, e))?;
            for n in &rep.notices {
                println!("notice: {n}");
            }
            println!("{} bounds evaluated, written to {}", rep.entries.len(), path.display());
            if !rep.holds() {
                return Err(Failure::Experiment("a map bound is unstable under amplitude halving".into()));
            }
        }
        Command::Stability => {
            let run = match run_stability_experiment(&cfg) {
                Ok(r) => r,
                Err(ExperimentError::Solver { source, partial }) => {
                    if let Some(traj) = partial {
                        let path = out.join("partial_trajectory.csv");
                        write_table(&path, &TRAJECTORY_HEADER, trajectory_rows(&traj))?;
                        eprintln!("partial trajectory written to {}", path.display());
                    }
                    return Err(ExperimentError::Solver { source, partial: None }.into());
                }
                Err(e) => return Err(e.into()),
            };
            let files = emit_report(&run, &out)?;
            let rep = &run.report;
            for c in &rep.inequalities {
                println!("{:<24} worst ratio {:.4} {}", c.name, c.worst_ratio, if c.pass { "ok" } else { "FAILED" });
            }
            if let Some(f) = &rep.fit_x {
                println!("mu_fit(X) = {:.6}, K = {:.4}, r2 = {:.6}", f.mu_fit, f.k_fit / rep.epsilon, f.r2);
            }
            println!("manifest: {}", files.manifest.display());
            if !rep.pass {
                return Err(Failure::Experiment(format!("stability report failed at epsilon = {}", rep.epsilon)));
            }
        }
        Command::Sweep { epsilons, grids, scan } => {
            let eps = epsilons.unwrap_or_else(|| vec![1e-3, 1e-2, 1e-1]);
            if scan {
                let res = scan_epsilon(&cfg, &eps)?;
                for (e, pass) in &res.tried {
                    println!("epsilon {e:e}: {}", if *pass { "pass" } else { "fail" });
                }
                write_json(&out.join("scan.json"), &res)?;
                return match res.edge {
                    Some(e) => {
                        println!("largest passing amplitude {e:e}");
                        Ok(())
                    }
                    None => Err(Failure::Experiment("no amplitude passed".into())),
                };
            }
            let grids = grids.unwrap_or_else(|| vec![cfg.grid_size]);
            let cfg = &cfg;
            let configs: Vec<RunConfig> = grids
                .iter()
                .flat_map(|&m| {
                    eps.iter().map(move |&e| {
                        let mut c = cfg.with_amplitude(e);
                        c.grid_size = m;
                        c.linear_response = false;
                        c.solver = SolverChoice::Direct;
                        c
                    })
                })
                .collect();
            let summary = sweep(&configs)?;
            let path = out.join("sweep.csv");
            let mut text = String::from("id,epsilon,grid_size,mu_fit_X,mu_fit_X0,K_X,pass,error\n");
            let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.16e}"));
            for r in &summary.rows {
                text.push_str(&format!(
                    "{},{:.16e},{},{},{},{},{},{}\n",
                    r.id,
                    r.epsilon,
                    r.grid_size,
                    opt(r.mu_fit_x),
                    opt(r.mu_fit_x0),
                    opt(r.k_x),
                    r.pass,
                    r.error.clone().unwrap_or_default().replace(',', ";")
                ));
            }
            std::fs::create_dir_all(&out).map_err(|e| io(&out, e))?;
            std::fs::write(&path, text).map_err(|e| io(&path, e))?;
            match summary.basin_edge {
                Some(e) => println!("largest passing amplitude {e:e}; rate spread {:.3}", summary.mu_spread.unwrap_or(0.0)),
                None => return Err(Failure::Experiment("no configuration passed".into())),
            }
        }
        Command::Report { manifest, rerun } => {
            let m = read_manifest(&manifest)?;
            if config_hash(&m.config) != m.config_hash {
                return Err(Failure::Experiment("configuration hash does not match the stored configuration".into()));
            }
            println!("config hash {} (version {})", m.config_hash, m.versions.tumorstab);
            println!("pass: {}", m.report.get("pass").and_then(|v| v.as_bool()).unwrap_or(false));
            if rerun {
                let dir = manifest.parent().unwrap_or(Path::new("."));
                let stored = dir.join(&m.config.output.trajectory);
                let run = run_stability_experiment(&m.config)?;
                let tmp = dir.join("rerun");
                let files = emit_report(&run, &tmp)?;
                let a = std::fs::read(&stored).map_err(|e| io(&stored, e))?;
                let b = std::fs::read(&files.trajectory).map_err(|e| io(&files.trajectory, e))?;
                if a != b {
                    return Err(Failure::Experiment("re-run trajectory differs from the stored table".into()));
                }
                println!("re-run reproduces {} bit for bit", stored.display());
            }
        }
    }
    Ok(())
}
