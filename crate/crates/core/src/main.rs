use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use squidqct::config::{Config, ParameterSet};
use squidqct::error::{Error, Result};
use squidqct::exec::{init_thread_pool_from_env, Execution};
use squidqct::lyapunov::lambda_of_series;
use squidqct::observables::{cluster_count, poincare};
use squidqct::qsd::{evolve, TrajectoryRecord};
use squidqct::sweep::{
    cell_specs, dip_report, labels_of, monotonicity_report, run_sweep, CellSpec, Provenance, SweepTable,
};
use squidqct::validation;

#[derive(Parser)]
#[command(name = "squidqct", version, about = "Quantum state diffusion for driven rf-SQUIDs")]
struct Cli {
    /// Configuration file (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; all written paths are relative to it.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CellArgs {
    /// Parameter set (ħ_eff label).
    #[arg(long, default_value = "2.6")]
    label: String,
    /// Coupling strength D.
    #[arg(long)]
    coupling: f64,
    #[arg(long, default_value_t = 0)]
    replicate: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Print the reduced model of a parameter set.
    Reduce {
        #[arg(long, default_value = "2.6")]
        label: String,
    },
    /// Integrate one trajectory and write trajectory.csv.
    Simulate(CellArgs),
    /// Stroboscopic section of a trajectory, written to section.csv.
    Poincare {
        #[command(flatten)]
        cell: CellArgs,
        /// Read this trajectory CSV instead of simulating.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Stretching curve and λ_m of a trajectory, written to stretching.csv.
    Lyapunov {
        #[command(flatten)]
        cell: CellArgs,
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Run or resume the configured sweep, writing sweep.csv.
    Sweep,
    /// Monotonicity and dip statistics of a sweep CSV.
    Report {
        /// Sweep CSV (default: sweep.csv in the output directory).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Run the oracle suites; exits with 2 if any check fails.
    Validate,
}

enum Failure {
    Error(Error),
    Validation(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::UnknownKeys(_) | Error::InvalidParameter { .. } | Error::Config(_) | Error::Parse(_) => {
                Failure::Validation(e.to_string())
            }
            e => Failure::Error(e),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Validation(msg)) => {
            eprintln!("validation failed: {msg}");
            ExitCode::from(2)
        }
    }
}

fn write_file(path: &Path, write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

fn spec_for(cfg: &Config, args: &CellArgs) -> Result<CellSpec> {
    let set = ParameterSet::builtin(&args.label)?;
    let grid = cfg.sweep.d_grid()?;
    // stream index of the nearest grid coupling, so a cell reruns its sweep noise
    let d_index = grid
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - args.coupling).abs().total_cmp(&(b.1 - args.coupling).abs()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    Ok(CellSpec { set, d_index, coupling: args.coupling, replicate: args.replicate })
}

fn simulate(cfg: &Config, spec: &CellSpec) -> Result<TrajectoryRecord> {
    let model = spec.set.model()?;
    let icfg = cfg.integrator.build(&model)?;
    let t_end = cfg.integrator.total_periods() as f64 * model.period();
    let mut noise = spec.noise(cfg.sweep.master_seed);
    evolve(cfg.physical.alpha0(), &model, spec.coupling, t_end, &icfg, &mut noise)
}

fn load_or_simulate(cfg: &Config, spec: &CellSpec, path: &Option<PathBuf>) -> Result<TrajectoryRecord> {
    match path {
        Some(p) => TrajectoryRecord::read_csv(BufReader::new(fs::File::open(p)?)),
        None => simulate(cfg, spec),
    }
}

fn run(cli: Cli) -> std::result::Result<(), Failure> {
    init_thread_pool_from_env();
    let cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    let out = cli.out.clone();
    fs::create_dir_all(&out).map_err(Error::from)?;
    let prov = Provenance::of(&cfg);

    match cli.command {
        Command::Reduce { label } => {
            let set = ParameterSet::builtin(&label)?;
            let m = set.model()?;
            let k = squidqct::circuit::PhysicalConstants::codata2018();
            let rows = [
                ("label", label.clone()),
                ("beta_c", format!("{:.6}", m.beta_c)),
                ("kappa", format!("{:.6}", m.kappa)),
                ("phi_ex0", format!("{:.6}", m.phi_ex0)),
                ("omega_d_ratio", format!("{:.6}", m.omega_d_ratio)),
                ("omega0", format!("{:.6e}", m.omega0)),
                ("beta_l", format!("{:.6}", set.squid.beta_l(&k))),
            ];
            for (key, v) in rows {
                println!("{key:<14}= {v}");
            }
        }
        Command::Simulate(args) => {
            let spec = spec_for(&cfg, &args)?;
            let tr = simulate(&cfg, &spec)?;
            let path = out.join("trajectory.csv");
            write_file(&path, |w| tr.write_csv(w))?;
            prov.write_meta(&out.join("trajectory.csv.meta"), &[])?;
            println!("wrote {} samples to {}", tr.len(), path.display());
        }
        Command::Poincare { cell, trajectory } => {
            let spec = spec_for(&cfg, &cell)?;
            let model = spec.set.model()?;
            let tr = load_or_simulate(&cfg, &spec, &trajectory)?;
            let sw = &cfg.sweep;
            let sec = poincare(&tr, &model, sw.poincare_phase, sw.poincare_points, sw.poincare_skip_periods)?;
            write_file(&out.join("section.csv"), |w| sec.write_csv(w))?;
            prov.write_meta(&out.join("section.csv.meta"), &[])?;
            println!("points = {}\nclusters = {}", sec.len(), cluster_count(&sec, sw.linkage()));
        }
        Command::Lyapunov { cell, trajectory } => {
            let spec = spec_for(&cfg, &cell)?;
            let tr = load_or_simulate(&cfg, &spec, &trajectory)?;
            let spp = cfg.integrator.samples_per_period as usize;
            let skip = if trajectory.is_some() { 0 } else { cfg.integrator.transient_periods * spp };
            let rec = tr.skip(skip);
            let emb = cfg.embedding.build()?;
            let a = lambda_of_series(&rec.mean_phi, rec.sample_spacing(), &emb, cfg.embedding.fit(), cfg.embedding.min_fit_points, exec)?;
            write_file(&out.join("stretching.csv"), |w| a.curve.write_csv(w))?;
            prov.write_meta(&out.join("stretching.csv.meta"), &[])?;
            let e = a.estimate;
            println!("lambda_per_sample    = {}", e.lambda_per_sample);
            println!("lambda_per_unit_time = {}", e.lambda_per_unit_time);
            println!("fit_range            = {} {}", e.fit_range.0, e.fit_range.1);
            println!("fit_residual         = {}", e.fit_residual);
            println!("valid_refs           = {}", a.curve.valid_refs);
        }
        Command::Sweep => {
            let n = cell_specs(&cfg)?.len();
            let table = run_sweep(&cfg, &out, exec)?;
            let failed = table.cells.iter().filter(|c| !c.is_ok()).count();
            println!("{n} cells, {failed} failed; table at {}", out.join("sweep.csv").display());
        }
        Command::Report { input } => {
            let path = input.unwrap_or_else(|| out.join("sweep.csv"));
            let text = fs::read_to_string(&path).map_err(Error::from)?;
            let cells = SweepTable::read_cells(&text)?;
            let mut report = String::new();
            for label in labels_of(&cells) {
                report.push_str(&format!("[{label}]\n"));
                match monotonicity_report(&cells, &label) {
                    Ok(m) => {
                        report.push_str(&format!("cells = {}\nspearman = {:.4}\ninversions = {}\n", m.cells, m.spearman, m.inversions));
                        if let Some(h) = m.hinge {
                            report.push_str(&format!(
                                "hinge_break = {:.6}\nhinge_slope_low = {:.6}\nhinge_slope_high = {:.6}\n",
                                h.break_point, h.slope_low, h.slope_high
                            ));
                        }
                    }
                    Err(e) => report.push_str(&format!("monotonicity = unavailable ({e})\n")),
                }
                let dip = dip_report(&cells, &label);
                for (name, d) in [("lambda", dip.lambda_dip), ("delta", dip.delta_dip)] {
                    match d {
                        Some(d) => report.push_str(&format!("{name}_dip = {:.6} (depth {:.3})\n", d.location, d.depth)),
                        None => report.push_str(&format!("{name}_dip = none\n")),
                    }
                }
                report.push_str(&format!("dips_coincide = {}\n\n", dip.coincident));
            }
            print!("{report}");
            fs::write(out.join("report.txt"), &report).map_err(Error::from)?;
        }
        Command::Validate => {
            let outcomes = validation::run_all(cfg.sweep.master_seed, exec)?;
            for o in &outcomes {
                println!("{o}");
            }
            if outcomes.iter().any(|o| !o.pass) {
                return Err(Failure::Validation("oracle suite reported failures".into()));
            }
        }
    }
    Ok(())
}
