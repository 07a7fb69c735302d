//! `isclub`: reproducible club-equilibrium experiments.
//!
//! Subcommands: `analyze` (threshold + fixed points), `sweep` (critical
//! population and equilibrium tables), `simulate` (seeded stochastic runs),
//! `phase` (direction-field grid). Every output file gets a manifest sidecar;
//! identical inputs produce byte-identical outputs.

mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use isclub::analytics::{
    equilibrium_sweep, ncrit_sweep, CriticalPoint, FixedPoint, MeanFieldModel,
};
use isclub::domain::{parse_population_spec, ClubParams, Population};
use isclub::scenarios::{ScenarioKind, ScenarioSpec, ShiftSpec};
use isclub::sig10;
use isclub::simulator::{
    ensemble, init, run, InitialMembership, PayloadMode, SimConfig,
};
use manifest::{scenario_hash, RunManifest};

#[derive(Parser)]
#[command(name = "isclub", version, about = "Membership equilibria of information sharing clubs")]
struct Cli {
    /// Directory for output files
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Report format for `analyze` (other commands always emit CSV)
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Suppress console output
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PayloadModeArg {
    FixedMultinomial,
    Poisson,
}

#[derive(Subcommand)]
enum Command {
    /// Growth threshold, fixed points and stability for a spec file
    Analyze { spec: PathBuf },
    /// Critical-population and equilibrium tables for a scenario spec
    Sweep {
        spec: PathBuf,
        /// Grid for the critical-population table (comma-separated)
        #[arg(long, value_delimiter = ',')]
        betas: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        s_maxes: Option<Vec<usize>>,
        /// Shift sizes as fractions of s_max (comma-separated)
        #[arg(long, value_delimiter = ',')]
        delta_fracs: Option<Vec<f64>>,
        /// Curves for the equilibrium-vs-N table (comma-separated)
        #[arg(long, value_delimiter = ',')]
        neq_betas: Option<Vec<f64>>,
        /// Population grid points per decade for the equilibrium table
        #[arg(long, default_value_t = 8)]
        n_per_decade: usize,
    },
    /// Seeded stochastic simulation (single run or ensemble)
    Simulate {
        spec: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 2000)]
        rounds: u64,
        #[arg(long, default_value_t = 0)]
        burn_in: u64,
        /// Ensemble size; 1 writes a trajectory, more write ensemble stats
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long, default_value_t = 0.5)]
        initial_frac: f64,
        /// Let a member's own payload satisfy its own demand
        #[arg(long)]
        self_supply: bool,
        #[arg(long, value_enum, default_value_t = PayloadModeArg::FixedMultinomial)]
        payload_mode: PayloadModeArg,
    },
    /// Direction-field grid over (n/N, P-bar)
    Phase {
        spec: PathBuf,
        #[arg(long, default_value_t = 101)]
        resolution: usize,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e)
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) =>
        {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// 1 for user errors (bad specs, bad flags), 2 for solver failures.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<isclub::Error>() {
        Some(isclub::Error::SolverFailure { .. })
        | Some(isclub::Error::NoCriticalPopulation { .. }) => 2,
        _ => 1,
    }
}

fn dispatch(cli: &Cli) -> anyhow::Result<()> {
    fs::create_dir_all(&cli.out_dir)
        .with_context(|| format!("creating {}", cli.out_dir.display()))?;
    match &cli.command {
        Command::Analyze { spec } => cmd_analyze(cli, spec),
        Command::Sweep {
            spec,
            betas,
            s_maxes,
            delta_fracs,
            neq_betas,
            n_per_decade,
        } => cmd_sweep(
            cli,
            spec,
            betas.as_deref(),
            s_maxes.as_deref(),
            delta_fracs.as_deref(),
            neq_betas.as_deref(),
            *n_per_decade,
        ),
        Command::Simulate {
            spec,
            seed,
            rounds,
            burn_in,
            seeds,
            initial_frac,
            self_supply,
            payload_mode,
        } => cmd_simulate(
            cli,
            spec,
            SimConfig {
                seed: *seed,
                rounds: *rounds,
                burn_in: *burn_in,
                payload_mode: match payload_mode {
                    PayloadModeArg::FixedMultinomial => PayloadMode::FixedMultinomial,
                    PayloadModeArg::Poisson => PayloadMode::Poisson,
                },
                self_supply: *self_supply,
            },
            *seeds,
            *initial_frac,
        ),
        Command::Phase { spec, resolution } => cmd_phase(cli, spec, *resolution),
    }
}

/// A spec file is either a population (`"peers"`) or a scenario (`"kind"`).
enum SpecFile {
    Population(Population, ClubParams),
    Scenario(ScenarioSpec),
}

struct LoadedSpec {
    parsed: SpecFile,
    bytes: Vec<u8>,
}

fn load_spec(path: &Path) -> anyhow::Result<LoadedSpec> {
    let bytes =
        fs::read(path).with_context(|| format!("reading spec {}", path.display()))?;
    let text = std::str::from_utf8(&bytes)
        .with_context(|| format!("spec {} is not UTF-8", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(text)
        .with_context(|| format!("parsing {}", path.display()))?;
    let parsed = if value.get("peers").is_some() {
        let (pop, params) = parse_population_spec(text)
            .with_context(|| format!("loading population spec {}", path.display()))?;
        SpecFile::Population(pop, params)
    } else if value.get("kind").is_some() {
        let spec = ScenarioSpec::parse(text)
            .with_context(|| format!("loading scenario spec {}", path.display()))?;
        SpecFile::Scenario(spec)
    } else {
        bail!(
            "{}: spec must contain \"peers\" (population) or \"kind\" (scenario)",
            path.display()
        );
    };
    Ok(LoadedSpec { parsed, bytes })
}

fn model_of(spec: &SpecFile) -> anyhow::Result<MeanFieldModel> {
    Ok(match spec {
        SpecFile::Population(pop, params) => MeanFieldModel::from_population(pop, *params)?,
        SpecFile::Scenario(scenario) => MeanFieldModel::from_scenario(scenario)?,
    })
}

fn write_output(cli: &Cli, name: &str, content: &str) -> anyhow::Result<()> {
    let path = cli.out_dir.join(name);
    fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
    if !cli.quiet {
        println!("wrote {}", path.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct AnalyzeReport {
    n_peers: f64,
    k: f64,
    rho: f64,
    k_rho: f64,
    d: u32,
    control_parameter: f64,
    critical_k_rho: f64,
    empty_membership_unstable: bool,
    verdict: String,
    fixed_points: Vec<FixedPoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    critical_population: Option<CriticalPoint>,
}

fn verdict(d: u32, pi: f64) -> String {
    if (pi - 1.0).abs() <= 5e-3 && d == 1 {
        "critical".into()
    } else if d == 1 && pi >= 1.0 {
        "unstable empty club".into()
    } else {
        "stable empty club".into()
    }
}

fn cmd_analyze(cli: &Cli, spec_path: &Path) -> anyhow::Result<()> {
    let spec = load_spec(spec_path)?;
    let model = model_of(&spec.parsed)?;
    let pi = model.control_parameter();
    let d = model.params().request_size();
    let critical_population = if d > 1 {
        Some(model.critical_population()?)
    } else {
        None
    };
    let report = AnalyzeReport {
        n_peers: model.population_size(),
        k: model.mean_payload(),
        rho: model.params().search_efficiency(),
        k_rho: model.mean_payload() * model.params().search_efficiency(),
        d,
        control_parameter: pi,
        critical_k_rho: model.critical_k_rho(),
        empty_membership_unstable: model.empty_membership_unstable(),
        verdict: verdict(d, pi),
        fixed_points: model.fixed_points()?,
        critical_population,
    };

    let outputs = match cli.format {
        Format::Json => {
            let body = serde_json::to_string_pretty(&report)?;
            write_output(cli, "analyze.json", &format!("{body}\n"))?;
            if !cli.quiet {
                println!("{body}");
            }
            vec!["analyze.json".to_string()]
        }
        Format::Csv => {
            let mut csv = format!(
                "# scenario {}\nn_eq,p_bar,stable,slope\n",
                scenario_hash(&spec.bytes)
            );
            for fp in &report.fixed_points {
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    sig10(fp.n_eq),
                    sig10(fp.p_bar),
                    fp.stable,
                    sig10(fp.slope)
                ));
            }
            write_output(cli, "fixed_points.csv", &csv)?;
            vec!["fixed_points.csv".to_string()]
        }
    };
    RunManifest::new(std::env::args().collect(), &spec.bytes, None, outputs)
        .write_sidecars(&cli.out_dir)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

const DEFAULT_SMAXES: [usize; 4] = [300, 500, 1000, 3000];
const DEFAULT_DELTA_FRACS: [f64; 5] = [-0.8, -0.4, 0.0, 0.4, 0.8];
const DEFAULT_NEQ_BETAS: [f64; 4] = [0.6, 0.8, 1.0, 1.2];

fn default_betas() -> Vec<f64> {
    (5..=15).map(|i| i as f64 / 10.0).collect()
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    cli: &Cli,
    spec_path: &Path,
    betas: Option<&[f64]>,
    s_maxes: Option<&[usize]>,
    delta_fracs: Option<&[f64]>,
    neq_betas: Option<&[f64]>,
    n_per_decade: usize,
) -> anyhow::Result<()> {
    let spec = load_spec(spec_path)?;
    let SpecFile::Scenario(scenario) = &spec.parsed else {
        bail!("sweep requires a scenario spec (with a \"kind\" field)");
    };
    if scenario.d != 1 {
        bail!("sweeps cover the simple-request case; got d = {}", scenario.d);
    }
    let hash = scenario_hash(&spec.bytes);
    let k_rho = scenario.k * scenario.rho;
    let mut outputs = Vec::new();

    match scenario.kind {
        ScenarioKind::ZipfPerfect => {
            let betas = betas.map(<[f64]>::to_vec).unwrap_or_else(default_betas);
            let s_maxes = s_maxes.map(<[usize]>::to_vec).unwrap_or(DEFAULT_SMAXES.to_vec());
            let rows = ncrit_sweep(&betas, &s_maxes, k_rho, None)?;
            let mut csv = format!("# scenario {hash}\nbeta,s_max,k_rho,N_crit\n");
            for r in rows {
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    sig10(r.beta),
                    r.s_max,
                    sig10(r.k_rho),
                    sig10(r.critical_population)
                ));
            }
            write_output(cli, "ncrit_vs_beta.csv", &csv)?;
            outputs.push("ncrit_vs_beta.csv".to_string());

            let neq_betas = neq_betas
                .map(<[f64]>::to_vec)
                .unwrap_or(DEFAULT_NEQ_BETAS.to_vec());
            if n_per_decade == 0 {
                bail!("--n-per-decade must be positive");
            }
            let populations: Vec<f64> = (0..=5 * n_per_decade)
                .map(|i| 10f64.powf(i as f64 / n_per_decade as f64))
                .collect();
            let rows = equilibrium_sweep(&neq_betas, scenario.s_max, &populations, k_rho)?;
            let mut csv = format!("# scenario {hash}\nbeta,s_max,N,k_rho,n_eq_frac,p_bar\n");
            for r in rows {
                csv.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    sig10(r.beta),
                    r.s_max,
                    sig10(r.population),
                    sig10(r.k_rho),
                    sig10(r.n_eq_frac),
                    sig10(r.p_bar)
                ));
            }
            write_output(cli, "neq_vs_Nkrho.csv", &csv)?;
            outputs.push("neq_vs_Nkrho.csv".to_string());
        }
        ScenarioKind::ZipfShift => {
            let fracs = delta_fracs
                .map(<[f64]>::to_vec)
                .unwrap_or(DEFAULT_DELTA_FRACS.to_vec());
            let mut csv =
                format!("# scenario {hash}\ndelta,delta_frac,beta,s_max,k_rho,N_crit\n");
            for frac in fracs {
                let delta = (frac * scenario.s_max as f64).round() as i64;
                let shift = ShiftSpec::new(delta, scenario.direction);
                let rows = ncrit_sweep(&[scenario.beta], &[scenario.s_max], k_rho, Some(&shift))?;
                let r = rows[0];
                csv.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    delta,
                    sig10(delta as f64 / scenario.s_max as f64),
                    sig10(r.beta),
                    r.s_max,
                    sig10(r.k_rho),
                    sig10(r.critical_population)
                ));
            }
            write_output(cli, "ncrit_vs_delta.csv", &csv)?;
            outputs.push("ncrit_vs_delta.csv".to_string());
        }
    }

    RunManifest::new(std::env::args().collect(), &spec.bytes, None, outputs)
        .write_sidecars(&cli.out_dir)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SimulateSummary {
    n_peers: usize,
    n_seeds: u64,
    rounds: u64,
    burn_in: u64,
    absorbed_seeds: u64,
    sustained_seeds: u64,
    mean_equilibrium_frac: f64,
    std_equilibrium_frac: f64,
}

fn cmd_simulate(
    cli: &Cli,
    spec_path: &Path,
    cfg: SimConfig,
    seeds: u64,
    initial_frac: f64,
) -> anyhow::Result<()> {
    let spec = load_spec(spec_path)?;
    let (pop, params) = match &spec.parsed {
        SpecFile::Population(pop, params) => (pop.clone(), *params),
        SpecFile::Scenario(scenario) => scenario.population()?,
    };
    let initial = InitialMembership::Fraction(initial_frac);
    let mut outputs = Vec::new();

    let summary = if seeds == 1 {
        let mut state = init(&pop, params, &cfg, &initial)?;
        let traj = run(&mut state, cfg.rounds);
        write_output(cli, "trajectory.csv", &traj.to_csv())?;
        outputs.push("trajectory.csv".to_string());
        let frac = traj.equilibrium_frac(pop.len(), cfg.burn_in);
        SimulateSummary {
            n_peers: pop.len(),
            n_seeds: 1,
            rounds: cfg.rounds,
            burn_in: cfg.burn_in,
            absorbed_seeds: u64::from(traj.final_size() == 0),
            sustained_seeds: u64::from(traj.final_size() != 0),
            mean_equilibrium_frac: frac,
            std_equilibrium_frac: 0.0,
        }
    } else {
        let ens = ensemble(&pop, params, &cfg, &initial, seeds)?;
        write_output(cli, "ensemble.csv", &ens.to_csv())?;
        outputs.push("ensemble.csv".to_string());
        SimulateSummary {
            n_peers: pop.len(),
            n_seeds: seeds,
            rounds: cfg.rounds,
            burn_in: cfg.burn_in,
            absorbed_seeds: ens.absorbed_seeds,
            sustained_seeds: ens.sustained_seeds,
            mean_equilibrium_frac: ens.mean_equilibrium_frac,
            std_equilibrium_frac: ens.std_equilibrium_frac,
        }
    };
    let body = serde_json::to_string_pretty(&summary)?;
    write_output(cli, "summary.json", &format!("{body}\n"))?;
    outputs.push("summary.json".to_string());

    RunManifest::new(std::env::args().collect(), &spec.bytes, Some(cfg.seed), outputs)
        .write_sidecars(&cli.out_dir)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// phase
// ---------------------------------------------------------------------------

fn cmd_phase(cli: &Cli, spec_path: &Path, resolution: usize) -> anyhow::Result<()> {
    let spec = load_spec(spec_path)?;
    let model = model_of(&spec.parsed)?;
    let grid = model.phase_field(resolution)?;
    let mut csv = format!("# scenario {}\nn_frac,p_bar,phase\n", scenario_hash(&spec.bytes));
    for p in grid {
        let phase = match p.phase {
            isclub::analytics::Phase::Growth => "growth",
            isclub::analytics::Phase::Shrinkage => "shrinkage",
            isclub::analytics::Phase::Boundary => "boundary",
        };
        csv.push_str(&format!("{},{},{phase}\n", sig10(p.n_frac), sig10(p.p_bar)));
    }
    write_output(cli, "phase.csv", &csv)?;
    RunManifest::new(
        std::env::args().collect(),
        &spec.bytes,
        None,
        vec!["phase.csv".to_string()],
    )
    .write_sidecars(&cli.out_dir)?;
    Ok(())
}
