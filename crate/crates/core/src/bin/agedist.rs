use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use agedist_core::curvefit;
use agedist_core::distributions::{classify, mae, AgeDistribution, ModelKind, ModelParams, Shape};
use agedist_core::io::{self, ColumnMapping, IngestReport, ParamsFile, SimulationFile};
use agedist_core::model1::{self, feasibility, Feasibility, FreeParam};
use agedist_core::model2::{self, DEConfig};
use agedist_core::pipeline::{self, PipelineConfig, Route};
use agedist_core::simulator::{self, SimConfig};
use agedist_core::{Error, Result};

#[derive(Parser)]
#[command(name = "agedist", version, about = "Survival and activation rates for steady-state age distributions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct InputArgs {
    /// Long-format CSV with one row per country and age group.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "country")]
    country_col: String,
    #[arg(long, default_value = "age_group")]
    age_col: String,
    #[arg(long, default_value = "population")]
    pop_col: String,
}

impl InputArgs {
    fn read(&self) -> Result<IngestReport> {
        let mapping = ColumnMapping {
            country: self.country_col.clone(),
            age_group: self.age_col.clone(),
            population: self.pop_col.clone(),
        };
        let report = io::ingest_csv(&self.input, &mapping)?;
        for (country, reason) in &report.skipped {
            eprintln!("warning: skipped {country}: {reason}");
        }
        Ok(report)
    }

    fn country(&self, name: &str) -> Result<AgeDistribution> {
        let report = self.read()?;
        if let Some(dist) = report.get(name) {
            return Ok(dist.clone());
        }
        match report.skipped.iter().find(|(c, _)| c == name) {
            Some((_, reason)) => Err(Error::Config(format!("country {name:?} is invalid: {reason}"))),
            None => Err(Error::Config(format!("country {name:?} not found in input"))),
        }
    }
}

#[derive(Args, Clone)]
struct DeArgs {
    /// Generations allowed for the activation-rate search.
    #[arg(long, default_value_t = 250)]
    de_iters: usize,
    /// MAE below which the activation-rate search counts as successful.
    #[arg(long, default_value_t = 1e-4)]
    de_threshold: f64,
    /// Search survival probabilities freely instead of deriving them.
    #[arg(long)]
    de_plain: bool,
}

impl DeArgs {
    fn config(&self, seed: u64) -> DEConfig {
        DEConfig {
            max_iterations: self.de_iters,
            success_threshold: self.de_threshold,
            derive_survival: !self.de_plain,
            seed,
            ..DEConfig::default()
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelChoice {
    Auto,
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
}

#[derive(Subcommand)]
enum Command {
    /// Report which solver each country is eligible for.
    Classify {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        country: Option<String>,
    },
    /// Solve one country and write a parameter file.
    Solve {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        country: String,
        #[arg(long, value_enum, default_value = "auto")]
        model: ModelChoice,
        /// Last-group survival probability: a number, `mid`, or `rand`.
        #[arg(long, default_value = "mid")]
        pn: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        de: DeArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the monotone surrogate curve and solve it in closed form.
    FitCurve {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        country: String,
        #[arg(long, default_value = "mid")]
        pn: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// CSV with one row per breakpoint.
        #[arg(long)]
        fit_report: PathBuf,
    },
    /// Run the agent simulation for a parameter file.
    Simulate {
        #[arg(long)]
        params: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        agents: usize,
        #[arg(long, default_value_t = 350)]
        steps: usize,
        #[arg(long, default_value_t = 300)]
        burn_in: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Per-step proportions as CSV.
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the model-selection cascade over every country in a file.
    Pipeline {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        de: DeArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        agents: usize,
        #[arg(long, default_value_t = 350)]
        steps: usize,
        #[arg(long, default_value_t = 300)]
        burn_in: usize,
        #[arg(long, default_value = "mid")]
        pn: String,
        #[arg(long, default_value_t = pipeline::DEFAULT_WASSERSTEIN_WARNING)]
        wasserstein_warning: f64,
    },
}

fn parse_pn(text: &str, seed: u64) -> Result<FreeParam> {
    match text {
        "mid" => Ok(FreeParam::Midpoint),
        "rand" => Ok(FreeParam::SeededRandom(seed)),
        value => value
            .parse()
            .map(FreeParam::Value)
            .map_err(|_| Error::Config(format!("--pn expects a number, `mid` or `rand`, got {value:?}"))),
    }
}

fn classify_cmd(input: &InputArgs, country: Option<&str>) -> Result<()> {
    let report = input.read()?;
    let selected: Vec<&(String, AgeDistribution)> = match country {
        Some(name) => {
            let entry = report
                .distributions
                .iter()
                .find(|(c, _)| c == name)
                .ok_or_else(|| Error::Config(format!("country {name:?} not found in input")))?;
            vec![entry]
        }
        None => report.distributions.iter().collect(),
    };
    println!("country,groups,shape,eligible,violations");
    for (name, dist) in selected {
        let (shape, eligible) = match classify(dist) {
            Shape::MonotoneNonIncreasing => ("monotone", "model1"),
            Shape::NonMonotone => ("non-monotone", "model2|curve-fit"),
        };
        let violations = match feasibility(dist) {
            Feasibility::Feasible(_) => String::new(),
            Feasibility::Infeasible(r) => r
                .violations
                .iter()
                .map(|i| dist.labels()[*i].clone())
                .collect::<Vec<_>>()
                .join(";"),
        };
        println!("{},{},{},{},{}", csv_field(name), dist.n(), shape, eligible, csv_field(&violations));
    }
    let monotone = report
        .distributions
        .iter()
        .filter(|(_, d)| classify(d) == Shape::MonotoneNonIncreasing)
        .count();
    eprintln!(
        "{monotone} of {} countries are monotone non-increasing",
        report.distributions.len()
    );
    Ok(())
}

fn csv_field(text: &str) -> String {
    if text.contains([',', '"', '\n']) {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_string()
    }
}

fn model1_file(country: &str, target: AgeDistribution, kind: ModelKind, choice: FreeParam) -> Result<ParamsFile> {
    let survival = model1::solve(&target, choice)?;
    let state = model1::steady_state(&survival)?;
    let mut params = ModelParams::new(kind, survival, None)?;
    params
        .diagnostics
        .insert("mae".into(), mae(state.proportions(), target.proportions())?);
    params.provenance.insert("free_param".into(), choice.describe());
    let mut file = ParamsFile::new(Some(country.to_string()), target, params);
    file.free_param_choice = Some(choice);
    Ok(file)
}

fn solve_cmd(
    input: &InputArgs,
    country: &str,
    model: ModelChoice,
    pn: &str,
    seed: u64,
    de: &DeArgs,
    out: &Path,
) -> Result<()> {
    let dist = input.country(country)?;
    let choice = parse_pn(pn, seed)?;
    let file = match model {
        ModelChoice::One => model1_file(country, dist, ModelKind::Model1, choice)?,
        ModelChoice::Two => {
            let config = de.config(seed);
            let solution = model2::optimize(&dist, &config)?;
            if !solution.converged {
                eprintln!(
                    "warning: activation-rate search stopped at MAE {:e} (threshold {:e})",
                    solution.mae, config.success_threshold
                );
            }
            let mut params =
                ModelParams::new(ModelKind::Model2, solution.survival, Some(solution.activation))?;
            params.diagnostics.insert("mae".into(), solution.mae);
            params
                .diagnostics
                .insert("iterations_used".into(), solution.iterations_used as f64);
            params
                .diagnostics
                .insert("converged".into(), if solution.converged { 1.0 } else { 0.0 });
            params.provenance.insert("free_param".into(), "searched".into());
            params.provenance.insert("de_seed".into(), seed.to_string());
            let mut file = ParamsFile::new(Some(country.to_string()), dist, params);
            file.de_config = Some(config);
            file
        }
        ModelChoice::Auto => {
            let config = PipelineConfig {
                de: de.config(seed),
                sim: SimConfig::with_seed(seed),
                free_param: choice,
                ..PipelineConfig::default()
            };
            let solved = pipeline::select_and_solve(&dist, &config);
            if solved.route == Route::Failed {
                return Err(Error::Config(format!(
                    "no model reproduces {country}: {}",
                    solved.failure.unwrap_or_default()
                )));
            }
            eprintln!("route: {:?}", solved.route);
            solved
                .params_file(Some(country.to_string()), &config)
                .expect("solved routes carry parameters")
        }
    };
    io::emit_params(&file, out)
}

fn fit_curve_cmd(
    input: &InputArgs,
    country: &str,
    pn: &str,
    seed: u64,
    out: &Path,
    fit_report: &Path,
) -> Result<()> {
    let dist = input.country(country)?;
    let fit = curvefit::fit(&dist)?;
    io::write_fit_report(fit_report, &fit.per_k_table)?;
    let choice = parse_pn(pn, seed)?;
    let mut file = model1_file(country, fit.fitted.clone(), ModelKind::Model1OnFitted, choice)?;
    file.params
        .diagnostics
        .insert("wasserstein_to_original".into(), fit.wasserstein_to_original);
    file.params
        .provenance
        .insert("curve_k".into(), fit.params.k.to_string());
    file.curve = Some(fit.params);
    file.original = Some(dist);
    eprintln!(
        "k = {}, A = {:e}, B = {:e}, C = {:e}, wasserstein = {:e}",
        fit.params.k, fit.params.a, fit.params.b, fit.params.c, fit.wasserstein_to_original
    );
    io::emit_params(&file, out)
}

#[allow(clippy::too_many_arguments)]
fn simulate_cmd(
    params: &Path,
    agents: usize,
    steps: usize,
    burn_in: usize,
    seed: u64,
    trajectory: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let file = io::load_params(params)?;
    let config = SimConfig {
        num_agents: agents,
        num_steps: steps,
        burn_in,
        seed,
        record_trajectory: trajectory.is_some(),
        ..SimConfig::default()
    };
    let result = simulator::run(&file.target, &file.params, &config)?;
    if let (Some(path), Some(rows)) = (trajectory, result.trajectory.as_ref()) {
        simulator::write_trajectory_csv(BufWriter::new(File::create(path)?), &result.labels, rows)?;
    }
    let mae_vs_target = mae(&result.steady_estimate, file.target.proportions())?;
    eprintln!("MAE of the time-averaged distribution vs target: {mae_vs_target:e}");
    io::write_json(
        out,
        &SimulationFile {
            library_version: env!("CARGO_PKG_VERSION").into(),
            config,
            mae_vs_target,
            result: agedist_core::simulator::SimResult {
                trajectory: None,
                ..result
            },
        },
    )
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Classify { input, country } => classify_cmd(input, country.as_deref()),
        Command::Solve {
            input,
            country,
            model,
            pn,
            seed,
            de,
            out,
        } => solve_cmd(input, country, *model, pn, *seed, de, out),
        Command::FitCurve {
            input,
            country,
            pn,
            seed,
            out,
            fit_report,
        } => fit_curve_cmd(input, country, pn, *seed, out, fit_report),
        Command::Simulate {
            params,
            agents,
            steps,
            burn_in,
            seed,
            trajectory,
            out,
        } => simulate_cmd(params, *agents, *steps, *burn_in, *seed, trajectory.as_deref(), out),
        Command::Pipeline {
            input,
            out_dir,
            de,
            seed,
            agents,
            steps,
            burn_in,
            pn,
            wasserstein_warning,
        } => {
            let report = input.read()?;
            let config = PipelineConfig {
                de: de.config(*seed),
                sim: SimConfig {
                    num_agents: *agents,
                    num_steps: *steps,
                    burn_in: *burn_in,
                    seed: *seed,
                    ..SimConfig::default()
                },
                free_param: parse_pn(pn, *seed)?,
                wasserstein_warning: *wasserstein_warning,
                validate: true,
            };
            config.sim.validate()?;
            let result = pipeline::run_dataset(&report.distributions, &config)?;
            pipeline::write_report(&result, &config, out_dir)?;
            let counts = &result.summary.route_counts;
            println!(
                "countries: {}, model1: {}, model2: {}, curve-fit: {}, failed: {}",
                result.summary.total,
                counts[&Route::Model1],
                counts[&Route::Model2],
                counts[&Route::CurveFit],
                counts[&Route::Failed]
            );
            if let Some(mean) = result.summary.mean_wasserstein {
                println!(
                    "mean curve-fit wasserstein: {mean:e} ({} below mean)",
                    result.summary.below_mean_wasserstein
                );
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("AGEDIST_LOG"))
        .format_timestamp(None)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
