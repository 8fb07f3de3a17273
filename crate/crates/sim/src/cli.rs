//! Command-line interface: flag/config resolution and the subcommands.
//!
//! Every subcommand resolves a [`RunManifest`] (defaults, then the JSON
//! config file, then flags) before any computation starts.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use kinetic_welfare_core::scenario::{
    make_initial_condition, regression_report, Evaluation, MU_EXAMPLE_1, MU_EXAMPLE_2, TAX_PAIRS,
    WELFARE_GAMMAS,
};
use kinetic_welfare_core::{Abscissa, ScenarioConfig, SweepRecord};
use serde::{Deserialize, Serialize};

use crate::experiments::{default_jobs, tax_sweep, welfare_sweep, SweepResult};
use crate::output::{
    self, create_file, distribution_rows, write_distribution_csv, write_fits, write_records,
    FitRow, Format,
};
use crate::{ExitCode, SimError};

#[derive(Debug, Parser)]
#[command(
    name = "kinetic-welfare",
    version,
    about = "Stationary income distributions under taxation and weighted welfare"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one policy point to its stationary distribution.
    Equilibrium(RunArgs),
    /// Sweep tax bounds or welfare shapes from a shared initial condition.
    #[command(subcommand)]
    Sweep(SweepCommand),
    /// Equilibrium with all taxation switched off.
    Baseline(RunArgs),
    /// Linear fit of the Gini index against the tax spread or welfare ratio.
    Fit(FitArgs),
}

#[derive(Debug, Subcommand)]
pub enum SweepCommand {
    /// Vary (tau_min, tau_max).
    Tax(TaxSweepArgs),
    /// Vary the welfare shape gamma.
    Welfare(WelfareSweepArgs),
}

/// Model parameters; each overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct ScenarioArgs {
    /// Number of income classes [default: 15].
    #[arg(long)]
    pub n: Option<usize>,
    /// Income spacing of the linear class ladder [default: 25].
    #[arg(long)]
    pub spacing: Option<f64>,
    /// Transaction amount S [default: 1].
    #[arg(long = "s")]
    pub s: Option<f64>,
    /// Total income of the initial condition.
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub tau_min: Option<f64>,
    #[arg(long)]
    pub tau_max: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Seed of the initial condition.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Convergence threshold on max |dx/dt|.
    #[arg(long)]
    pub tol: Option<f64>,
    /// RK4 step size.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Model-time limit of the equilibrium search.
    #[arg(long)]
    pub max_time: Option<f64>,
    /// JSON file with scenario fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Directory for result files; results also go to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Worker threads for sweeps [default: available processors].
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct TaxSweepArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    /// `table1`, `table2`, or a list like `0.30:0.45,0.25:0.50`.
    #[arg(long)]
    pub pairs: String,
    /// Also fit G against the tax spread (percentage points).
    #[arg(long)]
    pub fit: bool,
    /// Write each equilibrium distribution to `--out`.
    #[arg(long)]
    pub distributions: bool,
}

#[derive(Debug, Clone, Args)]
pub struct WelfareSweepArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    /// `table3`, `table4`, `start:end:count`, or a list like `0.5,0.3`.
    #[arg(long)]
    pub gammas: String,
    /// Also fit G against w_n / w_1.
    #[arg(long)]
    pub fit: bool,
    /// Write each equilibrium distribution to `--out`.
    #[arg(long)]
    pub distributions: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AbscissaArg {
    DeltaTau,
    WRatio,
}

impl From<AbscissaArg> for Abscissa {
    fn from(a: AbscissaArg) -> Self {
        match a {
            AbscissaArg::DeltaTau => Abscissa::DeltaTau,
            AbscissaArg::WRatio => Abscissa::WRatio,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Records file (CSV or JSON) from a previous sweep.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Abscissa for `--input` [default: delta-tau].
    #[arg(long, value_enum)]
    pub abscissa: Option<AbscissaArg>,
    /// Sweep to run when no `--input` is given: table1..table4 or fig3.
    #[arg(long, default_value = "fig3")]
    pub preset: String,
}

/// Scenario fields accepted in a `--config` file; all optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub n: Option<usize>,
    pub spacing: Option<f64>,
    pub s: Option<f64>,
    pub tau_min: Option<f64>,
    pub tau_max: Option<f64>,
    pub gamma: Option<f64>,
    #[serde(alias = "mu")]
    pub mu_target: Option<f64>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub dt: Option<f64>,
    pub max_time: Option<f64>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| SimError::Usage(format!("config {}: {e}", path.display())))
    }
}

/// Defaults, overridden by the config file, overridden by flags. `mu` has
/// no default unless a preset supplies one.
pub fn resolve_config(
    args: &ScenarioArgs,
    file: &ConfigFile,
    preset_mu: Option<f64>,
) -> Result<ScenarioConfig, SimError> {
    let d = ScenarioConfig::default();
    let mu_target = args.mu.or(file.mu_target).or(preset_mu).ok_or_else(|| {
        SimError::Usage("total income is required: pass --mu or set mu_target in --config".into())
    })?;
    Ok(ScenarioConfig {
        n: args.n.or(file.n).unwrap_or(d.n),
        spacing: args.spacing.or(file.spacing).unwrap_or(d.spacing),
        transaction: args.s.or(file.s).unwrap_or(d.transaction),
        tau_min: args.tau_min.or(file.tau_min).unwrap_or(d.tau_min),
        tau_max: args.tau_max.or(file.tau_max).unwrap_or(d.tau_max),
        gamma: args.gamma.or(file.gamma).unwrap_or(d.gamma),
        mu_target,
        seed: args.seed.or(file.seed).unwrap_or(d.seed),
        tol: args.tol.or(file.tol).unwrap_or(d.tol),
        dt: args.dt.or(file.dt).unwrap_or(d.dt),
        max_time: args.max_time.or(file.max_time).unwrap_or(d.max_time),
    })
}

/// Fully resolved invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub config: ScenarioConfig,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub jobs: usize,
}

impl RunManifest {
    pub fn resolve(
        command: &str,
        scenario: &ScenarioArgs,
        output: &OutputArgs,
        preset_mu: Option<f64>,
    ) -> Result<Self, SimError> {
        let file = match &scenario.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        let config = resolve_config(scenario, &file, preset_mu)?;
        config.validate()?;
        if output.jobs == Some(0) {
            return Err(SimError::Usage("--jobs must be at least 1".into()));
        }
        if let Some(dir) = &output.out {
            fs::create_dir_all(dir)?;
        }
        Ok(Self {
            command: command.to_string(),
            config,
            out: output.out.clone(),
            format: output.format,
            jobs: output.jobs.unwrap_or_else(default_jobs),
        })
    }

    fn file_name(&self, stem: &str) -> String {
        format!("{stem}.{}", self.format.extension())
    }
}

fn preset_mu(name: &str) -> Option<f64> {
    match name {
        "table1" | "table3" | "fig3" => Some(MU_EXAMPLE_1),
        "table2" | "table4" => Some(MU_EXAMPLE_2),
        _ => None,
    }
}

fn parse_number(s: &str) -> Result<f64, SimError> {
    s.trim()
        .parse()
        .map_err(|_| SimError::Usage(format!("cannot parse {s:?} as a number")))
}

/// `table1`/`table2` or comma-separated `tau_min:tau_max` pairs.
pub fn parse_pairs(spec: &str) -> Result<Vec<(f64, f64)>, SimError> {
    let spec = spec.trim();
    if spec.is_empty() {
        return Err(SimError::Usage("--pairs is empty".into()));
    }
    if matches!(spec, "table1" | "table2") {
        return Ok(TAX_PAIRS.to_vec());
    }
    spec.split(',')
        .map(|item| {
            let (lo, hi) = item
                .split_once(':')
                .ok_or_else(|| SimError::Usage(format!("pair {item:?} is not tau_min:tau_max")))?;
            Ok((parse_number(lo)?, parse_number(hi)?))
        })
        .collect()
}

/// `table3`/`table4`, `start:end:count`, or a comma-separated list.
pub fn parse_gammas(spec: &str) -> Result<Vec<f64>, SimError> {
    let spec = spec.trim();
    if spec.is_empty() {
        return Err(SimError::Usage("--gammas is empty".into()));
    }
    if matches!(spec, "table3" | "table4") {
        return Ok(WELFARE_GAMMAS.to_vec());
    }
    let parts: Vec<&str> = spec.split(':').collect();
    match parts[..] {
        [start, end, count] => {
            let (start, end) = (parse_number(start)?, parse_number(end)?);
            let count: usize = count
                .trim()
                .parse()
                .map_err(|_| SimError::Usage(format!("cannot parse {count:?} as a count")))?;
            if count < 2 {
                return Err(SimError::Usage(
                    "a gamma range needs at least 2 points".into(),
                ));
            }
            let step = (end - start) / (count - 1) as f64;
            Ok((0..count)
                .map(|i| ((start + step * i as f64) * 1e12).round() / 1e12)
                .collect())
        }
        [_] => spec.split(',').map(parse_number).collect(),
        _ => Err(SimError::Usage(format!("cannot parse gamma list {spec:?}"))),
    }
}

/// Streams for the subcommands.
pub struct Io<'a> {
    pub stdout: &'a mut dyn Write,
    pub stderr: &'a mut dyn Write,
}

pub fn run(cli: Cli, io: &mut Io<'_>) -> ExitCode {
    match dispatch(cli, io) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(io.stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli, io: &mut Io<'_>) -> Result<ExitCode, SimError> {
    match cli.command {
        Command::Equilibrium(args) => {
            let manifest = RunManifest::resolve("equilibrium", &args.scenario, &args.output, None)?;
            cmd_equilibrium(&manifest, false, io)
        }
        Command::Baseline(args) => {
            let manifest = RunManifest::resolve("baseline", &args.scenario, &args.output, None)?;
            cmd_equilibrium(&manifest, true, io)
        }
        Command::Sweep(SweepCommand::Tax(args)) => {
            let pairs = parse_pairs(&args.pairs)?;
            let manifest = RunManifest::resolve(
                "sweep tax",
                &args.scenario,
                &args.output,
                preset_mu(args.pairs.trim()),
            )?;
            let sweep = tax_sweep(&manifest.config, &pairs, manifest.jobs)?;
            finish_sweep(
                &manifest,
                "sweep_tax",
                &sweep,
                args.fit.then_some(Abscissa::DeltaTau),
                args.distributions,
                io,
            )
        }
        Command::Sweep(SweepCommand::Welfare(args)) => {
            let gammas = parse_gammas(&args.gammas)?;
            let manifest = RunManifest::resolve(
                "sweep welfare",
                &args.scenario,
                &args.output,
                preset_mu(args.gammas.trim()),
            )?;
            let sweep = welfare_sweep(&manifest.config, &gammas, manifest.jobs)?;
            finish_sweep(
                &manifest,
                "sweep_welfare",
                &sweep,
                args.fit.then_some(Abscissa::WRatio),
                args.distributions,
                io,
            )
        }
        Command::Fit(args) => cmd_fit(&args, io),
    }
}

#[derive(Serialize)]
struct EquilibriumReport<'a> {
    record: &'a SweepRecord,
    steps: u64,
    elapsed_time: f64,
    distribution: Vec<output::DistributionRow>,
}

/// Runs one equilibrium (untaxed for `baseline`) and reports it.
pub fn cmd_equilibrium(
    manifest: &RunManifest,
    untaxed: bool,
    io: &mut Io<'_>,
) -> Result<ExitCode, SimError> {
    let base = &manifest.config;
    let config = if untaxed {
        base.with_taxes(0.0, 0.0)
    } else {
        base.clone()
    };
    let x0 = make_initial_condition(base)?;
    let eval = Evaluation::run(&config, &x0)?;
    let record = eval.record();
    let ladder = eval.model.ladder();
    let x_hat = eval.equilibrium.state.fractions();

    let stem = if untaxed { "baseline" } else { "equilibrium" };
    let emit = |w: &mut dyn Write| -> Result<(), SimError> {
        match manifest.format {
            Format::Csv => write_records(w, std::slice::from_ref(&record), Format::Csv),
            Format::Json => {
                let report = EquilibriumReport {
                    record: &record,
                    steps: eval.equilibrium.steps,
                    elapsed_time: eval.equilibrium.elapsed_time,
                    distribution: distribution_rows(ladder, x_hat),
                };
                serde_json::to_writer_pretty(&mut *w, &report)?;
                writeln!(w)?;
                Ok(())
            }
        }
    };
    emit(io.stdout)?;
    if let Some(dir) = &manifest.out {
        emit(&mut create_file(dir, &manifest.file_name(stem))?)?;
        write_distribution_csv(create_file(dir, "distribution.csv")?, ladder, x_hat)?;
    }
    writeln!(
        io.stderr,
        "{stem}: G = {:.6}, TR = {:.6}, residual = {:.3e}, t = {}",
        record.gini, record.tax_revenue, record.residual, eval.equilibrium.elapsed_time
    )?;
    Ok(ExitCode::Success)
}

fn finish_sweep(
    manifest: &RunManifest,
    stem: &str,
    sweep: &SweepResult,
    fit: Option<Abscissa>,
    distributions: bool,
    io: &mut Io<'_>,
) -> Result<ExitCode, SimError> {
    let records = sweep.records();
    write_records(&mut *io.stdout, &records, manifest.format)?;
    if let Some(dir) = &manifest.out {
        write_records(
            create_file(dir, &manifest.file_name(stem))?,
            &records,
            manifest.format,
        )?;
        if distributions {
            let ladder = manifest.config.ladder()?;
            for (i, point) in sweep.points.iter().enumerate() {
                if let Some(x) = &point.distribution {
                    let name = format!("distribution_{}.csv", i + 1);
                    write_distribution_csv(create_file(dir, &name)?, &ladder, x)?;
                }
            }
        }
    } else if distributions {
        writeln!(io.stderr, "note: --distributions needs --out; skipped")?;
    }
    if let Some(abscissa) = fit {
        match regression_report(&records, abscissa) {
            Ok(f) => {
                let rows = [FitRow { abscissa, fit: f }];
                writeln!(
                    io.stderr,
                    "fit: G = {:.6} x + {:.6} (R^2 = {:.4})",
                    f.slope, f.intercept, f.r_squared
                )?;
                if let Some(dir) = &manifest.out {
                    write_fits(
                        create_file(dir, &manifest.file_name("fit"))?,
                        &rows,
                        manifest.format,
                    )?;
                }
            }
            Err(e) => writeln!(io.stderr, "fit skipped: {e}")?,
        }
    }
    report_failures(sweep, io)
}

fn report_failures(sweep: &SweepResult, io: &mut Io<'_>) -> Result<ExitCode, SimError> {
    let failed = sweep.failures();
    if failed == 0 {
        return Ok(ExitCode::Success);
    }
    for (i, p) in sweep.points.iter().enumerate() {
        if let Some(e) = &p.record.error {
            writeln!(io.stderr, "point {}: {e}", i + 1)?;
        }
    }
    writeln!(
        io.stderr,
        "{}",
        SimError::PointsFailed(failed, sweep.points.len())
    )?;
    Ok(ExitCode::NonConvergence)
}

/// Fits over a records file, or runs the sweeps of a preset and fits them.
pub fn cmd_fit(args: &FitArgs, io: &mut Io<'_>) -> Result<ExitCode, SimError> {
    if let Some(input) = &args.input {
        let records = output::read_records_file(input)?;
        let abscissa: Abscissa = args.abscissa.unwrap_or(AbscissaArg::DeltaTau).into();
        let fit = regression_report(&records, abscissa)?;
        let rows = [FitRow { abscissa, fit }];
        write_fits(&mut *io.stdout, &rows, args.output.format)?;
        if let Some(dir) = &args.output.out {
            fs::create_dir_all(dir)?;
            let name = format!("fit.{}", args.output.format.extension());
            write_fits(create_file(dir, &name)?, &rows, args.output.format)?;
        }
        return Ok(ExitCode::Success);
    }

    let preset = args.preset.trim();
    let (tax, welfare) = match preset {
        "table1" | "table2" => (true, false),
        "table3" | "table4" => (false, true),
        "fig3" => (true, true),
        other => return Err(SimError::Usage(format!("unknown preset {other:?}"))),
    };
    let manifest = RunManifest::resolve("fit", &args.scenario, &args.output, preset_mu(preset))?;
    let mut rows = Vec::new();
    let mut code = ExitCode::Success;
    let mut sweeps = Vec::new();
    if tax {
        sweeps.push((
            "sweep_tax",
            Abscissa::DeltaTau,
            tax_sweep(&manifest.config, &TAX_PAIRS, manifest.jobs)?,
        ));
    }
    if welfare {
        sweeps.push((
            "sweep_welfare",
            Abscissa::WRatio,
            welfare_sweep(&manifest.config, &WELFARE_GAMMAS, manifest.jobs)?,
        ));
    }
    for (stem, abscissa, sweep) in &sweeps {
        let records = sweep.records();
        if let Some(dir) = &manifest.out {
            write_records(
                create_file(dir, &manifest.file_name(stem))?,
                &records,
                manifest.format,
            )?;
        }
        rows.push(FitRow {
            abscissa: *abscissa,
            fit: regression_report(&records, *abscissa)?,
        });
        if report_failures(sweep, io)? != ExitCode::Success {
            code = ExitCode::NonConvergence;
        }
    }
    write_fits(&mut *io.stdout, &rows, manifest.format)?;
    if let Some(dir) = &manifest.out {
        write_fits(
            create_file(dir, &manifest.file_name("fit"))?,
            &rows,
            manifest.format,
        )?;
    }
    Ok(code)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_lists() {
        assert_eq!(parse_pairs("table1").unwrap().len(), 5);
        assert_eq!(
            parse_pairs("0.30:0.45, 0.25:0.50").unwrap(),
            vec![(0.30, 0.45), (0.25, 0.50)]
        );
        assert!(matches!(parse_pairs(""), Err(SimError::Usage(_))));
        assert!(parse_pairs("0.3").is_err());
        assert!(parse_pairs("0.3:x").is_err());
    }

    #[test]
    fn gamma_lists() {
        assert_eq!(parse_gammas("0.5:0.15:8").unwrap(), WELFARE_GAMMAS.to_vec());
        assert_eq!(parse_gammas("table4").unwrap(), WELFARE_GAMMAS.to_vec());
        assert_eq!(parse_gammas("0.5,0.2").unwrap(), vec![0.5, 0.2]);
        assert!(parse_gammas("").is_err());
        assert!(parse_gammas("0.5:0.1:1").is_err());
        assert!(parse_gammas("0.5:0.1").is_err());
    }

    #[test]
    fn mu_is_required_without_preset() {
        let err =
            resolve_config(&ScenarioArgs::default(), &ConfigFile::default(), None).unwrap_err();
        assert!(matches!(err, SimError::Usage(_)));
        let c = resolve_config(
            &ScenarioArgs::default(),
            &ConfigFile::default(),
            Some(127.65),
        )
        .unwrap();
        assert_eq!(c.mu_target, 127.65);
    }
}
