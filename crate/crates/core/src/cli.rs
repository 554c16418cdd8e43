//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 a run hit a
//! monitor violation (collision, disconnection or non-finite state), or a
//! verification check failed.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::output;
use crate::scenario::{Scenario, ScenarioError};
use crate::sim::Simulation;
use crate::verify::{self, Suite};

#[derive(Debug, Parser)]
#[command(name = "swarmtrack", version, about = "Distributed swarm tracking of time-varying optima")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a scenario and write trace, metrics and report files.
    Run {
        /// Scenario file, or a preset name such as `presets/single_fig1`.
        scenario: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override a scenario value, e.g. `--set integration.t_end=10`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Run the numerical oracle suites.
    Verify {
        #[arg(value_enum, default_value_t = SuiteArg::All)]
        suite: SuiteArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Check these scenarios instead of the built-in presets.
        #[arg(long)]
        scenario: Vec<String>,
        #[arg(long, value_enum, default_value_t = Format::Human)]
        format: Format,
    },
    /// Run one simulation per value of a scenario parameter.
    Sweep {
        scenario: String,
        /// Dotted parameter path, e.g. `integration.dt`.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<String>,
        #[arg(long, default_value = "sweep")]
        out: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Run the simulations on separate threads.
        #[arg(long)]
        parallel: bool,
    },
    /// Print the built-in scenarios.
    Presets {
        #[arg(long, value_enum, default_value_t = PresetFormat::Human)]
        format: PresetFormat,
        #[arg(long)]
        name: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SuiteArg {
    All,
    Cost,
    Potential,
    Optimum,
    Averaged,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::All => Suite::All,
            SuiteArg::Cost => Suite::Cost,
            SuiteArg::Potential => Suite::Potential,
            SuiteArg::Optimum => Suite::Optimum,
            SuiteArg::Averaged => Suite::Averaged,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Human,
    Machine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetFormat {
    Human,
    Machine,
    Toml,
}

const EXIT_USAGE: u8 = 1;
const EXIT_VIOLATION: u8 = 2;

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

/// Loads a scenario file. A missing path whose file stem names a preset
/// (`single_fig1`, `presets/double_fig2.toml`, ...) resolves to that preset.
pub fn load_scenario(spec: &str, overrides: &[String]) -> Result<Scenario, ScenarioError> {
    let path = Path::new(spec);
    if path.exists() {
        return Scenario::load(path, overrides);
    }
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or(spec);
    match Scenario::preset(stem) {
        Some(p) => Scenario::from_toml_str_with(&p.to_toml_string(), overrides),
        None => Scenario::load(path, overrides),
    }
}

pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    ExitCode::from(execute(cli))
}

pub fn execute(cli: Cli) -> u8 {
    match cli.command {
        Command::Run { scenario, out, set } => cmd_run(&scenario, &out, &set),
        Command::Verify {
            suite,
            seed,
            scenario,
            format,
        } => cmd_verify(suite.into(), seed, &scenario, format),
        Command::Sweep {
            scenario,
            param,
            values,
            out,
            set,
            parallel,
        } => cmd_sweep(&scenario, &param, &values, &out, &set, parallel),
        Command::Presets { format, name } => cmd_presets(format, name.as_deref()),
    }
}

struct RunSummary {
    completed: bool,
    violation: bool,
    final_center_error: f64,
    max_center_error: f64,
    min_pair_distance: f64,
    gain_violations: usize,
}

fn simulate(scenario: &Scenario, out: &Path) -> Result<RunSummary, String> {
    let resolved = scenario.resolve().map_err(|e| e.to_string())?;
    let sim = Simulation::new(resolved.config, resolved.team, resolved.positions).map_err(|e| e.to_string())?;
    let run = sim.run();
    output::write_run(out, scenario, &run).map_err(|e| format!("cannot write to {}: {e}", out.display()))?;
    let report = run.report();
    let ce = report.extremes("center_error");
    Ok(RunSummary {
        completed: report.completed,
        violation: report.has_monitor_violation(),
        final_center_error: ce.map_or(f64::NAN, |e| e.last),
        max_center_error: ce.map_or(f64::NAN, |e| e.max),
        min_pair_distance: report.extremes("min_pair_distance").map_or(f64::NAN, |e| e.min),
        gain_violations: report.gain_violations,
    })
}

fn cmd_run(scenario: &str, out: &Path, set: &[String]) -> u8 {
    let sc = match load_scenario(scenario, set) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    match simulate(&sc, out) {
        Ok(summary) => {
            let report = std::fs::read_to_string(out.join(output::REPORT_FILE)).unwrap_or_default();
            emit(report.split("[machine]").next().unwrap_or_default());
            emit(&format!("Files written to {}\n", out.display()));
            if summary.violation {
                EXIT_VIOLATION
            } else {
                0
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

fn cmd_verify(suite: Suite, seed: u64, scenarios: &[String], format: Format) -> u8 {
    let mut loaded = Vec::new();
    for s in scenarios {
        match load_scenario(s, &[]) {
            Ok(sc) => loaded.push(sc),
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_USAGE;
            }
        }
    }
    match verify::run_suite(suite, seed, &loaded) {
        Ok(report) => {
            match format {
                Format::Human => emit(&report.to_human()),
                Format::Machine => emit(&report.to_kv()),
            }
            if report.passed() {
                0
            } else {
                EXIT_VIOLATION
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

fn sanitize(value: &str) -> String {
    value
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '+') { c } else { '_' })
        .collect()
}

fn cmd_sweep(scenario: &str, param: &str, values: &[String], out: &Path, set: &[String], parallel: bool) -> u8 {
    let values: Vec<&String> = values.iter().filter(|v| !v.trim().is_empty()).collect();
    if values.is_empty() {
        eprintln!("error: --values needs at least one value");
        return EXIT_USAGE;
    }
    let mut jobs = Vec::new();
    for (k, v) in values.iter().enumerate() {
        let mut overrides = set.to_vec();
        overrides.push(format!("{param}={v}"));
        let sc = match load_scenario(scenario, &overrides).and_then(|s| s.resolve().map(|_| s)) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("error: {param}={v}: {e}");
                return EXIT_USAGE;
            }
        };
        jobs.push(((*v).clone(), out.join(format!("{k:02}_{}", sanitize(v))), sc));
    }
    let results: Vec<Result<RunSummary, String>> = if parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = jobs
                .iter()
                .map(|(_, dir, sc)| scope.spawn(move || simulate(sc, dir)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err("run panicked".into())))
                .collect()
        })
    } else {
        jobs.iter().map(|(_, dir, sc)| simulate(sc, dir)).collect()
    };

    let mut csv = String::from(
        "value,dir,completed,final_center_error,max_center_error,min_pair_distance,gain_violations,monitor_violation\n",
    );
    let mut code = 0;
    for ((value, dir, _), res) in jobs.iter().zip(&results) {
        let dir_name = dir.file_name().and_then(|s| s.to_str()).unwrap_or_default();
        match res {
            Ok(s) => {
                csv.push_str(&format!(
                    "{value},{dir_name},{},{:.12e},{:.12e},{:.12e},{},{}\n",
                    u8::from(s.completed),
                    s.final_center_error,
                    s.max_center_error,
                    s.min_pair_distance,
                    s.gain_violations,
                    u8::from(s.violation)
                ));
                if s.violation {
                    code = code.max(EXIT_VIOLATION);
                }
                emit(&format!(
                    "{param}={value}: final center_error {:.3e}, min distance {:.3e}{}\n",
                    s.final_center_error,
                    s.min_pair_distance,
                    if s.violation { " (monitor violation)" } else { "" }
                ));
            }
            Err(e) => {
                eprintln!("error: {param}={value}: {e}");
                return EXIT_USAGE;
            }
        }
    }
    if let Err(e) = std::fs::create_dir_all(out).and_then(|_| output::write_atomic(&out.join("summary.csv"), csv.as_bytes())) {
        eprintln!("error: cannot write summary: {e}");
        return EXIT_USAGE;
    }
    emit(&format!("Summary written to {}\n", out.join("summary.csv").display()));
    code
}

fn describe(name: &str) -> &'static str {
    match name {
        "single_fig1" => "single integrators, f_i = ||x - i(sin 0.2t, cos 0.2t)||^2, alpha=2 beta=5 tau=1",
        "double_fig2" => "double integrators, f_i = (x + 2i sin(0.5t)/(t+1))^2 + (y + i sin(0.1t))^2, alpha=10 beta=20",
        _ => "",
    }
}

fn cmd_presets(format: PresetFormat, name: Option<&str>) -> u8 {
    let names: Vec<&str> = match name {
        Some(n) if Scenario::preset(n).is_some() => vec![n],
        Some(n) => {
            eprintln!("error: unknown preset `{n}` (known: {})", Scenario::preset_names().join(", "));
            return EXIT_USAGE;
        }
        None => Scenario::preset_names().to_vec(),
    };
    let mut text = String::new();
    for (k, n) in names.iter().enumerate() {
        let sc = Scenario::preset(n).expect("known preset");
        match format {
            PresetFormat::Human => {
                if k > 0 {
                    text.push('\n');
                }
                text += &format!("{n}: {}\n", describe(n));
                for (key, value) in sc.to_key_values() {
                    text += &format!("  {key} = {value}\n");
                }
            }
            PresetFormat::Machine => {
                for (key, value) in sc.to_key_values() {
                    text += &format!("preset.{n}.{key}={value}\n");
                }
            }
            PresetFormat::Toml => {
                if names.len() > 1 {
                    text += &format!("# preset: {n}\n");
                }
                text += &sc.to_toml_string();
                if k + 1 < names.len() {
                    text.push('\n');
                }
            }
        }
    }
    emit(&text);
    0
}
