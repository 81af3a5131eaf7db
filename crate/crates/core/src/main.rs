use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use choice_dynamics::config::{parse_scenario, parse_str, FIGURE1, FIGURE2};
use choice_dynamics::error::Error;
use choice_dynamics::scenario::{integrate, Engine, Overrides, Scenario};
use choice_dynamics::verify::{
    verify_appendix_b, verify_appendix_c, verify_ces, verify_thermo, Report,
};

#[derive(Parser)]
#[command(
    name = "choice-dynamics",
    version,
    about = "Non-equilibrium discrete choice simulations"
)]
struct Cli {
    /// Override the scenario seed (also seeds the verification suites).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the scenario time step.
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Override the scenario end time.
    #[arg(long = "t-end", global = true)]
    t_end: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a scenario and write its trajectory as CSV.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a scenario with its own engine and with the MNL equilibrium
    /// engine, writing `<stem>_neq.csv` and `<stem>_mnl.csv`.
    Compare {
        scenario: PathBuf,
        /// Directory for the two CSV files.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// CES demand against the MNL closed form.
    VerifyCes,
    /// Aggregate identities, partials and path dependence.
    VerifyThermo,
    /// Self-consistency iteration ends at a vertex.
    VerifyAppendixB,
    /// Replicator and Lotka-Volterra forms agree for small utility gaps.
    VerifyAppendixC,
    /// Compare run of the shipped figure-1 scenario.
    Figure1 {
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Compare run of the shipped figure-2 scenario.
    Figure2 {
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

enum Failure {
    Error(Error),
    Verification,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification) => ExitCode::from(3),
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            match e {
                Error::Integration { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let overrides = Overrides {
        seed: cli.seed,
        dt: cli.dt,
        t_end: cli.t_end,
    };
    let suite_seed = cli.seed.unwrap_or(1);
    match cli.command {
        Command::Run { scenario, out } => {
            let sc = parse_scenario(&scenario)?.with_overrides(overrides)?;
            write_csv(&sc, &out)?;
        }
        Command::Compare { scenario, out_dir } => {
            let sc = parse_scenario(&scenario)?.with_overrides(overrides)?;
            compare(&sc, &stem(&scenario), &out_dir)?;
        }
        Command::Figure1 { out_dir } => {
            let sc = parse_str(FIGURE1)?.with_overrides(overrides)?;
            compare(&sc, "figure1", &out_dir)?;
        }
        Command::Figure2 { out_dir } => {
            let sc = parse_str(FIGURE2)?.with_overrides(overrides)?;
            compare(&sc, "figure2", &out_dir)?;
        }
        Command::VerifyCes => report(verify_ces(suite_seed)?)?,
        Command::VerifyThermo => report(verify_thermo(suite_seed)?)?,
        Command::VerifyAppendixB => report(verify_appendix_b(suite_seed)?)?,
        Command::VerifyAppendixC => report(verify_appendix_c(suite_seed)?)?,
    }
    Ok(())
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| "scenario".into(), |s| s.to_string_lossy().into_owned())
}

fn write_csv(sc: &Scenario, out: &Path) -> Result<(), Error> {
    let log = integrate(sc)?;
    let mut w = BufWriter::new(File::create(out)?);
    log.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn compare(sc: &Scenario, stem: &str, dir: &Path) -> Result<(), Error> {
    let neq = dir.join(format!("{stem}_neq.csv"));
    let mnl = dir.join(format!("{stem}_mnl.csv"));
    write_csv(sc, &neq)?;
    let eq = Scenario {
        engine: Engine::MnlEquilibrium,
        ..sc.clone()
    };
    write_csv(&eq, &mnl)?;
    println!("wrote {} and {}", neq.display(), mnl.display());
    Ok(())
}

fn report(r: Report) -> Result<(), Failure> {
    print!("{r}");
    if r.passed() {
        Ok(())
    } else {
        Err(Failure::Verification)
    }
}
