use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use alexbary::cli::{cmd_rate, cmd_solve, cmd_verify, fixture_names, ConfigSource};

#[derive(Parser)]
#[command(name = "alexbary", version, about = "Barycenters and tangent-cone checks on Alexandrov spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Input {
    /// Experiment config (JSON).
    #[arg(long, value_name = "FILE", conflicts_with = "fixture", required_unless_present = "fixture")]
    config: Option<PathBuf>,
    /// Use a bundled config instead of a file.
    #[arg(long, value_name = "NAME")]
    fixture: Option<String>,
    /// Output directory; overrides the config and $ALEXBARY_OUT_DIR.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

impl Input {
    fn source(&self) -> ConfigSource {
        match (&self.config, &self.fixture) {
            (Some(p), _) => ConfigSource::File(p.clone()),
            (None, Some(n)) => ConfigSource::Fixture(n.clone()),
            (None, None) => unreachable!("clap requires one of --config/--fixture"),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the barycenter; writes barycenter.json and trace.csv.
    Solve(Input),
    /// Run verification checks; writes <check>.json and verify.csv.
    Verify {
        #[command(flatten)]
        input: Input,
        /// Restrict to these checks (repeatable).
        #[arg(long = "check", value_name = "NAME")]
        checks: Vec<String>,
    },
    /// Estimate the U-statistic rate; writes rate.csv and rate.json.
    Rate(Input),
    /// List the bundled fixtures.
    Fixtures,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let code = match &cli.command {
        Command::Solve(i) => cmd_solve(&i.source(), i.out.as_deref()),
        Command::Verify { input, checks } => cmd_verify(&input.source(), checks, input.out.as_deref()),
        Command::Rate(i) => cmd_rate(&i.source(), i.out.as_deref()),
        Command::Fixtures => {
            for n in fixture_names() {
                println!("{n}");
            }
            0
        }
    };
    ExitCode::from(code as u8)
}
