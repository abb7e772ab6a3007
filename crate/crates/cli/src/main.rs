use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tangent_core::suite::{render_report, run_suite};
use tangent_core::SmoothMap;

#[derive(Parser)]
#[command(
    name = "tangent",
    version,
    about = "Run law-checking suites on tangent-bundle structures"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a check suite and print (or write) its JSON report.
    Run {
        config: PathBuf,
        /// Write the report here instead of standard output.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Parse a map expression and print its canonical form.
    Parse {
        expr: String,
        #[arg(long = "in")]
        in_dim: usize,
        #[arg(long = "out")]
        out_dim: usize,
    },
    /// Render a JSON report.
    Report {
        #[arg(long)]
        pretty: bool,
        report: PathBuf,
    },
}

fn exit(code: i32) -> ExitCode {
    ExitCode::from(code.clamp(0, 255) as u8)
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config, output } => match run_suite(&config, output.as_deref()) {
            Ok((report, code)) => {
                if output.is_none() {
                    print!("{}", report.to_json());
                }
                exit(code)
            }
            Err(e) => {
                eprintln!("error: {e}");
                exit(e.exit_code())
            }
        },
        Command::Parse {
            expr,
            in_dim,
            out_dim,
        } => match SmoothMap::parse(&expr, in_dim, out_dim) {
            Ok(map) => {
                println!("{map}");
                exit(0)
            }
            Err(e) => {
                eprintln!("error: {e}");
                if let Some(pos) = e.position() {
                    eprintln!("  {expr}");
                    eprintln!("  {}^", " ".repeat(pos));
                }
                exit(2)
            }
        },
        Command::Report { pretty, report } => {
            let text = match std::fs::read_to_string(&report) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: {}: {e}", report.display());
                    return exit(2);
                }
            };
            let doc: serde_json::Value = match serde_json::from_str(&text) {
                Ok(d) => d,
                Err(e) => {
                    eprintln!("error: {}: {e}", report.display());
                    return exit(2);
                }
            };
            if pretty {
                print!("{}", render_report(&doc));
            } else {
                println!("{}", serde_json::to_string(&doc).unwrap_or_default());
            }
            exit(0)
        }
    }
}
