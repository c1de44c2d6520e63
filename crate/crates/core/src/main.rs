use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use apspread::harness::{self, config, suites};

#[derive(Parser)]
#[command(name = "apspread", version, about = "Free boundary KPP experiments")]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Print only the final verdict lines.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config.
    Run { config: PathBuf },
    /// Parse and validate a config; prints it with defaults filled.
    Validate { config: PathBuf },
    /// Run a built-in suite, or `all`.
    Suite { name: String },
}

fn load(path: &PathBuf) -> Result<config::ExperimentConfig, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    config::parse_config(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn run(cli: &Cli) -> Result<bool, String> {
    match &cli.command {
        Command::Validate { config } => {
            let cfg = load(config)?;
            if !cli.quiet {
                print!("{}", config::emit_config(&cfg));
            }
            println!("valid");
            Ok(true)
        }
        Command::Run { config } => {
            let cfg = load(config)?;
            let dir = cli.out.join(cfg.name());
            let rep = harness::execute(&cfg, &dir, cli.workers)
                .map_err(|e| format!("{}: {e}", dir.display()))?;
            let text = rep.render();
            if cli.quiet {
                print!("{}", text.lines().last().unwrap_or("FAIL"));
                println!();
            } else {
                print!("{text}");
            }
            Ok(rep.pass())
        }
        Command::Suite { name } => {
            let names = suites::suite_names();
            if name != "all" && !names.contains(&name.as_str()) {
                return Err(format!(
                    "unknown suite {name}; expected all or one of: {}",
                    names.join(", ")
                ));
            }
            let go = || -> Result<bool, String> {
                let write = |o: &suites::SuiteOutcome| -> Result<(), String> {
                    o.write(&cli.out)
                        .map_err(|e| format!("{}: {e}", cli.out.display()))?;
                    if !cli.quiet {
                        print!("{}", o.render());
                    }
                    println!("{}", o.summary_line());
                    Ok(())
                };
                if name == "all" {
                    let mut err = Ok(());
                    let all = suites::run_all(|o| {
                        if err.is_ok() {
                            err = write(o);
                        }
                    });
                    err?;
                    let pass = all.iter().all(|o| o.pass());
                    println!("{}", if pass { "PASS" } else { "FAIL" });
                    Ok(pass)
                } else {
                    let o = suites::run_suite(name).expect("name checked");
                    write(&o)?;
                    Ok(o.pass())
                }
            };
            match harness::pool(cli.workers) {
                Some(p) => p.install(go),
                None => go(),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
