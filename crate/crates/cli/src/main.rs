use std::path::PathBuf;
use std::process::ExitCode;

use capacity_rct_cli::commands::{self, SUBCOMMANDS};
use capacity_rct_cli::config::{self, KEYS};
use capacity_rct_cli::error::CliResult;
use capacity_rct_cli::{configure_threads, write_tables};
use clap::{value_parser, Arg, ArgMatches, Command};

fn cli() -> Command {
    let mut cmd = Command::new("capacity-rct")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Design and analysis of trials whose treatment is rationed by a fixed number of servers")
        .subcommand_required(true)
        .arg_required_else_help(true);
    for (name, about) in SUBCOMMANDS {
        let mut sub = Command::new(*name).about(*about).arg(
            Arg::new("config")
                .long("config")
                .value_name("PATH")
                .value_parser(value_parser!(PathBuf))
                .help("scenario file of `key = value` lines"),
        );
        for (key, help) in KEYS {
            let mut arg = Arg::new(*key)
                .long(*key)
                .value_name("VALUE")
                .allow_hyphen_values(true)
                .help(*help);
            if key.contains('_') {
                arg = arg.alias(key.replace('_', "-"));
            }
            sub = sub.arg(arg);
        }
        cmd = cmd.subcommand(sub);
    }
    cmd
}

fn run(name: &str, m: &ArgMatches) -> CliResult<()> {
    configure_threads()?;
    let overrides: Vec<(String, String)> = KEYS
        .iter()
        .filter_map(|(k, _)| m.get_one::<String>(k).map(|v| (k.to_string(), v.clone())))
        .collect();
    let loaded = config::load(m.get_one::<PathBuf>("config").map(PathBuf::as_path), &overrides)?;
    let tables = commands::run(name, &loaded)?;
    for path in write_tables(&tables, &loaded, name)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    match run(name, sub) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("capacity-rct {name}: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
