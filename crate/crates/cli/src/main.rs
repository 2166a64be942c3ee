use std::process::ExitCode;

use clap::Parser;

use remmpc::{execute, exit, Cli};

fn init_logging() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("REMMPC_LOG", "off"))
        .format_timestamp(None)
        .init();
}

fn main() -> ExitCode {
    init_logging();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() {
                exit::USAGE
            } else {
                exit::SUCCESS
            });
        }
    };
    match execute(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::from(exit::SUCCESS)
        }
        Err(e) => {
            eprintln!("remmpc: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
