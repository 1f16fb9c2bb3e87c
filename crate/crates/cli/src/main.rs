use clap::Parser;
use shg_cli::{exit, run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => std::process::exit(exit::SUCCESS),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(exit::code_for(&e));
        }
    }
}
