use clap::Parser;
use geoblocks_service::cli::{run, Cli};

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GEOBLOCKS_LOG", "info")).init();
    run(Cli::parse())
}
