use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("MMFUSE_LOG", "info"))
        .init();
    if let Err(e) = mmfuse::cli::run(mmfuse::cli::Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
