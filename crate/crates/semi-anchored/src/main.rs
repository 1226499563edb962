use std::process::ExitCode;

fn main() -> ExitCode {
    // Verbosity comes from the standard RUST_LOG filter (warnings by
    // default); all diagnostics go to stderr so artifacts stay clean.
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    ExitCode::from(semi_anchored::cli::run(std::env::args()) as u8)
}
