use clap::Parser;

fn main() {
    let cli = gpmix::cli::Cli::parse();
    if let Err(err) = gpmix::cli::run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
