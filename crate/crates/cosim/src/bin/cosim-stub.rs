use clap::Parser;
use cosim::stub::{main_with, StubArgs};

/// Software simulator stub serving a bus of device models over named pipes.
#[derive(Parser)]
#[command(name = "cosim-stub", version)]
struct Cli {
    #[command(flatten)]
    args: StubArgs,
}

fn main() {
    let cli = Cli::parse();
    std::process::exit(main_with(&cli.args));
}
