fn main() {
    std::process::exit(cosim::cli::main(std::env::args_os()));
}
