fn main() {
    std::process::exit(degen_cli::run_cli(std::env::args_os()));
}
