fn main() {
    std::process::exit(sgstore_cli::run_cli(std::env::args_os()));
}
