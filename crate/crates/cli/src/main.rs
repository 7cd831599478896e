fn main() {
    std::process::exit(ridgeiv_cli::run_cli(std::env::args_os()));
}
