fn main() {
    std::process::exit(orbmag::cli::run_cli(std::env::args_os()));
}
