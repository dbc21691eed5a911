fn main() {
    std::process::exit(genreg_cli::run_cli(std::env::args_os()));
}
