fn main() {
    std::process::exit(pgpois::cli::run_cli(std::env::args_os()));
}
