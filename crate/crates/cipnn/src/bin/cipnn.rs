fn main() {
    std::process::exit(cipnn::cli::run_cli(std::env::args_os()));
}
