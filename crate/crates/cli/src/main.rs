fn main() {
    std::process::exit(rockcap_cli::run_from(std::env::args_os()));
}
