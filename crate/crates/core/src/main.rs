fn main() {
    std::process::exit(vbcap::cli::run_cli(std::env::args_os()));
}
