fn main() {
    std::process::exit(sfmkit::cli::run_cli(std::env::args_os()));
}
