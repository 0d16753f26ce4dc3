fn main() {
    std::process::exit(pointvortex::cli::run_cli(std::env::args_os()));
}
