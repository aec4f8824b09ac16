fn main() {
    std::process::exit(met_cli::run(std::env::args_os()));
}
