fn main() {
    std::process::exit(driftmap::cli::run(std::env::args_os()));
}
