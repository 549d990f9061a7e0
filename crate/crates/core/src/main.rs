fn main() {
    std::process::exit(ace_core::cli::run(std::env::args().collect()));
}
