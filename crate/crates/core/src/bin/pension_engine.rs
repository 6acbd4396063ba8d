fn main() {
    std::process::exit(pension_engine::cli::run(std::env::args_os()));
}
