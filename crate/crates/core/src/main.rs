fn main() {
    std::process::exit(mlsrbm::cli::run(std::env::args_os()));
}
