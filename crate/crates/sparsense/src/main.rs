fn main() {
    std::process::exit(sparsense::cli::run_from(std::env::args_os()));
}
