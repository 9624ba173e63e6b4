fn main() {
    std::process::exit(sharedspace::cli::run(std::env::args_os()));
}
