fn main() {
    std::process::exit(covex::cli::run(std::env::args_os()));
}
