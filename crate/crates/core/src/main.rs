fn main() {
    std::process::exit(heisenframe::cli::run(std::env::args_os()));
}
