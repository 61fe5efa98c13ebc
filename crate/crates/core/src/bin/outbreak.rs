fn main() {
    std::process::exit(outbreak::cli::run(std::env::args_os()));
}
