fn main() {
    std::process::exit(randsmap::cli::run(std::env::args_os()));
}
