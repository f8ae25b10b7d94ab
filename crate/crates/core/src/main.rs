fn main() {
    std::process::exit(centertrack::cli::run(std::env::args_os()));
}
