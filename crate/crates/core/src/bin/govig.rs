fn main() {
    std::process::exit(govig::cli::run(std::env::args_os()));
}
