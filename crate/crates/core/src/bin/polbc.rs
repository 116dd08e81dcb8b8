fn main() {
    std::process::exit(polbc::cli::run(std::env::args_os()));
}
