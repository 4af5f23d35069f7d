fn main() {
    std::process::exit(polysplit::cli::run(std::env::args_os()));
}
