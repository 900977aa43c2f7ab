fn main() {
    std::process::exit(doi_cli::run(std::env::args().collect()));
}
