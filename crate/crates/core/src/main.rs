fn main() {
    std::process::exit(spinmetro::harness::cli::run(std::env::args().collect()));
}
