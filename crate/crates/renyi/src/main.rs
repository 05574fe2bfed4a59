fn main() {
    std::process::exit(renyi::cli::run());
}
