fn main() {
    std::process::exit(perturbkit::cli::run());
}
