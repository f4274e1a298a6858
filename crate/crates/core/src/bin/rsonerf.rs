fn main() {
    std::process::exit(rsonerf::cli::run());
}
