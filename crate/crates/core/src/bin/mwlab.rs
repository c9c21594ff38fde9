fn main() {
    std::process::exit(mwlab::cli::run());
}
