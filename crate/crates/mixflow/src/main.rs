fn main() {
    std::process::exit(mixflow::cli::run());
}
