fn main() {
    std::process::exit(mcchan::cli::run());
}
