fn main() {
    std::process::exit(timebin_qkd::cli::run(std::env::args()));
}
