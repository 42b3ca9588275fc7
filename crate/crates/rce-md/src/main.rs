fn main() {
    std::process::exit(rce_md::cli::run());
}
