fn main() {
    std::process::exit(hybridsim::cli::cli_main(std::env::args()));
}
