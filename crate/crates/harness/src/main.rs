fn main() {
    std::process::exit(glad_harness::cli::run(std::env::args_os()));
}
