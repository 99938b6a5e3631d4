fn main() {
    std::process::exit(cplab::cli::cli_main(std::env::args_os()));
}
