fn main() {
    std::process::exit(accs::cli::run(std::env::args_os()));
}
