fn main() {
    std::process::exit(matshrink::cli::main_with_args(std::env::args_os()));
}
