fn main() {
    std::process::exit(symvi::cli::main_with_args(std::env::args_os()));
}
