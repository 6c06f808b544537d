fn main() {
    std::process::exit(hkflow::cli::main_with_args(std::env::args_os()));
}
