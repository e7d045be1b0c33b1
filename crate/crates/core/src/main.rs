fn main() {
    std::process::exit(altproj::cli::main_with_args(std::env::args_os()));
}
