fn main() {
    std::process::exit(cruda::cli::main_with_args(std::env::args_os()));
}
