fn main() {
    std::process::exit(chance_adjust::cli::main_with_args(std::env::args_os()));
}
