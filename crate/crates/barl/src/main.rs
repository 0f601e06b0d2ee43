fn main() {
    std::process::exit(barl::cli::main_with_args(std::env::args_os()));
}
