fn main() {
    std::process::exit(rcohull_cli::main_with(std::env::args_os()));
}
