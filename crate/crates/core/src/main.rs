fn main() {
    std::process::exit(depagg::cli::main_with_args(std::env::args_os()));
}
