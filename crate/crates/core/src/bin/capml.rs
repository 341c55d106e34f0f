fn main() {
    std::process::exit(capml::cli::main_with_args(std::env::args_os()));
}
