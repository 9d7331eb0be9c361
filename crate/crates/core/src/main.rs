fn main() {
    std::process::exit(bandless::cli::main_with_args(std::env::args_os()));
}
