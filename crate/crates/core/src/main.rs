fn main() {
    std::process::exit(advsticker::cli::main_with_args(std::env::args_os()));
}
