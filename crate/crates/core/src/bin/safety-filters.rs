fn main() {
    std::process::exit(safety_filters::cli::main_with_args(std::env::args_os()));
}
