fn main() {
    std::process::exit(tallglmm::cli::main_with_args(std::env::args_os()));
}
