fn main() {
    std::process::exit(fatigue_core::cli::main_with_args(std::env::args_os()));
}
