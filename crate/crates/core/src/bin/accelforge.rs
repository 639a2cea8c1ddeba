fn main() {
    std::process::exit(accelforge::cli::main_with_args(std::env::args_os()));
}
