fn main() {
    std::process::exit(dsa_core::cli::run_command(std::env::args_os()));
}
