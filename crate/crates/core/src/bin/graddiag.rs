fn main() {
    std::process::exit(graddiag::cli::main_exit_code());
}
