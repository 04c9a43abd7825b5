fn main() {
    binhash::cli::init_threads();
    std::process::exit(binhash::cli::main_with_args(std::env::args_os()));
}
