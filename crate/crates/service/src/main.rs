fn main() {
    std::process::exit(blocks_advice::cli::main_with_args(std::env::args_os()));
}
