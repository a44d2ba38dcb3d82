fn main() {
    std::process::exit(tetris_sim::cli::main_with_args(std::env::args_os()));
}
