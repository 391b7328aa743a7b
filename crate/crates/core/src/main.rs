fn main() {
    std::process::exit(markov_ergodic::cli::main_with_args(std::env::args_os()));
}
