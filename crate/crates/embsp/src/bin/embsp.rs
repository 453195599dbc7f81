fn main() {
    std::process::exit(embsp::cli::main(std::env::args_os()));
}
