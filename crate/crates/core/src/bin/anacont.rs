fn main() {
    std::process::exit(anacont::cli::main(std::env::args_os()));
}
