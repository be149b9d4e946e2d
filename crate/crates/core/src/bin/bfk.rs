fn main() {
    std::process::exit(bfk::cli::run(std::env::args_os()));
}
