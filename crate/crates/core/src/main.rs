fn main() {
    std::process::exit(brd::cli::run(std::env::args_os()));
}
