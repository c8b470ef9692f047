fn main() {
    std::process::exit(streamaad::cli::run(std::env::args_os()));
}
