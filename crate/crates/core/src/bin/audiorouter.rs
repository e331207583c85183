fn main() {
    std::process::exit(audiorouter::cli::run(std::env::args_os()));
}
