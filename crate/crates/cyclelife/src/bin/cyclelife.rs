fn main() {
    std::process::exit(cyclelife::cli::run(std::env::args_os()));
}
