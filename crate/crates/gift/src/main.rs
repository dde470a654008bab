fn main() {
    std::process::exit(gift::cli::run(std::env::args_os()));
}
