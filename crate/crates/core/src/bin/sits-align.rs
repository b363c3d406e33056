fn main() {
    std::process::exit(sits_align::cli::run(std::env::args_os()));
}
