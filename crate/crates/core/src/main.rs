fn main() {
    std::process::exit(event_fourier::cli::run(std::env::args_os()));
}
