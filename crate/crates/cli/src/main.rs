fn main() {
    std::process::exit(evoembed_cli::run(std::env::args_os()));
}
