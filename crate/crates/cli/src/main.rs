fn main() {
    std::process::exit(levynoise_cli::run(std::env::args_os()));
}
