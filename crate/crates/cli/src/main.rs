fn main() {
    std::process::exit(embedrel_cli::run(std::env::args_os()));
}
