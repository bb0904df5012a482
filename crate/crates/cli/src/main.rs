fn main() {
    std::process::exit(synergy_cli::run(std::env::args_os()));
}
