fn main() {
    std::process::exit(muonlab_cli::run(std::env::args_os()));
}
