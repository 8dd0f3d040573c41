fn main() {
    std::process::exit(leech_cli::run(std::env::args_os()));
}
