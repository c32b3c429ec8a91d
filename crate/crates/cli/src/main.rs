fn main() {
    std::process::exit(fexkit_cli::run(std::env::args_os()));
}
