fn main() {
    std::process::exit(docnade_cli::run(std::env::args_os()));
}
