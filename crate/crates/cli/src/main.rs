fn main() {
    std::process::exit(latinv_cli::run(std::env::args_os()));
}
