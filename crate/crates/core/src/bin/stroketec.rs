fn main() {
    std::process::exit(stroketec::cli::run(std::env::args_os()));
}
