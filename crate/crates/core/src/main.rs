fn main() {
    std::process::exit(elimrank::cli::run(std::env::args_os()));
}
