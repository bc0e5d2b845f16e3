fn main() {
    std::process::exit(mixdeg::cli::run(std::env::args_os()));
}
