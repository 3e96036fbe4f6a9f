fn main() {
    std::process::exit(privgsd::cli::run(std::env::args_os()));
}
