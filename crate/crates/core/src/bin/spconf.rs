fn main() {
    std::process::exit(spconf::cli::run(std::env::args_os()));
}
