fn main() {
    std::process::exit(rapnet::cli::run(std::env::args_os()));
}
