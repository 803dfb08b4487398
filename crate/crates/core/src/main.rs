fn main() {
    std::process::exit(confspec::cli::run(std::env::args_os()));
}
