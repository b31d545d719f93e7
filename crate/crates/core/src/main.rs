fn main() {
    std::process::exit(biaslens::cli::run(std::env::args_os()));
}
