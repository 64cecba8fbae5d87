fn main() {
    std::process::exit(madcluster::cli::main_with_args(std::env::args_os()));
}
