fn main() {
    std::process::exit(selftrain3d::cli::main_with_args(std::env::args_os()));
}
