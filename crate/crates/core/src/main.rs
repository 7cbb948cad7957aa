fn main() {
    std::process::exit(qfs_core::cli::run(std::env::args_os()));
}
