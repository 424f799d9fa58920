fn main() {
    std::process::exit(cgscore::cli::run_from_args(std::env::args_os()));
}
