fn main() {
    std::process::exit(tcount_opt::cli::run(std::env::args_os()));
}
