fn main() {
    std::process::exit(mps_sim::cli::run(std::env::args_os()));
}
