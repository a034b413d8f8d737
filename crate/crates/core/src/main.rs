fn main() {
    std::process::exit(cosserat_observer::harness::cli::run(std::env::args_os()));
}
