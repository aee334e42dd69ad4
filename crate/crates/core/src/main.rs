fn main() {
    std::process::exit(stosqp::harness::cli::run(std::env::args_os()));
}
