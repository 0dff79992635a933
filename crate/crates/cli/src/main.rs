fn main() {
    std::process::exit(hetbf_cli::app::run(std::env::args_os()));
}
