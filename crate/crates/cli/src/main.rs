fn main() {
    std::process::exit(rwpt_cli::run(std::env::args_os()));
}
