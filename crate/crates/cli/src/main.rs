fn main() {
    std::process::exit(cmifl_cli::run(std::env::args_os().skip(1)));
}
