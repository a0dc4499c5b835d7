fn main() {
    std::process::exit(geomgate_cli::main_with_args(std::env::args_os()));
}
