fn main() {
    std::process::exit(beamforge::cli::main_with_args(std::env::args_os()));
}
