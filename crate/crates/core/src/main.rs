fn main() {
    std::process::exit(annulus_rotor::cli::main_with_args(std::env::args_os()));
}
