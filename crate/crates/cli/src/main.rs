fn main() {
    std::process::exit(orthant_lab_cli::run(std::env::args_os()));
}
