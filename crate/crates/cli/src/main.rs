fn main() {
    std::process::exit(extpos_cli::execute(std::env::args_os()));
}
