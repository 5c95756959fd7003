fn main() {
    std::process::exit(patchmix_cli::run(std::env::args_os()));
}
