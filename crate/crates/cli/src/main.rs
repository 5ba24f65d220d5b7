fn main() {
    std::process::exit(paneldid_cli::run(std::env::args_os()));
}
