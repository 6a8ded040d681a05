fn main() {
    std::process::exit(t2v_cli::run(std::env::args_os()));
}
