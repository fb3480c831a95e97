fn main() {
    let code = mimo_ae::cli::run(std::env::args_os(), &mut std::io::stdout());
    std::process::exit(code);
}
