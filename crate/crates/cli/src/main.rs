fn main() {
    let args: Vec<String> = std::env::args().collect();
    std::process::exit(kanscale_cli::run(&args));
}
