fn main() {
    let argv: Vec<String> = std::env::args().collect();
    std::process::exit(cogweb_cli::run(&argv));
}
