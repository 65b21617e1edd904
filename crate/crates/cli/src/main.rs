fn main() {
    let argv: Vec<String> = std::env::args().collect();
    std::process::exit(leafsift_cli::run_subcommand(&argv));
}
