fn main() {
    let cli = match rmn_cli::parse_args(std::env::args_os()) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    if let Err(e) = rmn_cli::run(&cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
