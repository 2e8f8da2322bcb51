use clap::Parser;

fn main() {
    let cli = grounded_vtg::cli::Cli::parse();
    if let Err(e) = grounded_vtg::cli::run(cli, &mut std::io::stdout().lock()) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
