use clap::Parser;

fn main() {
    let cli = b92sim::cli::Cli::parse();
    let code = match b92sim::cli::run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            b92sim::cli::exit_code(&e)
        }
    };
    std::process::exit(code);
}
