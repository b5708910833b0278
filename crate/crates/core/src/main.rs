use clap::Parser;

fn main() {
    let cli = dynperc::cli::Cli::parse();
    match dynperc::cli::execute(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}
