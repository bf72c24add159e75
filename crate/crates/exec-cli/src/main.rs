use clap::Parser;

fn main() {
    let cli = exec_cli::Cli::parse();
    let quiet = cli.quiet;
    match exec_cli::run(&cli) {
        Ok(summary) => {
            if !quiet {
                print!("{summary}");
            }
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            std::process::exit(e.exit_code);
        }
    }
}
