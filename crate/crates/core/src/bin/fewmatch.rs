use clap::Parser;

use fewmatch::cli::{execute, Cli};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(), // clap uses 2 for usage errors, 0 for --help
    };
    match execute(&cli) {
        Ok(out) => {
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            match &out.config.output {
                // the body is rendered in full before any write, so output
                // files are never partial
                Some(path) => {
                    if let Err(e) = std::fs::write(path, &out.body) {
                        eprintln!("error: {e}");
                        std::process::exit(3);
                    }
                }
                None => print!("{}", out.body),
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
