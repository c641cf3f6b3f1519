use clap::Parser;
use fcdgame::{run, Args};

fn main() {
    let args = Args::parse();
    match run(&args) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
        }
        Err(e) => {
            eprintln!("fcdgame: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
