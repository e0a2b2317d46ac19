use clap::Parser;
use pdmp_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("PDMP_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("pdmp: cannot size thread pool: {e}");
        }
    }
    if let Err(e) = run(cli) {
        eprintln!("pdmp: {e}");
        std::process::exit(e.exit_code());
    }
}
