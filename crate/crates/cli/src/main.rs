use clap::Parser;
use ivim_cli::{run, Cli};

fn main() {
    let cli = Cli::try_parse().unwrap_or_else(|e| {
        // Help and version go to stdout with status 0; usage errors share the
        // input-error status so that 2 always means divergence.
        let code = if e.use_stderr() { 1 } else { 0 };
        let _ = e.print();
        std::process::exit(code);
    });
    if let Err(e) = run(cli) {
        eprintln!("ivim: {e}");
        std::process::exit(e.exit_code());
    }
}
