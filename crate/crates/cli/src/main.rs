use clap::Parser;

fn main() {
    let cli = match tspid_cli::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors share the configuration exit code
            std::process::exit(if e.use_stderr() {
                tspid_cli::EXIT_CONFIG
            } else {
                tspid_cli::EXIT_OK
            });
        }
    };
    std::process::exit(tspid_cli::run(cli));
}
