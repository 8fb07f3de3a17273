use std::io;
use std::process;

use clap::error::ErrorKind;
use clap::Parser;
use kinetic_welfare::cli::{self, Cli, Io};
use kinetic_welfare::ExitCode;

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::Success,
                _ => ExitCode::Usage,
            };
            process::exit(code as i32);
        }
    };
    let (mut stdout, mut stderr) = (io::stdout().lock(), io::stderr().lock());
    let code = cli::run(
        cli,
        &mut Io {
            stdout: &mut stdout,
            stderr: &mut stderr,
        },
    );
    process::exit(code as i32);
}
