use std::process::ExitCode;

use clap::error::ErrorKind;

fn main() -> ExitCode {
    let args: Vec<_> = std::env::args_os().collect();
    // help and version go to stdout with status 0
    if let Err(e) = scen::commands::cli().try_get_matches_from(&args) {
        if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    }
    let seed = scen::commands::env_seed();
    let mut stdout = std::io::stdout();
    match scen::commands::run(args, seed.as_deref(), &mut stdout) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                scen::Error::Core(scen_core::Error::NumericalAbort { term }) => {
                    eprintln!("numerical abort: {term} is not finite")
                }
                other => eprintln!("error: {other}"),
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
