//! File formats, configuration, and commands for the stepwise Fine-Gray
//! toolkit. The numerics live in `stepfg-core`; this crate adds CSV
//! ingestion, JSON model files, the run-configuration format, and the
//! subcommand implementations behind the `stepfg` binary.

pub mod commands;
pub mod config;
pub mod csv_io;
pub mod model_io;

/// Writes one line to stdout, exiting quietly when the reader has closed
/// the pipe (e.g. `stepfg evaluate | head`).
pub fn emit(line: std::fmt::Arguments<'_>) {
    use std::io::Write;
    if writeln!(std::io::stdout(), "{line}").is_err() {
        std::process::exit(0);
    }
}

/// `println!` that tolerates a closed stdout.
#[macro_export]
macro_rules! emitln {
    ($($arg:tt)*) => {
        $crate::emit(core::format_args!($($arg)*))
    };
}
