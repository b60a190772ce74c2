//! Bridge server backed by the mock backend, for protocol tests without a
//! diffusion model.

use std::io::{self, BufReader};
use std::process::ExitCode;

use noisecine::pipeline::bridge::serve;
use noisecine::pipeline::MockBackend;

fn main() -> ExitCode {
    let stdin = io::stdin().lock();
    let stdout = io::stdout().lock();
    match serve(&mut MockBackend::default(), BufReader::new(stdin), stdout) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mock bridge: {e}");
            ExitCode::FAILURE
        }
    }
}
