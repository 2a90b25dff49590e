pub mod evaluate;
pub mod forecast;
pub mod search;
pub mod synth;

use crate::args::Command;
use crate::error::Result;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Search(a) => search::run(a),
        Command::Evaluate(a) => evaluate::run(a),
        Command::Forecast(a) => forecast::run(a),
        Command::Synth(a) => synth::run(a),
    }
}
