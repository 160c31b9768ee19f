use shgt_core::train::TrainLog;

use super::ArtifactGuard;
use crate::args::PlotArgs;
use crate::error::{CliError, CliResult};
use crate::plot::{curves_csv, loss_svg, validation_svg};

pub fn run(args: &PlotArgs) -> CliResult<()> {
    let text = std::fs::read_to_string(&args.log)
        .map_err(|e| CliError::io(format!("training log {}", args.log.display()), e))?;
    let log = TrainLog::from_jsonl(&text)
        .map_err(|e| CliError::Data(format!("training log {}: {e}", args.log.display())))?;
    if log.records.is_empty() {
        return Err(CliError::Data(format!(
            "training log {} has no epochs",
            args.log.display()
        )));
    }
    let mut guard = ArtifactGuard::new();
    guard.create_dir(&args.out)?;
    guard.write(args.out.join("curves.csv"), curves_csv(&log).as_bytes())?;
    guard.write(args.out.join("loss.svg"), loss_svg(&log).as_bytes())?;
    guard.write(
        args.out.join("validation.svg"),
        validation_svg(&log).as_bytes(),
    )?;
    guard.disarm();
    println!(
        "wrote {} epochs to {}",
        log.records.len(),
        args.out.display()
    );
    Ok(())
}
