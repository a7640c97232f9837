//! `strider dump`: joint targets to CAN frames.

use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use strider_core::canlink::{schedule_bus, CanConfig, EstopState, MotorCommand};
use strider_core::model::NUM_JOINTS;

use crate::Overrides;

/// Reads rows of 10 joint position targets (rad; an optional non-numeric
/// header row is skipped) and prints one line per frame:
/// `tick bus id b0 .. b7`, ids and bytes in hex. Gains come from the robot
/// description's motor tables; velocity and feedforward are zero.
pub fn dump(input: &Path, ov: &Overrides, out: &mut dyn Write) -> Result<()> {
    let cfg = ov.resolve()?;
    let spec = cfg.robot_spec()?;
    let can = match &cfg.can {
        Some(c) => {
            c.validate()?;
            c.clone()
        }
        None => CanConfig::for_robot(&spec)?,
    };
    let gains: Vec<(f64, f64)> = spec
        .joints
        .iter()
        .map(|j| spec.motor(j.motor).map(|m| (m.kp, m.kd)).unwrap_or((0.0, 0.0)))
        .collect();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(input)
        .with_context(|| format!("cannot read {}", input.display()))?;
    writeln!(out, "# tick bus id data")?;
    let mut tick = 0usize;
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: row {}", input.display(), line + 1))?;
        let parsed: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let targets = match parsed {
            Ok(v) => v,
            Err(_) if line == 0 => continue,
            Err(e) => bail!("{}: row {}: {e}", input.display(), line + 1),
        };
        if targets.len() != NUM_JOINTS {
            bail!("{}: row {}: expected {NUM_JOINTS} joint targets, got {}", input.display(), line + 1, targets.len());
        }
        let cmds: [MotorCommand; NUM_JOINTS] = std::array::from_fn(|j| MotorCommand {
            position: targets[j],
            kp: gains[j].0,
            kd: gains[j].1,
            ..MotorCommand::default()
        });
        for (bus, frames) in schedule_bus(EstopState::RUNNING, &cmds, &can).iter().enumerate() {
            for f in frames {
                writeln!(out, "{tick} {bus} {:03X} {}", f.id(), f.hex())?;
            }
        }
        tick += 1;
    }
    Ok(())
}
