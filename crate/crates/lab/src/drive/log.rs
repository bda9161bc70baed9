use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sevot::metrics::{DrivingRecord, Infraction, InfractionKind};

use super::{Action, DoneReason, StepOutcome, World};
use crate::error::{Error, Result};
use crate::seg::Class;

/// One line of an episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub t: usize,
    pub action: [f64; 3],
    pub r: f64,
    pub o_l: f64,
    pub o_r: f64,
    pub c: f64,
    pub collision: Option<Class>,
    pub done: Option<DoneReason>,
    pub y: f64,
    pub e: f64,
    pub speed: f64,
    /// Meters driven so far.
    pub distance: f64,
}

impl StepLog {
    /// Entry for the step that produced `outcome` and left the world in its current state.
    pub fn new(world: &World, action: Action, outcome: &StepOutcome) -> Self {
        let s = world.state();
        Self {
            t: s.step,
            action: action.clamped().as_array(),
            r: outcome.reward,
            o_l: outcome.o_l,
            o_r: outcome.o_r,
            c: outcome.c,
            collision: outcome.collision,
            done: outcome.done,
            y: s.y,
            e: world.lateral_offset(),
            speed: s.speed,
            distance: s.distance,
        }
    }
}

pub fn write_log(path: &Path, steps: &[StepLog]) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for s in steps {
        let line = serde_json::to_string(s).expect("log entries serialize");
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn read_log(path: &Path) -> Result<Vec<StepLog>> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::io::BufReader::new(std::fs::File::open(path).map_err(io)?);
    let mut out = Vec::new();
    for (k, line) in file.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: k + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

fn collision_kind(class: Option<Class>) -> InfractionKind {
    match class {
        Some(Class::Person | Class::Bike) => InfractionKind::CollisionPerson,
        Some(Class::Car | Class::Bus) => InfractionKind::CollisionCar,
        _ => InfractionKind::CollisionStatic,
    }
}

/// Driving record of one logged episode. Off-line and off-road events are
/// counted when the measure reaches `threshold`.
pub fn episode_record(steps: &[StepLog], threshold: f64) -> DrivingRecord {
    let mut infractions = Vec::new();
    let (mut was_line, mut was_road) = (false, false);
    for s in steps {
        let position = (s.y, s.e);
        let (line, road) = (s.o_l >= threshold, s.o_r >= threshold);
        if line && !was_line {
            infractions.push(Infraction {
                kind: InfractionKind::OffLine,
                step: s.t,
                position,
            });
        }
        if road && !was_road {
            infractions.push(Infraction {
                kind: InfractionKind::OffRoad,
                step: s.t,
                position,
            });
        }
        if s.c > 0.0 {
            infractions.push(Infraction {
                kind: collision_kind(s.collision),
                step: s.t,
                position,
            });
        }
        (was_line, was_road) = (line, road);
    }
    DrivingRecord {
        steps: steps.len(),
        distance_km: steps.last().map_or(0.0, |s| s.distance / 1000.0),
        infractions,
        reached_goal: steps.last().and_then(|s| s.done) == Some(DoneReason::Goal),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(t: usize, o_l: f64, c: f64) -> StepLog {
        StepLog {
            t,
            action: [0.0; 3],
            r: 0.0,
            o_l,
            o_r: 0.0,
            c,
            collision: (c > 0.0).then_some(Class::Car),
            done: (c > 0.0).then_some(DoneReason::Crash),
            y: t as f64,
            e: 0.0,
            speed: 1.0,
            distance: t as f64 * 100.0,
        }
    }

    #[test]
    fn events_count_rising_edges() {
        let steps = vec![
            entry(1, 0.1, 0.0),
            entry(2, 0.5, 0.0),
            entry(3, 0.6, 0.0),
            entry(4, 0.1, 0.0),
            entry(5, 0.4, 0.5),
        ];
        let r = episode_record(&steps, 0.3);
        assert_eq!(r.count(InfractionKind::OffLine), 2);
        assert_eq!(r.count(InfractionKind::CollisionCar), 1);
        assert_eq!(r.distance_km, 0.5);
        assert!(!r.reached_goal);
    }

    #[test]
    fn log_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ep.jsonl");
        let steps = vec![entry(1, 0.1, 0.0), entry(2, 0.2, 0.75)];
        write_log(&path, &steps).unwrap();
        assert_eq!(read_log(&path).unwrap(), steps);
    }
}
