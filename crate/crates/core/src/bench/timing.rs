//! Mechanical scheduling: shutters and plate rotators.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::path::{BenchConfig, Plate};
use crate::protocol::ProtocolBit;
use crate::shortest_arc_deg;

/// Slack for comparing schedule times, in ms.
const TIME_TOL_MS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TimingLimits {
    /// Hz, per shutter
    pub shutter_max_rate: f64,
    /// ms
    pub shutter_min_on: f64,
    /// deg/s
    pub rotator_max_speed: f64,
    /// deg
    pub rotator_range: f64,
}

impl Default for TimingLimits {
    fn default() -> Self {
        (&BenchConfig::default()).into()
    }
}

impl From<&BenchConfig> for TimingLimits {
    fn from(c: &BenchConfig) -> Self {
        Self {
            shutter_max_rate: c.shutter_max_rate,
            shutter_min_on: c.shutter_min_on,
            rotator_max_speed: c.rotator_max_speed,
            rotator_range: c.rotator_range,
        }
    }
}

impl TimingLimits {
    /// Shortest allowed spacing between two openings of one shutter, in ms.
    pub fn min_shutter_period_ms(&self) -> f64 {
        1000.0 / self.shutter_max_rate
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum EventKind {
    /// The shutter that passes `bit` is open.
    ShutterOpen { bit: ProtocolBit },
    RotatorMove { plate: Plate, from: f64, to: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TimingEvent {
    pub kind: EventKind,
    pub t_start_ms: f64,
    pub t_end_ms: f64,
}

impl TimingEvent {
    pub fn duration_ms(&self) -> f64 {
        self.t_end_ms - self.t_start_ms
    }

    pub fn event_type(&self) -> &'static str {
        match self.kind {
            EventKind::ShutterOpen { .. } => "shutter_open",
            EventKind::RotatorMove { .. } => "rotator_move",
        }
    }

    /// Free-form detail column for exports.
    pub fn detail(&self) -> String {
        match self.kind {
            EventKind::ShutterOpen { bit } => format!("shutter={bit}"),
            EventKind::RotatorMove { plate, from, to } => format!("plate={plate} from={from} to={to}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConstraintViolation {
    #[error("minimum on time violated: shutter open for {on_ms} ms, limit {min_ms} ms")]
    MinimumOnTime { on_ms: f64, min_ms: f64 },
    #[error("maximum shutter rate violated: shutter {shutter} reopened after {spacing_ms} ms, limit {min_spacing_ms} ms")]
    MaximumShutterRate {
        shutter: ProtocolBit,
        spacing_ms: f64,
        min_spacing_ms: f64,
    },
    #[error("maximum rotation velocity violated: plate {plate} at {speed} deg/s, limit {max} deg/s")]
    MaximumRotationVelocity { plate: Plate, speed: f64, max: f64 },
    #[error("rotator range violated: plate {plate} asked for {angle} deg, range {range} deg")]
    RotatorRange { plate: Plate, angle: f64, range: f64 },
    #[error("both shutters open at {t_ms} ms")]
    SimultaneousShutters { t_ms: f64 },
    #[error("slot duration must be positive, got {0} ms")]
    NonPositiveSlot(f64),
}

impl ConstraintViolation {
    /// Name of the violated limit.
    pub fn constraint(&self) -> &'static str {
        match self {
            Self::MinimumOnTime { .. } => "minimum on time",
            Self::MaximumShutterRate { .. } => "maximum shutter rate",
            Self::MaximumRotationVelocity { .. } => "maximum rotation velocity",
            Self::RotatorRange { .. } => "rotator range",
            Self::SimultaneousShutters { .. } => "single open shutter",
            Self::NonPositiveSlot(_) => "positive slot duration",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TimingReport {
    pub events: Vec<TimingEvent>,
    pub bits: usize,
    pub total_ms: f64,
    pub bits_per_second: f64,
}

impl TimingReport {
    fn from_events(events: Vec<TimingEvent>, bits: usize) -> Self {
        let total_ms = events.iter().fold(0.0_f64, |t, e| t.max(e.t_end_ms));
        let bits_per_second = if total_ms > 0.0 {
            bits as f64 * 1000.0 / total_ms
        } else {
            0.0
        };
        Self {
            events,
            bits,
            total_ms,
            bits_per_second,
        }
    }

    /// `(t_start_ms, t_end_ms)` of every bit slot.
    pub fn slot_times(&self) -> Vec<(f64, f64)> {
        self.events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::ShutterOpen { .. }))
            .map(|e| (e.t_start_ms, e.t_end_ms))
            .collect()
    }

    /// Longest rotator move per rekey, in ms, in schedule order.
    pub fn rotator_travel_ms(&self) -> Vec<f64> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        for e in &self.events {
            if let EventKind::RotatorMove { .. } = e.kind {
                match out.last_mut() {
                    Some((start, d)) if *start == e.t_start_ms => *d = d.max(e.duration_ms()),
                    _ => out.push((e.t_start_ms, e.duration_ms())),
                }
            }
        }
        out.into_iter().map(|(_, d)| d).collect()
    }
}

/// Time to turn a plate from `from` to `to` along the shortest arc, in ms.
pub fn rotator_travel_ms(from: f64, to: f64, max_speed: f64) -> f64 {
    shortest_arc_deg(from, to).abs() / max_speed * 1000.0
}

/// Checks every event against the limits and returns the first violation.
pub fn validate_schedule(events: &[TimingEvent], limits: &TimingLimits) -> Result<(), ConstraintViolation> {
    let mut shutters: Vec<&TimingEvent> = events
        .iter()
        .filter(|e| matches!(e.kind, EventKind::ShutterOpen { .. }))
        .collect();
    shutters.sort_by(|a, b| a.t_start_ms.total_cmp(&b.t_start_ms));

    for e in &shutters {
        if e.duration_ms() + TIME_TOL_MS < limits.shutter_min_on {
            return Err(ConstraintViolation::MinimumOnTime {
                on_ms: e.duration_ms(),
                min_ms: limits.shutter_min_on,
            });
        }
    }
    for pair in shutters.windows(2) {
        if pair[1].t_start_ms + TIME_TOL_MS < pair[0].t_end_ms {
            return Err(ConstraintViolation::SimultaneousShutters {
                t_ms: pair[1].t_start_ms,
            });
        }
    }
    let period = limits.min_shutter_period_ms();
    for shutter in [ProtocolBit::Zero, ProtocolBit::One] {
        let mut last: Option<f64> = None;
        for e in shutters
            .iter()
            .filter(|e| e.kind == EventKind::ShutterOpen { bit: shutter })
        {
            if let Some(prev) = last {
                let spacing = e.t_start_ms - prev;
                if spacing + TIME_TOL_MS < period {
                    return Err(ConstraintViolation::MaximumShutterRate {
                        shutter,
                        spacing_ms: spacing,
                        min_spacing_ms: period,
                    });
                }
            }
            last = Some(e.t_start_ms);
        }
    }

    for e in events {
        if let EventKind::RotatorMove { plate, from, to } = e.kind {
            for angle in [from, to] {
                if limits.rotator_range < 360.0 && !(0.0..=limits.rotator_range).contains(&crate::normalize_deg(angle)) {
                    return Err(ConstraintViolation::RotatorRange {
                        plate,
                        angle,
                        range: limits.rotator_range,
                    });
                }
            }
            let arc = shortest_arc_deg(from, to).abs();
            if arc == 0.0 {
                continue;
            }
            let secs = e.duration_ms() / 1000.0;
            let speed = if secs > 0.0 { arc / secs } else { f64::INFINITY };
            if speed > limits.rotator_max_speed * (1.0 + 1e-12) {
                return Err(ConstraintViolation::MaximumRotationVelocity {
                    plate,
                    speed,
                    max: limits.rotator_max_speed,
                });
            }
        }
    }
    Ok(())
}

fn push_slots(events: &mut Vec<TimingEvent>, bits: &[ProtocolBit], slot_ms: f64, start_ms: f64) -> f64 {
    let mut t = start_ms;
    for &bit in bits {
        events.push(TimingEvent {
            kind: EventKind::ShutterOpen { bit },
            t_start_ms: t,
            t_end_ms: t + slot_ms,
        });
        t += slot_ms;
    }
    t
}

/// One shutter opening per bit, back to back, each open for the whole slot.
pub fn shutter_plan(bits: &[ProtocolBit], slot_ms: f64, limits: &TimingLimits) -> Result<TimingReport, ConstraintViolation> {
    if !(slot_ms.is_finite() && slot_ms > 0.0) {
        return Err(ConstraintViolation::NonPositiveSlot(slot_ms));
    }
    let mut events = Vec::with_capacity(bits.len());
    push_slots(&mut events, bits, slot_ms, 0.0);
    validate_schedule(&events, limits)?;
    Ok(TimingReport::from_events(events, bits.len()))
}

/// Plate settings and payload of one block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockPlan {
    pub x: f64,
    pub y: f64,
    pub bits: Vec<ProtocolBit>,
}

/// Full session schedule. Plates start at 0°; before each block all four
/// rotators turn concurrently at full speed to `(x, y, −x, −y)` and the
/// block's slots begin once the slowest has arrived.
pub fn session_schedule(
    blocks: &[BlockPlan],
    slot_ms: f64,
    limits: &TimingLimits,
) -> Result<TimingReport, ConstraintViolation> {
    if !(slot_ms.is_finite() && slot_ms > 0.0) {
        return Err(ConstraintViolation::NonPositiveSlot(slot_ms));
    }
    let mut events = Vec::new();
    let mut positions = [0.0_f64; 4];
    let mut t = 0.0;
    let mut bits = 0;
    for block in blocks {
        let targets = [block.x, block.y, -block.x, -block.y];
        let mut longest = 0.0_f64;
        for (k, plate) in Plate::ALL.into_iter().enumerate() {
            let travel = rotator_travel_ms(positions[k], targets[k], limits.rotator_max_speed);
            if travel > 0.0 {
                events.push(TimingEvent {
                    kind: EventKind::RotatorMove {
                        plate,
                        from: positions[k],
                        to: targets[k],
                    },
                    t_start_ms: t,
                    t_end_ms: t + travel,
                });
            }
            longest = longest.max(travel);
            positions[k] = targets[k];
        }
        t = push_slots(&mut events, &block.bits, slot_ms, t + longest);
        bits += block.bits.len();
    }
    validate_schedule(&events, limits)?;
    Ok(TimingReport::from_events(events, bits))
}
