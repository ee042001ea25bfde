//! Simulated wall-clock helpers. Absolute time is seconds since midnight of
//! day 0.

use serde::{Deserialize, Deserializer, Serializer};

pub const DAY: f64 = 86_400.0;

pub fn day_of(t: f64) -> u64 {
    (t / DAY).floor().max(0.0) as u64
}

pub fn day_start(t: f64) -> f64 {
    day_of(t) as f64 * DAY
}

pub fn time_of_day(t: f64) -> f64 {
    t - day_start(t)
}

/// `HH:MM:SS` for a time of day (or absolute time; the day is dropped).
pub fn format_clock(t: f64) -> String {
    let s = time_of_day(t).round() as u64;
    let (h, m, sec) = (s / 3600, (s / 60) % 60, s % 60);
    if sec == 0 {
        format!("{h:02}:{m:02}")
    } else {
        format!("{h:02}:{m:02}:{sec:02}")
    }
}

/// Parse `HH:MM` or `HH:MM:SS` into seconds since midnight.
pub fn parse_clock(s: &str) -> Option<f64> {
    let parts: Vec<&str> = s.trim().split(':').collect();
    if !(2..=3).contains(&parts.len()) {
        return None;
    }
    let h: u32 = parts[0].parse().ok()?;
    let m: u32 = parts[1].parse().ok()?;
    let sec: u32 = match parts.get(2) {
        Some(p) => p.parse().ok()?,
        None => 0,
    };
    if h > 24 || m > 59 || sec > 59 {
        return None;
    }
    Some((h * 3600 + m * 60 + sec) as f64)
}

/// Serde adapter storing seconds-of-day as clock strings.
pub mod as_clock {
    use super::*;

    pub fn serialize<S: Serializer>(t: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_clock(*t))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        let raw = String::deserialize(d)?;
        parse_clock(&raw).ok_or_else(|| serde::de::Error::custom(format!("bad clock time {raw:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clock_round_trip() {
        assert_eq!(parse_clock("09:00"), Some(32_400.0));
        assert_eq!(parse_clock("09:05:30"), Some(32_730.0));
        assert_eq!(format_clock(32_730.0), "09:05:30");
        assert_eq!(format_clock(DAY + 32_400.0), "09:00");
        assert_eq!(parse_clock("9"), None);
        assert_eq!(parse_clock("09:61"), None);
    }

    #[test]
    fn day_arithmetic() {
        assert_eq!(day_of(DAY * 2.0 + 5.0), 2);
        assert_eq!(time_of_day(DAY + 60.0), 60.0);
    }
}
