//! Daily schedules with explicit commute blocks.

use serde::{Deserialize, Serialize};

use crate::clock::{as_clock, format_clock};
use crate::providers::ActivitySpec;

/// One schedule entry. Times are seconds since midnight of `Schedule::day`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Activity {
    #[serde(with = "as_clock")]
    pub start: f64,
    #[serde(with = "as_clock")]
    pub end: f64,
    pub description: String,
    /// Where the activity happens; for a commute block, the destination.
    pub place: String,
    #[serde(default)]
    pub commute: bool,
}

impl Activity {
    pub fn render(&self) -> String {
        format!(
            "{}-{} {} at {}",
            format_clock(self.start),
            format_clock(self.end),
            self.description,
            self.place
        )
    }

    pub fn spec(&self) -> ActivitySpec {
        ActivitySpec {
            start: self.start,
            end: self.end,
            description: self.description.clone(),
            place: self.place.clone(),
        }
    }

    pub fn contains(&self, tod: f64) -> bool {
        self.start <= tod && tod < self.end
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub day: u64,
    pub entries: Vec<Activity>,
}

impl Schedule {
    /// Activities other than commute blocks.
    pub fn activities(&self) -> impl Iterator<Item = &Activity> {
        self.entries.iter().filter(|a| !a.commute)
    }

    /// Entry (activity or commute block) covering a time of day.
    pub fn current(&self, tod: f64) -> Option<&Activity> {
        self.entries.iter().find(|a| a.contains(tod))
    }

    /// First non-commute activity ending after `tod`.
    pub fn next_activity(&self, tod: f64) -> Option<&Activity> {
        self.activities().find(|a| a.end > tod)
    }

    /// Non-commute activities that have not ended yet, as reasoner specs.
    pub fn remaining(&self, tod: f64) -> Vec<ActivitySpec> {
        self.activities().filter(|a| a.end > tod).map(Activity::spec).collect()
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(Activity::render).collect::<Vec<_>>().join("\n")
    }

    /// Check ordering, non-overlap and commute feasibility against `commute`
    /// (seconds between two places).
    pub fn validate(
        &self,
        start_place: Option<&str>,
        commute: &mut dyn FnMut(&str, &str) -> f64,
    ) -> Result<(), String> {
        for a in &self.entries {
            if !(a.start.is_finite() && a.end.is_finite() && a.start < a.end) {
                return Err(format!("bad interval {}", a.render()));
            }
        }
        for w in self.entries.windows(2) {
            if w[1].start < w[0].end {
                return Err(format!("overlap: {} / {}", w[0].render(), w[1].render()));
            }
        }
        let mut prev: Option<(&str, f64)> = start_place.map(|p| (p, f64::NEG_INFINITY));
        let mut travel_since_prev = 0.0;
        for a in &self.entries {
            if a.commute {
                travel_since_prev += a.end - a.start;
                continue;
            }
            if let Some((place, _)) = prev {
                if place != a.place {
                    let need = commute(place, &a.place);
                    if travel_since_prev + 1e-9 < need {
                        return Err(format!(
                            "commute {place} -> {} needs {need:.0} s, schedule allows {travel_since_prev:.0} s",
                            a.place
                        ));
                    }
                }
            }
            prev = Some((&a.place, a.end));
            travel_since_prev = 0.0;
        }
        Ok(())
    }
}

/// Turn raw reasoner output into a valid schedule starting no earlier than
/// `not_before` (seconds of day) at `start_place`.
///
/// Activities are taken in start order (stable). A later activity that
/// overlaps an earlier one, or that leaves too little time for the commute
/// from the previous place, has its start pushed back; if nothing is left of
/// it, it is dropped. Commute blocks end exactly at the start of the
/// activity they lead to.
pub fn repair(
    day: u64,
    raw: &[ActivitySpec],
    start_place: Option<&str>,
    not_before: f64,
    commute: &mut dyn FnMut(&str, &str) -> f64,
) -> Schedule {
    let mut specs: Vec<&ActivitySpec> = raw
        .iter()
        .filter(|a| a.start.is_finite() && a.end.is_finite() && a.start < a.end && !a.place.trim().is_empty())
        .collect();
    specs.sort_by(|a, b| a.start.total_cmp(&b.start));
    let mut entries = Vec::with_capacity(specs.len() * 2);
    let mut prev_place = start_place.map(str::to_owned);
    let mut prev_end = not_before;
    for a in specs {
        let travel = match &prev_place {
            Some(p) if *p != a.place => commute(p, &a.place).max(0.0),
            _ => 0.0,
        };
        let start = a.start.max(prev_end + travel);
        if start >= a.end {
            continue;
        }
        if travel > 0.0 {
            entries.push(Activity {
                start: start - travel,
                end: start,
                description: format!("commute to {}", a.place),
                place: a.place.clone(),
                commute: true,
            });
        }
        entries.push(Activity {
            start,
            end: a.end,
            description: a.description.clone(),
            place: a.place.clone(),
            commute: false,
        });
        prev_place = Some(a.place.clone());
        prev_end = a.end;
    }
    Schedule { day, entries }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(start: f64, end: f64, place: &str) -> ActivitySpec {
        ActivitySpec {
            start,
            end,
            description: format!("at {place}"),
            place: place.into(),
        }
    }

    fn fixed(a: &str, b: &str) -> f64 {
        if a == b {
            0.0
        } else {
            900.0
        }
    }

    #[test]
    fn same_place_needs_no_commute() {
        let s = repair(
            0,
            &[spec(0.0, 100.0, "A"), spec(100.0, 200.0, "A")],
            Some("A"),
            0.0,
            &mut fixed,
        );
        assert_eq!(s.entries.len(), 2);
        assert!(s.entries.iter().all(|a| !a.commute));
        s.validate(Some("A"), &mut fixed).unwrap();
    }

    #[test]
    fn commute_inserted_and_start_shifted() {
        let s = repair(
            0,
            &[spec(0.0, 1000.0, "A"), spec(1200.0, 3000.0, "B")],
            Some("A"),
            0.0,
            &mut fixed,
        );
        assert_eq!(s.entries.len(), 3);
        assert!(s.entries[1].commute);
        assert_eq!((s.entries[1].start, s.entries[1].end), (1000.0, 1900.0));
        assert_eq!(s.entries[2].start, 1900.0);
        s.validate(Some("A"), &mut fixed).unwrap();
    }

    #[test]
    fn overlap_truncates_later_activity() {
        let s = repair(
            0,
            &[spec(0.0, 500.0, "A"), spec(300.0, 800.0, "A"), spec(350.0, 400.0, "A")],
            None,
            0.0,
            &mut fixed,
        );
        let spans: Vec<(f64, f64)> = s.entries.iter().map(|a| (a.start, a.end)).collect();
        assert_eq!(spans, vec![(0.0, 500.0), (500.0, 800.0)]);
    }

    #[test]
    fn validate_rejects_missing_commute() {
        let s = Schedule {
            day: 0,
            entries: vec![
                Activity {
                    start: 0.0,
                    end: 10.0,
                    description: "x".into(),
                    place: "A".into(),
                    commute: false,
                },
                Activity {
                    start: 10.0,
                    end: 20.0,
                    description: "y".into(),
                    place: "B".into(),
                    commute: false,
                },
            ],
        };
        assert!(s.validate(None, &mut fixed).is_err());
    }
}
