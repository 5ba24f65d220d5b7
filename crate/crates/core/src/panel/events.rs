//! Event time `E_it`, relative time `K_it = t - E_it + 1` and cohorts.
//!
//! `E_it` is the most recent switch-in at or before `t`; before a unit's
//! first treated period it is the first future switch-in. A switch-in is an
//! observed treated cell whose previous observed cell is a control. Missing
//! treatment cells are skipped; a switch inferred across such a gap flags
//! the unit. A unit whose first observed cell is already treated has no
//! defined event time until its next observed switch-in.

use serde::Serialize;

use super::PanelDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EventTime {
    /// Time rank of the switch-in.
    Switch(usize),
    Never,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Cohort {
    /// First switch-in rank.
    Adopts(usize),
    Never,
    /// First observed already treated; excluded from cohort-based estimators.
    LeftCensored,
    /// No observed treatment at all.
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SettingClass {
    Classic2x2,
    MultiPeriodBlock,
    Staggered,
    General,
}

impl SettingClass {
    pub fn has_reversal(self) -> bool {
        self == SettingClass::General
    }

    pub fn name(self) -> &'static str {
        match self {
            SettingClass::Classic2x2 => "classic-2x2",
            SettingClass::MultiPeriodBlock => "multi-period-block",
            SettingClass::Staggered => "staggered",
            SettingClass::General => "general",
        }
    }
}

impl std::fmt::Display for SettingClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventStructure {
    n_units: usize,
    n_times: usize,
    event_time: Vec<Option<EventTime>>,
    relative_time: Vec<Option<i64>>,
    cohort_of: Vec<Cohort>,
    has_reversal: Vec<bool>,
    gap_flagged: Vec<bool>,
    always_treated: Vec<usize>,
    excluded: Vec<usize>,
}

impl EventStructure {
    pub fn n_units(&self) -> usize {
        self.n_units
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    pub fn event_time(&self, unit: usize, time: usize) -> Option<EventTime> {
        self.event_time[unit * self.n_times + time]
    }

    /// `K_it`; `None` for never-treated units and undefined event times.
    pub fn relative_time(&self, unit: usize, time: usize) -> Option<i64> {
        self.relative_time[unit * self.n_times + time]
    }

    pub fn cohort(&self, unit: usize) -> Cohort {
        self.cohort_of[unit]
    }

    pub fn cohorts(&self) -> &[Cohort] {
        &self.cohort_of
    }

    pub fn has_reversal(&self, unit: usize) -> bool {
        self.has_reversal[unit]
    }

    /// Units whose switch history crosses a missing treatment cell.
    pub fn gap_flagged(&self, unit: usize) -> bool {
        self.gap_flagged[unit]
    }

    pub fn always_treated(&self) -> &[usize] {
        &self.always_treated
    }

    /// Units with no observed treatment cell.
    pub fn excluded(&self) -> &[usize] {
        &self.excluded
    }

    /// Distinct adoption ranks, ascending.
    pub fn adoption_times(&self) -> Vec<usize> {
        let mut g: Vec<usize> = self
            .cohort_of
            .iter()
            .filter_map(|c| match c {
                Cohort::Adopts(g) => Some(*g),
                _ => None,
            })
            .collect();
        g.sort_unstable();
        g.dedup();
        g
    }

    pub fn units_in(&self, cohort: Cohort) -> Vec<usize> {
        (0..self.n_units).filter(|&u| self.cohort_of[u] == cohort).collect()
    }

    pub fn any_reversal(&self) -> bool {
        self.has_reversal.iter().any(|&r| r)
    }

    pub fn setting(&self) -> SettingClass {
        classify_setting(self)
    }
}

pub fn compute_event_structure(ds: &PanelDataset) -> EventStructure {
    let (n, t) = (ds.n_units(), ds.n_times());
    let mut es = EventStructure {
        n_units: n,
        n_times: t,
        event_time: vec![None; n * t],
        relative_time: vec![None; n * t],
        cohort_of: vec![Cohort::Never; n],
        has_reversal: vec![false; n],
        gap_flagged: vec![false; n],
        always_treated: Vec::new(),
        excluded: Vec::new(),
    };

    for u in 0..n {
        let obs: Vec<(usize, bool)> = (0..t).filter_map(|s| ds.treated(u, s).map(|d| (s, d))).collect();
        if obs.is_empty() {
            es.cohort_of[u] = Cohort::Unknown;
            es.excluded.push(u);
            continue;
        }
        let mut switch_ins = Vec::new();
        for w in obs.windows(2) {
            let ((s0, d0), (s1, d1)) = (w[0], w[1]);
            if d0 != d1 && s1 != s0 + 1 {
                es.gap_flagged[u] = true;
            }
            match (d0, d1) {
                (false, true) => switch_ins.push(s1),
                (true, false) => es.has_reversal[u] = true,
                _ => {}
            }
        }
        let left_censored = obs[0].1;
        if obs.iter().all(|&(_, d)| d) {
            es.always_treated.push(u);
        }
        es.cohort_of[u] = if left_censored {
            Cohort::LeftCensored
        } else if let Some(&g) = switch_ins.first() {
            Cohort::Adopts(g)
        } else {
            Cohort::Never
        };

        let first_treated = obs.iter().find(|o| o.1).map(|o| o.0);
        for s in 0..t {
            let e = match first_treated {
                None => Some(EventTime::Never),
                Some(f) if s < f => switch_ins.first().map(|&g| EventTime::Switch(g)),
                Some(_) => switch_ins.iter().rev().find(|&&g| g <= s).map(|&g| EventTime::Switch(g)),
            };
            let k = u * t + s;
            es.event_time[k] = e;
            if let Some(EventTime::Switch(g)) = e {
                es.relative_time[k] = Some(s as i64 - g as i64 + 1);
            }
        }
    }
    es
}

/// Classic 2×2: two periods, one common adoption time. Multi-period block:
/// more periods, one adoption time. Staggered: several adoption times, no
/// reversal. General: any 1 → 0 switch.
pub fn classify_setting(es: &EventStructure) -> SettingClass {
    if es.any_reversal() {
        return SettingClass::General;
    }
    match es.adoption_times().len() {
        0 | 1 if es.n_times == 2 => SettingClass::Classic2x2,
        0 | 1 => SettingClass::MultiPeriodBlock,
        _ => SettingClass::Staggered,
    }
}
