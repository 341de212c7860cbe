//! Route-recommendation metrics. A route is a set of road segments with
//! integer lengths, so every metric is an exact rational.

use std::collections::{BTreeMap, BTreeSet};

use num_rational::Ratio;

use crate::error::{Error, Result};

pub type Exact = Ratio<u128>;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Route {
    segments: BTreeMap<u64, u64>,
}

impl Route {
    /// Builds a route from `(segment_id, length)` pairs.
    pub fn new(segments: impl IntoIterator<Item = (u64, u64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (id, len) in segments {
            if len == 0 {
                return Err(Error::InvalidInput(format!("segment {id} has zero length")));
            }
            if map.insert(id, len).is_some() {
                return Err(Error::InvalidInput(format!("segment {id} appears twice")));
            }
        }
        Ok(Route { segments: map })
    }

    pub fn length(&self) -> u64 {
        self.segments.values().sum()
    }

    pub fn contains(&self, segment: u64) -> bool {
        self.segments.contains_key(&segment)
    }

    pub fn segments(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.segments.iter().map(|(&id, &len)| (id, len))
    }

    pub fn with_segment(mut self, id: u64, len: u64) -> Result<Self> {
        if len == 0 || self.segments.contains_key(&id) {
            return Err(Error::InvalidInput(format!("cannot add segment {id}")));
        }
        self.segments.insert(id, len);
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NavigationSession {
    /// Recommended routes in display order; the first is the top route.
    pub recommended: Vec<Route>,
    pub actual: Route,
    /// 1-based index of the recommended route the user picked, if recorded.
    pub selected: Option<usize>,
}

/// Shared length of candidate and actual route over the actual length.
/// Shared segments are measured with the actual route's lengths.
pub fn acr(candidate: &Route, actual: &Route) -> Result<Exact> {
    let total = actual.length();
    if total == 0 {
        return Err(Error::InvalidInput("actual route has zero length".into()));
    }
    let shared: u64 = actual.segments().filter(|(id, _)| candidate.contains(*id)).map(|(_, l)| l).sum();
    Ok(Exact::new(shared as u128, total as u128))
}

fn check_sessions(sessions: &[NavigationSession]) -> Result<()> {
    if sessions.is_empty() {
        return Err(Error::InvalidInput("no navigation sessions".into()));
    }
    if sessions.iter().any(|s| s.recommended.is_empty()) {
        return Err(Error::InvalidInput("session without recommended routes".into()));
    }
    Ok(())
}

/// Mean coverage of the actual route by the first recommended route.
pub fn fcr_avg(sessions: &[NavigationSession]) -> Result<Exact> {
    check_sessions(sessions)?;
    let mut sum = Exact::from_integer(0);
    for s in sessions {
        sum += acr(&s.recommended[0], &s.actual)?;
    }
    Ok(sum / Exact::from_integer(sessions.len() as u128))
}

/// Fraction of sessions whose actual route uses a segment outside every
/// recommended route.
pub fn yr_avg(sessions: &[NavigationSession]) -> Result<Exact> {
    check_sessions(sessions)?;
    let yawed = sessions
        .iter()
        .filter(|s| {
            let union: BTreeSet<u64> = s.recommended.iter().flat_map(|r| r.segments().map(|(id, _)| id)).collect();
            s.actual.segments().any(|(id, len)| len > 0 && !union.contains(&id))
        })
        .count();
    Ok(Exact::new(yawed as u128, sessions.len() as u128))
}

/// Fraction of sessions in which the first recommended route was selected.
pub fn fsr_avg(sessions: &[NavigationSession]) -> Result<Exact> {
    check_sessions(sessions)?;
    let mut first = 0u128;
    for s in sessions {
        match s.selected {
            Some(1) => first += 1,
            Some(_) => {}
            None => return Err(Error::InvalidInput("session without a selection record".into())),
        }
    }
    Ok(Exact::new(first, sessions.len() as u128))
}

pub fn to_f64(r: Exact) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}
