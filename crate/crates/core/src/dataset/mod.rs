//! The event-attendance corpus: members, groups, dated events, RSVPs,
//! group memberships and interest annotations.
//!
//! A [`Dataset`] is immutable once built. Lookups used by the analysis
//! modules (per-member attendance lists, per-year event lists, interned
//! interest terms) are computed lazily on first use and shared afterwards.

mod io;
mod synth;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::sync::OnceLock;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{EventId, GroupId, InterestTerm, MemberId};

pub use io::{load_dataset, write_dataset, DatasetPaths, LoadReport, DATASET_FILES};
pub use synth::{generate_synthetic, generate_synthetic_with_truth, PlantedTruth, SynthConfig};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Event {
    pub id: EventId,
    pub group: GroupId,
    pub date: NaiveDate,
}

/// Raw contents of a dataset. No invariants are enforced here; see
/// [`validate`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetParts {
    pub members: BTreeSet<MemberId>,
    pub groups: BTreeSet<GroupId>,
    pub events: Vec<Event>,
    pub rsvps: Vec<(MemberId, EventId)>,
    pub memberships: Vec<(MemberId, GroupId)>,
    pub member_interests: Vec<(MemberId, InterestTerm)>,
    pub group_topics: Vec<(GroupId, InterestTerm)>,
}

impl DatasetParts {
    /// Fills `members` and `groups` with every identifier referenced by the
    /// record lists.
    pub fn derive_universe(&mut self) {
        for (m, _) in &self.rsvps {
            self.members.insert(m.clone());
        }
        for (m, g) in &self.memberships {
            self.members.insert(m.clone());
            self.groups.insert(g.clone());
        }
        for (m, _) in &self.member_interests {
            self.members.insert(m.clone());
        }
        for e in &self.events {
            self.groups.insert(e.group.clone());
        }
        for (g, _) in &self.group_topics {
            self.groups.insert(g.clone());
        }
    }

    /// Sorts every record list so datasets can be compared up to row order.
    pub fn canonicalize(&mut self) {
        self.events.sort();
        self.rsvps.sort();
        self.memberships.sort();
        self.member_interests.sort();
        self.group_topics.sort();
    }
}

#[derive(Debug)]
pub struct Dataset {
    parts: DatasetParts,
    index: OnceLock<Index>,
}

impl Clone for Dataset {
    fn clone(&self) -> Self {
        Self::from_parts(self.parts.clone())
    }
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.parts == other.parts
    }
}

impl Dataset {
    pub fn from_parts(parts: DatasetParts) -> Self {
        Self {
            parts,
            index: OnceLock::new(),
        }
    }

    pub fn parts(&self) -> &DatasetParts {
        &self.parts
    }

    pub fn into_parts(self) -> DatasetParts {
        self.parts
    }

    pub fn members(&self) -> &BTreeSet<MemberId> {
        &self.parts.members
    }

    pub fn groups(&self) -> &BTreeSet<GroupId> {
        &self.parts.groups
    }

    pub fn events(&self) -> &[Event] {
        &self.parts.events
    }

    pub fn rsvps(&self) -> &[(MemberId, EventId)] {
        &self.parts.rsvps
    }

    pub fn memberships(&self) -> &[(MemberId, GroupId)] {
        &self.parts.memberships
    }

    pub fn member_interests(&self) -> &[(MemberId, InterestTerm)] {
        &self.parts.member_interests
    }

    pub fn group_topics(&self) -> &[(GroupId, InterestTerm)] {
        &self.parts.group_topics
    }

    /// Calendar years spanned by event dates, inclusive.
    pub fn year_range(&self) -> Option<(i32, i32)> {
        self.index().year_range
    }

    /// Members with at least one RSVP dated in `year`, in id order.
    pub fn active_members(&self, year: i32) -> Vec<MemberId> {
        let idx = self.index();
        idx.active_in_year(year)
            .into_iter()
            .map(|m| idx.member_ids[m].clone())
            .collect()
    }

    /// Copy keeping only events dated in years `lo..=hi` and the RSVPs to
    /// them. Members, groups, memberships and interest terms are kept.
    pub fn restrict_years(&self, lo: i32, hi: i32) -> Dataset {
        let p = &self.parts;
        let in_range = |e: &Event| (lo..=hi).contains(&e.date.year());
        let kept: HashSet<&EventId> = p.events.iter().filter(|e| in_range(e)).map(|e| &e.id).collect();
        Dataset::from_parts(DatasetParts {
            events: p.events.iter().filter(|e| in_range(e)).cloned().collect(),
            rsvps: p.rsvps.iter().filter(|(_, e)| kept.contains(e)).cloned().collect(),
            ..p.clone()
        })
    }

    pub(crate) fn index(&self) -> &Index {
        self.index.get_or_init(|| Index::build(&self.parts))
    }
}

/// Returns one human-readable description per violated dataset invariant.
/// Empty iff the dataset is well formed.
pub fn validate(d: &Dataset) -> Vec<String> {
    let p = d.parts();
    let mut out = Vec::new();

    for m in &p.members {
        if m.as_str().is_empty() {
            out.push("member set contains an empty member id".to_owned());
        }
    }
    for g in &p.groups {
        if g.as_str().is_empty() {
            out.push("group set contains an empty group id".to_owned());
        }
    }

    let mut event_ids = HashSet::new();
    for e in &p.events {
        if e.id.as_str().is_empty() {
            out.push(format!("event dated {} has an empty event id", e.date));
        } else if !event_ids.insert(&e.id) {
            out.push(format!("event `{}` is defined more than once", e.id));
        }
        if e.group.as_str().is_empty() {
            out.push(format!("event `{}` has an empty group id", e.id));
        } else if !p.groups.contains(&e.group) {
            out.push(format!("event `{}` references unknown group `{}`", e.id, e.group));
        }
    }

    let mut seen = HashSet::new();
    for (m, e) in &p.rsvps {
        if m.as_str().is_empty() || e.as_str().is_empty() {
            out.push(format!("rsvp ({m}, {e}) has an empty identifier"));
            continue;
        }
        if !p.members.contains(m) {
            out.push(format!("rsvp by unknown member `{m}` to event `{e}`"));
        }
        if !event_ids.contains(e) {
            out.push(format!("rsvp by `{m}` references unknown event `{e}`"));
        }
        if !seen.insert((m, e)) {
            out.push(format!("duplicate rsvp ({m}, {e})"));
        }
    }

    for (m, g) in &p.memberships {
        if m.as_str().is_empty() || g.as_str().is_empty() {
            out.push(format!("membership ({m}, {g}) has an empty identifier"));
            continue;
        }
        if !p.members.contains(m) {
            out.push(format!("membership of unknown member `{m}` in `{g}`"));
        }
        if !p.groups.contains(g) {
            out.push(format!("membership of `{m}` in unknown group `{g}`"));
        }
    }
    for (m, t) in &p.member_interests {
        if !p.members.contains(m) {
            out.push(format!("interest `{t}` listed by unknown member `{m}`"));
        }
    }
    for (g, t) in &p.group_topics {
        if !p.groups.contains(g) {
            out.push(format!("topic `{t}` tagged on unknown group `{g}`"));
        }
    }
    out
}

/// The interest terms of a member: self-reported interests united with the
/// topic tags of every group the member belongs to.
pub fn member_interest_terms(m: &MemberId, d: &Dataset) -> Result<BTreeSet<InterestTerm>> {
    let idx = d.index();
    let pos = idx.member(m)?;
    Ok(idx.member_terms[pos]
        .iter()
        .map(|&t| idx.terms[t as usize].clone())
        .collect())
}

/// Precomputed lookups over [`DatasetParts`]. Tolerates dangling references
/// (they are skipped) so that it can be built for unvalidated datasets.
#[derive(Debug)]
pub(crate) struct Index {
    pub member_ids: Vec<MemberId>,
    pub member_pos: HashMap<MemberId, usize>,
    pub group_ids: Vec<GroupId>,
    pub group_pos: HashMap<GroupId, usize>,
    /// Group position per event, `None` when the group is unknown.
    pub event_group: Vec<Option<usize>>,
    pub event_date: Vec<NaiveDate>,
    /// Attended events per member, deduplicated, ordered by (date, position).
    pub member_events: Vec<Vec<usize>>,
    /// Hosted events per group, ordered by (date, position).
    pub group_events: Vec<Vec<usize>>,
    /// Events per calendar year, ordered by (date, id).
    pub events_by_year: BTreeMap<i32, Vec<usize>>,
    pub year_range: Option<(i32, i32)>,
    /// Sorted table of every interest term in the dataset.
    pub terms: Vec<InterestTerm>,
    /// Sorted, deduplicated term positions per member.
    pub member_terms: Vec<Vec<u32>>,
}

impl Index {
    fn build(p: &DatasetParts) -> Self {
        let member_ids: Vec<MemberId> = p.members.iter().cloned().collect();
        let member_pos: HashMap<MemberId, usize> = member_ids.iter().enumerate().map(|(i, m)| (m.clone(), i)).collect();
        let group_ids: Vec<GroupId> = p.groups.iter().cloned().collect();
        let group_pos: HashMap<GroupId, usize> = group_ids.iter().enumerate().map(|(i, g)| (g.clone(), i)).collect();

        let mut event_pos = HashMap::with_capacity(p.events.len());
        for (i, e) in p.events.iter().enumerate() {
            event_pos.entry(e.id.clone()).or_insert(i);
        }
        let event_group: Vec<Option<usize>> = p.events.iter().map(|e| group_pos.get(&e.group).copied()).collect();
        let event_date: Vec<NaiveDate> = p.events.iter().map(|e| e.date).collect();
        let by_date = |a: &usize, b: &usize| (event_date[*a], *a).cmp(&(event_date[*b], *b));

        let mut member_events = vec![Vec::new(); member_ids.len()];
        for (m, e) in &p.rsvps {
            if let (Some(&mi), Some(&ei)) = (member_pos.get(m), event_pos.get(e)) {
                member_events[mi].push(ei);
            }
        }
        for evs in &mut member_events {
            evs.sort_unstable_by(by_date);
            evs.dedup();
        }

        let mut group_events = vec![Vec::new(); group_ids.len()];
        for (i, g) in event_group.iter().enumerate() {
            if let Some(g) = g {
                group_events[*g].push(i);
            }
        }
        for evs in &mut group_events {
            evs.sort_unstable_by(by_date);
        }

        let mut events_by_year: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
        for (i, e) in p.events.iter().enumerate() {
            if event_pos.get(&e.id) == Some(&i) {
                events_by_year.entry(e.date.year()).or_default().push(i);
            }
        }
        for evs in events_by_year.values_mut() {
            evs.sort_unstable_by(|a, b| (event_date[*a], &p.events[*a].id).cmp(&(event_date[*b], &p.events[*b].id)));
        }
        let year_range = match (events_by_year.keys().next(), events_by_year.keys().next_back()) {
            (Some(&lo), Some(&hi)) => Some((lo, hi)),
            _ => None,
        };

        let terms: Vec<InterestTerm> = p
            .member_interests
            .iter()
            .map(|(_, t)| t)
            .chain(p.group_topics.iter().map(|(_, t)| t))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .cloned()
            .collect();
        let term_id = |t: &InterestTerm| terms.binary_search(t).expect("term table") as u32;

        let mut group_terms = vec![Vec::new(); group_ids.len()];
        for (g, t) in &p.group_topics {
            if let Some(&gi) = group_pos.get(g) {
                group_terms[gi].push(term_id(t));
            }
        }
        let mut member_terms = vec![Vec::new(); member_ids.len()];
        for (m, t) in &p.member_interests {
            if let Some(&mi) = member_pos.get(m) {
                member_terms[mi].push(term_id(t));
            }
        }
        for (m, g) in &p.memberships {
            if let (Some(&mi), Some(&gi)) = (member_pos.get(m), group_pos.get(g)) {
                member_terms[mi].extend_from_slice(&group_terms[gi]);
            }
        }
        for ts in &mut member_terms {
            ts.sort_unstable();
            ts.dedup();
        }

        Self {
            member_ids,
            member_pos,
            group_ids,
            group_pos,
            event_group,
            event_date,
            member_events,
            group_events,
            events_by_year,
            year_range,
            terms,
            member_terms,
        }
    }

    pub fn member(&self, m: &MemberId) -> Result<usize> {
        self.member_pos
            .get(m)
            .copied()
            .ok_or_else(|| Error::UnknownMember(m.clone()))
    }

    pub fn first_date(&self, m: usize) -> Option<NaiveDate> {
        self.member_events[m].first().map(|&e| self.event_date[e])
    }

    pub fn last_date(&self, m: usize) -> Option<NaiveDate> {
        self.member_events[m].last().map(|&e| self.event_date[e])
    }

    /// Events attended by member `m` in calendar `year`, in date order.
    pub fn member_events_in_year(&self, m: usize, year: i32) -> &[usize] {
        let evs = &self.member_events[m];
        let lo = evs.partition_point(|&e| self.event_date[e].year() < year);
        let hi = evs.partition_point(|&e| self.event_date[e].year() <= year);
        &evs[lo..hi]
    }

    pub fn is_active(&self, m: usize, year: i32) -> bool {
        !self.member_events_in_year(m, year).is_empty()
    }

    /// Positions of members active in `year`, ascending (= id order).
    pub fn active_in_year(&self, year: i32) -> Vec<usize> {
        (0..self.member_ids.len())
            .filter(|&m| self.is_active(m, year))
            .collect()
    }

    pub fn years(&self) -> impl Iterator<Item = i32> {
        let (lo, hi) = self.year_range.unwrap_or((0, -1));
        lo..=hi
    }
}
