//! Yearly incidence matrices, TF-IDF weighting, cosine projection onto a
//! member-member graph, and per-member attendance vectors.

use std::collections::BTreeMap;

use chrono::Datelike;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::ids::{EventId, GroupId, MemberId};

/// One calendar year's binary member × event incidence matrix, stored as a
/// sorted list of attended event columns per member row.
#[derive(Clone, Debug, PartialEq)]
pub struct YearSlice {
    year: i32,
    active_members: Vec<MemberId>,
    events: Vec<EventId>,
    rows: Vec<Vec<u32>>,
}

impl YearSlice {
    /// Builds a slice from explicit rows. Every row must be nonempty, sorted,
    /// duplicate-free and within `events`.
    pub fn from_rows(
        year: i32,
        active_members: Vec<MemberId>,
        events: Vec<EventId>,
        rows: Vec<Vec<u32>>,
    ) -> Result<Self> {
        if rows.len() != active_members.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} rows for {} members",
                rows.len(),
                active_members.len()
            )));
        }
        for (m, row) in active_members.iter().zip(&rows) {
            if row.is_empty() {
                return Err(Error::DimensionMismatch(format!("member `{m}` has no attendance")));
            }
            if row.windows(2).any(|w| w[0] >= w[1]) || *row.last().unwrap() as usize >= events.len() {
                return Err(Error::DimensionMismatch(format!(
                    "row of member `{m}` is unsorted or out of range"
                )));
            }
        }
        Ok(Self {
            year,
            active_members,
            events,
            rows,
        })
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn active_members(&self) -> &[MemberId] {
        &self.active_members
    }

    pub fn events(&self) -> &[EventId] {
        &self.events
    }

    /// Attended event columns of member row `i`.
    pub fn row(&self, i: usize) -> &[u32] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<u32>] {
        &self.rows
    }

    pub fn n_members(&self) -> usize {
        self.active_members.len()
    }

    pub fn n_events(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active_members.is_empty()
    }

    pub fn incidence(&self, member: usize, event: usize) -> bool {
        self.rows[member].binary_search(&(event as u32)).is_ok()
    }

    pub fn dense_incidence(&self) -> Vec<Vec<u8>> {
        self.rows
            .iter()
            .map(|row| {
                let mut dense = vec![0u8; self.events.len()];
                for &e in row {
                    dense[e as usize] = 1;
                }
                dense
            })
            .collect()
    }

    /// Attendee count of every event column.
    pub fn event_degrees(&self) -> Vec<usize> {
        let mut df = vec![0usize; self.events.len()];
        for row in &self.rows {
            for &e in row {
                df[e as usize] += 1;
            }
        }
        df
    }
}

/// The members who attended at least one event dated in `year`, in id order,
/// against that year's events ordered by (date, id).
pub fn yearly_slice(d: &Dataset, year: i32) -> Result<YearSlice> {
    slice_from_attendance(d, &d.index().member_events, year)
}

/// `yearly_slice` for replacement attendance lists over the dataset's
/// members and events (per member, ordered by (date, position)).
pub(crate) fn slice_from_attendance(d: &Dataset, member_events: &[Vec<usize>], year: i32) -> Result<YearSlice> {
    let idx = d.index();
    let (lo, hi) = idx.year_range.ok_or_else(|| Error::YearOutOfRange {
        year,
        range: "(no events)".into(),
    })?;
    if year < lo || year > hi {
        return Err(Error::YearOutOfRange {
            year,
            range: format!("{lo}..={hi}"),
        });
    }
    let year_events: &[usize] = idx.events_by_year.get(&year).map_or(&[], Vec::as_slice);
    let mut column = vec![u32::MAX; idx.event_date.len()];
    for (c, &e) in year_events.iter().enumerate() {
        column[e] = c as u32;
    }

    let mut active_members = Vec::new();
    let mut rows = Vec::new();
    for (m, evs) in member_events.iter().enumerate() {
        let start = evs.partition_point(|&e| idx.event_date[e].year() < year);
        let stop = evs.partition_point(|&e| idx.event_date[e].year() <= year);
        if start == stop {
            continue;
        }
        let mut row: Vec<u32> = evs[start..stop]
            .iter()
            .map(|&e| column[e])
            .filter(|&c| c != u32::MAX)
            .collect();
        row.sort_unstable();
        row.dedup();
        active_members.push(idx.member_ids[m].clone());
        rows.push(row);
    }
    let events = year_events.iter().map(|&e| d.events()[e].id.clone()).collect();
    Ok(YearSlice {
        year,
        active_members,
        events,
        rows,
    })
}

/// Sparse TF-IDF weighting of a slice's incidence matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct TfidfMatrix {
    n_cols: usize,
    /// `ln(N / df_e)` per event column (0 for unattended columns).
    idf: Vec<f64>,
    /// Nonzero entries per member row, by ascending column.
    rows: Vec<Vec<(u32, f64)>>,
}

impl TfidfMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    pub fn row(&self, i: usize) -> &[(u32, f64)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, e: usize) -> f64 {
        let row = &self.rows[i];
        row.binary_search_by_key(&(e as u32), |&(c, _)| c)
            .map_or(0.0, |k| row[k].1)
    }

    /// Multiplies row `i` by `factor`.
    pub fn scale_row(&mut self, i: usize, factor: f64) {
        for (_, w) in &mut self.rows[i] {
            *w *= factor;
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.rows.len())
            .map(|i| (0..self.n_cols).map(|e| self.get(i, e)).collect())
            .collect()
    }
}

/// Binary term frequency times `ln(N / df_e)`, where `N` is the number of
/// active members and `df_e` the attendee count of event `e`. Entries whose
/// idf is zero (events everyone attended) are not stored.
pub fn tfidf_incidence(s: &YearSlice) -> Result<TfidfMatrix> {
    if s.is_empty() {
        return Err(Error::EmptySlice);
    }
    let n = s.n_members() as f64;
    let idf: Vec<f64> = s
        .event_degrees()
        .into_iter()
        .map(|df| if df == 0 { 0.0 } else { (n / df as f64).ln() })
        .collect();
    let rows = s
        .rows
        .iter()
        .map(|row| {
            row.iter()
                .filter(|&&e| idf[e as usize] > 0.0)
                .map(|&e| (e, idf[e as usize]))
                .collect()
        })
        .collect();
    Ok(TfidfMatrix {
        n_cols: s.n_events(),
        idf,
        rows,
    })
}

/// Undirected member-member graph with weights in (0, 1] and no self-loops.
#[derive(Clone, Debug, PartialEq)]
pub struct MemberGraph {
    nodes: Vec<MemberId>,
    /// `(u, v, w)` with `u < v`, sorted.
    edges: Vec<(u32, u32, f64)>,
    offsets: Vec<usize>,
    adjacency: Vec<(u32, f64)>,
}

impl MemberGraph {
    pub fn new(nodes: Vec<MemberId>, mut edges: Vec<(u32, u32, f64)>) -> Result<Self> {
        let n = nodes.len();
        for e in &mut edges {
            if e.0 > e.1 {
                *e = (e.1, e.0, e.2);
            }
            let (u, v, w) = *e;
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop on node {u}")));
            }
            if v as usize >= n {
                return Err(Error::InvalidGraph(format!("edge ({u}, {v}) out of range")));
            }
            if !(w > 0.0 && w <= 1.0) {
                return Err(Error::InvalidGraph(format!(
                    "edge ({u}, {v}) has weight {w} outside (0, 1]"
                )));
            }
        }
        edges.sort_by_key(|e| (e.0, e.1));
        if let Some(w) = edges.windows(2).find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(Error::InvalidGraph(format!("duplicate edge ({}, {})", w[0].0, w[0].1)));
        }
        Ok(Self::from_sorted(nodes, edges))
    }

    fn from_sorted(nodes: Vec<MemberId>, edges: Vec<(u32, u32, f64)>) -> Self {
        let n = nodes.len();
        let mut deg = vec![0usize; n + 1];
        for &(u, v, _) in &edges {
            deg[u as usize + 1] += 1;
            deg[v as usize + 1] += 1;
        }
        for i in 0..n {
            deg[i + 1] += deg[i];
        }
        let offsets = deg;
        let mut fill = offsets.clone();
        let mut adjacency = vec![(0u32, 0.0f64); 2 * edges.len()];
        for &(u, v, w) in &edges {
            adjacency[fill[u as usize]] = (v, w);
            fill[u as usize] += 1;
            adjacency[fill[v as usize]] = (u, w);
            fill[v as usize] += 1;
        }
        // with edges sorted by (u, v), every neighbor list comes out ascending
        debug_assert!((0..n).all(|i| adjacency[offsets[i]..offsets[i + 1]]
            .windows(2)
            .all(|w| w[0].0 < w[1].0)));
        Self {
            nodes,
            edges,
            offsets,
            adjacency,
        }
    }

    pub fn nodes(&self) -> &[MemberId] {
        &self.nodes
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn edges(&self) -> &[(u32, u32, f64)] {
        &self.edges
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, i: usize) -> &[(u32, f64)] {
        &self.adjacency[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn strength(&self, i: usize) -> f64 {
        self.neighbors(i).iter().map(|&(_, w)| w).sum()
    }

    pub fn node_index(&self, m: &MemberId) -> Option<usize> {
        // nodes built from slices are sorted; fall back to a scan otherwise
        match self.nodes.binary_search(m) {
            Ok(i) => Some(i),
            Err(_) => self.nodes.iter().position(|n| n == m),
        }
    }

    pub fn weight(&self, u: usize, v: usize) -> Option<f64> {
        let nb = self.neighbors(u);
        nb.binary_search_by_key(&(v as u32), |&(j, _)| j).ok().map(|k| nb[k].1)
    }
}

/// Projects a slice onto members: each member pair with a positive cosine
/// similarity between their TF-IDF rows gets an edge of that weight.
pub fn project_members(w: &TfidfMatrix, s: &YearSlice) -> Result<MemberGraph> {
    if w.n_rows() != s.n_members() || w.n_cols() != s.n_events() {
        return Err(Error::DimensionMismatch(format!(
            "weights are {}x{} but the slice is {}x{}",
            w.n_rows(),
            w.n_cols(),
            s.n_members(),
            s.n_events()
        )));
    }
    let n = w.n_rows();
    let norm_sq: Vec<f64> = w.rows.iter().map(|row| row.iter().map(|&(_, x)| x * x).sum()).collect();

    let mut columns: Vec<Vec<(u32, f64)>> = vec![Vec::new(); w.n_cols()];
    for (i, row) in w.rows.iter().enumerate() {
        for &(e, x) in row {
            columns[e as usize].push((i as u32, x));
        }
    }

    // products are positive, so a zero accumulator marks an untouched member
    let mut acc = vec![0.0f64; n];
    let mut touched = vec![0u32; n];
    let mut edges = Vec::new();
    for i in 0..n {
        let mut n_touched = 0;
        for &(e, xi) in &w.rows[i] {
            let col = &columns[e as usize];
            let start = col.partition_point(|&(j, _)| j as usize <= i);
            for &(j, xj) in &col[start..] {
                let a = &mut acc[j as usize];
                touched[n_touched] = j;
                n_touched += (*a == 0.0) as usize;
                *a += xi * xj;
            }
        }
        let touched = &mut touched[..n_touched];
        touched.sort_unstable();
        for &j in touched.iter() {
            let dot = acc[j as usize];
            acc[j as usize] = 0.0;
            if dot > 0.0 {
                let cos = (dot / (norm_sq[i] * norm_sq[j as usize]).sqrt()).min(1.0);
                edges.push((i as u32, j, cos));
            }
        }
    }
    Ok(MemberGraph::from_sorted(s.active_members.clone(), edges))
}

/// Convenience: slice, weight and project one year.
pub fn build_year_graph(d: &Dataset, year: i32) -> Result<(YearSlice, MemberGraph)> {
    let slice = yearly_slice(d, year)?;
    if slice.is_empty() {
        let g = MemberGraph::from_sorted(Vec::new(), Vec::new());
        return Ok((slice, g));
    }
    let w = tfidf_incidence(&slice)?;
    let g = project_members(&w, &slice)?;
    Ok((slice, g))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum YearDefinition {
    Calendar,
    /// Consecutive 365-day windows starting at the member's first attendance.
    MemberRelative,
}

/// Per-member, per-year counts of attended events by hosting group.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttendanceVector {
    pub member: MemberId,
    /// Calendar year, or window index (0 = first window) for member-relative years.
    pub year: i32,
    pub counts: BTreeMap<GroupId, u32>,
}

impl AttendanceVector {
    pub fn total(&self) -> u32 {
        self.counts.values().sum()
    }
}

/// Attendance vectors for every member-year with at least one attendance,
/// ordered by member then year.
pub fn attendance_vectors(d: &Dataset, year_def: YearDefinition) -> Vec<AttendanceVector> {
    let idx = d.index();
    let mut out = Vec::new();
    for m in 0..idx.member_ids.len() {
        let Some(first) = idx.first_date(m) else { continue };
        let mut current: Option<AttendanceVector> = None;
        for &e in &idx.member_events[m] {
            let Some(g) = idx.event_group[e] else { continue };
            let date = idx.event_date[e];
            let year = match year_def {
                YearDefinition::Calendar => date.year(),
                YearDefinition::MemberRelative => ((date - first).num_days() / 365) as i32,
            };
            if current.as_ref().is_some_and(|v| v.year != year) {
                out.extend(current.take());
            }
            let v = current.get_or_insert_with(|| AttendanceVector {
                member: idx.member_ids[m].clone(),
                year,
                counts: BTreeMap::new(),
            });
            *v.counts.entry(idx.group_ids[g].clone()).or_insert(0) += 1;
        }
        out.extend(current);
    }
    out
}
