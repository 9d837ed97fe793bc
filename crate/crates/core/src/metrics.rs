//! Tenure, interest-term adopter tenure, event novelty, interest
//! distributions, specialization scores and member turnover.

use std::collections::{BTreeMap, BTreeSet};

use chrono::Datelike;

use crate::dataset::{Dataset, Index};
use crate::error::{Error, Result};
use crate::ids::{InterestTerm, MemberId};
use crate::netbuild::{attendance_vectors, AttendanceVector, MemberGraph, YearDefinition};

/// Years since the member's first attendance: `year - year(first RSVP)`.
pub fn tenure(m: &MemberId, year: i32, d: &Dataset) -> Result<u32> {
    let idx = d.index();
    let pos = idx.member(m)?;
    match idx.first_date(pos) {
        Some(first) if first.year() <= year => Ok((year - first.year()) as u32),
        _ => Err(Error::NoAttendanceBy {
            member: m.clone(),
            year,
        }),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TermTenureRecord {
    pub term: InterestTerm,
    pub year: i32,
    pub mean_adopter_tenure: f64,
    /// No member active in an earlier year held this term.
    pub is_new: bool,
    pub n_adopters: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TermTenureReport {
    pub year: i32,
    /// Mean tenure over all active members of the year.
    pub network_mean_tenure: f64,
    pub records: Vec<TermTenureRecord>,
}

/// Mean tenure of the active adopters of every term present in `year`.
pub fn term_adopter_tenure(d: &Dataset, year: i32) -> TermTenureReport {
    let idx = d.index();
    let active = idx.active_in_year(year);

    // term sets are time-invariant, so a term was held in an earlier
    // snapshot iff some member whose first year precedes `year` holds it
    let mut seen_before = vec![false; idx.terms.len()];
    for m in 0..idx.member_ids.len() {
        if idx.first_date(m).is_some_and(|f| f.year() < year) {
            for &t in &idx.member_terms[m] {
                seen_before[t as usize] = true;
            }
        }
    }

    let mut sums: BTreeMap<u32, (u64, usize)> = BTreeMap::new();
    let mut total = 0u64;
    for &m in &active {
        let t = (year - idx.first_date(m).expect("active").year()) as u64;
        total += t;
        for &term in &idx.member_terms[m] {
            let e = sums.entry(term).or_insert((0, 0));
            e.0 += t;
            e.1 += 1;
        }
    }
    let network_mean_tenure = if active.is_empty() {
        0.0
    } else {
        total as f64 / active.len() as f64
    };
    let records = sums
        .into_iter()
        .map(|(term, (sum, n))| TermTenureRecord {
            term: idx.terms[term as usize].clone(),
            year,
            mean_adopter_tenure: sum as f64 / n as f64,
            is_new: !seen_before[term as usize],
            n_adopters: n,
        })
        .collect();
    TermTenureReport {
        year,
        network_mean_tenure,
        records,
    }
}

/// `1 - cos(current, previous)` for dense count vectors over the same
/// group axis. `None` if either vector is zero.
pub fn cosine_novelty(current: &[f64], previous: &[f64]) -> Option<f64> {
    let dot: f64 = current.iter().zip(previous).map(|(a, b)| a * b).sum();
    let na: f64 = current.iter().map(|a| a * a).sum();
    let nb: f64 = previous.iter().map(|b| b * b).sum();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some((1.0 - dot / (na * nb).sqrt()).clamp(0.0, 1.0))
}

/// Event novelty of a member: one minus the cosine similarity of this
/// year's group attendance vector and last year's.
pub fn novelty(x_t: &AttendanceVector, x_prev: &AttendanceVector) -> Result<f64> {
    if x_t.member != x_prev.member {
        return Err(Error::IncomparableVectors(format!(
            "members `{}` and `{}` differ",
            x_t.member, x_prev.member
        )));
    }
    if x_t.year != x_prev.year + 1 {
        return Err(Error::IncomparableVectors(format!(
            "years {} and {} are not consecutive",
            x_prev.year, x_t.year
        )));
    }
    let groups: BTreeSet<_> = x_t.counts.keys().chain(x_prev.counts.keys()).collect();
    let dense = |v: &AttendanceVector| -> Vec<f64> {
        groups
            .iter()
            .map(|g| v.counts.get(*g).copied().unwrap_or(0) as f64)
            .collect()
    };
    cosine_novelty(&dense(x_t), &dense(x_prev)).ok_or(Error::ZeroVector)
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoveltyRecord {
    pub member: MemberId,
    pub year: i32,
    pub novelty: f64,
}

/// Novelty for every member-year whose previous year is also active.
pub fn novelty_scores(d: &Dataset, year_def: YearDefinition) -> Vec<NoveltyRecord> {
    let vectors = attendance_vectors(d, year_def);
    vectors
        .windows(2)
        .filter(|w| w[0].member == w[1].member && w[1].year == w[0].year + 1)
        .filter_map(|w| {
            novelty(&w[1], &w[0]).ok().map(|n| NoveltyRecord {
                member: w[1].member.clone(),
                year: w[1].year,
                novelty: n,
            })
        })
        .collect()
}

/// A probability mass function over interest terms.
#[derive(Clone, Debug, PartialEq)]
pub struct InterestDistribution {
    mass: BTreeMap<InterestTerm, f64>,
}

impl InterestDistribution {
    /// Accepts nonnegative masses summing to 1 within 1e-9.
    pub fn new(mass: BTreeMap<InterestTerm, f64>) -> Result<Self> {
        if let Some((t, p)) = mass.iter().find(|(_, &p)| !(p.is_finite() && p >= 0.0)) {
            return Err(Error::InvalidDistribution(format!("mass of `{t}` is {p}")));
        }
        let total: f64 = mass.values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDistribution(format!("masses sum to {total}")));
        }
        Ok(Self { mass })
    }

    pub fn get(&self, t: &InterestTerm) -> f64 {
        self.mass.get(t).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&InterestTerm, f64)> {
        self.mass.iter().map(|(t, &p)| (t, p))
    }

    pub fn support_len(&self) -> usize {
        self.mass.len()
    }

    pub fn total(&self) -> f64 {
        self.mass.values().sum()
    }

    pub fn into_inner(self) -> BTreeMap<InterestTerm, f64> {
        self.mass
    }
}

/// Term shares over a population: members holding the term divided by
/// the total number of (member, term) holdings. Members without terms do
/// not count.
pub fn population_interest_distribution<'a>(
    members: impl IntoIterator<Item = &'a MemberId>,
    d: &Dataset,
) -> Result<InterestDistribution> {
    let idx = d.index();
    let mut positions = Vec::new();
    for m in members {
        positions.push(idx.member(m)?);
    }
    positions.sort_unstable();
    positions.dedup();
    let counts = TermCounts::from_members(idx, &positions);
    if counts.holdings == 0 {
        return Err(Error::NoInterestTerms);
    }
    let total = counts.holdings as f64;
    let mass = counts
        .counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(t, &c)| (idx.terms[t].clone(), c as f64 / total))
        .collect();
    Ok(InterestDistribution { mass })
}

/// Interest distribution of the ego network: `m` and every neighbor joined
/// to it by a positive-weight edge.
pub fn ego_interest_distribution(g: &MemberGraph, m: &MemberId, d: &Dataset) -> Result<InterestDistribution> {
    let i = g.node_index(m).ok_or_else(|| Error::UnknownMember(m.clone()))?;
    let ego: Vec<&MemberId> = std::iter::once(i)
        .chain(g.neighbors(i).iter().map(|&(j, _)| j as usize))
        .map(|j| &g.nodes()[j])
        .collect();
    population_interest_distribution(ego, d)
}

/// L1 distance between two interest distributions over the union of their
/// supports; lies in [0, 2].
pub fn specialization(f_g: &InterestDistribution, f_gi: &InterestDistribution) -> f64 {
    let terms: BTreeSet<&InterestTerm> = f_g.mass.keys().chain(f_gi.mass.keys()).collect();
    terms
        .into_iter()
        .map(|t| (f_g.get(t) - f_gi.get(t)).abs())
        .sum::<f64>()
        .min(2.0)
}

/// Fraction of this year's active members who were not active last year.
pub fn member_turnover(d: &Dataset, year: i32) -> Result<f64> {
    let idx = d.index();
    let current = idx.active_in_year(year);
    if current.is_empty() {
        return Err(Error::EmptyYear(year));
    }
    let previous = idx.active_in_year(year - 1);
    if previous.is_empty() {
        return Err(Error::EmptyYear(year - 1));
    }
    let entrants = current.iter().filter(|m| previous.binary_search(m).is_err()).count();
    Ok(entrants as f64 / current.len() as f64)
}

/// Term holding counts over a set of members, indexed by interned term.
pub(crate) struct TermCounts {
    pub counts: Vec<u32>,
    pub holdings: u64,
}

impl TermCounts {
    pub fn from_members(idx: &Index, members: &[usize]) -> Self {
        let mut counts = vec![0u32; idx.terms.len()];
        let mut holdings = 0u64;
        for &m in members {
            for &t in &idx.member_terms[m] {
                counts[t as usize] += 1;
            }
            holdings += idx.member_terms[m].len() as u64;
        }
        Self { counts, holdings }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpecializationRecord {
    pub member: MemberId,
    pub year: i32,
    pub specialization: f64,
}

/// Specialization of every node of `g` (the `year` projection) against the
/// population of the graph's nodes. Members whose ego network has no terms,
/// or who hold no terms themselves, are skipped.
pub fn specialization_scores(d: &Dataset, g: &MemberGraph, year: i32) -> Result<Vec<SpecializationRecord>> {
    let idx = d.index();
    let positions: Vec<usize> = g.nodes().iter().map(|m| idx.member(m)).collect::<Result<_>>()?;
    let population = TermCounts::from_members(idx, &positions);
    if population.holdings == 0 {
        return Ok(Vec::new());
    }
    let pop_total = population.holdings as f64;

    let mut ego_counts = vec![0u32; idx.terms.len()];
    let mut touched: Vec<u32> = Vec::new();
    let mut out = Vec::new();
    for (i, &pos) in positions.iter().enumerate() {
        if idx.member_terms[pos].is_empty() {
            continue;
        }
        let mut holdings = 0u64;
        let ego = std::iter::once(pos).chain(g.neighbors(i).iter().map(|&(j, _)| positions[j as usize]));
        for m in ego {
            for &t in &idx.member_terms[m] {
                if ego_counts[t as usize] == 0 {
                    touched.push(t);
                }
                ego_counts[t as usize] += 1;
            }
            holdings += idx.member_terms[m].len() as u64;
        }
        // sum over the ego support of |f_G - f_Gi|, plus the population mass
        // outside it
        touched.sort_unstable();
        let ego_total = holdings as f64;
        let mut inside = 0.0;
        let mut pop_inside = 0.0;
        for &t in &touched {
            let f_pop = population.counts[t as usize] as f64 / pop_total;
            let f_ego = ego_counts[t as usize] as f64 / ego_total;
            inside += (f_pop - f_ego).abs();
            pop_inside += f_pop;
            ego_counts[t as usize] = 0;
        }
        touched.clear();
        let score = (inside + (1.0 - pop_inside).max(0.0)).clamp(0.0, 2.0);
        out.push(SpecializationRecord {
            member: idx.member_ids[pos].clone(),
            year,
            specialization: score,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{DatasetParts, Event};
    use crate::netbuild::build_year_graph;

    fn term(s: &str) -> InterestTerm {
        InterestTerm::new(s).unwrap()
    }

    fn dist(pairs: &[(&str, f64)]) -> InterestDistribution {
        InterestDistribution::new(pairs.iter().map(|&(t, p)| (term(t), p)).collect()).unwrap()
    }

    fn av(member: &str, year: i32, counts: &[(&str, u32)]) -> AttendanceVector {
        AttendanceVector {
            member: member.into(),
            year,
            counts: counts.iter().map(|&(g, c)| (g.into(), c)).collect(),
        }
    }

    /// Member `name` attends one event per listed year, plus any terms.
    struct Fixture {
        parts: DatasetParts,
    }

    impl Fixture {
        fn new() -> Self {
            Self {
                parts: DatasetParts::default(),
            }
        }

        fn attend(&mut self, member: &str, event: &str, group: &str, date: &str) -> &mut Self {
            if !self.parts.events.iter().any(|e| e.id.as_str() == event) {
                self.parts.events.push(Event {
                    id: event.into(),
                    group: group.into(),
                    date: date.parse().unwrap(),
                });
            }
            self.parts.rsvps.push((member.into(), event.into()));
            self
        }

        fn terms(&mut self, member: &str, terms: &[&str]) -> &mut Self {
            for t in terms {
                self.parts.member_interests.push((member.into(), term(t)));
            }
            self
        }

        fn build(&mut self) -> Dataset {
            let mut p = std::mem::take(&mut self.parts);
            p.derive_universe();
            Dataset::from_parts(p)
        }
    }

    #[test]
    fn tenure_worked_examples() {
        let d = Fixture::new()
            .attend("a", "e07", "g", "2007-05-01")
            .attend("b", "e06", "g", "2006-05-01")
            .attend("a", "e18", "g", "2018-05-01")
            .build();
        assert_eq!(tenure(&"a".into(), 2018, &d).unwrap(), 11);
        assert_eq!(tenure(&"b".into(), 2006, &d).unwrap(), 0);
        assert!(matches!(
            tenure(&"a".into(), 2006, &d),
            Err(Error::NoAttendanceBy { .. })
        ));
    }

    #[test]
    fn tenure_nondecreasing() {
        let d = Fixture::new().attend("a", "e", "g", "2010-01-01").build();
        let ts: Vec<u32> = (2010..2020).map(|y| tenure(&"a".into(), y, &d).unwrap()).collect();
        assert!(ts.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn adopter_tenure_of_new_and_old_terms() {
        // x0 enters 2010, x2 enters 2008, x4 enters 2006; all active 2010
        let d = Fixture::new()
            .attend("x0", "a", "g", "2010-03-01")
            .attend("x2", "b", "g", "2008-03-01")
            .attend("x2", "a", "g", "2010-03-01")
            .attend("x4", "c", "g", "2006-03-01")
            .attend("x4", "a", "g", "2010-03-01")
            .attend("n", "a", "g", "2010-03-01")
            .terms("x0", &["shared"])
            .terms("x2", &["shared"])
            .terms("x4", &["shared"])
            .terms("n", &["fresh"])
            .build();
        let rep = term_adopter_tenure(&d, 2010);
        let shared = rep.records.iter().find(|r| r.term.as_str() == "shared").unwrap();
        assert_eq!(shared.mean_adopter_tenure, 2.0);
        assert!(!shared.is_new);
        assert_eq!(shared.n_adopters, 3);
        let fresh = rep.records.iter().find(|r| r.term.as_str() == "fresh").unwrap();
        assert_eq!(fresh.mean_adopter_tenure, 0.0);
        assert!(fresh.is_new);
        assert_eq!(rep.network_mean_tenure, 1.5);
    }

    #[test]
    fn novelty_of_worked_example() {
        let x17 = av("m", 2017, &[("Blockchain", 5), ("SelfDriving", 2)]);
        let x18 = av("m", 2018, &[("Blockchain", 7), ("DeepLearning", 1)]);
        let n = novelty(&x18, &x17).unwrap();
        assert!((n - (1.0 - 35.0 / 1450f64.sqrt())).abs() < 1e-12);
        assert!((n - 0.080855).abs() < 1e-6);
    }

    #[test]
    fn novelty_extremes() {
        let a = av("m", 1, &[("g1", 4), ("g2", 2)]);
        let b = av("m", 2, &[("g1", 2), ("g2", 1)]);
        assert!(novelty(&b, &a).unwrap().abs() < 1e-12);
        let c = av("m", 3, &[("g3", 5)]);
        assert_eq!(novelty(&c, &b).unwrap(), 1.0);
    }

    #[test]
    fn novelty_rejects_zero_and_mismatched_vectors() {
        let a = av("m", 1, &[("g1", 4)]);
        let z = av("m", 2, &[]);
        assert!(matches!(novelty(&z, &a), Err(Error::ZeroVector)));
        let other = av("q", 2, &[("g1", 1)]);
        assert!(novelty(&other, &a).is_err());
        let gap = av("m", 4, &[("g1", 1)]);
        assert!(novelty(&gap, &a).is_err());
    }

    #[test]
    fn population_share_worked_example() {
        // 10 people, the term "t" held by 3, everyone holds exactly one term
        let mut f = Fixture::new();
        for i in 0..10 {
            let m = format!("p{i}");
            f.attend(&m, "e", "g", "2015-01-01");
            f.terms(&m, &[if i < 3 { "t" } else { "other" }]);
        }
        let d = f.build();
        let dist = population_interest_distribution(d.members(), &d).unwrap();
        assert!((dist.get(&term("t")) - 0.3).abs() < 1e-15);
        assert!((dist.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn population_distribution_edge_cases() {
        let d = Fixture::new()
            .attend("a", "e", "g", "2015-01-01")
            .attend("b", "e", "g", "2015-01-01")
            .attend("c", "e", "g", "2015-01-01")
            .terms("a", &["a"])
            .terms("b", &["b"])
            .build();
        let both = population_interest_distribution([&"a".into(), &"b".into()], &d).unwrap();
        assert_eq!(both, dist(&[("a", 0.5), ("b", 0.5)]));
        // c has no terms and does not dilute
        let with_c = population_interest_distribution(d.members(), &d).unwrap();
        assert_eq!(with_c, both);
        assert!(matches!(
            population_interest_distribution([&"c".into()], &d),
            Err(Error::NoInterestTerms)
        ));
    }

    #[test]
    fn ego_distributions() {
        let nodes: Vec<MemberId> = vec!["c".into(), "l1".into(), "l2".into(), "solo".into()];
        let g = MemberGraph::new(nodes, vec![(0, 1, 0.5), (0, 2, 0.25)]).unwrap();
        let d = Fixture::new()
            .attend("c", "e", "g", "2015-01-01")
            .attend("l1", "e", "g", "2015-01-01")
            .attend("l2", "e", "g", "2015-01-01")
            .attend("solo", "f", "g", "2015-01-01")
            .terms("c", &["t"])
            .terms("l1", &["t"])
            .terms("l2", &["t"])
            .terms("solo", &["a", "b"])
            .build();
        assert_eq!(
            ego_interest_distribution(&g, &"c".into(), &d).unwrap(),
            dist(&[("t", 1.0)])
        );
        assert_eq!(
            ego_interest_distribution(&g, &"solo".into(), &d).unwrap(),
            dist(&[("a", 0.5), ("b", 0.5)])
        );
    }

    #[test]
    fn ego_distribution_three_node_hand_computation() {
        // path a - b - c; a {x,y}, b {y}, c {z}
        // ego(b) = {a,b,c}: holdings 4 -> x .25, y .5, z .25
        // ego(a) = {a,b}: holdings 3 -> x 1/3, y 2/3
        let nodes: Vec<MemberId> = vec!["a".into(), "b".into(), "c".into()];
        let g = MemberGraph::new(nodes, vec![(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let d = Fixture::new()
            .attend("a", "e", "g", "2015-01-01")
            .attend("b", "e", "g", "2015-01-01")
            .attend("c", "e", "g", "2015-01-01")
            .terms("a", &["x", "y"])
            .terms("b", &["y"])
            .terms("c", &["z"])
            .build();
        let eb = ego_interest_distribution(&g, &"b".into(), &d).unwrap();
        assert_eq!(eb, dist(&[("x", 0.25), ("y", 0.5), ("z", 0.25)]));
        let ea = ego_interest_distribution(&g, &"a".into(), &d).unwrap();
        assert!((ea.get(&term("x")) - 1.0 / 3.0).abs() < 1e-15);
        assert!((ea.get(&term("y")) - 2.0 / 3.0).abs() < 1e-15);
        // population = ego(b); specialization(a) = |.25-1/3| + |.5-2/3| + .25
        let pop = population_interest_distribution(d.members(), &d).unwrap();
        let expected = (0.25f64 - 1.0 / 3.0).abs() + (0.5f64 - 2.0 / 3.0).abs() + 0.25;
        assert!((specialization(&pop, &ea) - expected).abs() < 1e-15);
    }

    #[test]
    fn specialization_values() {
        let f = dist(&[("a", 0.5), ("b", 0.5)]);
        assert_eq!(specialization(&f, &f), 0.0);
        assert_eq!(specialization(&f, &dist(&[("c", 1.0)])), 2.0);
        assert!((specialization(&f, &dist(&[("a", 1.0)])) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fast_specialization_matches_distribution_route() {
        let d = crate::dataset::generate_synthetic(&crate::dataset::SynthConfig {
            n_members: 80,
            n_groups: 4,
            n_years: 2,
            events_per_group_year: 4,
            ..Default::default()
        })
        .unwrap();
        let (_, g) = build_year_graph(&d, 2011).unwrap();
        let pop = population_interest_distribution(g.nodes(), &d).unwrap();
        let fast = specialization_scores(&d, &g, 2011).unwrap();
        assert!(!fast.is_empty());
        for r in fast {
            let ego = ego_interest_distribution(&g, &r.member, &d).unwrap();
            assert!((specialization(&pop, &ego) - r.specialization).abs() < 1e-12);
        }
    }

    #[test]
    fn turnover_counts() {
        let mut f = Fixture::new();
        for m in ["a", "b", "c"] {
            f.attend(m, "e1", "g", "2015-01-01").attend(m, "e2", "g", "2016-01-01");
        }
        f.attend("d", "e2", "g", "2016-01-01");
        f.attend("z", "e3", "g", "2017-01-01");
        let d = f.build();
        assert_eq!(member_turnover(&d, 2016).unwrap(), 0.25);
        assert_eq!(member_turnover(&d, 2017).unwrap(), 1.0);
        assert!(matches!(member_turnover(&d, 2015), Err(Error::EmptyYear(2014))));
    }

    #[test]
    fn identical_active_sets_have_zero_turnover() {
        let mut f = Fixture::new();
        for m in ["a", "b"] {
            f.attend(m, "e1", "g", "2015-01-01").attend(m, "e2", "g", "2016-01-01");
        }
        assert_eq!(member_turnover(&f.build(), 2016).unwrap(), 0.0);
    }
}
