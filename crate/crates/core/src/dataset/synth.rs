//! Desk-scale synthetic corpora with planted cluster structure.
//!
//! Groups are split round-robin into planted clusters, each with its own
//! topic vocabulary. Every member has a home cluster and, each year, attends
//! each event independently with a probability chosen so that the expected
//! number of attendances is `attendances_per_member_year`, a share
//! `1 - cross_cluster_attendance_prob` of it inside the home cluster and the
//! remainder spread evenly over the other clusters.
//!
//! Between years a fixed fraction of active members exits, new members enter
//! (each carrying one interest term never seen before), and a fraction of the
//! survivors rewires: for one transition year the member spreads attendance
//! evenly across all clusters, then settles in a different home cluster.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Datelike, NaiveDate};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetParts, Event};
use crate::error::{Error, Result};
use crate::ids::{EventId, GroupId, InterestTerm, MemberId};

const VOCAB_PER_CLUSTER: usize = 10;
const TOPICS_PER_GROUP: usize = 2;

fn default_attendances() -> f64 {
    8.0
}

fn default_start_year() -> i32 {
    2010
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    /// Size of the initial population.
    pub n_members: usize,
    pub n_groups: usize,
    pub n_years: usize,
    pub events_per_group_year: usize,
    pub n_planted_clusters: usize,
    pub entry_rate: f64,
    pub exit_rate: f64,
    pub rewiring_rate: f64,
    pub cross_cluster_attendance_prob: f64,
    pub terms_per_member: usize,
    pub seed: u64,
    #[serde(default = "default_attendances")]
    pub attendances_per_member_year: f64,
    #[serde(default = "default_start_year")]
    pub start_year: i32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_members: 500,
            n_groups: 8,
            n_years: 5,
            events_per_group_year: 12,
            n_planted_clusters: 2,
            entry_rate: 0.2,
            exit_rate: 0.2,
            rewiring_rate: 0.1,
            cross_cluster_attendance_prob: 0.05,
            terms_per_member: 3,
            seed: 0,
            attendances_per_member_year: default_attendances(),
            start_year: default_start_year(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("entry_rate", self.entry_rate),
            ("exit_rate", self.exit_rate),
            ("rewiring_rate", self.rewiring_rate),
            ("cross_cluster_attendance_prob", self.cross_cluster_attendance_prob),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!("{name} = {p} is not in [0, 1]")));
            }
        }
        if self.n_planted_clusters > self.n_groups {
            return Err(Error::InvalidConfig(format!(
                "n_planted_clusters ({}) exceeds n_groups ({})",
                self.n_planted_clusters, self.n_groups
            )));
        }
        if self.n_groups > 0 && self.n_planted_clusters == 0 {
            return Err(Error::InvalidConfig("groups need at least one planted cluster".into()));
        }
        if !self.attendances_per_member_year.is_finite() || self.attendances_per_member_year < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "attendances_per_member_year = {} must be finite and nonnegative",
                self.attendances_per_member_year
            )));
        }
        NaiveDate::from_ymd_opt(self.start_year, 1, 1)
            .and_then(|_| NaiveDate::from_ymd_opt(self.start_year + self.n_years as i32, 1, 1))
            .ok_or_else(|| Error::InvalidConfig("year range is not representable".into()))?;
        Ok(())
    }
}

/// What the generator planted, for checking recovery.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlantedTruth {
    pub group_cluster: BTreeMap<GroupId, usize>,
    pub entry_year: BTreeMap<MemberId, i32>,
    /// Home cluster of each active member-year (before any rewiring that
    /// year takes effect).
    pub home_cluster: BTreeMap<(MemberId, i32), usize>,
    /// Member-years spent in a rewiring transition.
    pub rewiring: BTreeSet<(MemberId, i32)>,
}

struct SimMember {
    id: MemberId,
    home: usize,
}

struct Universe<'a> {
    c: &'a SynthConfig,
    groups: &'a [GroupId],
    cluster_groups: &'a [Vec<usize>],
    vocab: &'a [Vec<InterestTerm>],
}

impl Universe<'_> {
    fn spawn(
        &self,
        rng: &mut ChaCha8Rng,
        year: i32,
        entrant: bool,
        parts: &mut DatasetParts,
        members: &mut Vec<SimMember>,
        truth: &mut PlantedTruth,
    ) -> usize {
        let k = self.cluster_groups.len();
        let pos = members.len();
        let id = MemberId::new(format!("m{pos:06}"));
        let home = if k > 0 { rng.random_range(0..k) } else { 0 };
        if k > 0 && !self.cluster_groups[home].is_empty() {
            let cg = &self.cluster_groups[home];
            let g = cg[rng.random_range(0..cg.len())];
            parts.memberships.push((id.clone(), self.groups[g].clone()));
        }
        let mut n_vocab = self.c.terms_per_member;
        if entrant && n_vocab > 0 {
            let fresh = InterestTerm::new(&format!("new {year} m{pos:06}")).expect("nonempty");
            parts.member_interests.push((id.clone(), fresh));
            n_vocab -= 1;
        }
        if k > 0 {
            let picks = index::sample(rng, VOCAB_PER_CLUSTER, n_vocab.min(VOCAB_PER_CLUSTER));
            for j in picks.into_iter() {
                parts.member_interests.push((id.clone(), self.vocab[home][j].clone()));
            }
        }
        parts.members.insert(id.clone());
        truth.entry_year.insert(id.clone(), year);
        members.push(SimMember { id, home });
        pos
    }
}

pub fn generate_synthetic(c: &SynthConfig) -> Result<Dataset> {
    generate_synthetic_with_truth(c).map(|(d, _)| d)
}

pub fn generate_synthetic_with_truth(c: &SynthConfig) -> Result<(Dataset, PlantedTruth)> {
    c.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let k = c.n_planted_clusters;
    let mut parts = DatasetParts::default();
    let mut truth = PlantedTruth::default();

    let groups: Vec<GroupId> = (0..c.n_groups).map(|g| GroupId::new(format!("g{g:04}"))).collect();
    let group_cluster: Vec<usize> = (0..c.n_groups).map(|g| g % k.max(1)).collect();
    let mut cluster_groups = vec![Vec::new(); k];
    for (g, &cl) in group_cluster.iter().enumerate() {
        cluster_groups[cl].push(g);
        truth.group_cluster.insert(groups[g].clone(), cl);
    }
    parts.groups.extend(groups.iter().cloned());

    let vocab: Vec<Vec<InterestTerm>> = (0..k)
        .map(|cl| {
            (0..VOCAB_PER_CLUSTER)
                .map(|j| InterestTerm::new(&format!("cluster{cl} topic{j}")).expect("nonempty"))
                .collect()
        })
        .collect();
    for (g, &cl) in group_cluster.iter().enumerate() {
        for j in index::sample(&mut rng, VOCAB_PER_CLUSTER, TOPICS_PER_GROUP).into_iter() {
            parts.group_topics.push((groups[g].clone(), vocab[cl][j].clone()));
        }
    }

    // events, and per year the event positions of each cluster
    let mut cluster_year_events: Vec<Vec<Vec<usize>>> = Vec::with_capacity(c.n_years);
    for y in 0..c.n_years {
        let year = c.start_year + y as i32;
        let days = NaiveDate::from_ymd_opt(year, 12, 31).expect("validated").ordinal();
        let mut drawn: Vec<(u32, usize, usize)> = Vec::new();
        for g in 0..c.n_groups {
            for s in 0..c.events_per_group_year {
                drawn.push((rng.random_range(1..=days), g, s));
            }
        }
        drawn.sort_unstable();
        let mut per_cluster = vec![Vec::new(); k];
        for (day, g, _) in drawn {
            let pos = parts.events.len();
            parts.events.push(Event {
                id: EventId::new(format!("e{pos:07}")),
                group: groups[g].clone(),
                date: NaiveDate::from_yo_opt(year, day).expect("valid ordinal"),
            });
            per_cluster[group_cluster[g]].push(pos);
        }
        cluster_year_events.push(per_cluster);
    }

    let mut members: Vec<SimMember> = Vec::new();
    let mut active: Vec<usize> = Vec::new();
    let universe = Universe {
        c,
        groups: &groups,
        cluster_groups: &cluster_groups,
        vocab: &vocab,
    };

    for (y, year_events) in cluster_year_events.iter().enumerate() {
        let year = c.start_year + y as i32;
        let mut rewiring = BTreeSet::new();
        if y == 0 {
            for _ in 0..c.n_members {
                let m = universe.spawn(&mut rng, year, false, &mut parts, &mut members, &mut truth);
                active.push(m);
            }
        } else {
            let before = active.len();
            let n_exit = (c.exit_rate * before as f64).round() as usize;
            let leaving: BTreeSet<usize> = index::sample(&mut rng, before, n_exit).into_iter().collect();
            active = active
                .iter()
                .enumerate()
                .filter(|(i, _)| !leaving.contains(i))
                .map(|(_, &m)| m)
                .collect();
            let n_rewire = (c.rewiring_rate * active.len() as f64).round() as usize;
            if k > 1 {
                for i in index::sample(&mut rng, active.len(), n_rewire).into_iter() {
                    rewiring.insert(active[i]);
                }
            }
            let n_enter = (c.entry_rate * before as f64).round() as usize;
            for _ in 0..n_enter {
                let m = universe.spawn(&mut rng, year, true, &mut parts, &mut members, &mut truth);
                active.push(m);
            }
        }

        for &m in &active {
            let home = members[m].home;
            let exploring = rewiring.contains(&m);
            truth.home_cluster.insert((members[m].id.clone(), year), home);
            if exploring {
                truth.rewiring.insert((members[m].id.clone(), year));
            }

            let mut attended: Vec<usize> = Vec::new();
            for (cl, evs) in year_events.iter().enumerate() {
                if evs.is_empty() {
                    continue;
                }
                let share = if exploring {
                    1.0 / k as f64
                } else if k == 1 {
                    1.0
                } else if cl == home {
                    1.0 - c.cross_cluster_attendance_prob
                } else {
                    c.cross_cluster_attendance_prob / (k - 1) as f64
                };
                let p = (c.attendances_per_member_year * share / evs.len() as f64).min(1.0);
                if p <= 0.0 {
                    continue;
                }
                let n = Binomial::new(evs.len() as u64, p)
                    .expect("p in [0, 1]")
                    .sample(&mut rng) as usize;
                attended.extend(index::sample(&mut rng, evs.len(), n).into_iter().map(|i| evs[i]));
            }
            if attended.is_empty() {
                // every active member-year has at least one RSVP
                let fallback = if year_events.get(home).is_some_and(|e| !e.is_empty()) {
                    Some(&year_events[home])
                } else {
                    year_events.iter().find(|e| !e.is_empty())
                };
                if let Some(evs) = fallback {
                    attended.push(evs[rng.random_range(0..evs.len())]);
                }
            }
            attended.sort_unstable();
            for e in attended {
                parts.rsvps.push((members[m].id.clone(), parts.events[e].id.clone()));
            }

            if exploring {
                let shift = rng.random_range(1..k);
                members[m].home = (home + shift) % k;
            }
        }
    }

    parts.rsvps.sort();
    parts.memberships.sort();
    parts.member_interests.sort();
    parts.group_topics.sort();
    Ok((Dataset::from_parts(parts), truth))
}
