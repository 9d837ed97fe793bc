//! Member-year panel and the fixed-effects regression of specialization on
//! year, event novelty and activity controls.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::ids::MemberId;
use crate::metrics::{novelty_scores, specialization_scores};
use crate::netbuild::{build_year_graph, MemberGraph, YearDefinition};

pub const REGRESSORS: [&str; 4] = ["year", "novelty", "log_events", "log_connections"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PanelRow {
    #[serde(rename = "member_id")]
    pub member: MemberId,
    pub year: i32,
    pub specialization: f64,
    pub novelty: f64,
    pub log_events: f64,
    pub log_connections: f64,
}

impl PanelRow {
    fn regressors(&self) -> [f64; 4] {
        [self.year as f64, self.novelty, self.log_events, self.log_connections]
    }

    fn is_finite(&self) -> bool {
        self.specialization.is_finite() && self.regressors().iter().all(|x| x.is_finite())
    }
}

/// One row per member-year where both specialization and calendar-year
/// novelty are defined, ordered by year then member.
pub fn build_panel(d: &Dataset) -> Result<Vec<PanelRow>> {
    let years: Vec<i32> = d.index().years().collect();
    let graphs: Vec<(i32, MemberGraph)> = years
        .into_par_iter()
        .map(|y| Ok((y, build_year_graph(d, y)?.1)))
        .collect::<Result<_>>()?;
    panel_from_graphs(d, &graphs)
}

/// `build_panel` over precomputed yearly projections.
pub(crate) fn panel_from_graphs(d: &Dataset, graphs: &[(i32, MemberGraph)]) -> Result<Vec<PanelRow>> {
    let novelty: HashMap<(MemberId, i32), f64> = novelty_scores(d, YearDefinition::Calendar)
        .into_iter()
        .map(|r| ((r.member, r.year), r.novelty))
        .collect();
    let idx = d.index();
    let per_year: Vec<Vec<PanelRow>> = graphs
        .par_iter()
        .map(|(y, g)| -> Result<Vec<PanelRow>> {
            let y = *y;
            let mut rows = Vec::new();
            for rec in specialization_scores(d, g, y)? {
                let Some(&nov) = novelty.get(&(rec.member.clone(), y)) else {
                    continue;
                };
                let m = idx.member(&rec.member)?;
                let node = g
                    .node_index(&rec.member)
                    .expect("specialization is scored on graph nodes");
                rows.push(PanelRow {
                    year: y,
                    specialization: rec.specialization,
                    novelty: nov,
                    log_events: (idx.member_events_in_year(m, y).len() as f64).ln_1p(),
                    log_connections: (g.degree(node) as f64).ln_1p(),
                    member: rec.member,
                });
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(per_year.into_iter().flatten().collect())
}

pub fn write_panel(rows: &[PanelRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_panel(path: &Path) -> Result<Vec<PanelRow>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path)?;
    let file = path.display().to_string();
    let mut rows = Vec::new();
    for (i, rec) in r.deserialize::<PanelRow>().enumerate() {
        let line = i as u64 + 2;
        let row = rec.map_err(|e| Error::MalformedRow {
            file: file.clone(),
            line,
            reason: e.to_string(),
        })?;
        if !row.is_finite() {
            return Err(Error::MalformedRow {
                file: file.clone(),
                line,
                reason: "non-finite value".into(),
            });
        }
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Coefficient {
    pub regressor: String,
    pub coef: f64,
    pub robust_se: f64,
    pub t: f64,
    pub p: f64,
    /// Coefficient scaled by sd(regressor) / sd(outcome) over the fitted rows.
    pub standardized: f64,
}

impl Coefficient {
    pub fn stars(&self) -> &'static str {
        stars(self.p)
    }
}

pub fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegressionResult {
    pub coefficients: Vec<Coefficient>,
    pub n_obs: usize,
    pub n_members: usize,
    /// Members with a single row, which carry no within-member variation.
    pub dropped_members: usize,
    pub df_resid: usize,
    pub r_squared_within: f64,
}

impl RegressionResult {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.regressor == name)
    }
}

fn sd(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    (xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Within (member-demeaned) OLS with HC1 robust standard errors. The
/// residual degrees of freedom are n - members - regressors.
pub fn fit_fe_panel(rows: &[PanelRow]) -> Result<RegressionResult> {
    const P: usize = REGRESSORS.len();
    let mut sorted: Vec<&PanelRow> = rows.iter().collect();
    sorted.sort_by(|a, b| (&a.member, a.year).cmp(&(&b.member, b.year)));
    if let Some(bad) = sorted.iter().find(|r| !r.is_finite()) {
        return Err(Error::InsufficientPanel(format!(
            "row for `{}` in {} has a non-finite value",
            bad.member, bad.year
        )));
    }

    let mut by_member: BTreeMap<&MemberId, Vec<&PanelRow>> = BTreeMap::new();
    for r in sorted {
        by_member.entry(&r.member).or_default().push(r);
    }
    let total_members = by_member.len();
    by_member.retain(|_, rs| rs.len() >= 2);
    let n_members = by_member.len();
    let kept: Vec<&PanelRow> = by_member.values().flatten().copied().collect();
    let n = kept.len();
    if n <= n_members + P {
        return Err(Error::InsufficientPanel(format!(
            "{n} rows over {n_members} members leave no residual degrees of freedom"
        )));
    }

    let mut x = DMatrix::<f64>::zeros(n, P);
    let mut y = DVector::<f64>::zeros(n);
    let mut row = 0;
    for rs in by_member.values() {
        let k = rs.len() as f64;
        let mean_y = rs.iter().map(|r| r.specialization).sum::<f64>() / k;
        let mut mean_x = [0.0; P];
        for r in rs {
            for (m, v) in mean_x.iter_mut().zip(r.regressors()) {
                *m += v / k;
            }
        }
        for r in rs {
            y[row] = r.specialization - mean_y;
            for (j, v) in r.regressors().into_iter().enumerate() {
                x[(row, j)] = v - mean_x[j];
            }
            row += 1;
        }
    }

    for (j, name) in REGRESSORS.iter().enumerate() {
        let within: f64 = x.column(j).iter().map(|v| v * v).sum();
        let raw: f64 = kept.iter().map(|r| r.regressors()[j].powi(2)).sum();
        if within <= 1e-20 * raw.max(f64::MIN_POSITIVE) {
            return Err(Error::ZeroWithinVariance((*name).into()));
        }
    }

    let xtx = x.transpose() * &x;
    // rank check on the unit-diagonal rescaling so units do not matter
    let scale = DVector::from_iterator(P, (0..P).map(|j| 1.0 / xtx[(j, j)].sqrt()));
    let corr = DMatrix::from_fn(P, P, |i, j| xtx[(i, j)] * scale[i] * scale[j]);
    let min_eig = corr.symmetric_eigenvalues().min();
    if min_eig < 1e-10 {
        return Err(Error::SingularDesign);
    }
    let bread = xtx.try_inverse().ok_or(Error::SingularDesign)?;
    let beta = &bread * (x.transpose() * &y);
    let resid = &y - &x * &beta;

    let mut meat = DMatrix::<f64>::zeros(P, P);
    for i in 0..n {
        let xi = x.row(i).transpose();
        meat += (&xi * xi.transpose()) * (resid[i] * resid[i]);
    }
    let df = n - n_members - P;
    let hc1 = n as f64 / df as f64;
    let cov = &bread * meat * &bread * hc1;

    let ssr = resid.norm_squared();
    let sst = y.norm_squared();
    let r_squared_within = if sst > 0.0 { 1.0 - ssr / sst } else { 1.0 };

    let t_dist = StudentsT::new(0.0, 1.0, df as f64).expect("positive degrees of freedom");
    let sd_y = sd(kept.iter().map(|r| r.specialization));
    let coefficients = REGRESSORS
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let coef = beta[j];
            let se = cov[(j, j)].max(0.0).sqrt();
            let t = if se > 0.0 {
                coef / se
            } else if coef == 0.0 {
                0.0
            } else {
                f64::INFINITY.copysign(coef)
            };
            let p = (2.0 * t_dist.sf(t.abs())).min(1.0);
            let sd_x = sd(kept.iter().map(|r| r.regressors()[j]));
            Coefficient {
                regressor: (*name).into(),
                coef,
                robust_se: se,
                t,
                p,
                standardized: if sd_y > 0.0 { coef * sd_x / sd_y } else { f64::NAN },
            }
        })
        .collect();

    Ok(RegressionResult {
        coefficients,
        n_obs: n,
        n_members,
        dropped_members: total_members - n_members,
        df_resid: df,
        r_squared_within,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(m: &str, year: i32, spec: f64, nov: f64, ev: f64, con: f64) -> PanelRow {
        PanelRow {
            member: m.into(),
            year,
            specialization: spec,
            novelty: nov,
            log_events: ev,
            log_connections: con,
        }
    }

    /// Deterministic pseudo-random panel with y = 2·novelty + α_i + noise.
    fn panel(noise: f64) -> Vec<PanelRow> {
        let mut state = 7u64;
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut rows = Vec::new();
        for i in 0..40 {
            let alpha = next() * 3.0;
            for t in 0..5 {
                let nov = next();
                let ev = next() * 2.0;
                let con = next() * 4.0;
                let y = alpha + 2.0 * nov + 0.1 * ev - 0.05 * con + 0.01 * t as f64 + noise * (next() - 0.5);
                rows.push(row(&format!("m{i}"), 2010 + t, y, nov, ev, con));
            }
        }
        rows
    }

    #[test]
    fn noiseless_panel_recovers_coefficients() {
        let r = fit_fe_panel(&panel(0.0)).unwrap();
        assert!((r.coefficient("novelty").unwrap().coef - 2.0).abs() < 1e-12);
        assert!((r.coefficient("log_events").unwrap().coef - 0.1).abs() < 1e-12);
        assert!((r.r_squared_within - 1.0).abs() < 1e-12);
        assert_eq!(r.n_obs, 200);
        assert_eq!(r.n_members, 40);
        assert_eq!(r.df_resid, 200 - 40 - 4);
    }

    #[test]
    fn member_shift_and_row_order_leave_coefficients_unchanged() {
        let base = panel(0.3);
        let a = fit_fe_panel(&base).unwrap();
        let mut shifted = base.clone();
        for r in shifted.iter_mut().filter(|r| r.member.as_str() == "m3") {
            r.specialization += 10.0;
        }
        let b = fit_fe_panel(&shifted).unwrap();
        let mut reversed = base.clone();
        reversed.reverse();
        let c = fit_fe_panel(&reversed).unwrap();
        for j in 0..4 {
            let (ca, cb) = (a.coefficients[j].coef, b.coefficients[j].coef);
            assert!((ca - cb).abs() <= 1e-9 * ca.abs().max(1.0));
            assert_eq!(a.coefficients[j], c.coefficients[j]);
        }
    }

    #[test]
    fn singleton_members_are_dropped() {
        let mut rows = panel(0.2);
        rows.push(row("lonely", 2012, 9.0, 0.5, 1.0, 1.0));
        let r = fit_fe_panel(&rows).unwrap();
        assert_eq!(r.dropped_members, 1);
        assert_eq!(r.n_obs, 200);
    }

    #[test]
    fn degenerate_designs_are_rejected() {
        let mut rows = panel(0.2);
        for r in &mut rows {
            r.log_connections = 1.5;
        }
        assert!(matches!(fit_fe_panel(&rows), Err(Error::ZeroWithinVariance(n)) if n == "log_connections"));

        let mut rows = panel(0.2);
        for r in &mut rows {
            r.log_connections = 2.0 * r.log_events;
        }
        assert!(matches!(fit_fe_panel(&rows), Err(Error::SingularDesign)));

        assert!(matches!(
            fit_fe_panel(&panel(0.2)[..6]),
            Err(Error::InsufficientPanel(_))
        ));
    }

    #[test]
    fn stars_thresholds() {
        assert_eq!(stars(0.0005), "***");
        assert_eq!(stars(0.005), "**");
        assert_eq!(stars(0.03), "*");
        assert_eq!(stars(0.2), "");
    }

    #[test]
    fn panel_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("panel.csv");
        let rows = panel(0.1);
        write_panel(&rows, &path).unwrap();
        assert_eq!(read_panel(&path).unwrap(), rows);
        let header = std::fs::read_to_string(&path).unwrap();
        assert!(header.starts_with("member_id,year,specialization,novelty,log_events,log_connections\n"));
    }

    #[test]
    fn panel_rows_need_a_prior_year() {
        let d = crate::dataset::generate_synthetic(&crate::dataset::SynthConfig {
            n_members: 80,
            n_groups: 4,
            n_years: 3,
            events_per_group_year: 6,
            ..Default::default()
        })
        .unwrap();
        let rows = build_panel(&d).unwrap();
        assert!(!rows.is_empty());
        let idx = d.index();
        for r in &rows {
            let m = idx.member(&r.member).unwrap();
            assert!(idx.is_active(m, r.year - 1));
            assert!(r.is_finite());
        }
    }
}
