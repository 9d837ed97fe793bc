//! End-to-end run from a JSON config to a directory of CSV artifacts and a
//! manifest.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::community::louvain;
use crate::counterfactual::{expected_series, ModularitySeries, SimulationMode, DEFAULT_REPLICATES};
use crate::dataset::{generate_synthetic, load_dataset, validate, Dataset, DatasetPaths, SynthConfig};
use crate::econometrics::{fit_fe_panel, panel_from_graphs, PanelRow, RegressionResult};
use crate::error::{Error, Result};
use crate::metrics::{member_turnover, novelty_scores, tenure, term_adopter_tenure};
use crate::netbuild::{build_year_graph, MemberGraph, YearDefinition, YearSlice};

pub const TOOL_NAME: &str = "rewire-kit";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FILE: &str = "manifest.json";

fn default_replicates() -> usize {
    DEFAULT_REPLICATES
}

fn default_weighted() -> bool {
    true
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Directory holding the five dataset CSVs.
    #[serde(default)]
    pub input_dir: Option<PathBuf>,
    #[serde(default)]
    pub synth: Option<SynthConfig>,
    /// Inclusive calendar-year range; events outside it are dropped.
    #[serde(default)]
    pub years: Option<(i32, i32)>,
    pub seed: u64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_weighted")]
    pub weighted: bool,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.input_dir, &self.synth) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidConfig(
                    "exactly one of `input_dir` and `synth` may be set".into(),
                ))
            }
            (None, None) => return Err(Error::InvalidConfig("one of `input_dir` or `synth` is required".into())),
            (None, Some(s)) => s.validate()?,
            (Some(_), None) => {}
        }
        if self.replicates == 0 {
            return Err(Error::InvalidConfig("replicates must be at least 1".into()));
        }
        if let Some((lo, hi)) = self.years {
            if lo > hi {
                return Err(Error::InvalidConfig(format!("empty year range {lo}..={hi}")));
            }
        }
        Ok(())
    }

    /// Hex sha256 of the canonical JSON form, defaults included.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }

    /// Loads or generates the dataset, checks it and applies the year range.
    pub fn dataset(&self) -> Result<Dataset> {
        let d = match (&self.input_dir, &self.synth) {
            (Some(dir), _) => load_dataset(&DatasetPaths::in_dir(dir))?.dataset,
            (None, Some(s)) => generate_synthetic(s)?,
            (None, None) => return Err(Error::InvalidConfig("no dataset source".into())),
        };
        let violations = validate(&d);
        if !violations.is_empty() {
            return Err(Error::InvalidDataset(violations));
        }
        Ok(match self.years {
            Some((lo, hi)) => d.restrict_years(lo, hi),
            None => d,
        })
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Config,
    Ingest,
    Networks,
    Metrics,
    Modularity,
    Simulation,
    Regression,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Config => "config",
            Self::Ingest => "ingest",
            Self::Networks => "networks",
            Self::Metrics => "metrics",
            Self::Modularity => "modularity",
            Self::Simulation => "simulation",
            Self::Regression => "regression",
            Self::Write => "write",
        })
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} stage failed: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, PipelineError>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, PipelineError> {
        self.map_err(|source| PipelineError { stage, source })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    /// Louvain and simulation seed.
    pub pipeline: u64,
    /// Generator seed when the dataset is synthetic.
    pub synth: Option<u64>,
    /// Per-replicate seeds, `pipeline ^ r`.
    pub replicates: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seeds: Seeds,
    pub files: Vec<ManifestFile>,
}

/// Formats a float for CSV output; `None` becomes an empty cell.
pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn csv_bytes<I, R>(header: &[&str], rows: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn series_csv(s: &ModularitySeries) -> Result<Vec<u8>> {
    csv_bytes(
        &["year", "observed_q", "expected_q_mean", "expected_q_std", "gap"],
        s.points.iter().map(|p| {
            [
                p.year.to_string(),
                fmt_opt(p.observed_q),
                fmt_opt(p.expected_q_mean),
                fmt_opt(p.expected_q_std),
                fmt_opt(p.gap),
            ]
        }),
    )
}

pub fn regression_csv(r: &RegressionResult, standardized: bool) -> Result<Vec<u8>> {
    let mut header = vec!["regressor", "coef", "robust_se", "p", "stars"];
    if standardized {
        header.push("standardized_coef");
    }
    csv_bytes(
        &header,
        r.coefficients.iter().map(|c| {
            let mut row = vec![
                c.regressor.clone(),
                c.coef.to_string(),
                c.robust_se.to_string(),
                c.p.to_string(),
                c.stars().to_string(),
            ];
            if standardized {
                row.push(c.standardized.to_string());
            }
            row
        }),
    )
}

pub fn panel_csv(rows: &[PanelRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record([
            "member_id",
            "year",
            "specialization",
            "novelty",
            "log_events",
            "log_connections",
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn tenure_csv(d: &Dataset) -> Result<Vec<u8>> {
    let mut rows = Vec::new();
    for y in d.index().years() {
        for m in d.active_members(y) {
            rows.push([m.to_string(), y.to_string(), tenure(&m, y, d)?.to_string()]);
        }
    }
    csv_bytes(&["member_id", "year", "tenure"], rows)
}

pub fn term_tenure_csv(d: &Dataset) -> Result<Vec<u8>> {
    let reports: Vec<_> = d.index().years().map(|y| term_adopter_tenure(d, y)).collect();
    csv_bytes(
        &[
            "year",
            "term",
            "is_new",
            "n_adopters",
            "mean_adopter_tenure",
            "network_mean_tenure",
        ],
        reports.iter().flat_map(|rep| {
            rep.records.iter().map(move |r| {
                [
                    r.year.to_string(),
                    r.term.to_string(),
                    r.is_new.to_string(),
                    r.n_adopters.to_string(),
                    r.mean_adopter_tenure.to_string(),
                    rep.network_mean_tenure.to_string(),
                ]
            })
        }),
    )
}

pub fn novelty_csv(d: &Dataset, year_def: YearDefinition) -> Result<Vec<u8>> {
    csv_bytes(
        &["member_id", "year", "novelty"],
        novelty_scores(d, year_def)
            .into_iter()
            .map(|r| [r.member.to_string(), r.year.to_string(), r.novelty.to_string()]),
    )
}

pub fn turnover_csv(d: &Dataset) -> Result<Vec<u8>> {
    let rows = d
        .index()
        .years()
        .map(|y| {
            let t = match member_turnover(d, y) {
                Ok(t) => Some(t),
                Err(Error::EmptyYear(_)) => None,
                Err(e) => return Err(e),
            };
            Ok([y.to_string(), fmt_opt(t)])
        })
        .collect::<Result<Vec<_>>>()?;
    csv_bytes(&["year", "turnover"], rows)
}

struct YearNetwork {
    slice: YearSlice,
    graph: MemberGraph,
    q: Option<f64>,
    n_communities: Option<usize>,
}

/// Artifacts in manifest order.
pub const ARTIFACTS: [&str; 8] = [
    "yearly_summary.csv",
    "tenure.csv",
    "term_tenure.csv",
    "novelty.csv",
    "panel.csv",
    "modularity_series_undiff.csv",
    "modularity_series_static.csv",
    "regression.csv",
];

/// Runs every stage in memory, then writes the artifacts and the manifest
/// into `cfg.out_dir`. Files written by a failed run are removed.
pub fn run_pipeline(cfg: &PipelineConfig) -> std::result::Result<Manifest, PipelineError> {
    cfg.validate().at(Stage::Config)?;
    let d = cfg.dataset().at(Stage::Ingest)?;
    let years: Vec<i32> = d.index().years().collect();
    if years.is_empty() {
        return Err(Error::InvalidDataset(vec!["dataset has no events".into()])).at(Stage::Ingest);
    }

    let mut networks: Vec<YearNetwork> = years
        .par_iter()
        .map(|&y| {
            let (slice, graph) = build_year_graph(&d, y)?;
            Ok(YearNetwork {
                slice,
                graph,
                q: None,
                n_communities: None,
            })
        })
        .collect::<Result<_>>()
        .at(Stage::Networks)?;

    let tenure_bytes = tenure_csv(&d).at(Stage::Metrics)?;
    let term_bytes = term_tenure_csv(&d).at(Stage::Metrics)?;
    let novelty_bytes = novelty_csv(&d, YearDefinition::Calendar).at(Stage::Metrics)?;
    let graphs: Vec<(i32, MemberGraph)> = networks.iter().map(|n| (n.slice.year(), n.graph.clone())).collect();
    let panel = panel_from_graphs(&d, &graphs).at(Stage::Metrics)?;
    drop(graphs);

    networks
        .par_iter_mut()
        .map(|n| {
            if n.graph.n_edges() > 0 {
                let (p, rep) = louvain(&n.graph, cfg.seed, cfg.weighted)?;
                n.q = Some(rep.q);
                n.n_communities = Some(p.n_communities());
            }
            Ok(())
        })
        .collect::<Result<()>>()
        .at(Stage::Modularity)?;

    let slices: Vec<YearSlice> = networks.iter().map(|n| n.slice.clone()).collect();
    let observed: Vec<Option<f64>> = networks.iter().map(|n| n.q).collect();
    let mut series = Vec::new();
    for mode in [SimulationMode::Undifferentiated, SimulationMode::Static] {
        let s = expected_series(&d, &slices, &observed, mode, cfg.replicates, cfg.seed, cfg.weighted)
            .at(Stage::Simulation)?;
        series.push(series_csv(&s).at(Stage::Simulation)?);
    }
    drop(slices);

    let regression = fit_fe_panel(&panel).at(Stage::Regression)?;

    let summary = csv_bytes(
        &[
            "year",
            "active_members",
            "events",
            "edges",
            "observed_q",
            "communities",
            "turnover",
        ],
        networks.iter().map(|n| {
            let y = n.slice.year();
            [
                y.to_string(),
                n.slice.n_members().to_string(),
                n.slice.n_events().to_string(),
                n.graph.n_edges().to_string(),
                fmt_opt(n.q),
                n.n_communities.map(|c| c.to_string()).unwrap_or_default(),
                fmt_opt(member_turnover(&d, y).ok()),
            ]
        }),
    )
    .at(Stage::Write)?;

    let mut series = series.into_iter();
    let contents: [Vec<u8>; 8] = [
        summary,
        tenure_bytes,
        term_bytes,
        novelty_bytes,
        panel_csv(&panel).at(Stage::Write)?,
        series.next().expect("undiff series"),
        series.next().expect("static series"),
        regression_csv(&regression, false).at(Stage::Write)?,
    ];

    let manifest = Manifest {
        tool: TOOL_NAME.into(),
        version: TOOL_VERSION.into(),
        config_hash: cfg.hash(),
        seeds: Seeds {
            pipeline: cfg.seed,
            synth: cfg.synth.as_ref().map(|s| s.seed),
            replicates: (0..cfg.replicates as u64).map(|r| cfg.seed ^ r).collect(),
        },
        files: ARTIFACTS
            .iter()
            .zip(&contents)
            .map(|(name, bytes)| ManifestFile {
                path: (*name).into(),
                sha256: hex(&Sha256::digest(bytes)),
                bytes: bytes.len() as u64,
            })
            .collect(),
    };
    let mut manifest_bytes = serde_json::to_vec_pretty(&manifest)
        .map_err(Error::from)
        .at(Stage::Write)?;
    manifest_bytes.push(b'\n');

    let files: Vec<(&str, &[u8])> = ARTIFACTS
        .iter()
        .copied()
        .zip(contents.iter().map(Vec::as_slice))
        .chain([(MANIFEST_FILE, manifest_bytes.as_slice())])
        .collect();
    write_all(&cfg.out_dir, &files).at(Stage::Write)?;
    Ok(manifest)
}

/// Writes every file or, on the first failure, removes the ones written.
fn write_all(dir: &Path, files: &[(&str, &[u8])]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (name, bytes) in files {
        let path = dir.join(name);
        if let Err(e) = fs::write(&path, bytes) {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            return Err(e.into());
        }
        written.push(path);
    }
    Ok(())
}
