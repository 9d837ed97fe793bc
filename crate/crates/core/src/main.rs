use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::{json, Value};

use rewire_core::community::louvain;
use rewire_core::counterfactual::{modularity_series, SimulationMode};
use rewire_core::dataset::{generate_synthetic, load_dataset, validate, write_dataset, DatasetPaths, SynthConfig};
use rewire_core::econometrics::{build_panel, fit_fe_panel, read_panel};
use rewire_core::metrics::specialization_scores;
use rewire_core::netbuild::{build_year_graph, YearDefinition};
use rewire_core::pipeline::{
    csv_bytes, novelty_csv, regression_csv, run_pipeline, series_csv, tenure_csv, term_tenure_csv, turnover_csv,
    PipelineConfig, MANIFEST_FILE,
};
use rewire_core::{Dataset, Error, Result};

#[derive(Parser, Debug)]
#[command(name = "rewire-kit", version, about = "Co-attendance network measurement toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON pipeline config; flags below override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory with events.csv, rsvps.csv, memberships.csv,
    /// member_interests.csv and group_topics.csv.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    year: Option<i32>,
    #[arg(long, global = true)]
    replicates: Option<usize>,
    /// Treat every projected edge as weight 1 for modularity.
    #[arg(long, global = true)]
    unweighted: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset (the config's `synth` section, or a bare
    /// generator config) as CSVs.
    Generate,
    /// Check a dataset and list every violated invariant.
    Validate,
    /// Project one year into nodes.csv and edges.csv.
    BuildNetwork,
    /// Tenure of every active member-year, plus per-term adopter tenure.
    Tenure,
    /// Event novelty of every member-year with an active previous year.
    Novelty {
        #[arg(long, value_enum, default_value_t = YearDef::Calendar)]
        year_def: YearDef,
    },
    /// Ego-network specialization of every member in one or all years.
    Specialization,
    /// Year-over-year entrant share.
    Turnover,
    /// Louvain partition of one year's projection.
    Modularity,
    /// Observed vs expected modularity under a counterfactual.
    Simulate {
        #[arg(long, value_enum, default_value_t = Mode::Undiff)]
        mode: Mode,
    },
    /// Fixed-effects regression of specialization on novelty and controls.
    Regress {
        /// Panel CSV; built from the dataset when absent.
        #[arg(long)]
        panel: Option<PathBuf>,
        /// Add standardized coefficients.
        #[arg(long)]
        standardized: bool,
    },
    /// Run every stage and write all artifacts plus a manifest.
    Pipeline,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum YearDef {
    Calendar,
    Member,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Undiff,
    Static,
}

impl Cli {
    /// The config file with command-line overrides applied. A missing seed
    /// is an error only when `need_seed` is set.
    fn pipeline_config(&self, need_seed: bool) -> Result<PipelineConfig> {
        let mut v = match &self.config {
            Some(p) => read_json(p)?,
            None => json!({}),
        };
        let obj = v
            .as_object_mut()
            .ok_or_else(|| Error::InvalidConfig("config must be a JSON object".into()))?;
        if let Some(dir) = &self.input {
            obj.remove("synth");
            obj.insert("input_dir".into(), json!(dir));
        }
        if let Some(s) = self.seed {
            obj.insert("seed".into(), json!(s));
        }
        if !obj.contains_key("seed") {
            if need_seed {
                return Err(Error::InvalidConfig(
                    "a seed is required (--seed or `seed` in the config)".into(),
                ));
            }
            obj.insert("seed".into(), json!(0));
        }
        if let Some(dir) = &self.out_dir {
            obj.insert("out_dir".into(), json!(dir));
        }
        if let Some(r) = self.replicates {
            obj.insert("replicates".into(), json!(r));
        }
        if self.unweighted {
            obj.insert("weighted".into(), json!(false));
        }
        let cfg: PipelineConfig = serde_json::from_value(v)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn year(&self, d: &Dataset) -> Result<i32> {
        match self.year {
            Some(y) => Ok(y),
            None => Err(Error::InvalidConfig(format!(
                "--year is required (dataset spans {})",
                d.year_range()
                    .map_or("no years".into(), |(lo, hi)| format!("{lo}..={hi}"))
            ))),
        }
    }
}

fn read_json(path: &Path) -> Result<Value> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn write_out(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, bytes)?;
    info!("wrote {}", path.display());
    println!("{}", path.display());
    Ok(())
}

fn generate(cli: &Cli) -> Result<()> {
    let mut synth = match &cli.config {
        Some(p) => {
            let v = read_json(p)?;
            match v.get("synth") {
                Some(s) => serde_json::from_value::<SynthConfig>(s.clone())?,
                None => serde_json::from_value::<SynthConfig>(v)?,
            }
        }
        None => SynthConfig::default(),
    };
    if let Some(s) = cli.seed {
        synth.seed = s;
    }
    let d = generate_synthetic(&synth)?;
    let dir = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    for p in write_dataset(&d, &dir)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Command::Generate = cli.command {
        return generate(cli);
    }
    if let Command::Validate = cli.command {
        let cfg = cli.pipeline_config(false)?;
        let d = match (&cfg.input_dir, &cfg.synth) {
            (Some(dir), _) => {
                let report = load_dataset(&DatasetPaths::in_dir(dir))?;
                if report.duplicate_rsvps > 0 {
                    println!("note: {} duplicate RSVP rows were merged", report.duplicate_rsvps);
                }
                report.dataset
            }
            (None, Some(s)) => generate_synthetic(s)?,
            (None, None) => unreachable!("validated config has a source"),
        };
        let violations = validate(&d);
        for v in &violations {
            println!("{v}");
        }
        if !violations.is_empty() {
            return Err(Error::InvalidDataset(violations));
        }
        println!(
            "ok: {} members, {} events, {} rsvps",
            d.members().len(),
            d.events().len(),
            d.rsvps().len()
        );
        return Ok(());
    }
    if let Command::Pipeline = cli.command {
        let cfg = cli.pipeline_config(true)?;
        let manifest = run_pipeline(&cfg).map_err(|e| {
            eprintln!("error: {} stage failed", e.stage);
            e.source
        })?;
        for f in &manifest.files {
            println!("{}", cfg.out_dir.join(&f.path).display());
        }
        println!("{}", cfg.out_dir.join(MANIFEST_FILE).display());
        return Ok(());
    }
    if let Command::Regress {
        panel: Some(path),
        standardized,
    } = &cli.command
    {
        let rows = read_panel(path)?;
        let r = fit_fe_panel(&rows)?;
        let out = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
        return write_out(&out, "regression.csv", &regression_csv(&r, *standardized)?);
    }

    let needs_seed = matches!(cli.command, Command::Modularity | Command::Simulate { .. });
    let cfg = cli.pipeline_config(needs_seed)?;
    let d = cfg.dataset()?;
    let out = &cfg.out_dir;
    match &cli.command {
        Command::BuildNetwork => {
            let (_, g) = build_year_graph(&d, cli.year(&d)?)?;
            let nodes = csv_bytes(&["member_id"], g.nodes().iter().map(|m| [m.as_str()]))?;
            let edges = csv_bytes(
                &["u", "v", "weight"],
                g.edges().iter().map(|&(u, v, w)| {
                    [
                        g.nodes()[u as usize].to_string(),
                        g.nodes()[v as usize].to_string(),
                        format!("{w:.9}"),
                    ]
                }),
            )?;
            write_out(out, "nodes.csv", &nodes)?;
            write_out(out, "edges.csv", &edges)
        }
        Command::Tenure => {
            write_out(out, "tenure.csv", &tenure_csv(&d)?)?;
            write_out(out, "term_tenure.csv", &term_tenure_csv(&d)?)
        }
        Command::Novelty { year_def } => {
            let def = match year_def {
                YearDef::Calendar => YearDefinition::Calendar,
                YearDef::Member => YearDefinition::MemberRelative,
            };
            write_out(out, "novelty.csv", &novelty_csv(&d, def)?)
        }
        Command::Specialization => {
            let years: Vec<i32> = match cli.year {
                Some(y) => vec![y],
                None => d.year_range().map_or(Vec::new(), |(lo, hi)| (lo..=hi).collect()),
            };
            let mut rows = Vec::new();
            for y in years {
                let (_, g) = build_year_graph(&d, y)?;
                for r in specialization_scores(&d, &g, y)? {
                    rows.push([r.member.to_string(), r.year.to_string(), r.specialization.to_string()]);
                }
            }
            write_out(
                out,
                "specialization.csv",
                &csv_bytes(&["member_id", "year", "specialization"], rows)?,
            )
        }
        Command::Turnover => write_out(out, "turnover.csv", &turnover_csv(&d)?),
        Command::Modularity => {
            let y = cli.year(&d)?;
            let (_, g) = build_year_graph(&d, y)?;
            let (p, rep) = louvain(&g, cfg.seed, cfg.weighted)?;
            let partition = csv_bytes(
                &["member_id", "community"],
                g.nodes()
                    .iter()
                    .zip(p.labels())
                    .map(|(m, c)| [m.to_string(), c.to_string()]),
            )?;
            let report = csv_bytes(
                &["year", "q", "n_communities", "weighted", "seed"],
                [[
                    y.to_string(),
                    rep.q.to_string(),
                    rep.n_communities.to_string(),
                    rep.weighted.to_string(),
                    rep.seed.to_string(),
                ]],
            )?;
            write_out(out, "partition.csv", &partition)?;
            write_out(out, "modularity_report.csv", &report)
        }
        Command::Simulate { mode } => {
            let mode = match mode {
                Mode::Undiff => SimulationMode::Undifferentiated,
                Mode::Static => SimulationMode::Static,
            };
            let s = modularity_series(&d, mode, cfg.replicates, cfg.seed, cfg.weighted)?;
            write_out(out, "modularity_series.csv", &series_csv(&s)?)
        }
        Command::Regress { standardized, .. } => {
            let rows = build_panel(&d)?;
            let r = fit_fe_panel(&rows)?;
            write_out(out, "regression.csv", &regression_csv(&r, *standardized)?)
        }
        Command::Generate | Command::Validate | Command::Pipeline => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
