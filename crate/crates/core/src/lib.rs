//! Yearly co-attendance networks from event RSVP data, with knowledge
//! specialization and rewiring metrics, community detection, counterfactual
//! attendance simulations and a fixed-effects panel regression.

pub mod community;
pub mod counterfactual;
pub mod dataset;
pub mod econometrics;
pub mod error;
pub mod ids;
pub mod metrics;
pub mod netbuild;
pub mod pipeline;

pub use community::{louvain, modularity, ModularityReport, Partition};
pub use counterfactual::{
    estimate_propensities, modularity_series, simulate_static, simulate_undifferentiated, ModularitySeries,
    PropensityTable, SeriesPoint, SimulationMode,
};
pub use dataset::{generate_synthetic, load_dataset, validate, Dataset, DatasetParts, Event, SynthConfig};
pub use econometrics::{build_panel, fit_fe_panel, PanelRow, RegressionResult};
pub use error::{Error, Result};
pub use ids::{EventId, GroupId, InterestTerm, MemberId};
pub use netbuild::{build_year_graph, project_members, tfidf_incidence, yearly_slice, MemberGraph, YearSlice};
pub use pipeline::{run_pipeline, Manifest, PipelineConfig, PipelineError};
