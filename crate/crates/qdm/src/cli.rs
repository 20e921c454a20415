//! Command-line interface.

use std::fs;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use qdm_core::assessment::ModelTag;
use qdm_core::fit::{fit, FitOptions};
use qdm_core::gmrf::RwOrder;
use qdm_core::inference::Strategy;
use qdm_core::model::{build_model, DiseaseSpec, ModelSpec, OffsetMode, SplineTerm};
use qdm_core::quantile::QuantileLevel;
use qdm_core::sim::{run_replicate, simulate_joint, RecoveryOptions, RecoveryReport, SimScenario};
use qdm_core::ArealGraph;

use crate::formats::{self, Truth};
use crate::map::{self, Field, MapOptions};
use crate::report;
use crate::results::ResultsDocument;

#[derive(Debug, Parser)]
#[command(name = "qdm", version, about = "Joint quantile disease mapping")]
pub struct Cli {
    /// Worker threads for replication studies.
    #[arg(long, global = true, env = "QDM_THREADS", default_value_t = 1)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate two-disease counts with a shared spatial field.
    Simulate(SimulateArgs),
    /// Fit a joint or single-disease quantile model.
    Fit(FitArgs),
    /// Compare DIC and WAIC across results files.
    Compare(CompareArgs),
    /// Print posterior summary tables of a results file.
    Summarize(SummarizeArgs),
    /// Render a per-region field as a choropleth SVG.
    Map(MapArgs),
    /// Write a lattice graph and matching GeoJSON.
    Lattice(LatticeArgs),
    /// Run the simulation recovery and model-selection study.
    Study(StudyArgs),
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Scenario file of `key = value` lines; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    pub m1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub m2: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub c: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub d: Option<f64>,
    #[arg(long)]
    pub alpha1: Option<f64>,
    #[arg(long)]
    pub alpha2: Option<f64>,
    /// Two independent fields instead of a shared one.
    #[arg(long)]
    pub independent: bool,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ScenarioArgs {
    fn scenario(&self) -> Result<SimScenario> {
        let mut s = SimScenario::default();
        if let Some(p) = &self.config {
            let text = fs::read_to_string(p).with_context(|| format!("reading scenario {}", p.display()))?;
            s = formats::parse_scenario(&text, s).with_context(|| format!("scenario {}", p.display()))?;
        }
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut s.m1, self.m1);
        set(&mut s.m2, self.m2);
        set(&mut s.c, self.c);
        set(&mut s.tau, self.tau);
        set(&mut s.d, self.d);
        set(&mut s.alpha1, self.alpha1);
        set(&mut s.alpha2, self.alpha2);
        if self.independent {
            s.correlated = false;
        }
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        Ok(s)
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Replication index; each index has its own random stream.
    #[arg(long, default_value_t = 0)]
    pub replication: usize,
    /// Data CSV to write.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Truth sidecar; defaults to the output with a `.truth.json` extension.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Joint,
    Separate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Auto,
    Eb,
    Grid,
    Ccd,
}

impl StrategyArg {
    fn strategy(self) -> Option<Strategy> {
        match self {
            StrategyArg::Auto => None,
            StrategyArg::Eb => Some(Strategy::Eb),
            StrategyArg::Grid => Some(Strategy::Grid),
            StrategyArg::Ccd => Some(Strategy::Ccd),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OffsetArg {
    /// `log q = log E + η`.
    Predictor,
    /// `log q = η` with `E` scaling the rate.
    Scale,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = ModelKind::Joint)]
    pub model: ModelKind,
    /// Disease fitted by a separate model.
    #[arg(long, default_value_t = 1)]
    pub disease: usize,
    /// Quantile level of a separate model.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, default_value_t = 0.2)]
    pub alpha1: f64,
    #[arg(long, default_value_t = 0.8)]
    pub alpha2: f64,
    #[arg(long, value_enum, default_value_t = StrategyArg::Auto)]
    pub strategy: StrategyArg,
    #[arg(long, value_enum, default_value_t = OffsetArg::Predictor)]
    pub offset_mode: OffsetArg,
    /// Linear covariates (names of `cov:` columns), used for every disease.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
    /// Random-walk smooth of a covariate: `name[:rw1|rw2][:bins]`.
    #[arg(long)]
    pub spline: Vec<String>,
    /// Leave out the disease-specific BYM fields.
    #[arg(long)]
    pub no_bym: bool,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(required = true)]
    pub results: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    pub results: PathBuf,
}

#[derive(Debug, Args)]
pub struct MapArgs {
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long)]
    pub geojson: PathBuf,
    /// relative_risk, rr_lower, rr_upper, predicted_cases, predictor, observed, smr or shared.
    #[arg(long, default_value = "relative_risk")]
    pub field: Field,
    /// Disease to map; defaults to the first in the fit.
    #[arg(long)]
    pub disease: Option<usize>,
    #[arg(long, default_value = "id")]
    pub id_property: String,
    /// Hatch features without a value instead of failing.
    #[arg(long)]
    pub allow_missing: bool,
    #[arg(long)]
    pub title: Option<String>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct LatticeArgs {
    #[arg(long, default_value_t = 7)]
    pub rows: usize,
    #[arg(long, default_value_t = 10)]
    pub cols: usize,
    /// Comma-separated cells to remove, 1-based row-major; empty keeps all.
    #[arg(long, default_value = "1,10,70")]
    pub drop: String,
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long)]
    pub geojson: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long)]
    pub replications: Option<usize>,
    #[arg(long, value_enum, default_value_t = StrategyArg::Ccd)]
    pub strategy: StrategyArg,
    #[arg(long, value_enum, default_value_t = StrategyArg::Ccd)]
    pub separate_strategy: StrategyArg,
    /// Skip the separate fits and the criteria comparison.
    #[arg(long)]
    pub no_compare: bool,
    /// JSON report to write.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit_cmd(a),
        Command::Compare(a) => compare(a),
        Command::Summarize(a) => {
            print!("{}", report::render_summary(&ResultsDocument::read(&a.results)?));
            Ok(())
        }
        Command::Map(a) => map_cmd(a),
        Command::Lattice(a) => lattice(a),
        Command::Study(a) => study(a, cli.threads),
    }
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let (g, graph_hash) = formats::read_graph(&a.graph)?;
    let s = a.scenario.scenario()?;
    let r = simulate_joint(&g, &s, a.replication)?;
    let truth = Truth::new(&s, &r, &graph_hash);
    let truth_path = a.truth.unwrap_or_else(|| formats::truth_path(&a.output));
    let mut json = serde_json::to_string_pretty(&truth)?;
    json.push('\n');
    formats::write_all(&[(a.output, formats::data_to_csv(&r.data)?.into_bytes()), (truth_path, json.into_bytes())])
}

fn parse_spline(s: &str) -> Result<SplineTerm> {
    let mut parts = s.split(':');
    let covariate = parts.next().filter(|c| !c.is_empty()).ok_or_else(|| anyhow!("spline needs a covariate name"))?.to_string();
    let mut order = RwOrder::Second;
    let mut bins = 10;
    for p in parts {
        match p {
            "rw1" => order = RwOrder::First,
            "rw2" => order = RwOrder::Second,
            _ => bins = p.parse().map_err(|_| anyhow!("spline {s}: expected rw1, rw2 or a bin count, got '{p}'"))?,
        }
    }
    Ok(SplineTerm { covariate, order, bins })
}

fn model_spec(a: &FitArgs) -> Result<(ModelSpec, ModelTag)> {
    let splines = a.spline.iter().map(|s| parse_spline(s)).collect::<Result<Vec<_>>>()?;
    let disease = |alpha: f64| -> Result<DiseaseSpec> {
        Ok(DiseaseSpec { alpha: QuantileLevel::new(alpha)?, covariates: a.covariates.clone(), splines: splines.clone(), bym: !a.no_bym })
    };
    let (mut spec, tag) = match a.model {
        ModelKind::Joint => (ModelSpec::joint(disease(a.alpha1)?, disease(a.alpha2)?), ModelTag::Joint),
        ModelKind::Separate => {
            let tag = ModelTag::separate(a.disease)?;
            let alpha = a.alpha.unwrap_or(if a.disease == 1 { a.alpha1 } else { a.alpha2 });
            (ModelSpec::single(disease(alpha)?), tag)
        }
    };
    spec.offset_mode = match a.offset_mode {
        OffsetArg::Predictor => OffsetMode::OffsetInPredictor,
        OffsetArg::Scale => OffsetMode::ScaleParameter,
    };
    Ok((spec, tag))
}

fn fit_cmd(a: FitArgs) -> Result<()> {
    let (g, graph_hash) = formats::read_graph(&a.graph)?;
    let (data, data_hash) = formats::read_data(&a.data, &g)?;
    let (spec, tag) = model_spec(&a)?;
    let data = match tag {
        ModelTag::Joint if data.n_diseases() != 2 => bail!("a joint fit needs y2 and E2 columns"),
        ModelTag::Joint => data,
        _ if a.disease > data.n_diseases() => bail!("the data has no disease {}", a.disease),
        _ => data.select(a.disease - 1)?,
    };
    let ctx = build_model(&spec, &g, &data)?;
    let opts = FitOptions { strategy: a.strategy.strategy(), ..Default::default() };
    let result = fit(&ctx, tag, &opts).context("fit failed")?;
    let doc = ResultsDocument::new(spec, graph_hash, data_hash, result);
    formats::write_all(&[(a.output, doc.to_json()?.into_bytes())])
}

fn compare(a: CompareArgs) -> Result<()> {
    let docs = a.results.iter().map(|p| ResultsDocument::read(p)).collect::<Result<Vec<_>>>()?;
    let c = report::compare(&docs)?;
    for w in &c.warnings {
        eprintln!("warning: {w}");
    }
    print!("{}", c.render());
    Ok(())
}

fn map_cmd(a: MapArgs) -> Result<()> {
    let doc = ResultsDocument::read(&a.results)?;
    let text = fs::read_to_string(&a.geojson).with_context(|| format!("reading {}", a.geojson.display()))?;
    let geojson: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("GeoJSON {}", a.geojson.display()))?;
    let disease = a.disease.unwrap_or(doc.result.diseases[0]);
    let values = map::field_values(&doc.result, a.field, disease)?;
    let title = a.title.unwrap_or_else(|| format!("{} {}, disease {disease}", doc.result.model.as_str(), a.field.as_str()));
    let svg = map::render_svg(&geojson, &values, &MapOptions { title: &title, id_property: &a.id_property, allow_missing: a.allow_missing })?;
    formats::write_all(&[(a.output, svg.into_bytes())])
}

fn lattice(a: LatticeArgs) -> Result<()> {
    let g = ArealGraph::lattice(a.rows, a.cols)?;
    let cells = a.rows * a.cols;
    let drop = a
        .drop
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<usize>().map_err(|_| anyhow!("invalid cell '{t}' in --drop")))
        .collect::<Result<Vec<_>>>()?;
    if let Some(&bad) = drop.iter().find(|&&d| d == 0 || d > cells) {
        bail!("cell {bad} is outside 1..={cells}");
    }
    let zero_based: Vec<usize> = drop.iter().map(|d| d - 1).collect();
    let g = g.drop_regions(&zero_based)?;
    g.require_connected()?;
    let mut outputs = vec![(a.output, g.to_text().into_bytes())];
    if let Some(p) = a.geojson {
        let mut text = serde_json::to_string(&map::lattice_geojson(a.rows, a.cols, &drop))?;
        text.push('\n');
        outputs.push((p, text.into_bytes()));
    }
    formats::write_all(&outputs)
}

fn study(a: StudyArgs, threads: usize) -> Result<()> {
    let (g, _) = formats::read_graph(&a.graph)?;
    let mut s = a.scenario.scenario()?;
    if let Some(n) = a.replications {
        s.replications = n;
    }
    s.validate()?;
    let opts = RecoveryOptions {
        joint: FitOptions { strategy: a.strategy.strategy(), ..Default::default() },
        separate: FitOptions { strategy: a.separate_strategy.strategy(), ..Default::default() },
        compare: !a.no_compare,
    };
    let report = run_study(&g, &s, &opts, threads)?;
    println!("{report}");
    if let Some(p) = a.output {
        let mut json = serde_json::to_string_pretty(&report)?;
        json.push('\n');
        formats::write_all(&[(p, json.into_bytes())])?;
    }
    Ok(())
}

/// Runs the replications on `threads` workers; the report does not depend
/// on the thread count.
pub fn run_study(g: &ArealGraph, s: &SimScenario, opts: &RecoveryOptions, threads: usize) -> Result<RecoveryReport> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build()?;
    let outcomes = pool.install(|| (0..s.replications).into_par_iter().map(|rep| run_replicate(g, s, rep, opts)).collect());
    Ok(RecoveryReport::from_outcomes(s, outcomes))
}

/// One-line form of a clap error, without the usage block.
pub fn one_line(rendered: &str) -> String {
    rendered
        .lines()
        .map(str::trim)
        .take_while(|l| !l.starts_with("Usage:") && !l.starts_with("For more information"))
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}
