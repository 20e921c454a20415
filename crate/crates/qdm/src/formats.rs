//! Graph, data CSV, scenario config and truth sidecar files.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use qdm_core::model::{Covariate, ObservationTable};
use qdm_core::sim::{SimReplicate, SimScenario};
use qdm_core::ArealGraph;

/// Prefix marking covariate columns in the data CSV.
pub const COVARIATE_PREFIX: &str = "cov:";

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn read_graph(path: &Path) -> Result<(ArealGraph, String)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading graph {}", path.display()))?;
    let g = ArealGraph::parse(&text).with_context(|| format!("graph {}", path.display()))?;
    Ok((g, sha256_hex(text.as_bytes())))
}

/// Parses the wide data CSV and reorders its rows to graph order.
pub fn parse_data(text: &str, g: &ArealGraph) -> Result<ObservationTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers().context("reading CSV header")?.iter().map(str::to_string).collect();
    if header.first().map(String::as_str) != Some("region") {
        bail!("data CSV must start with a 'region' column");
    }
    let col = |name: &str| header.iter().position(|h| h == name);
    let mut diseases = Vec::new();
    for k in 1..=2 {
        match (col(&format!("y{k}")), col(&format!("E{k}"))) {
            (Some(y), Some(e)) => diseases.push((y, e)),
            (None, None) => {}
            _ => bail!("data CSV has only one of y{k} and E{k}"),
        }
    }
    if col("y1").is_none() {
        bail!("data CSV needs y1 and E1 columns");
    }
    let covs: Vec<(usize, String)> = header
        .iter()
        .enumerate()
        .filter_map(|(i, h)| h.strip_prefix(COVARIATE_PREFIX).map(|n| (i, n.to_string())))
        .collect();
    for (i, h) in header.iter().enumerate().skip(1) {
        let known = diseases.iter().any(|&(y, e)| i == y || i == e) || h.starts_with(COVARIATE_PREFIX);
        if !known {
            bail!("unknown data column '{h}'");
        }
    }
    let n = g.n_regions();
    let mut counts = vec![vec![0u64; n]; diseases.len()];
    let mut expected = vec![vec![0f64; n]; diseases.len()];
    let mut cov_values = vec![vec![0f64; n]; covs.len()];
    let mut seen = vec![false; n];
    let mut unknown = BTreeSet::new();
    for rec in rdr.records() {
        let rec = rec.context("reading data CSV")?;
        let line = rec.position().map_or(0, |p| p.line());
        let id = &rec[0];
        let Some(i) = g.index_of(id) else {
            unknown.insert(id.to_string());
            continue;
        };
        if std::mem::replace(&mut seen[i], true) {
            bail!("line {line}: region {id} appears twice");
        }
        for (k, &(yc, ec)) in diseases.iter().enumerate() {
            let y = &rec[yc];
            counts[k][i] = y.parse().map_err(|_| anyhow!("line {line}: y{} must be a non-negative integer, got '{y}'", k + 1))?;
            let e = &rec[ec];
            expected[k][i] = e.parse().map_err(|_| anyhow!("line {line}: E{} must be a number, got '{e}'", k + 1))?;
        }
        for (c, (ci, name)) in covs.iter().enumerate() {
            let v = &rec[*ci];
            cov_values[c][i] = v.parse().map_err(|_| anyhow!("line {line}: covariate {name} must be a number, got '{v}'"))?;
        }
    }
    if !unknown.is_empty() {
        bail!("regions not in the graph: {}", unknown.into_iter().collect::<Vec<_>>().join(", "));
    }
    let missing: Vec<&str> = (0..n).filter(|&i| !seen[i]).map(|i| g.region_ids()[i].as_str()).collect();
    if !missing.is_empty() {
        bail!("graph regions missing from the data: {}", missing.join(", "));
    }
    let covariates = covs.into_iter().zip(cov_values).map(|((_, name), values)| Covariate { name, values }).collect();
    Ok(ObservationTable::new(g.region_ids().to_vec(), counts, expected, covariates)?)
}

pub fn read_data(path: &Path, g: &ArealGraph) -> Result<(ObservationTable, String)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading data {}", path.display()))?;
    let t = parse_data(&text, g).with_context(|| format!("data {}", path.display()))?;
    Ok((t, sha256_hex(text.as_bytes())))
}

pub fn data_to_csv(t: &ObservationTable) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["region".to_string()];
    for k in 1..=t.n_diseases() {
        header.push(format!("y{k}"));
        header.push(format!("E{k}"));
    }
    header.extend(t.covariates.iter().map(|c| format!("{COVARIATE_PREFIX}{}", c.name)));
    w.write_record(&header)?;
    for (i, id) in t.region_ids.iter().enumerate() {
        let mut row = vec![id.clone()];
        for k in 0..t.n_diseases() {
            row.push(t.counts[k][i].to_string());
            row.push(t.expected[k][i].to_string());
        }
        row.extend(t.covariates.iter().map(|c| c.values[i].to_string()));
        w.write_record(&row)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// Applies `key = value` lines to a scenario. Keys are the scenario field
/// names plus `independent`.
pub fn parse_scenario(text: &str, mut s: SimScenario) -> Result<SimScenario> {
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| anyhow!("line {}: expected 'key = value'", k + 1))?;
        let (key, value) = (key.trim(), value.trim());
        let num = || value.parse::<f64>().map_err(|_| anyhow!("line {}: {key} must be a number, got '{value}'", k + 1));
        let int = || value.parse::<u64>().map_err(|_| anyhow!("line {}: {key} must be a non-negative integer, got '{value}'", k + 1));
        let flag = || value.parse::<bool>().map_err(|_| anyhow!("line {}: {key} must be true or false, got '{value}'", k + 1));
        match key {
            "m1" => s.m1 = num()?,
            "m2" => s.m2 = num()?,
            "c" => s.c = num()?,
            "tau" => s.tau = num()?,
            "d" => s.d = num()?,
            "alpha1" => s.alpha1 = num()?,
            "alpha2" => s.alpha2 = num()?,
            "correlated" => s.correlated = flag()?,
            "independent" => s.correlated = !flag()?,
            "replications" => s.replications = int()? as usize,
            "seed" => s.seed = int()?,
            other => bail!("line {}: unknown scenario key '{other}'", k + 1),
        }
    }
    s.validate()?;
    Ok(s)
}

pub fn scenario_to_text(s: &SimScenario) -> String {
    format!(
        "m1 = {}\nm2 = {}\nc = {}\ntau = {}\nd = {}\nalpha1 = {}\nalpha2 = {}\ncorrelated = {}\nreplications = {}\nseed = {}\n",
        s.m1, s.m2, s.c, s.tau, s.d, s.alpha1, s.alpha2, s.correlated, s.replications, s.seed
    )
}

/// True fields and rates behind a simulated data set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub format_version: u32,
    pub scenario: SimScenario,
    pub replication: usize,
    pub graph_sha256: String,
    pub regions: Vec<String>,
    /// Field of disease 1.
    pub field1: Vec<f64>,
    /// Unscaled field of disease 2.
    pub field2: Vec<f64>,
    pub quantiles: Vec<Vec<f64>>,
    pub rates: Vec<Vec<f64>>,
}

impl Truth {
    pub fn new(s: &SimScenario, r: &SimReplicate, graph_sha256: &str) -> Self {
        Truth {
            format_version: crate::results::FORMAT_VERSION,
            scenario: s.clone(),
            replication: r.rep,
            graph_sha256: graph_sha256.to_string(),
            regions: r.data.region_ids.clone(),
            field1: r.field1.clone(),
            field2: r.field2.clone(),
            quantiles: r.quantiles.clone(),
            rates: r.rates.clone(),
        }
    }
}

/// `data.csv` → `data.truth.json`.
pub fn truth_path(data: &Path) -> PathBuf {
    data.with_extension("truth.json")
}

/// Writes every file or none: contents go to temporaries first and are
/// renamed into place once all of them are written.
pub fn write_all(outputs: &[(PathBuf, Vec<u8>)]) -> Result<()> {
    let mut staged: Vec<(PathBuf, &Path)> = Vec::new();
    let cleanup = |staged: &[(PathBuf, &Path)]| {
        for (tmp, _) in staged {
            let _ = fs::remove_file(tmp);
        }
    };
    for (path, bytes) in outputs {
        let name = path.file_name().ok_or_else(|| anyhow!("{} is not a file path", path.display()))?;
        let tmp = path.with_file_name(format!(".{}.partial", name.to_string_lossy()));
        if let Err(e) = fs::write(&tmp, bytes) {
            let _ = fs::remove_file(&tmp);
            cleanup(&staged);
            return Err(e).with_context(|| format!("writing {}", path.display()));
        }
        staged.push((tmp, path));
    }
    let mut done: Vec<&Path> = Vec::new();
    for (i, (tmp, path)) in staged.iter().enumerate() {
        if let Err(e) = fs::rename(tmp, path) {
            for p in &done {
                let _ = fs::remove_file(p);
            }
            cleanup(&staged[i..]);
            return Err(e).with_context(|| format!("writing {}", path.display()));
        }
        done.push(path);
    }
    Ok(())
}
