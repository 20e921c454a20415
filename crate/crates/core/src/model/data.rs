//! Observation tables, indirect standardisation and SMR.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::ArealGraph;

/// A named covariate column, one value per region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covariate {
    pub name: String,
    pub values: Vec<f64>,
}

/// Counts and expected counts for one or two diseases over the regions of a
/// graph, in graph order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationTable {
    pub region_ids: Vec<String>,
    /// `counts[k][i]` is `y_{ik}`.
    pub counts: Vec<Vec<u64>>,
    /// `expected[k][i]` is `E_{ik}`.
    pub expected: Vec<Vec<f64>>,
    pub covariates: Vec<Covariate>,
}

impl ObservationTable {
    pub fn new(region_ids: Vec<String>, counts: Vec<Vec<u64>>, expected: Vec<Vec<f64>>, covariates: Vec<Covariate>) -> Result<Self> {
        let t = ObservationTable { region_ids, counts, expected, covariates };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.region_ids.len();
        if n == 0 {
            return Err(Error::Data("empty table".into()));
        }
        if self.counts.is_empty() || self.counts.len() > 2 || self.counts.len() != self.expected.len() {
            return Err(Error::Data(format!(
                "expected one or two diseases with matching E columns, got {} count and {} E columns",
                self.counts.len(),
                self.expected.len()
            )));
        }
        for (k, (y, e)) in self.counts.iter().zip(&self.expected).enumerate() {
            if y.len() != n || e.len() != n {
                return Err(Error::Data(format!("disease {} has {} counts and {} E values for {n} regions", k + 1, y.len(), e.len())));
            }
            if let Some(i) = e.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
                return Err(Error::Data(format!("E{} must be positive, got {} in region {}", k + 1, e[i], self.region_ids[i])));
            }
        }
        for c in &self.covariates {
            if c.values.len() != n {
                return Err(Error::Data(format!("covariate {} has {} values for {n} regions", c.name, c.values.len())));
            }
            if let Some(i) = c.values.iter().position(|v| !v.is_finite()) {
                return Err(Error::Data(format!("covariate {} is missing or non-finite in region {}", c.name, self.region_ids[i])));
            }
        }
        Ok(())
    }

    pub fn n_regions(&self) -> usize {
        self.region_ids.len()
    }

    pub fn n_diseases(&self) -> usize {
        self.counts.len()
    }

    pub fn covariate(&self, name: &str) -> Option<&[f64]> {
        self.covariates.iter().find(|c| c.name == name).map(|c| c.values.as_slice())
    }

    /// Single-disease view of column `k` (0-based).
    pub fn select(&self, k: usize) -> Result<Self> {
        if k >= self.n_diseases() {
            return Err(Error::Data(format!("disease {} not present", k + 1)));
        }
        Ok(ObservationTable {
            region_ids: self.region_ids.clone(),
            counts: alloc::vec![self.counts[k].clone()],
            expected: alloc::vec![self.expected[k].clone()],
            covariates: self.covariates.clone(),
        })
    }

    /// Checks that rows follow the graph's region order.
    pub fn check_against(&self, g: &ArealGraph) -> Result<()> {
        if self.n_regions() != g.n_regions() {
            return Err(Error::Data(format!("table has {} regions, graph has {}", self.n_regions(), g.n_regions())));
        }
        for (i, (a, b)) in self.region_ids.iter().zip(g.region_ids()).enumerate() {
            if a != b {
                return Err(Error::Data(format!("row {} is region {a}, graph expects {b}", i + 1)));
            }
        }
        Ok(())
    }
}

/// Indirectly standardised expected counts `E_i = Σ_j r_j n_ij`.
pub fn expected_counts(rates: &[f64], populations: &[Vec<f64>]) -> Result<Vec<f64>> {
    if rates.iter().any(|&r| !(r >= 0.0)) {
        return Err(Error::Data("stratum rates must be non-negative".into()));
    }
    populations
        .iter()
        .enumerate()
        .map(|(i, pop)| {
            if pop.len() != rates.len() {
                return Err(Error::Data(format!("region {} has {} strata, rates have {}", i + 1, pop.len(), rates.len())));
            }
            if pop.iter().any(|&n| !(n >= 0.0)) {
                return Err(Error::Data(format!("negative population in region {}", i + 1)));
            }
            let e: f64 = rates.iter().zip(pop).map(|(r, n)| r * n).sum();
            if e > 0.0 {
                Ok(e)
            } else {
                Err(Error::Data(format!("expected count is zero in region {}", i + 1)))
            }
        })
        .collect()
}

/// Standardised morbidity ratio `y_i / E_i`.
pub fn smr(y: &[u64], e: &[f64]) -> Vec<f64> {
    y.iter().zip(e).map(|(&y, &e)| y as f64 / e).collect()
}
