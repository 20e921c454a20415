//! Plain-text tables: model comparison and posterior summaries.

use std::fmt::Write;

use anyhow::{bail, Result};

use qdm_core::assessment::{FitResult, ModelTag};
use qdm_core::inference::Summary;

use crate::results::ResultsDocument;

pub const SEPARATE_1: &str = "Separate 1";
pub const SEPARATE_2: &str = "Separate 2";
pub const SEPARATE_SUM: &str = "Sum of Separates";
pub const JOINT: &str = "Joint quantile";

/// Hyperparameter rows in reporting order; anything else follows.
pub const HYPER_ORDER: [&str; 7] = ["tau", "d", "tau_b1", "phi_b1", "tau_b2", "phi_b2", "c"];

/// A single-disease fit of disease 2 numbers its terms as disease 1; this
/// restores the data's numbering.
pub fn display_name(r: &FitResult, name: &str) -> String {
    if r.diseases != [2] {
        return name.to_string();
    }
    for (from, to) in [("tau_b1", "tau_b2"), ("phi_b1", "phi_b2"), ("m1", "m2")] {
        if name == from {
            return to.to_string();
        }
    }
    for (from, to) in [("beta1.", "beta2."), ("rho1.", "rho2."), ("b1.", "b2.")] {
        if let Some(rest) = name.strip_prefix(from) {
            return format!("{to}{rest}");
        }
    }
    name.to_string()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub label: String,
    pub dic: f64,
    pub waic: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<CompareRow>,
    pub preferred_dic: String,
    pub preferred_waic: String,
    pub warnings: Vec<String>,
}

pub fn compare(docs: &[ResultsDocument]) -> Result<Comparison> {
    if docs.is_empty() {
        bail!("nothing to compare");
    }
    let mut slots: [Option<&ResultsDocument>; 3] = [None, None, None];
    for d in docs {
        let k = match d.result.model {
            ModelTag::Separate1 => 0,
            ModelTag::Separate2 => 1,
            ModelTag::Joint => 2,
        };
        if slots[k].is_some() {
            bail!("two results for the {} model", d.result.model.as_str());
        }
        slots[k] = Some(d);
    }
    let row = |label: &str, d: &ResultsDocument| CompareRow { label: label.into(), dic: d.result.dic.dic, waic: d.result.waic.waic };
    let mut rows = Vec::new();
    if let Some(d) = slots[0] {
        rows.push(row(SEPARATE_1, d));
    }
    if let Some(d) = slots[1] {
        rows.push(row(SEPARATE_2, d));
    }
    if let (Some(a), Some(b)) = (slots[0], slots[1]) {
        rows.push(CompareRow {
            label: SEPARATE_SUM.into(),
            dic: a.result.dic.dic + b.result.dic.dic,
            waic: a.result.waic.waic + b.result.waic.waic,
        });
    }
    if let Some(d) = slots[2] {
        rows.push(row(JOINT, d));
    }
    // both diseases against both diseases when the table allows it
    let full: Vec<&CompareRow> = rows.iter().filter(|r| r.label == SEPARATE_SUM || r.label == JOINT).collect();
    let candidates: Vec<&CompareRow> = if full.len() == 2 { full } else { rows.iter().collect() };
    let best = |f: fn(&CompareRow) -> f64| {
        candidates.iter().min_by(|a, b| f(a).total_cmp(&f(b))).map(|r| r.label.clone()).unwrap_or_default()
    };
    let preferred_dic = best(|r| r.dic);
    let preferred_waic = best(|r| r.waic);
    let mut warnings = Vec::new();
    let first = &docs[0];
    for d in &docs[1..] {
        if d.data_sha256 != first.data_sha256 {
            warnings.push(format!(
                "data hashes differ: {} was fitted to {}, {} to {}",
                first.result.model.as_str(),
                short(&first.data_sha256),
                d.result.model.as_str(),
                short(&d.data_sha256)
            ));
        }
        if d.graph_sha256 != first.graph_sha256 {
            warnings.push(format!("graph hashes differ between {} and {}", first.result.model.as_str(), d.result.model.as_str()));
        }
    }
    Ok(Comparison { rows, preferred_dic, preferred_waic, warnings })
}

fn short(hash: &str) -> &str {
    &hash[..hash.len().min(12)]
}

impl Comparison {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<18} {:>12} {:>12}", "Model", "DIC", "WAIC");
        for r in &self.rows {
            let _ = writeln!(out, "{:<18} {:>12.2} {:>12.2}", r.label, r.dic, r.waic);
        }
        let _ = writeln!(out, "Preferred by DIC: {}", self.preferred_dic);
        let _ = writeln!(out, "Preferred by WAIC: {}", self.preferred_waic);
        out
    }
}

fn fmt_num(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-3) {
        format!("{v:.3e}")
    } else {
        format!("{v:.3}")
    }
}

/// Hyperparameter table: rows in [`HYPER_ORDER`], columns mean, 0.025quant,
/// 0.975quant and mode.
pub fn hyper_rows(r: &FitResult) -> Vec<(String, Summary)> {
    let mut rows: Vec<(String, Summary)> = r.hyperparameters.iter().map(|h| (display_name(r, &h.name), h.summary)).collect();
    let rank = |name: &str| HYPER_ORDER.iter().position(|&n| n == name).unwrap_or(HYPER_ORDER.len());
    rows.sort_by_key(|(name, _)| rank(name));
    rows
}

/// Intercepts and fixed effects: columns mean, sd, 0.025quant, 0.975quant.
pub fn fixed_rows(r: &FitResult) -> Vec<(String, Summary)> {
    r.latent
        .iter()
        .filter(|l| (l.block.starts_with('m') && l.block[1..].parse::<usize>().is_ok()) || l.block.starts_with("beta"))
        .map(|l| (display_name(r, &l.block), l.summary))
        .collect()
}

/// Whether the 95% interval of `c` excludes zero, when the model has one.
pub fn significance(r: &FitResult) -> Option<(Summary, bool)> {
    r.hyper("c").map(|h| (h.summary, h.summary.excludes_zero()))
}

pub fn render_summary(doc: &ResultsDocument) -> String {
    let r = &doc.result;
    let mut out = String::new();
    let levels: Vec<String> = r.diseases.iter().zip(&doc.model.diseases).map(|(k, d)| format!("alpha{k} = {}", d.alpha.value())).collect();
    let _ = writeln!(out, "model {} ({}), strategy {}", r.model.as_str(), levels.join(", "), r.diagnostics.strategy.as_str());
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<14} {:>10} {:>10} {:>10} {:>10}", "", "mean", "sd", "0.025quant", "0.975quant");
    for (name, s) in fixed_rows(r) {
        let sd = s.sd.map_or("-".to_string(), fmt_num);
        let _ = writeln!(out, "{:<14} {:>10} {:>10} {:>10} {:>10}", name, fmt_num(s.mean), sd, fmt_num(s.q025), fmt_num(s.q975));
    }
    let rows = hyper_rows(r);
    if !rows.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<14} {:>10} {:>10} {:>10} {:>10}", "", "mean", "0.025quant", "0.975quant", "mode");
        for (name, s) in rows {
            let _ = writeln!(out, "{:<14} {:>10} {:>10} {:>10} {:>10}", name, fmt_num(s.mean), fmt_num(s.q025), fmt_num(s.q975), fmt_num(s.mode));
        }
    }
    if let Some((s, sig)) = significance(r) {
        let _ = writeln!(out);
        let verdict = if sig { "excludes 0: significant" } else { "contains 0: not significant" };
        let _ = writeln!(out, "c 95% interval ({}, {}) {verdict}", fmt_num(s.q025), fmt_num(s.q975));
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "DIC {:.2} (pD {:.2}), WAIC {:.2} (pWAIC {:.2})", r.dic.dic, r.dic.p_d, r.waic.waic, r.waic.p_waic);
    out
}
