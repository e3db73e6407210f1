use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::metrics::RunSummary;
use crate::{Error, Result};

pub const TABLE_FILE: &str = "table.csv";
pub const TABLE_HEADER: &str = "method,n_runs,f1,auc";
const ORDER: [&str; 3] = ["cnn", "fisherz-lr", "pca-lr"];

fn rank(method: &str) -> (usize, &str) {
    (ORDER.iter().position(|m| *m == method).unwrap_or(ORDER.len()), method)
}

/// Inserts or replaces `method`'s row of the comparison table in `out_dir`.
/// Rows are kept in a fixed method order.
pub fn update_table(out_dir: &Path, method: &str, summary: &RunSummary) -> Result<String> {
    let path = out_dir.join(TABLE_FILE);
    let mut rows = BTreeMap::new();
    if path.exists() {
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
            let name = line.split(',').next().unwrap_or_default().to_string();
            rows.insert(name, line.to_string());
        }
    }
    rows.insert(
        method.to_string(),
        format!("{method},{},{},{}", summary.n_runs, summary.f1, summary.auc),
    );
    let mut names: Vec<&String> = rows.keys().collect();
    names.sort_by(|a, b| rank(a).cmp(&rank(b)));
    let mut text = format!("{TABLE_HEADER}\n");
    for n in names {
        text.push_str(&rows[n]);
        text.push('\n');
    }
    fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
    Ok(text)
}
