//! Per-sample dev NLLs computed by models outside this tool.
//!
//! File format: CSV with header `id,nll` or `id,nll,correct`; lines starting with `#`
//! are ignored. `nll` is in nats. `correct` is `1`/`0` or `true`/`false`. The ids must
//! be exactly the dev-set ids, each once.

use std::collections::HashMap;
use std::path::Path;

use tsi_core::corpus::Dataset;
use tsi_core::model::EvalResult;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct NllRow {
    pub id: String,
    pub nll: f64,
    pub correct: Option<bool>,
}

fn bad(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{}: {msg}", path.display()))
}

pub fn read_nll_file(path: &Path) -> Result<Vec<NllRow>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| bad(path, e))?;
    let headers = reader.headers().map_err(|e| bad(path, e))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(id_col), Some(nll_col)) = (col("id"), col("nll")) else {
        return Err(bad(path, "header must contain `id` and `nll`"));
    };
    let correct_col = col("correct");
    let mut rows = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| bad(path, e))?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let nll: f64 = field(nll_col)
            .parse()
            .map_err(|_| bad(path, format!("row {}: bad nll `{}`", line + 1, field(nll_col))))?;
        if !(nll.is_finite() && nll >= 0.0) {
            return Err(bad(path, format!("row {}: nll {nll} must be finite and non-negative", line + 1)));
        }
        let correct = match correct_col.map(field) {
            None => None,
            Some("1" | "true") => Some(true),
            Some("0" | "false") => Some(false),
            Some(other) => return Err(bad(path, format!("row {}: bad correct flag `{other}`", line + 1))),
        };
        rows.push(NllRow {
            id: field(id_col).to_string(),
            nll,
            correct,
        });
    }
    Ok(rows)
}

/// Mean NLL in dev order. Accuracy is NaN (serialized as null) unless every row carries
/// a `correct` flag.
pub fn external_eval(path: &Path, dev: &Dataset) -> Result<EvalResult, CliError> {
    let rows = read_nll_file(path)?;
    let mut by_id: HashMap<&str, &NllRow> = HashMap::with_capacity(rows.len());
    for r in &rows {
        if by_id.insert(r.id.as_str(), r).is_some() {
            return Err(bad(path, format!("duplicate id `{}`", r.id)));
        }
    }
    if rows.len() != dev.len() {
        return Err(bad(path, format!("{} rows for a dev set of {}", rows.len(), dev.len())));
    }
    let mut total = 0.0;
    let mut correct = Some(0usize);
    for s in dev.samples() {
        let r = by_id
            .get(s.id.as_str())
            .ok_or_else(|| bad(path, format!("dev id `{}` missing", s.id)))?;
        total += r.nll;
        correct = match (correct, r.correct) {
            (Some(c), Some(ok)) => Some(c + usize::from(ok)),
            _ => None,
        };
    }
    let n = dev.len();
    Ok(EvalResult {
        nll_nats: total / n as f64,
        accuracy: correct.map_or(f64::NAN, |c| c as f64 / n as f64),
        n,
        fingerprint: Some(dev.fingerprint()),
    })
}
