//! Line-delimited dataset files: one record per line with keys `id`,
//! `fields` (string map), and optional `label`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Example;

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    id: String,
    fields: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

pub fn read_examples(path: &Path) -> Result<Vec<Example>> {
    let content = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (lineno, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(line).map_err(|e| {
            Error::Parse(format!("{} line {}: {e}", path.display(), lineno + 1))
        })?;
        if !seen.insert(record.id.clone()) {
            return Err(Error::Contract(format!(
                "duplicate example id `{}` in {}",
                record.id,
                path.display()
            )));
        }
        out.push(Example {
            id: record.id,
            fields: record.fields,
            gold: record.label,
        });
    }
    if out.is_empty() {
        return Err(Error::Contract(format!("{} holds no examples", path.display())));
    }
    Ok(out)
}

pub fn write_examples(path: &Path, examples: &[Example]) -> Result<()> {
    let mut out = String::new();
    for ex in examples {
        let record = Record {
            id: ex.id.clone(),
            fields: ex.fields.clone(),
            label: ex.gold.clone(),
        };
        out.push_str(&serde_json::to_string(&record)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}
