use std::path::Path;

use super::TRACE_HEADER;
use crate::error::{Error, Result};

pub const MERGED_HEADER: &str = "run,step,metric,value";

/// Long-format merge of trace CSVs: one `run,step,metric,value` row per non-empty
/// cell. Values are copied verbatim from the sources.
pub fn merge_traces(runs: &[(String, &Path)]) -> Result<String> {
    let metrics: Vec<&str> = TRACE_HEADER.split(',').skip(1).collect();
    let mut out = format!("{MERGED_HEADER}\n");
    for (name, path) in runs {
        if name.contains(',') {
            return Err(Error::Config(format!("run name `{name}` contains a comma")));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(*path, e))?;
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if header != TRACE_HEADER {
            return Err(Error::Config(format!(
                "{}: header `{header}` does not match `{TRACE_HEADER}`",
                path.display()
            )));
        }
        for (i, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != metrics.len() + 1 {
                return Err(Error::Config(format!(
                    "{}: line {} has {} fields",
                    path.display(),
                    i + 2,
                    fields.len()
                )));
            }
            for (metric, value) in metrics.iter().zip(&fields[1..]) {
                if !value.is_empty() {
                    out.push_str(&format!("{name},{},{metric},{value}\n", fields[0]));
                }
            }
        }
    }
    Ok(out)
}
