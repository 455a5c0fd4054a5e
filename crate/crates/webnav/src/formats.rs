//! On-disk formats: JSON-lines traces, pairs and sample sets, the split spec
//! and the id-map sidecar written next to simplified HTML.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use webnav_core::action::Action;
use webnav_core::alignment::SampleSet;
use webnav_core::episode::{Trace, TraceError};
use webnav_core::evaluator::SplitSpec;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {detail}")]
    Schema { path: PathBuf, line: usize, detail: String },
}

impl FormatError {
    fn io(path: &Path, source: io::Error) -> Self {
        FormatError::Io {
            path: path.to_owned(),
            source,
        }
    }

    fn schema(path: &Path, line: usize, detail: impl ToString) -> Self {
        FormatError::Schema {
            path: path.to_owned(),
            line,
            detail: detail.to_string(),
        }
    }
}

/// `-` means standard input.
pub fn open_input(path: &Path) -> Result<Box<dyn Read>, FormatError> {
    if path.as_os_str() == "-" {
        Ok(Box::new(io::stdin()))
    } else {
        File::open(path)
            .map(|f| Box::new(f) as Box<dyn Read>)
            .map_err(|e| FormatError::io(path, e))
    }
}

pub fn read_to_string(path: &Path) -> Result<String, FormatError> {
    let mut out = String::new();
    open_input(path)?
        .read_to_string(&mut out)
        .map_err(|e| FormatError::io(path, e))?;
    Ok(out)
}

/// One value per non-blank line. Errors carry the 1-based line number.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, FormatError> {
    let reader = BufReader::new(open_input(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| FormatError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| FormatError::schema(path, i + 1, e))?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(out: &mut dyn Write, items: &[T]) -> io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut *out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// `None` or `-` writes to standard output.
pub fn create_output(path: Option<&Path>) -> Result<Box<dyn Write>, FormatError> {
    match path {
        None => Ok(Box::new(io::stdout().lock())),
        Some(p) if p.as_os_str() == "-" => Ok(Box::new(io::stdout().lock())),
        Some(p) => File::create(p)
            .map(|f| Box::new(BufWriter::new(f)) as Box<dyn Write>)
            .map_err(|e| FormatError::io(p, e)),
    }
}

pub fn write_jsonl_to<T: Serialize>(path: Option<&Path>, items: &[T]) -> Result<(), FormatError> {
    let display = path.unwrap_or(Path::new("-"));
    let mut out = create_output(path)?;
    write_jsonl(&mut out, items).map_err(|e| FormatError::io(display, e))
}

/// Traces, each checked for contiguous steps and a consistent outcome.
pub fn read_traces(path: &Path) -> Result<Vec<Trace>, FormatError> {
    let traces: Vec<Trace> = read_jsonl(path)?;
    for (i, t) in traces.iter().enumerate() {
        t.check().map_err(|e: TraceError| FormatError::schema(path, i + 1, e))?;
    }
    Ok(traces)
}

pub fn read_split(path: &Path) -> Result<SplitSpec, FormatError> {
    let text = read_to_string(path)?;
    let spec: SplitSpec = serde_json::from_str(&text).map_err(|e| FormatError::schema(path, 1, e))?;
    Ok(SplitSpec::new(spec.train_sites))
}

/// `{"<operable id>": <node index>, ...}`
pub fn id_map_json(id_map: &BTreeMap<u32, usize>) -> String {
    let mut out = serde_json::to_string_pretty(id_map).expect("maps of integers serialize");
    out.push('\n');
    out
}

/// A sample set as stored: either already judged, or raw completions to be
/// judged against the gold action on load.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SampleRecord {
    Judged(SampleSet),
    Raw {
        task_id: String,
        prompt: String,
        gold: Action,
        completions: Vec<String>,
    },
}

impl SampleRecord {
    pub fn into_set(self) -> SampleSet {
        match self {
            SampleRecord::Judged(set) => set,
            SampleRecord::Raw {
                task_id,
                prompt,
                gold,
                completions,
            } => SampleSet::judged(task_id, prompt, gold, completions),
        }
    }
}

pub fn read_sample_sets(path: &Path) -> Result<Vec<SampleSet>, FormatError> {
    let records: Vec<SampleRecord> = read_jsonl(path)?;
    Ok(records.into_iter().map(SampleRecord::into_set).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_errors_name_the_line() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "{{\"train_sites\": []}}\n\nnot json").unwrap();
        let err = read_jsonl::<SplitSpec>(f.path()).unwrap_err();
        assert!(matches!(err, FormatError::Schema { line: 3, .. }), "{err}");
    }

    #[test]
    fn raw_sample_records_are_judged() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(
            f,
            r#"{{"task_id": "t", "prompt": "p", "gold": "click(element_id=\"1\")", "completions": ["click(element_id=\"1\")", "click(1)", "nope"]}}"#
        )
        .unwrap();
        let sets = read_sample_sets(f.path()).unwrap();
        let flags: Vec<bool> = sets[0].samples.iter().map(|s| s.correct).collect();
        assert_eq!(flags, [true, true, false]);
    }

    #[test]
    fn split_sites_are_normalized() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(f, r#"{{"train_sites": [" Shop.Example "]}}"#).unwrap();
        let spec = read_split(f.path()).unwrap();
        assert!(spec.train_sites.contains("shop.example"));
    }

    #[test]
    fn id_map_sidecar_shape() {
        let json = id_map_json(&BTreeMap::from([(0, 4), (1, 9)]));
        let back: BTreeMap<String, usize> = serde_json::from_str(&json).unwrap();
        assert_eq!(back["1"], 9);
    }
}
