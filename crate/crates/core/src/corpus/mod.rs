//! Labeled tweet corpora.
//!
//! Labels are contiguous: 0 is the reserved "unrelated" class and `1..=m` are
//! crisis events. The binary detection flag of a tweet is `label != 0`.

mod classes;
mod split;
mod synth;

use std::path::Path;

use unicode_normalization::UnicodeNormalization;

pub use classes::{reported_counts, ClassEntry, ClassTable, Resolved, UNRELATED};
pub use split::{split, split_indices, SplitIndices, SplitSpec};
pub use synth::{synthesize, SynthSpec};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tweet {
    pub id: String,
    pub text: String,
    pub class_label: u32,
    pub source_tag: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledCorpus {
    tweets: Vec<Tweet>,
    num_classes: usize,
    detection_flags: Vec<u8>,
    class_names: Vec<String>,
}

impl LabeledCorpus {
    /// Builds a corpus over `class_names` (index 0 must be the unrelated class).
    pub fn new(tweets: Vec<Tweet>, class_names: Vec<String>) -> Result<Self> {
        if class_names.is_empty() {
            return Err(Error::Config("class name list is empty".into()));
        }
        let num_classes = class_names.len() - 1;
        for (i, t) in tweets.iter().enumerate() {
            if t.class_label as usize > num_classes {
                return Err(Error::data(
                    format!("tweet {} ('{}')", i, t.id),
                    format!("label {} exceeds class count {}", t.class_label, num_classes),
                ));
            }
            if t.text.trim().is_empty() {
                return Err(Error::data(
                    format!("tweet {} ('{}')", i, t.id),
                    "empty text",
                ));
            }
        }
        let detection_flags = tweets.iter().map(|t| u8::from(t.class_label != 0)).collect();
        Ok(Self {
            tweets,
            num_classes,
            detection_flags,
            class_names,
        })
    }

    pub fn tweets(&self) -> &[Tweet] {
        &self.tweets
    }

    /// Number of event classes `m`, excluding the unrelated class.
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn detection_flags(&self) -> &[u8] {
        &self.detection_flags
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn len(&self) -> usize {
        self.tweets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tweets.is_empty()
    }

    /// Labels for a task: detection flags (2 classes) or class labels (m + 1 classes).
    pub fn labels(&self, task: Task) -> Vec<usize> {
        match task {
            Task::Detection => self.detection_flags.iter().map(|&f| f as usize).collect(),
            Task::Recognition => self.tweets.iter().map(|t| t.class_label as usize).collect(),
        }
    }

    /// Number of output classes for a task.
    pub fn output_classes(&self, task: Task) -> usize {
        match task {
            Task::Detection => 2,
            Task::Recognition => self.num_classes + 1,
        }
    }

    /// Sub-corpus at the given row indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let tweets: Vec<Tweet> = indices.iter().map(|&i| self.tweets[i].clone()).collect();
        let detection_flags = indices.iter().map(|&i| self.detection_flags[i]).collect();
        Self {
            tweets,
            num_classes: self.num_classes,
            detection_flags,
            class_names: self.class_names.clone(),
        }
    }

    /// Per-class member counts, indexed by label.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes + 1];
        for t in &self.tweets {
            counts[t.class_label as usize] += 1;
        }
        counts
    }

    /// Canonical tab-separated form: `id  text  label  source` with a header row.
    pub fn write_tsv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .delimiter(b'\t')
            .from_writer(writer);
        let wrap = |e: csv::Error| Error::data("corpus", e.to_string());
        w.write_record(["id", "text", "label", "source"]).map_err(wrap)?;
        for t in &self.tweets {
            w.write_record([
                t.id.as_str(),
                t.text.as_str(),
                &t.class_label.to_string(),
                t.source_tag.as_str(),
            ])
            .map_err(wrap)?;
        }
        w.flush().map_err(|e| Error::data("corpus", e.to_string()))?;
        Ok(())
    }

    /// Reads the canonical form written by [`LabeledCorpus::write_tsv`].
    pub fn read_tsv<R: std::io::Read>(reader: R, class_names: Vec<String>) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .delimiter(b'\t')
            .from_reader(reader);
        let mut tweets = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| Error::data("corpus", e.to_string()))?;
            let field = |k: usize| rec.get(k).unwrap_or("").to_string();
            let label = field(2).parse::<u32>().map_err(|_| {
                Error::data(format!("corpus row {}", i + 1), "label is not an integer")
            })?;
            tweets.push(Tweet {
                id: field(0),
                text: field(1),
                class_label: label,
                source_tag: field(3),
            });
        }
        Self::new(tweets, class_names)
    }
}

/// Crisis classification task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Binary: crisis-related or not.
    Detection,
    /// Multi-class: which crisis event (or unrelated).
    Recognition,
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::Detection => "detection",
            Task::Recognition => "recognition",
        })
    }
}

impl std::str::FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "detection" => Ok(Task::Detection),
            "recognition" => Ok(Task::Recognition),
            other => Err(Error::Config(format!(
                "unknown task '{other}' (expected detection or recognition)"
            ))),
        }
    }
}

/// Column mapping for delimiter-separated input files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSchema {
    pub id: String,
    pub text: String,
    pub label: String,
    /// Event assigned to rows labeled "on-topic" (per-event annotated files).
    pub event: Option<String>,
    /// Dataset tag for rows whose class has none (e.g. unrelated rows).
    pub source_tag: Option<String>,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        Self {
            id: "id".into(),
            text: "text".into(),
            label: "label".into(),
            event: None,
            source_tag: None,
        }
    }
}

/// Rows that were read but not kept.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub rows_read: usize,
    pub kept: usize,
    pub skipped_empty_text: usize,
    /// 1-based file line numbers of skipped rows.
    pub skipped_lines: Vec<usize>,
}

/// Loads a labeled tweet file (comma or tab separated, header required) and
/// remaps its labels onto the contiguous scheme of `table`.
pub fn load_crisislex(
    path: &Path,
    schema: &ColumnSchema,
    table: &ClassTable,
) -> Result<(LabeledCorpus, LoadReport)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let ctx = path.display().to_string();
    let text = std::str::from_utf8(&bytes)
        .map_err(|e| Error::data(&ctx, format!("not valid UTF-8: {e}")))?;
    let header_line = text.lines().next().unwrap_or("");
    let delimiter = if header_line.contains('\t') { b'\t' } else { b',' };

    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::data(&ctx, format!("unreadable header: {e}")))?
        .clone();
    let column = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or_else(|| {
                Error::data(
                    &ctx,
                    format!(
                        "header has no column '{name}' (found: {})",
                        headers.iter().collect::<Vec<_>>().join(", ")
                    ),
                )
            })
    };
    let (id_col, text_col, label_col) = (column(&schema.id)?, column(&schema.text)?, column(&schema.label)?);

    let event_label = match &schema.event {
        Some(ev) => Some(table.label_of(ev).filter(|&l| l != 0).ok_or_else(|| {
            Error::Config(format!("event '{ev}' is not in the class table"))
        })?),
        None => None,
    };

    let mut report = LoadReport::default();
    let mut tweets = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::data(&ctx, format!("line {line}: {e}")))?;
        report.rows_read += 1;
        let raw_label = rec.get(label_col).unwrap_or("");
        let label = match table.resolve(raw_label) {
            Some(Resolved::Label(l)) => l,
            Some(Resolved::OnTopic) => event_label.ok_or_else(|| {
                Error::data(
                    &ctx,
                    format!("line {line}: label '{raw_label}' needs an event for this file"),
                )
            })?,
            None => {
                return Err(Error::data(
                    &ctx,
                    format!("line {line}: label '{raw_label}' is not in the class table"),
                ))
            }
        };
        let body: String = rec.get(text_col).unwrap_or("").nfc().collect();
        if body.trim().is_empty() {
            report.skipped_empty_text += 1;
            report.skipped_lines.push(line);
            continue;
        }
        let source_tag = table
            .dataset_of(label)
            .map(str::to_string)
            .or_else(|| schema.source_tag.clone())
            .unwrap_or_default();
        tweets.push(Tweet {
            id: rec.get(id_col).unwrap_or("").trim().to_string(),
            text: body,
            class_label: label,
            source_tag,
        });
    }
    report.kept = tweets.len();
    if report.skipped_empty_text > 0 {
        log::warn!(
            "{ctx}: skipped {} row(s) with empty text",
            report.skipped_empty_text
        );
    }
    Ok((LabeledCorpus::new(tweets, table.class_names())?, report))
}

/// Concatenates corpora that share a class scheme.
pub fn concat(parts: &[LabeledCorpus]) -> Result<LabeledCorpus> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Config("no corpora to concatenate".into()))?;
    let mut tweets = Vec::new();
    for p in parts {
        if p.class_names != first.class_names {
            return Err(Error::Config("corpora use different class tables".into()));
        }
        tweets.extend(p.tweets.iter().cloned());
    }
    LabeledCorpus::new(tweets, first.class_names.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_and_remaps_event_names() {
        let f = write(
            "id,text,label\n\
             1,Hurricane Sandy hits NJ,2012_Sandy_Hurricane\n\
             2,lunch was great,unrelated\n\
             3,explosion at the marathon,2013_Boston_Bombings\n",
        );
        let (c, report) = load_crisislex(f.path(), &ColumnSchema::default(), &ClassTable::c6()).unwrap();
        let labels: Vec<u32> = c.tweets().iter().map(|t| t.class_label).collect();
        assert_eq!(labels, vec![1, 0, 3]);
        assert_eq!(c.detection_flags(), &[1, 0, 1]);
        assert_eq!(c.num_classes(), 6);
        assert_eq!(report.kept, 3);
        assert_eq!(c.tweets()[0].source_tag, "C6");
    }

    #[test]
    fn empty_file_with_header_is_empty_corpus() {
        let f = write("id\ttext\tlabel\n");
        let (c, _) = load_crisislex(f.path(), &ColumnSchema::default(), &ClassTable::c6()).unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn unknown_label_names_the_line() {
        let f = write("id,text,label\n1,ok,unrelated\n2,quake,2015_Nepal_earthquake\n");
        let err = load_crisislex(f.path(), &ColumnSchema::default(), &ClassTable::c6()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "{msg}");
        assert!(msg.contains("2015_Nepal_earthquake"), "{msg}");
    }

    #[test]
    fn missing_column_is_named() {
        let f = write("id,text,category\n1,ok,unrelated\n");
        let err = load_crisislex(f.path(), &ColumnSchema::default(), &ClassTable::c6()).unwrap_err();
        assert!(err.to_string().contains("'label'"));
        assert_eq!(err.kind(), crate::ErrorKind::Data);
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_crisislex(
            Path::new("/nonexistent/tweets.csv"),
            &ColumnSchema::default(),
            &ClassTable::c6(),
        )
        .unwrap_err();
        assert_eq!(err.kind(), crate::ErrorKind::Io);
    }

    #[test]
    fn empty_text_rows_are_counted() {
        let f = write("id\ttext\tlabel\n1\t   \tunrelated\n2\tflood waters rising\t2013_Alberta_Floods\n");
        let (c, report) = load_crisislex(f.path(), &ColumnSchema::default(), &ClassTable::c6()).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(report.skipped_empty_text, 1);
        assert_eq!(report.skipped_lines, vec![2]);
    }

    #[test]
    fn on_topic_rows_take_the_file_event() {
        let f = write("tweet id,tweet,label\n1,tornado warning,on-topic\n2,nice day,off-topic\n");
        let schema = ColumnSchema {
            id: "tweet id".into(),
            text: "tweet".into(),
            label: "label".into(),
            event: Some("2013_Oklahoma_Tornado".into()),
            source_tag: None,
        };
        let (c, _) = load_crisislex(f.path(), &schema, &ClassTable::c6()).unwrap();
        let labels: Vec<u32> = c.tweets().iter().map(|t| t.class_label).collect();
        assert_eq!(labels, vec![4, 0]);
    }

    #[test]
    fn text_is_nfc_normalized() {
        let f = write("id,text,label\n1,cafe\u{301} flooded,2013_Alberta_Floods\n");
        let (c, _) = load_crisislex(f.path(), &ColumnSchema::default(), &ClassTable::c6()).unwrap();
        assert_eq!(c.tweets()[0].text, "caf\u{e9} flooded");
    }

    #[test]
    fn canonical_tsv_round_trips() {
        let names = ClassTable::c6().class_names();
        let c = LabeledCorpus::new(
            vec![
                Tweet { id: "a".into(), text: "has\ttab and \"quotes\"".into(), class_label: 2, source_tag: "C6".into() },
                Tweet { id: "b".into(), text: "plain".into(), class_label: 0, source_tag: String::new() },
            ],
            names.clone(),
        )
        .unwrap();
        let mut buf = Vec::new();
        c.write_tsv(&mut buf).unwrap();
        let back = LabeledCorpus::read_tsv(buf.as_slice(), names).unwrap();
        assert_eq!(back, c);
    }
}
