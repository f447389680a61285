//! Event class tables.
//!
//! A class table maps event names to label ids and the dataset each event was
//! drawn from. Label 0 is reserved for tweets unrelated to any crisis and is
//! never listed in a table.

use std::fmt::Write as _;
use std::path::Path;

use crate::{Error, Result};

/// Name used for the reserved class 0.
pub const UNRELATED: &str = "unrelated";

/// Label values accepted as the reserved unrelated class.
const UNRELATED_ALIASES: &[&str] = &[
    "unrelated",
    "not related",
    "not_related",
    "not-related",
    "off-topic",
    "off_topic",
    "offtopic",
    "irrelevant",
    "none",
];

/// Label values meaning "related to the file's event" (binary-annotated sources).
const ON_TOPIC_ALIASES: &[&str] = &["on-topic", "on_topic", "ontopic", "related", "relevant"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassEntry {
    pub id: u32,
    pub name: String,
    pub dataset: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassTable {
    entries: Vec<ClassEntry>,
}

/// Reported events: (label, name, data points, dataset).
const REPORTED_EVENTS: [(u32, &str, usize, &str); 36] = [
    (1, "2012_Sandy_Hurricane", 6318, "C6"),
    (2, "2013_Alberta_Floods", 5189, "C6"),
    (3, "2013_Boston_Bombings", 6577, "C6"),
    (4, "2013_Oklahoma_Tornado", 4827, "C6"),
    (5, "2013_Queensland_Floods", 6333, "C6"),
    (6, "2013_West_Texas_Explosion", 6157, "C6"),
    (7, "sydneysiege", 837, "C8"),
    (8, "charliehebdo", 903, "C8"),
    (9, "ferguson", 859, "C8"),
    (10, "germanwings-crash", 248, "C8"),
    (11, "putinmissing", 59, "C8"),
    (12, "ottawashooting", 639, "C8"),
    (13, "ebola-essien", 21, "C8"),
    (14, "prince-toronto", 93, "C8"),
    (15, "2012_Colorado_wildfires", 953, "C26"),
    (16, "2012_Costa_Rica_earthquake", 909, "C26"),
    (17, "2012_Guatemala_earthquake", 940, "C26"),
    (18, "2012_Italy_earthquakes", 940, "C26"),
    (19, "2012_Philipinnes_floods", 906, "C26"),
    (20, "2012_Typhoon_Pablo", 907, "C26"),
    (21, "2012_Venezuela_refinery", 939, "C26"),
    (22, "2013_Australia_bushfire", 949, "C26"),
    (23, "2013_Bohol_earthquake", 969, "C26"),
    (24, "2013_Brazil_nightclub_fire", 952, "C26"),
    (25, "2013_Colorado_floods", 925, "C26"),
    (26, "2013_Glasgow_helicopter_crash", 918, "C26"),
    (27, "2013_LA_airport_shootings", 912, "C26"),
    (28, "2013_Lac_Megantic_train_crash", 966, "C26"),
    (29, "2013_Manila_floods", 921, "C26"),
    (30, "2013_NY_train_crash", 999, "C26"),
    (31, "2013_Russia_meteor", 1133, "C26"),
    (32, "2013_Sardinia_floods", 926, "C26"),
    (33, "2013_Savar_building_collapse", 911, "C26"),
    (34, "2013_Singapore_haze", 933, "C26"),
    (35, "2013_Spain_train_crash", 991, "C26"),
    (36, "2013_Typhoon_Yolanda", 940, "C26"),
];

/// Reported labeled data points per event, indexed like the C36 table.
pub fn reported_counts() -> Vec<(u32, usize)> {
    REPORTED_EVENTS.iter().map(|e| (e.0, e.2)).collect()
}

/// How a raw label value resolved against a table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resolved {
    /// Contiguous label (0 = unrelated).
    Label(u32),
    /// Generic "on topic" marker; the caller must supply the event.
    OnTopic,
}

impl ClassTable {
    /// Builds a table, rejecting duplicate ids or names and id 0.
    pub fn new(mut entries: Vec<ClassEntry>) -> Result<Self> {
        entries.sort_by_key(|e| e.id);
        for (i, e) in entries.iter().enumerate() {
            if e.id == 0 {
                return Err(Error::Config(format!(
                    "class '{}' uses id 0, which is reserved for unrelated tweets",
                    e.name
                )));
            }
            if e.name.trim().is_empty() {
                return Err(Error::Config(format!("class id {} has an empty name", e.id)));
            }
            if i > 0 && entries[i - 1].id == e.id {
                return Err(Error::Config(format!("duplicate class id {}", e.id)));
            }
            if entries[..i]
                .iter()
                .any(|o| o.name.eq_ignore_ascii_case(&e.name))
            {
                return Err(Error::Config(format!("duplicate class name '{}'", e.name)));
            }
        }
        Ok(Self { entries })
    }

    /// The six-event table.
    pub fn c6() -> Self {
        Self::from_reported(|ds| ds == "C6")
    }

    /// The full 36-event table.
    pub fn c36() -> Self {
        Self::from_reported(|_| true)
    }

    fn from_reported(keep: impl Fn(&str) -> bool) -> Self {
        let entries = REPORTED_EVENTS
            .iter()
            .filter(|e| keep(e.3))
            .map(|e| ClassEntry {
                id: e.0,
                name: e.1.to_string(),
                dataset: e.3.to_string(),
            })
            .collect();
        Self { entries }
    }

    /// Generic table `event_01 .. event_m` used by synthetic corpora.
    pub fn numbered(m: usize, dataset: &str) -> Self {
        let entries = (1..=m)
            .map(|i| ClassEntry {
                id: i as u32,
                name: format!("event_{i:02}"),
                dataset: dataset.to_string(),
            })
            .collect();
        Self { entries }
    }

    pub fn entries(&self) -> &[ClassEntry] {
        &self.entries
    }

    /// Number of event classes `m` (excluding the unrelated class).
    pub fn num_events(&self) -> usize {
        self.entries.len()
    }

    /// Class names indexed by contiguous label; index 0 is [`UNRELATED`].
    pub fn class_names(&self) -> Vec<String> {
        std::iter::once(UNRELATED.to_string())
            .chain(self.entries.iter().map(|e| e.name.clone()))
            .collect()
    }

    /// Contiguous label of an event name (case-insensitive).
    pub fn label_of(&self, name: &str) -> Option<u32> {
        let name = name.trim();
        if UNRELATED_ALIASES.iter().any(|a| a.eq_ignore_ascii_case(name)) {
            return Some(0);
        }
        self.entries
            .iter()
            .position(|e| e.name.eq_ignore_ascii_case(name))
            .map(|p| p as u32 + 1)
    }

    /// Event name of a contiguous label.
    pub fn name_of(&self, label: u32) -> Option<&str> {
        match label {
            0 => Some(UNRELATED),
            l => self.entries.get(l as usize - 1).map(|e| e.name.as_str()),
        }
    }

    /// Dataset tag of a contiguous label.
    pub fn dataset_of(&self, label: u32) -> Option<&str> {
        match label {
            0 => None,
            l => self.entries.get(l as usize - 1).map(|e| e.dataset.as_str()),
        }
    }

    /// Resolves a raw label cell: event name, declared table id, unrelated
    /// alias, or on-topic marker.
    pub fn resolve(&self, raw: &str) -> Option<Resolved> {
        let raw = raw.trim();
        if let Some(l) = self.label_of(raw) {
            return Some(Resolved::Label(l));
        }
        if ON_TOPIC_ALIASES.iter().any(|a| a.eq_ignore_ascii_case(raw)) {
            return Some(Resolved::OnTopic);
        }
        if let Ok(id) = raw.parse::<u32>() {
            if id == 0 {
                return Some(Resolved::Label(0));
            }
            return self
                .entries
                .iter()
                .position(|e| e.id == id)
                .map(|p| Resolved::Label(p as u32 + 1));
        }
        None
    }

    /// Tab-separated `id  name  dataset` with a header row.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("id\tname\tdataset\n");
        for e in &self.entries {
            let _ = writeln!(out, "{}\t{}\t{}", e.id, e.name, e.dataset);
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
        match lines.next() {
            Some((_, header)) if header.trim_start().starts_with("id") => {}
            Some((n, _)) => {
                return Err(Error::data(
                    "class table",
                    format!("line {}: expected header 'id\\tname\\tdataset'", n + 1),
                ))
            }
            None => return Self::new(entries),
        }
        for (n, line) in lines {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() < 2 {
                return Err(Error::data(
                    "class table",
                    format!("line {}: expected at least id and name", n + 1),
                ));
            }
            let id = fields[0].trim().parse::<u32>().map_err(|_| {
                Error::data(
                    "class table",
                    format!("line {}: id '{}' is not an integer", n + 1, fields[0]),
                )
            })?;
            entries.push(ClassEntry {
                id,
                name: fields[1].trim().to_string(),
                dataset: fields.get(2).map(|s| s.trim()).unwrap_or("").to_string(),
            });
        }
        Self::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tsv(&text)
    }
}
