//! Parsing free-text radiology reports into sections and attaching
//! disease-label metadata.
//!
//! A header is a line-initial run of uppercase letters and spaces followed
//! directly by a colon, e.g. `FINDINGS:` or `CLINICAL HISTORY:`. Known section
//! names are also recognised mid-line when they follow a sentence terminator
//! (`... No pneumonia. IMPRESSION: ...`), which is how flattened exports often
//! look. Text before the first header is not part of any section.
//!
//! Label values use the numeric encoding `1` = indicated, `-1` = negated,
//! `0` = uncertain and missing = absent. Note that this is *not* the CheXpert
//! convention, where `-1` marks uncertainty.

use std::collections::BTreeMap;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::io::Read;
use std::str::FromStr;

use indexmap::IndexMap;
use regex::Regex;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum IngestError {
    #[error("report {0:?} is empty")]
    EmptyInput(String),
    #[error("report {0:?} has no section headers")]
    NoSections(String),
    #[error("invalid label value {value} for {disease:?} (expected 1, -1, 0 or empty)")]
    InvalidLabelValue { disease: String, value: f64 },
    #[error("label metadata: {0}")]
    Metadata(String),
}

/// Section header label. Comparison ignores case.
#[derive(Debug, Clone, Eq)]
pub enum SectionName {
    Findings,
    Impression,
    Indication,
    Technique,
    Comparison,
    History,
    Examination,
    /// Any other header, stored as its uppercase text.
    Other(String),
}

impl SectionName {
    pub const KNOWN: [SectionName; 7] = [
        SectionName::Findings,
        SectionName::Impression,
        SectionName::Indication,
        SectionName::Technique,
        SectionName::Comparison,
        SectionName::History,
        SectionName::Examination,
    ];

    /// The four fields rendered as model input by default.
    pub fn default_input_fields() -> Vec<SectionName> {
        vec![
            SectionName::Findings,
            SectionName::Indication,
            SectionName::Technique,
            SectionName::Comparison,
        ]
    }

    pub fn as_str(&self) -> &str {
        match self {
            SectionName::Findings => "FINDINGS",
            SectionName::Impression => "IMPRESSION",
            SectionName::Indication => "INDICATION",
            SectionName::Technique => "TECHNIQUE",
            SectionName::Comparison => "COMPARISON",
            SectionName::History => "HISTORY",
            SectionName::Examination => "EXAMINATION",
            SectionName::Other(s) => s,
        }
    }

    /// Maps header text to a name, without alias lookup.
    pub fn from_header(text: &str) -> SectionName {
        let upper = text.trim().to_uppercase();
        SectionName::KNOWN
            .iter()
            .find(|k| k.as_str() == upper)
            .cloned()
            .unwrap_or(SectionName::Other(upper))
    }

    pub fn is_known(&self) -> bool {
        !matches!(self, SectionName::Other(_))
    }
}

impl PartialEq for SectionName {
    fn eq(&self, other: &Self) -> bool {
        self.as_str().eq_ignore_ascii_case(other.as_str())
    }
}

impl Hash for SectionName {
    fn hash<H: Hasher>(&self, state: &mut H) {
        for b in self.as_str().bytes() {
            state.write_u8(b.to_ascii_uppercase());
        }
    }
}

impl fmt::Display for SectionName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SectionName {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(SectionName::from_header(s))
    }
}

impl Serialize for SectionName {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for SectionName {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(SectionName::from_header(&s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LabelValue {
    Indicated,
    Negated,
    Uncertain,
    /// Never stored in a report's label map; returned for missing keys.
    Absent,
}

impl LabelValue {
    pub fn from_numeric(value: Option<f64>) -> Option<LabelValue> {
        match value {
            None => Some(LabelValue::Absent),
            Some(1.0) => Some(LabelValue::Indicated),
            Some(-1.0) => Some(LabelValue::Negated),
            Some(0.0) => Some(LabelValue::Uncertain),
            Some(_) => None,
        }
    }

    pub fn to_numeric(self) -> Option<i8> {
        match self {
            LabelValue::Indicated => Some(1),
            LabelValue::Negated => Some(-1),
            LabelValue::Uncertain => Some(0),
            LabelValue::Absent => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LabelValue::Indicated => "indicated",
            LabelValue::Negated => "negated",
            LabelValue::Uncertain => "uncertain",
            LabelValue::Absent => "absent",
        }
    }
}

impl FromStr for LabelValue {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "indicated" | "1" => Ok(LabelValue::Indicated),
            "negated" | "-1" => Ok(LabelValue::Negated),
            "uncertain" | "0" => Ok(LabelValue::Uncertain),
            "absent" | "" => Ok(LabelValue::Absent),
            other => Err(format!("unknown label polarity {other:?}")),
        }
    }
}

impl Serialize for LabelValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.to_numeric() {
            Some(v) => s.serialize_i8(v),
            None => s.serialize_none(),
        }
    }
}

impl<'de> Deserialize<'de> for LabelValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Option::<f64>::deserialize(d)?;
        LabelValue::from_numeric(v)
            .ok_or_else(|| serde::de::Error::custom(format!("invalid label value {v:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiologyReport {
    pub report_id: String,
    pub raw_text: String,
    pub sections: IndexMap<SectionName, String>,
    #[serde(default)]
    pub labels: BTreeMap<String, LabelValue>,
}

impl RadiologyReport {
    pub fn section(&self, name: &SectionName) -> Option<&str> {
        self.sections.get(name).map(String::as_str)
    }

    /// True when the section exists with a non-blank body.
    pub fn has_section(&self, name: &SectionName) -> bool {
        self.section(name).is_some_and(|b| !b.trim().is_empty())
    }

    pub fn label(&self, disease: &str) -> LabelValue {
        self.labels
            .get(disease)
            .copied()
            .unwrap_or(LabelValue::Absent)
    }

    /// Renders the sections back as `HEADER: body` lines.
    pub fn to_text(&self) -> String {
        self.sections
            .iter()
            .map(|(name, body)| format!("{name}: {body}"))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParserConfig {
    /// Extra header spellings, e.g. `"CLINICAL HISTORY" -> HISTORY`.
    pub aliases: BTreeMap<String, SectionName>,
    /// Recognise known headers after a sentence terminator mid-line.
    pub inline_headers: bool,
}

impl Default for ParserConfig {
    fn default() -> Self {
        let aliases = [
            ("IMPRESSIONS", SectionName::Impression),
            ("INDICATIONS", SectionName::Indication),
            ("COMPARISONS", SectionName::Comparison),
            ("CLINICAL HISTORY", SectionName::History),
            ("EXAM", SectionName::Examination),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Self {
            aliases,
            inline_headers: true,
        }
    }
}

/// Reusable parser; building one compiles the inline-header pattern once.
#[derive(Debug, Clone)]
pub struct ReportParser {
    aliases: BTreeMap<String, SectionName>,
    inline: Option<Regex>,
}

impl Default for ReportParser {
    fn default() -> Self {
        Self::new(&ParserConfig::default())
    }
}

struct HeaderHit {
    start: usize,
    body_start: usize,
    name: SectionName,
}

impl ReportParser {
    pub fn new(cfg: &ParserConfig) -> Self {
        let aliases: BTreeMap<String, SectionName> = cfg
            .aliases
            .iter()
            .map(|(k, v)| (normalize_header(k), v.clone()))
            .collect();
        let inline = cfg.inline_headers.then(|| {
            let mut names: Vec<String> = SectionName::KNOWN
                .iter()
                .map(|k| k.as_str().to_string())
                .chain(
                    aliases
                        .iter()
                        .filter(|(_, v)| v.is_known())
                        .map(|(k, _)| k.clone()),
                )
                .map(|n| regex::escape(&n).replace(' ', " +"))
                .collect();
            // longest first so "IMPRESSIONS" wins over "IMPRESSION"
            names.sort_by_key(|n| std::cmp::Reverse(n.len()));
            Regex::new(&format!(r"[.!?][ \t]+({}):", names.join("|"))).expect("valid header regex")
        });
        Self { aliases, inline }
    }

    fn resolve(&self, header: &str) -> SectionName {
        let key = normalize_header(header);
        self.aliases
            .get(&key)
            .cloned()
            .unwrap_or_else(|| SectionName::from_header(&key))
    }

    pub fn parse(&self, report_id: &str, raw_text: &str) -> Result<RadiologyReport, IngestError> {
        if raw_text.trim().is_empty() {
            return Err(IngestError::EmptyInput(report_id.to_string()));
        }
        let hits = self.find_headers(raw_text);
        if hits.is_empty() {
            return Err(IngestError::NoSections(report_id.to_string()));
        }
        let mut sections = IndexMap::new();
        for (i, hit) in hits.iter().enumerate() {
            let end = hits.get(i + 1).map_or(raw_text.len(), |h| h.start);
            let body = raw_text[hit.body_start..end].trim();
            if body.is_empty() {
                continue;
            }
            if sections.contains_key(&hit.name) {
                log::warn!("{report_id}: duplicate {} section ignored", hit.name);
                continue;
            }
            sections.insert(hit.name.clone(), body.to_string());
        }
        Ok(RadiologyReport {
            report_id: report_id.to_string(),
            raw_text: raw_text.to_string(),
            sections,
            labels: BTreeMap::new(),
        })
    }

    fn find_headers(&self, text: &str) -> Vec<HeaderHit> {
        let mut hits = Vec::new();
        let mut line_start = 0;
        for line in text.split_inclusive('\n') {
            let scan_from = match line_header(line) {
                Some((offset, header, after_colon)) => {
                    hits.push(HeaderHit {
                        start: line_start + offset,
                        body_start: line_start + after_colon,
                        name: self.resolve(header),
                    });
                    after_colon
                }
                None => 0,
            };
            if let Some(re) = &self.inline {
                for cap in re.captures_iter(&line[scan_from..]) {
                    let m = cap.get(1).expect("group 1");
                    hits.push(HeaderHit {
                        start: line_start + scan_from + m.start(),
                        body_start: line_start + scan_from + m.end() + 1,
                        name: self.resolve(m.as_str()),
                    });
                }
            }
            line_start += line.len();
        }
        hits
    }
}

/// Detects a header at the start of `line`. Returns the header's byte offset,
/// its text, and the offset just past the colon.
fn line_header(line: &str) -> Option<(usize, &str, usize)> {
    let offset = line.len() - line.trim_start_matches([' ', '\t']).len();
    let rest = &line[offset..];
    let run_len = rest
        .find(|c: char| !(c.is_uppercase() || c == ' '))
        .unwrap_or(rest.len());
    if !rest[run_len..].starts_with(':') {
        return None;
    }
    let header = rest[..run_len].trim_end();
    let letters = header.chars().filter(|c| c.is_alphabetic()).count();
    if letters < 2 {
        return None;
    }
    Some((offset, header, offset + run_len + 1))
}

fn normalize_header(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_uppercase()
}

/// Parses with the default configuration.
pub fn parse_report(report_id: &str, raw_text: &str) -> Result<RadiologyReport, IngestError> {
    ReportParser::default().parse(report_id, raw_text)
}

/// Returns `report` with labels taken from one metadata row. Missing values
/// leave the disease absent.
pub fn extract_labels(
    mut report: RadiologyReport,
    metadata_row: &BTreeMap<String, Option<f64>>,
) -> Result<RadiologyReport, IngestError> {
    let mut labels = BTreeMap::new();
    for (disease, &value) in metadata_row {
        match LabelValue::from_numeric(value) {
            Some(LabelValue::Absent) => {}
            Some(v) => {
                labels.insert(disease.clone(), v);
            }
            None => {
                return Err(IngestError::InvalidLabelValue {
                    disease: disease.clone(),
                    value: value.unwrap_or(f64::NAN),
                })
            }
        }
    }
    report.labels = labels;
    Ok(report)
}

pub const DEFAULT_NO_FINDING_KEY: &str = "No Finding";

/// A report counts as "No Findings" when the indicator key is set to 1, or
/// when it carries at least one disease label and every one is negated.
pub fn is_no_findings(report: &RadiologyReport, no_finding_key: &str) -> bool {
    if report.label(no_finding_key) == LabelValue::Indicated {
        return true;
    }
    let mut diseases = report
        .labels
        .iter()
        .filter(|(k, v)| k.as_str() != no_finding_key && **v != LabelValue::Absent)
        .peekable();
    diseases.peek().is_some() && diseases.all(|(_, v)| *v == LabelValue::Negated)
}

/// Label metadata keyed by report id.
pub type LabelTable = BTreeMap<String, BTreeMap<String, Option<f64>>>;

/// Reads label metadata CSV: one id column, every other column a disease.
pub fn read_labels_csv<R: Read>(reader: R, id_column: &str) -> Result<LabelTable, IngestError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| IngestError::Metadata(e.to_string()))?
        .clone();
    let id_idx = headers
        .iter()
        .position(|h| h == id_column)
        .ok_or_else(|| IngestError::Metadata(format!("missing id column {id_column:?}")))?;
    let mut table = LabelTable::new();
    for record in rdr.records() {
        let record = record.map_err(|e| IngestError::Metadata(e.to_string()))?;
        let id = record.get(id_idx).unwrap_or("").to_string();
        let mut row = BTreeMap::new();
        for (i, (name, cell)) in headers.iter().zip(record.iter()).enumerate() {
            if i == id_idx {
                continue;
            }
            let cell = cell.trim();
            let value = if cell.is_empty() {
                None
            } else {
                Some(
                    cell.parse::<f64>()
                        .map_err(|_| IngestError::InvalidLabelValue {
                            disease: name.to_string(),
                            value: f64::NAN,
                        })?,
                )
            };
            row.insert(name.to_string(), value);
        }
        table.insert(id, row);
    }
    Ok(table)
}
