//! Annotation parsing, sampled-frame mapping and the annotation join.
//!
//! Annotation rows are comma separated, one box per line, in either the
//! 7-field layout `f,id,x0,y0,w,h,c` or the 9-field whole-sequence layout
//! `f,id,x0,y0,w,h,out_of_view,occlusion,c`.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("line {line}: box width and height must be positive")]
    NonPositiveBox { line: usize },
    #[error("invalid frame range: {0}")]
    InvalidRange(String),
    #[error("invalid frame name pattern {0:?}")]
    InvalidPattern(String),
    #[error("malformed frame map: {0}")]
    MalformedFrameMap(String),
}

impl IngestError {
    pub fn code(&self) -> &'static str {
        match self {
            IngestError::MalformedRow { .. } => "MalformedRow",
            IngestError::NonPositiveBox { .. } => "NonPositiveBox",
            IngestError::InvalidRange(_) => "InvalidRange",
            IngestError::InvalidPattern(_) => "InvalidPattern",
            IngestError::MalformedFrameMap(_) => "MalformedFrameMap",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoxXywh {
    pub x0: f64,
    pub y0: f64,
    pub w: f64,
    pub h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Corners {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BoxXywh {
    pub fn corners(&self) -> Corners {
        Corners {
            x1: self.x0,
            y1: self.y0,
            x2: self.x0 + self.w,
            y2: self.y0 + self.h,
        }
    }
}

/// One annotated box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Observation {
    pub source_frame: u32,
    pub identity: u32,
    pub bbox: BoxXywh,
    /// Raw class code, preserved verbatim.
    pub category: i32,
    pub out_of_view: Option<i32>,
    pub occlusion: Option<i32>,
}

impl Observation {
    pub fn corners(&self) -> Corners {
        self.bbox.corners()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    #[default]
    Strict,
    /// Skip bad rows and count them.
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedAnnotations {
    pub observations: Vec<Observation>,
    pub skipped_rows: usize,
}

fn parse_int<T: std::str::FromStr>(field: &str, name: &str, line: usize) -> Result<T, IngestError> {
    field.parse::<T>().map_err(|_| IngestError::MalformedRow {
        line,
        reason: format!("{name} {field:?} is not an integer"),
    })
}

fn parse_num(field: &str, name: &str, line: usize) -> Result<f64, IngestError> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(IngestError::MalformedRow {
            line,
            reason: format!("{name} {field:?} is not a finite number"),
        }),
    }
}

/// Parses one row. `line` is 1-based and only used for diagnostics.
pub fn parse_row(row: &str, line: usize) -> Result<Observation, IngestError> {
    let fields: Vec<&str> = row.split(',').map(str::trim).collect();
    let (category_idx, extra) = match fields.len() {
        7 => (6, None),
        9 => (8, Some((6, 7))),
        n => {
            return Err(IngestError::MalformedRow {
                line,
                reason: format!("expected 7 or 9 fields, found {n}"),
            })
        }
    };
    let source_frame = parse_int(fields[0], "frame", line)?;
    let identity = parse_int(fields[1], "id", line)?;
    let bbox = BoxXywh {
        x0: parse_num(fields[2], "x0", line)?,
        y0: parse_num(fields[3], "y0", line)?,
        w: parse_num(fields[4], "w", line)?,
        h: parse_num(fields[5], "h", line)?,
    };
    let (out_of_view, occlusion) = match extra {
        Some((a, b)) => (
            Some(parse_int(fields[a], "out_of_view", line)?),
            Some(parse_int(fields[b], "occlusion", line)?),
        ),
        None => (None, None),
    };
    let category = parse_int(fields[category_idx], "category", line)?;
    if !(bbox.w > 0.0 && bbox.h > 0.0) {
        return Err(IngestError::NonPositiveBox { line });
    }
    Ok(Observation {
        source_frame,
        identity,
        bbox,
        category,
        out_of_view,
        occlusion,
    })
}

/// Parses an annotation stream in file order. Blank lines are ignored.
pub fn parse_annotations(text: &str, mode: ParseMode) -> Result<ParsedAnnotations, IngestError> {
    let mut out = ParsedAnnotations::default();
    for (i, raw) in text.lines().enumerate() {
        let row = raw.trim();
        if row.is_empty() {
            continue;
        }
        match parse_row(row, i + 1) {
            Ok(obs) => out.observations.push(obs),
            Err(e) if mode == ParseMode::Lenient => {
                log::debug!("skipping row: {e}");
                out.skipped_rows += 1;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Writes observations in the 7-field layout. Box values use the shortest
/// representation that parses back to the same `f64`.
pub fn format_annotations(observations: &[Observation]) -> String {
    let mut s = String::new();
    for o in observations {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            o.source_frame, o.identity, o.bbox.x0, o.bbox.y0, o.bbox.w, o.bbox.h, o.category
        );
    }
    s
}

// ---------------------------------------------------------------------------
// Frame names

/// printf-style frame name template with a single integer slot, e.g.
/// `img%06d.jpg`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameNamePattern {
    prefix: String,
    width: usize,
    suffix: String,
}

impl Default for FrameNamePattern {
    fn default() -> Self {
        Self::parse("img%06d.jpg").expect("valid default pattern")
    }
}

impl FrameNamePattern {
    pub fn parse(pattern: &str) -> Result<Self, IngestError> {
        let bad = || IngestError::InvalidPattern(pattern.to_string());
        let start = pattern.find('%').ok_or_else(bad)?;
        let rest = &pattern[start + 1..];
        let d = rest.find('d').ok_or_else(bad)?;
        let spec = &rest[..d];
        let width = if spec.is_empty() {
            0
        } else {
            let digits = spec.strip_prefix('0').unwrap_or(spec);
            digits.parse::<usize>().map_err(|_| bad())?
        };
        let suffix = &rest[d + 1..];
        if suffix.contains('%') || width > 32 {
            return Err(bad());
        }
        Ok(Self {
            prefix: pattern[..start].to_string(),
            width,
            suffix: suffix.to_string(),
        })
    }

    pub fn render(&self, index: u32) -> String {
        format!("{}{:0width$}{}", self.prefix, index, self.suffix, width = self.width)
    }

    pub fn as_pattern(&self) -> String {
        if self.width == 0 {
            format!("{}%d{}", self.prefix, self.suffix)
        } else {
            format!("{}%0{}d{}", self.prefix, self.width, self.suffix)
        }
    }
}

// ---------------------------------------------------------------------------
// Frame map

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FrameMapEntry {
    /// 1-based position in the sampled sequence.
    pub sample_index: u32,
    pub source_frame: u32,
}

/// Sampled frame ↔ original source frame table.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMap {
    entries: Vec<FrameMapEntry>,
    step: u32,
    pattern: FrameNamePattern,
}

pub fn build_frame_map(first_source: u32, last_source: u32, step: u32) -> Result<FrameMap, IngestError> {
    if step < 1 {
        return Err(IngestError::InvalidRange(format!("step must be >= 1, got {step}")));
    }
    if first_source > last_source {
        return Err(IngestError::InvalidRange(format!(
            "first frame {first_source} is after last frame {last_source}"
        )));
    }
    let entries = (first_source..=last_source)
        .step_by(step as usize)
        .enumerate()
        .map(|(k, source_frame)| FrameMapEntry {
            sample_index: k as u32 + 1,
            source_frame,
        })
        .collect();
    Ok(FrameMap {
        entries,
        step,
        pattern: FrameNamePattern::default(),
    })
}

impl FrameMap {
    pub fn with_pattern(mut self, pattern: FrameNamePattern) -> Self {
        self.pattern = pattern;
        self
    }

    pub fn entries(&self) -> &[FrameMapEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn step(&self) -> u32 {
        self.step
    }

    pub fn pattern(&self) -> &FrameNamePattern {
        &self.pattern
    }

    pub fn first_source(&self) -> Option<u32> {
        self.entries.first().map(|e| e.source_frame)
    }

    pub fn source_of(&self, sample_index: u32) -> Option<u32> {
        self.entries
            .get((sample_index as usize).checked_sub(1)?)
            .map(|e| e.source_frame)
    }

    pub fn sample_of(&self, source_frame: u32) -> Option<u32> {
        let first = self.first_source()?;
        let offset = source_frame.checked_sub(first)?;
        if offset % self.step != 0 {
            return None;
        }
        let k = offset / self.step + 1;
        (k as usize <= self.entries.len()).then_some(k)
    }

    pub fn source_name(&self, entry: &FrameMapEntry) -> String {
        self.pattern.render(entry.source_frame)
    }

    /// CSV with header `sample_index,source_frame,source_name`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("sample_index,source_frame,source_name\n");
        for e in &self.entries {
            let _ = writeln!(s, "{},{},{}", e.sample_index, e.source_frame, self.source_name(e));
        }
        s
    }

    /// Reads a frame-map CSV. The rows must describe an arithmetic sequence.
    pub fn from_csv(text: &str) -> Result<Self, IngestError> {
        let bad = |m: String| IngestError::MalformedFrameMap(m);
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad("empty input".into()))?;
        if header.trim() != "sample_index,source_frame,source_name" {
            return Err(bad(format!("unexpected header {header:?}")));
        }
        let mut entries = Vec::new();
        for (i, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(bad(format!("row {} has {} fields", i + 2, fields.len())));
            }
            let sample_index: u32 = fields[0]
                .parse()
                .map_err(|_| bad(format!("row {}: bad sample_index", i + 2)))?;
            let source_frame: u32 = fields[1]
                .parse()
                .map_err(|_| bad(format!("row {}: bad source_frame", i + 2)))?;
            entries.push(FrameMapEntry {
                sample_index,
                source_frame,
            });
        }
        let first = entries.first().ok_or_else(|| bad("no rows".into()))?;
        if first.sample_index != 1 {
            return Err(bad("sample indices must start at 1".into()));
        }
        let step = match entries.get(1) {
            Some(second) => second
                .source_frame
                .checked_sub(first.source_frame)
                .filter(|s| *s >= 1)
                .ok_or_else(|| bad("source frames must increase".into()))?,
            None => 1,
        };
        for (k, w) in entries.windows(2).enumerate() {
            if w[1].sample_index != w[0].sample_index + 1
                || w[1].source_frame.checked_sub(w[0].source_frame) != Some(step)
            {
                return Err(bad(format!("row {} breaks the arithmetic sequence", k + 3)));
            }
        }
        Ok(Self {
            entries,
            step,
            pattern: FrameNamePattern::default(),
        })
    }
}

// ---------------------------------------------------------------------------
// Join

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JoinedObservation {
    pub sample_index: u32,
    pub observation: Observation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct JoinReport {
    pub input: usize,
    pub kept: usize,
    /// Observations whose source frame is not in the map.
    pub unmapped_observations: usize,
    /// Distinct source frames present in the annotations but not in the map.
    pub unmapped_frames: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct JoinOutput {
    pub observations: Vec<JoinedObservation>,
    pub report: JoinReport,
}

/// Keeps the observations on mapped source frames, tagged with their sample
/// index and ordered by `(sample_index, identity)`.
pub fn join_observations<I>(observations: I, frame_map: &FrameMap) -> JoinOutput
where
    I: IntoIterator<Item = Observation>,
{
    let mut report = JoinReport::default();
    let mut unmapped = BTreeSet::new();
    let mut kept = Vec::new();
    for obs in observations {
        report.input += 1;
        match frame_map.sample_of(obs.source_frame) {
            Some(sample_index) => kept.push(JoinedObservation {
                sample_index,
                observation: obs,
            }),
            None => {
                report.unmapped_observations += 1;
                unmapped.insert(obs.source_frame);
            }
        }
    }
    // stable: equal keys keep file order
    kept.sort_by_key(|j| (j.sample_index, j.observation.identity));
    report.kept = kept.len();
    report.unmapped_frames = unmapped.len();
    JoinOutput {
        observations: kept,
        report,
    }
}

/// The association the frame map exists to prevent: the k-th distinct
/// annotated frame is assumed to be sample k of `frame_map`, and is relabelled
/// with that sample's source frame. Kept as a regression fixture.
pub fn join_by_assumed_step<I>(observations: I, frame_map: &FrameMap) -> Vec<JoinedObservation>
where
    I: IntoIterator<Item = Observation>,
{
    let observations: Vec<Observation> = observations.into_iter().collect();
    let frames: BTreeSet<u32> = observations.iter().map(|o| o.source_frame).collect();
    let rank: HashMap<u32, u32> = frames
        .iter()
        .enumerate()
        .map(|(k, &f)| (f, k as u32 + 1))
        .collect();
    let mut out: Vec<JoinedObservation> = observations
        .into_iter()
        .filter_map(|mut o| {
            let sample_index = rank[&o.source_frame];
            o.source_frame = frame_map.source_of(sample_index)?;
            Some(JoinedObservation {
                sample_index,
                observation: o,
            })
        })
        .collect();
    out.sort_by_key(|j| (j.sample_index, j.observation.identity));
    out
}
