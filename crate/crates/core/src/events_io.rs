//! Event streams, ROIs, interval annotations and window labelling.
//!
//! Timestamps are integer microseconds. All time intervals are half-open,
//! `[start, end)`, so adjacent windows tile a recording without overlap.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum timestamp regression tolerated while reading, before stable sorting.
pub const DEFAULT_REORDER_TOLERANCE_US: u64 = 1_000;

pub const CSV_HEADER: &str = "t_us,x,y,p";

const BINARY_MAGIC: &[u8; 4] = b"EVFB";
const BINARY_VERSION: u16 = 1;
const BINARY_RECORD_LEN: usize = 13;

/// Converts a duration in seconds to whole microseconds.
pub fn seconds_to_us(seconds: f64) -> Result<u64> {
    if !seconds.is_finite() || seconds < 0.0 {
        return Err(Error::Param(format!("invalid duration {seconds} s")));
    }
    Ok((seconds * 1e6).round() as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    /// Brightness increase, +1.
    On,
    /// Brightness decrease, -1.
    Off,
}

impl Polarity {
    pub fn sign(self) -> i8 {
        match self {
            Polarity::On => 1,
            Polarity::Off => -1,
        }
    }

    /// Accepts both `{0, 1}` and `{-1, +1}` encodings.
    pub fn parse(token: &str) -> Option<Self> {
        match token.trim() {
            "1" | "+1" => Some(Polarity::On),
            "0" | "-1" => Some(Polarity::Off),
            _ => None,
        }
    }

    fn from_sign(sign: i8) -> Option<Self> {
        match sign {
            1 => Some(Polarity::On),
            0 | -1 => Some(Polarity::Off),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub t_us: u64,
    pub x: u16,
    pub y: u16,
    pub polarity: Polarity,
}

impl Event {
    pub fn new(t_us: u64, x: u16, y: u16, polarity: Polarity) -> Self {
        Event {
            t_us,
            x,
            y,
            polarity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorSize {
    pub width: u16,
    pub height: u16,
}

impl SensorSize {
    /// DAVIS346 geometry.
    pub const DAVIS346: SensorSize = SensorSize {
        width: 346,
        height: 260,
    };

    pub fn contains(&self, x: u16, y: u16) -> bool {
        x < self.width && y < self.height
    }
}

/// A time-sorted sequence of events on a fixed sensor over `[t_begin, t_end)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    events: Vec<Event>,
    sensor: SensorSize,
    t_begin: u64,
    t_end: u64,
}

impl EventStream {
    pub fn new(events: Vec<Event>, sensor: SensorSize, t_begin: u64, t_end: u64) -> Result<Self> {
        if t_begin > t_end {
            return Err(Error::Validation(format!(
                "stream span [{t_begin}, {t_end}) is reversed"
            )));
        }
        for (i, pair) in events.windows(2).enumerate() {
            if pair[1].t_us < pair[0].t_us {
                return Err(Error::Validation(format!(
                    "event {} at {} us precedes event {} at {} us",
                    i + 1,
                    pair[1].t_us,
                    i,
                    pair[0].t_us
                )));
            }
        }
        for (i, e) in events.iter().enumerate() {
            if !sensor.contains(e.x, e.y) {
                return Err(Error::Validation(format!(
                    "event {i} at pixel ({}, {}) outside {}x{} sensor",
                    e.x, e.y, sensor.width, sensor.height
                )));
            }
            if e.t_us < t_begin || e.t_us >= t_end {
                return Err(Error::Validation(format!(
                    "event {i} at {} us outside span [{t_begin}, {t_end})",
                    e.t_us
                )));
            }
        }
        Ok(EventStream {
            events,
            sensor,
            t_begin,
            t_end,
        })
    }

    pub fn empty(sensor: SensorSize, t_begin: u64, t_end: u64) -> Result<Self> {
        EventStream::new(Vec::new(), sensor, t_begin, t_end)
    }

    /// Merges streams sharing one sensor; ties keep the order of `streams`.
    pub fn merge(streams: Vec<EventStream>, sensor: SensorSize, t_begin: u64, t_end: u64) -> Result<Self> {
        let mut events: Vec<Event> = streams.into_iter().flat_map(|s| s.events).collect();
        events.sort_by_key(|e| e.t_us);
        EventStream::new(events, sensor, t_begin, t_end)
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn sensor(&self) -> SensorSize {
        self.sensor
    }

    pub fn t_begin(&self) -> u64 {
        self.t_begin
    }

    pub fn t_end(&self) -> u64 {
        self.t_end
    }

    pub fn span(&self) -> (u64, u64) {
        (self.t_begin, self.t_end)
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Rectangular region of interest; `min` bounds inclusive, `max` bounds exclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roi {
    pub id: String,
    pub x_min: u16,
    pub y_min: u16,
    pub x_max: u16,
    pub y_max: u16,
}

impl Roi {
    pub fn new(id: impl Into<String>, x_min: u16, y_min: u16, x_max: u16, y_max: u16) -> Self {
        Roi {
            id: id.into(),
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn validate(&self, sensor: SensorSize) -> Result<()> {
        if self.x_min >= self.x_max || self.y_min >= self.y_max {
            return Err(Error::Validation(format!("roi '{}' has an empty extent", self.id)));
        }
        if self.x_max > sensor.width || self.y_max > sensor.height {
            return Err(Error::Validation(format!(
                "roi '{}' exceeds the {}x{} sensor",
                self.id, sensor.width, sensor.height
            )));
        }
        Ok(())
    }

    pub fn contains(&self, x: u16, y: u16) -> bool {
        (self.x_min..self.x_max).contains(&x) && (self.y_min..self.y_max).contains(&y)
    }

    pub fn width(&self) -> u16 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> u16 {
        self.y_max - self.y_min
    }
}

/// Annotated action intervals `[t_start, t_end)` for one ROI.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationTrack {
    pub roi_id: String,
    pub intervals: Vec<(u64, u64)>,
}

impl AnnotationTrack {
    pub fn new(roi_id: impl Into<String>, intervals: Vec<(u64, u64)>) -> Result<Self> {
        let track = AnnotationTrack {
            roi_id: roi_id.into(),
            intervals,
        };
        track.validate()?;
        Ok(track)
    }

    pub fn validate(&self) -> Result<()> {
        for &(s, e) in &self.intervals {
            if s >= e {
                return Err(Error::Validation(format!(
                    "track '{}': interval [{s}, {e}) is empty",
                    self.roi_id
                )));
            }
        }
        for pair in self.intervals.windows(2) {
            if pair[1].0 < pair[0].1 {
                return Err(Error::Validation(format!(
                    "track '{}': intervals [{}, {}) and [{}, {}) overlap or are unsorted",
                    self.roi_id, pair[0].0, pair[0].1, pair[1].0, pair[1].1
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, t_us: u64) -> bool {
        // intervals are sorted and disjoint
        let idx = self.intervals.partition_point(|&(s, _)| s <= t_us);
        idx > 0 && t_us < self.intervals[idx - 1].1
    }

    pub fn total_duration_us(&self) -> u64 {
        self.intervals.iter().map(|&(s, e)| e - s).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "BG")]
    Bg,
    #[serde(rename = "ED")]
    Ed,
}

impl Label {
    pub fn is_positive(self) -> bool {
        self == Label::Ed
    }

    pub fn from_positive(positive: bool) -> Self {
        if positive {
            Label::Ed
        } else {
            Label::Bg
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Bg => "BG",
            Label::Ed => "ED",
        })
    }
}

impl std::str::FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "ED" => Ok(Label::Ed),
            "BG" => Ok(Label::Bg),
            other => Err(Error::Validation(format!("unknown label '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledWindow {
    pub roi_id: String,
    pub center_us: u64,
    pub duration_s: f64,
    pub label: Label,
}

/// The annotation file: sensor geometry, ROIs, and per-ROI interval tracks.
///
/// `span_us` is optional and records the recording span so that CSV event
/// files, which carry no metadata, reparse to the exact original stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotations {
    pub sensor: SensorSize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span_us: Option<(u64, u64)>,
    pub rois: Vec<Roi>,
    pub tracks: Vec<AnnotationTrack>,
}

impl Annotations {
    pub fn validate(&self) -> Result<()> {
        for (i, roi) in self.rois.iter().enumerate() {
            roi.validate(self.sensor)?;
            if self.rois[..i].iter().any(|r| r.id == roi.id) {
                return Err(Error::Validation(format!("duplicate roi id '{}'", roi.id)));
            }
        }
        for track in &self.tracks {
            track.validate()?;
            if self.roi(&track.roi_id).is_none() {
                return Err(Error::Validation(format!(
                    "track references unknown roi '{}'",
                    track.roi_id
                )));
            }
        }
        if let Some((b, e)) = self.span_us {
            if b > e {
                return Err(Error::Validation(format!("span [{b}, {e}) is reversed")));
            }
        }
        Ok(())
    }

    pub fn roi(&self, id: &str) -> Option<&Roi> {
        self.rois.iter().find(|r| r.id == id)
    }

    /// Track for `roi_id`; an ROI without a track has no positive intervals.
    pub fn track(&self, roi_id: &str) -> AnnotationTrack {
        self.tracks
            .iter()
            .find(|t| t.roi_id == roi_id)
            .cloned()
            .unwrap_or_else(|| AnnotationTrack {
                roi_id: roi_id.to_string(),
                intervals: Vec::new(),
            })
    }

    pub fn parse_options(&self) -> ParseOptions {
        ParseOptions {
            sensor: Some(self.sensor),
            span_us: self.span_us,
            ..ParseOptions::default()
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::file(path, e))?;
        let annotations: Annotations = serde_json::from_reader(BufReader::new(file))?;
        annotations.validate()?;
        Ok(annotations)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventFormat {
    Csv,
    Binary,
}

impl std::str::FromStr for EventFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(EventFormat::Csv),
            "binary" | "bin" => Ok(EventFormat::Binary),
            other => Err(Error::Param(format!("unknown event format '{other}'"))),
        }
    }
}

impl EventFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") | Some("evfb") => EventFormat::Binary,
            _ => EventFormat::Csv,
        }
    }
}

/// Metadata applied when a file does not carry it (CSV), or checked against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParseOptions {
    /// Sensor geometry; inferred from the largest coordinates when absent.
    pub sensor: Option<SensorSize>,
    /// Recording span; inferred as `[first t, last t + 1)` when absent.
    pub span_us: Option<(u64, u64)>,
    pub reorder_tolerance_us: u64,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            sensor: None,
            span_us: None,
            reorder_tolerance_us: DEFAULT_REORDER_TOLERANCE_US,
        }
    }
}

pub fn parse_event_file(path: &Path, format: EventFormat, opts: &ParseOptions) -> Result<EventStream> {
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    let reader = BufReader::new(file);
    match format {
        EventFormat::Csv => read_csv(reader, opts),
        EventFormat::Binary => read_binary(reader, opts),
    }
}

pub fn read_csv<R: BufRead>(reader: R, opts: &ParseOptions) -> Result<EventStream> {
    let mut numbered = Vec::new();
    let mut seen_content = false;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if !seen_content {
            seen_content = true;
            if trimmed.replace(' ', "") == CSV_HEADER {
                continue;
            }
        }
        numbered.push((line_no, parse_csv_record(trimmed, line_no)?));
    }
    finalize(numbered, None, opts)
}

fn parse_csv_record(line: &str, line_no: usize) -> Result<Event> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 4 {
        return Err(Error::Parse {
            line: line_no,
            msg: format!("expected 4 fields, found {}", fields.len()),
        });
    }
    let num = |name: &str, s: &str| -> Result<u64> {
        s.parse::<u64>().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("invalid {name} '{s}'"),
        })
    };
    let t_us = num("timestamp", fields[0])?;
    let x = num("x", fields[1])?;
    let y = num("y", fields[2])?;
    let coord = |name: &str, v: u64| -> Result<u16> {
        u16::try_from(v).map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("{name} = {v} exceeds the 16-bit pixel range"),
        })
    };
    let polarity = Polarity::parse(fields[3]).ok_or_else(|| {
        Error::Validation(format!(
            "line {line_no}: polarity '{}' is not one of 0, 1, -1, +1",
            fields[3]
        ))
    })?;
    Ok(Event::new(t_us, coord("x", x)?, coord("y", y)?, polarity))
}

/// Applies the reorder tolerance, infers missing metadata and validates.
fn finalize(
    numbered: Vec<(usize, Event)>,
    embedded: Option<(SensorSize, u64, u64)>,
    opts: &ParseOptions,
) -> Result<EventStream> {
    let mut max_seen = 0u64;
    let mut sorted = true;
    for &(line, e) in &numbered {
        if e.t_us < max_seen {
            if max_seen - e.t_us > opts.reorder_tolerance_us {
                return Err(Error::Ordering {
                    line,
                    t_us: e.t_us,
                    max_seen_us: max_seen,
                    tolerance_us: opts.reorder_tolerance_us,
                });
            }
            sorted = false;
        }
        max_seen = max_seen.max(e.t_us);
    }
    let mut events: Vec<Event> = numbered.into_iter().map(|(_, e)| e).collect();
    if !sorted {
        events.sort_by_key(|e| e.t_us);
    }

    let sensor = match (opts.sensor, embedded) {
        (Some(s), Some((embedded, _, _))) if s != embedded => {
            return Err(Error::Validation(format!(
                "file sensor {}x{} differs from expected {}x{}",
                embedded.width, embedded.height, s.width, s.height
            )))
        }
        (Some(s), _) => s,
        (None, Some((s, _, _))) => s,
        (None, None) => SensorSize {
            width: events.iter().map(|e| e.x + 1).max().unwrap_or(0),
            height: events.iter().map(|e| e.y + 1).max().unwrap_or(0),
        },
    };
    let (t_begin, t_end) = match (opts.span_us, embedded) {
        (Some(span), _) => span,
        (None, Some((_, b, e))) => (b, e),
        (None, None) => match (events.first(), events.last()) {
            (Some(first), Some(last)) => (first.t_us, last.t_us + 1),
            _ => (0, 0),
        },
    };
    EventStream::new(events, sensor, t_begin, t_end)
}

pub fn write_csv<W: Write>(stream: &EventStream, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    writeln!(w, "{CSV_HEADER}")?;
    for e in stream.events() {
        writeln!(w, "{},{},{},{}", e.t_us, e.x, e.y, e.polarity.sign())?;
    }
    w.flush()?;
    Ok(())
}

/// Compact little-endian container: a 36-byte header (magic `EVFB`, version,
/// sensor width/height, reserved, t_begin, t_end, event count) followed by
/// 13-byte records `(t_us: u64, x: u16, y: u16, p: i8)`.
pub fn write_binary<W: Write>(stream: &EventStream, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&BINARY_VERSION.to_le_bytes())?;
    w.write_all(&stream.sensor.width.to_le_bytes())?;
    w.write_all(&stream.sensor.height.to_le_bytes())?;
    w.write_all(&0u16.to_le_bytes())?;
    w.write_all(&stream.t_begin.to_le_bytes())?;
    w.write_all(&stream.t_end.to_le_bytes())?;
    w.write_all(&(stream.events.len() as u64).to_le_bytes())?;
    for e in &stream.events {
        w.write_all(&e.t_us.to_le_bytes())?;
        w.write_all(&e.x.to_le_bytes())?;
        w.write_all(&e.y.to_le_bytes())?;
        w.write_all(&e.polarity.sign().to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_binary<R: Read>(mut reader: R, opts: &ParseOptions) -> Result<EventStream> {
    let mut header = [0u8; 36];
    reader.read_exact(&mut header).map_err(|_| Error::Parse {
        line: 0,
        msg: "truncated binary header".into(),
    })?;
    if &header[0..4] != BINARY_MAGIC {
        return Err(Error::Parse {
            line: 0,
            msg: "missing EVFB magic".into(),
        });
    }
    let u16_at = |o: usize| u16::from_le_bytes([header[o], header[o + 1]]);
    let u64_at = |o: usize| u64::from_le_bytes(header[o..o + 8].try_into().unwrap());
    let version = u16_at(4);
    if version != BINARY_VERSION {
        return Err(Error::Parse {
            line: 0,
            msg: format!("unsupported binary version {version}"),
        });
    }
    let sensor = SensorSize {
        width: u16_at(6),
        height: u16_at(8),
    };
    let (t_begin, t_end, count) = (u64_at(12), u64_at(20), u64_at(28));

    let mut numbered = Vec::with_capacity(count.min(1 << 24) as usize);
    let mut record = [0u8; BINARY_RECORD_LEN];
    for i in 0..count as usize {
        reader.read_exact(&mut record).map_err(|_| Error::Parse {
            line: i + 1,
            msg: format!("truncated record {} of {count}", i + 1),
        })?;
        let t_us = u64::from_le_bytes(record[0..8].try_into().unwrap());
        let x = u16::from_le_bytes([record[8], record[9]]);
        let y = u16::from_le_bytes([record[10], record[11]]);
        let p = record[12] as i8;
        let polarity = Polarity::from_sign(p).ok_or_else(|| {
            Error::Validation(format!("record {}: polarity {p} is not one of 0, 1, -1", i + 1))
        })?;
        numbered.push((i + 1, Event::new(t_us, x, y, polarity)));
    }
    let mut trailing = [0u8; 1];
    if reader.read(&mut trailing)? != 0 {
        return Err(Error::Parse {
            line: count as usize + 1,
            msg: "trailing bytes after the declared record count".into(),
        });
    }
    finalize(numbered, Some((sensor, t_begin, t_end)), opts)
}

pub fn crop_to_roi(stream: &EventStream, roi: &Roi) -> Result<EventStream> {
    roi.validate(stream.sensor)?;
    let events = stream
        .events
        .iter()
        .copied()
        .filter(|e| roi.contains(e.x, e.y))
        .collect();
    Ok(EventStream {
        events,
        sensor: stream.sensor,
        t_begin: stream.t_begin,
        t_end: stream.t_end,
    })
}

/// Half-open window bounds `[center - d/2, center - d/2 + d)` in microseconds.
pub fn window_bounds(center_us: u64, duration_us: u64) -> Result<(u64, u64)> {
    let lo = center_us.checked_sub(duration_us / 2).ok_or_else(|| {
        Error::OutOfRange(format!(
            "window of {duration_us} us centered at {center_us} us starts before t = 0"
        ))
    })?;
    Ok((lo, lo + duration_us))
}

/// Events with `center - d/2 <= t < center + d/2`; the result spans exactly the window.
pub fn slice_window(stream: &EventStream, center_us: u64, duration_s: f64) -> Result<EventStream> {
    let duration_us = seconds_to_us(duration_s)?;
    if duration_us == 0 {
        return Err(Error::Param("window duration must be positive".into()));
    }
    let (lo, hi) = window_bounds(center_us, duration_us)?;
    if lo < stream.t_begin || hi > stream.t_end {
        return Err(Error::OutOfRange(format!(
            "window [{lo}, {hi}) exceeds stream span [{}, {})",
            stream.t_begin, stream.t_end
        )));
    }
    let start = stream.events.partition_point(|e| e.t_us < lo);
    let end = stream.events.partition_point(|e| e.t_us < hi);
    Ok(EventStream {
        events: stream.events[start..end].to_vec(),
        sensor: stream.sensor,
        t_begin: lo,
        t_end: hi,
    })
}

/// Samples window centers every `stride_s` and labels each by whether its
/// center falls inside an annotated interval.
pub fn generate_labels(
    track: &AnnotationTrack,
    stream_span: (u64, u64),
    stride_s: f64,
    duration_s: f64,
) -> Result<Vec<LabeledWindow>> {
    let stride_us = seconds_to_us(stride_s)?;
    let duration_us = seconds_to_us(duration_s)?;
    if stride_us == 0 {
        return Err(Error::Param("stride must be positive".into()));
    }
    if duration_us == 0 {
        return Err(Error::Param("window duration must be positive".into()));
    }
    let (t_begin, t_end) = stream_span;
    let mut windows = Vec::new();
    let mut center = t_begin + duration_us / 2;
    loop {
        let (lo, hi) = window_bounds(center, duration_us)?;
        if hi > t_end || lo < t_begin {
            break;
        }
        windows.push(LabeledWindow {
            roi_id: track.roi_id.clone(),
            center_us: center,
            duration_s,
            label: Label::from_positive(track.contains(center)),
        });
        center += stride_us;
    }
    Ok(windows)
}
