//! File formats.
//!
//! * Timestamp files: little-endian binary. A 16-byte header (magic `PSTM`,
//!   format version `u16`, reserved `u16`, duration in ps `u64`) followed by
//!   `u64` arrival times in ps, non-decreasing.
//! * Timestamp CSV: `# duration_ps=<u64>` header line, then a `t_ps` column.
//! * Histogram CSV: `# key=value` metadata lines, then columns
//!   `tau_ns,counts,g2,sigma`.
//! * Series CSV: optional `# key=value` lines, then columns `x,y,sigma`.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! format reads back bit-identical values.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::correlator::{CorrelationError, CorrelationHistogram, HistogramMeta, Stage};
use crate::fit::{FitError, Spectrum};
use crate::sim::{SeriesPoint, StreamError, TimestampStream};

pub const MAGIC: [u8; 4] = *b"PSTM";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a timestamp file (magic {0:?})")]
    BadMagic([u8; 4]),
    #[error("unsupported timestamp format version {0}")]
    UnsupportedVersion(u16),
    #[error("file truncated: header shorter than {HEADER_LEN} bytes")]
    TruncatedHeader,
    #[error("file truncated inside record {0}")]
    TruncatedRecord(usize),
    #[error("record {index}: {source}")]
    Record { index: usize, source: StreamError },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("missing header field `{0}`")]
    MissingField(&'static str),
    #[error(transparent)]
    Histogram(#[from] CorrelationError),
    #[error(transparent)]
    Spectrum(#[from] FitError),
}

fn stream_error(e: StreamError) -> FormatError {
    let index = match &e {
        StreamError::Unsorted { index, .. } | StreamError::OutOfRange { index, .. } => *index,
        StreamError::InvalidParameter { .. } => 0,
    };
    FormatError::Record { index, source: e }
}

pub fn write_timestamps<W: Write>(mut w: W, stream: &TimestampStream) -> io::Result<()> {
    let mut header = [0u8; HEADER_LEN];
    header[..4].copy_from_slice(&MAGIC);
    header[4..6].copy_from_slice(&FORMAT_VERSION.to_le_bytes());
    header[8..16].copy_from_slice(&stream.duration_ps().to_le_bytes());
    w.write_all(&header)?;
    let mut buf = Vec::with_capacity(8 * stream.len().min(1 << 16));
    for chunk in stream.timestamps().chunks(1 << 16) {
        buf.clear();
        chunk.iter().for_each(|t| buf.extend_from_slice(&t.to_le_bytes()));
        w.write_all(&buf)?;
    }
    w.flush()
}

pub fn read_timestamps<R: Read>(mut r: R, channel: &str) -> Result<TimestampStream, FormatError> {
    let mut header = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        match r.read(&mut header[got..])? {
            0 => return Err(FormatError::TruncatedHeader),
            n => got += n,
        }
    }
    let magic: [u8; 4] = header[..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(FormatError::BadMagic(magic));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let duration_ps = u64::from_le_bytes(header[8..16].try_into().unwrap());
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    if body.len() % 8 != 0 {
        return Err(FormatError::TruncatedRecord(body.len() / 8));
    }
    let timestamps = body.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect();
    TimestampStream::new(timestamps, duration_ps, channel).map_err(stream_error)
}

pub fn save_timestamps(path: &Path, stream: &TimestampStream) -> io::Result<()> {
    write_timestamps(BufWriter::new(File::create(path)?), stream)
}

/// Loads a timestamp file; the channel label is the file stem.
pub fn load_timestamps(path: &Path) -> Result<TimestampStream, FormatError> {
    let channel = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    read_timestamps(BufReader::new(File::open(path)?), &channel)
}

pub fn write_timestamps_csv<W: Write>(mut w: W, stream: &TimestampStream) -> io::Result<()> {
    writeln!(w, "# duration_ps={}", stream.duration_ps())?;
    writeln!(w, "t_ps")?;
    for t in stream.timestamps() {
        writeln!(w, "{t}")?;
    }
    w.flush()
}

pub fn read_timestamps_csv<R: BufRead>(r: R, channel: &str) -> Result<TimestampStream, FormatError> {
    let table = read_table(r)?;
    let duration_ps = table
        .meta
        .get("duration_ps")
        .ok_or(FormatError::MissingField("duration_ps"))?
        .parse::<u64>()
        .map_err(|e| FormatError::Parse { line: 1, message: format!("duration_ps: {e}") })?;
    table.expect_columns(&["t_ps"])?;
    let mut timestamps = Vec::with_capacity(table.rows.len());
    for (line, row) in &table.rows {
        let t = row[0].parse::<u64>().map_err(|e| FormatError::Parse { line: *line, message: e.to_string() })?;
        timestamps.push(t);
    }
    TimestampStream::new(timestamps, duration_ps, channel).map_err(stream_error)
}

/// Comment metadata, a header row and data rows tagged with line numbers.
struct Table {
    meta: BTreeMap<String, String>,
    header: Vec<String>,
    header_line: usize,
    rows: Vec<(usize, Vec<String>)>,
}

impl Table {
    fn expect_columns(&self, names: &[&str]) -> Result<(), FormatError> {
        if self.header.len() < names.len() || self.header.iter().zip(names).any(|(a, b)| a != b) {
            return Err(FormatError::Parse {
                line: self.header_line,
                message: format!("expected columns {}, found {}", names.join(","), self.header.join(",")),
            });
        }
        Ok(())
    }

    fn meta_f64(&self, key: &'static str) -> Result<Option<f64>, FormatError> {
        self.meta
            .get(key)
            .map(|v| v.parse::<f64>().map_err(|e| FormatError::Parse { line: 0, message: format!("{key}: {e}") }))
            .transpose()
    }
}

fn read_table<R: BufRead>(r: R) -> Result<Table, FormatError> {
    let mut table = Table { meta: BTreeMap::new(), header: Vec::new(), header_line: 0, rows: Vec::new() };
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let number = i + 1;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if let Some(comment) = text.strip_prefix('#') {
            if let Some((k, v)) = comment.split_once('=') {
                table.meta.insert(k.trim().to_string(), v.trim().to_string());
            }
            continue;
        }
        let fields: Vec<String> = text.split(',').map(|f| f.trim().to_string()).collect();
        if table.header.is_empty() {
            table.header = fields;
            table.header_line = number;
        } else if fields.len() != table.header.len() {
            return Err(FormatError::Parse {
                line: number,
                message: format!("{} fields, header has {}", fields.len(), table.header.len()),
            });
        } else {
            table.rows.push((number, fields));
        }
    }
    if table.header.is_empty() {
        return Err(FormatError::Parse { line: 0, message: "no header row".into() });
    }
    Ok(table)
}

fn parse_f64(line: usize, column: &str, text: &str) -> Result<f64, FormatError> {
    text.parse::<f64>().map_err(|e| FormatError::Parse { line, message: format!("{column}: {e}") })
}

pub const HISTOGRAM_COLUMNS: [&str; 4] = ["tau_ns", "counts", "g2", "sigma"];

pub fn write_histogram<W: Write>(mut w: W, h: &CorrelationHistogram) -> io::Result<()> {
    let m = h.meta();
    let mut head = String::new();
    let _ = writeln!(head, "# stage={}", h.stage().as_str());
    let _ = writeln!(head, "# n1={}", m.n1);
    let _ = writeln!(head, "# n2={}", m.n2);
    let _ = writeln!(head, "# duration_s={}", m.duration);
    let _ = writeln!(head, "# bin_width_ns={}", m.bin_width);
    if let Some(rho) = m.rho {
        let _ = writeln!(head, "# rho={rho}");
    }
    let _ = writeln!(head, "# scale={}", m.scale);
    let _ = writeln!(head, "{}", HISTOGRAM_COLUMNS.join(","));
    w.write_all(head.as_bytes())?;
    let sigma = h.sigma();
    for (((tau, n), g), s) in h.bin_centers().iter().zip(h.counts()).zip(h.values()).zip(&sigma) {
        writeln!(w, "{tau},{n},{g},{s}")?;
    }
    w.flush()
}

/// Reads a histogram; the `sigma` column is recomputed from counts and
/// metadata rather than trusted.
pub fn read_histogram<R: BufRead>(r: R) -> Result<CorrelationHistogram, FormatError> {
    let table = read_table(r)?;
    table.expect_columns(&HISTOGRAM_COLUMNS)?;
    let stage_text = table.meta.get("stage").ok_or(FormatError::MissingField("stage"))?;
    let stage = Stage::parse(stage_text)
        .ok_or_else(|| FormatError::Parse { line: 0, message: format!("unknown stage `{stage_text}`") })?;
    let req = |key: &'static str| table.meta_f64(key)?.ok_or(FormatError::MissingField(key));
    let meta = HistogramMeta {
        n1: req("n1")?,
        n2: req("n2")?,
        duration: req("duration_s")?,
        bin_width: req("bin_width_ns")?,
        rho: table.meta_f64("rho")?,
        scale: req("scale")?,
    };
    let n = table.rows.len();
    let (mut centers, mut counts, mut values) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for (line, row) in &table.rows {
        centers.push(parse_f64(*line, "tau_ns", &row[0])?);
        counts.push(
            row[1].parse::<u64>().map_err(|e| FormatError::Parse { line: *line, message: format!("counts: {e}") })?,
        );
        values.push(parse_f64(*line, "g2", &row[2])?);
    }
    Ok(CorrelationHistogram::from_parts(centers, counts, values, stage, meta)?)
}

pub fn save_histogram(path: &Path, h: &CorrelationHistogram) -> io::Result<()> {
    write_histogram(BufWriter::new(File::create(path)?), h)
}

pub fn load_histogram(path: &Path) -> Result<CorrelationHistogram, FormatError> {
    read_histogram(BufReader::new(File::open(path)?))
}

pub const SERIES_COLUMNS: [&str; 3] = ["x", "y", "sigma"];

/// Writes a series; `meta` entries become `# key=value` lines.
pub fn write_series<W: Write>(mut w: W, points: &[SeriesPoint], meta: &[(&str, String)]) -> io::Result<()> {
    for (k, v) in meta {
        writeln!(w, "# {k}={v}")?;
    }
    writeln!(w, "{}", SERIES_COLUMNS.join(","))?;
    for p in points {
        writeln!(w, "{},{},{}", p.x, p.y, p.sigma)?;
    }
    w.flush()
}

/// Series points plus the file's metadata.
pub fn read_series<R: BufRead>(r: R) -> Result<(Vec<SeriesPoint>, BTreeMap<String, String>), FormatError> {
    let table = read_table(r)?;
    table.expect_columns(&SERIES_COLUMNS)?;
    let mut points = Vec::with_capacity(table.rows.len());
    for (line, row) in &table.rows {
        let p = SeriesPoint {
            x: parse_f64(*line, "x", &row[0])?,
            y: parse_f64(*line, "y", &row[1])?,
            sigma: parse_f64(*line, "sigma", &row[2])?,
        };
        if !(p.sigma > 0.0) {
            return Err(FormatError::Parse { line: *line, message: format!("sigma must be > 0, got {}", p.sigma) });
        }
        points.push(p);
    }
    Ok((points, table.meta))
}

pub fn save_series(path: &Path, points: &[SeriesPoint], meta: &[(&str, String)]) -> io::Result<()> {
    write_series(BufWriter::new(File::create(path)?), points, meta)
}

pub fn load_series(path: &Path) -> Result<(Vec<SeriesPoint>, BTreeMap<String, String>), FormatError> {
    read_series(BufReader::new(File::open(path)?))
}

/// Spectra are stored as series (x = wavelength in nm). A `# baseline=`
/// line sets the nominal baseline; otherwise it is estimated.
pub fn write_spectrum<W: Write>(w: W, s: &Spectrum) -> io::Result<()> {
    let points: Vec<SeriesPoint> = (0..s.len())
        .map(|i| SeriesPoint {
            x: s.wavelengths()[i],
            y: s.intensities()[i],
            sigma: s.sigma().map_or(1.0, |sig| sig[i]),
        })
        .collect();
    write_series(w, &points, &[("baseline", s.baseline.to_string())])
}

pub fn read_spectrum<R: BufRead>(r: R) -> Result<Spectrum, FormatError> {
    let (points, meta) = read_series(r)?;
    let wl = points.iter().map(|p| p.x).collect();
    let y = points.iter().map(|p| p.y).collect();
    let sigma = Some(points.iter().map(|p| p.sigma).collect());
    let spectrum = match meta.get("baseline") {
        Some(b) => Spectrum::new(wl, y, sigma, parse_f64(0, "baseline", b)?)?,
        None => Spectrum::with_estimated_baseline(wl, y, sigma)?,
    };
    Ok(spectrum)
}

pub fn save_spectrum(path: &Path, s: &Spectrum) -> io::Result<()> {
    write_spectrum(BufWriter::new(File::create(path)?), s)
}

pub fn load_spectrum(path: &Path) -> Result<Spectrum, FormatError> {
    read_spectrum(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlator::{cross_correlate, normalize, CorrelationConfig};

    fn stream() -> TimestampStream {
        TimestampStream::new(vec![0, 5, 5, 1_000, 99_999], 100_000, "A").unwrap()
    }

    #[test]
    fn binary_round_trip_and_layout() {
        let mut buf = Vec::new();
        write_timestamps(&mut buf, &stream()).unwrap();
        assert_eq!(buf.len(), HEADER_LEN + 5 * 8);
        assert_eq!(&buf[..4], b"PSTM");
        assert_eq!(&buf[4..8], &[1, 0, 0, 0]);
        assert_eq!(u64::from_le_bytes(buf[8..16].try_into().unwrap()), 100_000);
        assert_eq!(read_timestamps(&buf[..], "A").unwrap(), stream());
    }

    #[test]
    fn binary_errors_name_the_record() {
        let mut buf = Vec::new();
        write_timestamps(&mut buf, &stream()).unwrap();
        let mut bad = buf.clone();
        bad[HEADER_LEN + 2 * 8..HEADER_LEN + 3 * 8].copy_from_slice(&1u64.to_le_bytes());
        assert!(matches!(read_timestamps(&bad[..], "A"), Err(FormatError::Record { index: 2, .. })));
        assert!(matches!(read_timestamps(&buf[..buf.len() - 3], "A"), Err(FormatError::TruncatedRecord(4))));
        assert!(matches!(read_timestamps(&buf[..10], "A"), Err(FormatError::TruncatedHeader)));
        let mut magic = buf.clone();
        magic[0] = b'X';
        assert!(matches!(read_timestamps(&magic[..], "A"), Err(FormatError::BadMagic(_))));
    }

    #[test]
    fn csv_timestamps_round_trip() {
        let mut buf = Vec::new();
        write_timestamps_csv(&mut buf, &stream()).unwrap();
        assert_eq!(read_timestamps_csv(&buf[..], "A").unwrap(), stream());
        let bad = b"# duration_ps=10\nt_ps\n3\n2\n";
        assert!(matches!(read_timestamps_csv(&bad[..], "A"), Err(FormatError::Record { index: 1, .. })));
    }

    #[test]
    fn histogram_round_trip() {
        let a = TimestampStream::new((0..200).map(|i| i * 977).collect(), 200_000, "A").unwrap();
        let b = TimestampStream::new((0..190).map(|i| i * 1013 + 7).collect(), 200_000, "B").unwrap();
        let raw = cross_correlate(&a, &b, &CorrelationConfig::new(0.1, 5.0).unwrap()).unwrap();
        let h = crate::correlator::background_correct(&normalize(&raw).unwrap(), 0.7).unwrap();
        let mut buf = Vec::new();
        write_histogram(&mut buf, &h).unwrap();
        assert_eq!(read_histogram(&buf[..]).unwrap(), h);
    }

    #[test]
    fn series_round_trip_with_meta() {
        let pts = vec![SeriesPoint { x: 0.1, y: 1.0 / 3.0, sigma: 1e-7 }, SeriesPoint { x: 2.0, y: -0.0, sigma: 3.5 }];
        let mut buf = Vec::new();
        write_series(&mut buf, &pts, &[("kind", "saturation".into())]).unwrap();
        let (back, meta) = read_series(&buf[..]).unwrap();
        assert_eq!(back, pts);
        assert_eq!(meta["kind"], "saturation");
        let bad = b"x,y,sigma\n1,2,3\n1,2\n";
        assert!(matches!(read_series(&bad[..]), Err(FormatError::Parse { line: 3, .. })));
    }
}
