//! Timestamp files by extension: `.csv` is the text format, anything else binary.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use photonstat::io;
use photonstat::sim::TimestampStream;

use crate::error::{Failure, Result};

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn channel_label(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn load_stream(path: &Path) -> Result<TimestampStream> {
    if is_csv(path) {
        let file = File::open(path).map_err(|e| Failure::io(path, e))?;
        io::read_timestamps_csv(BufReader::new(file), &channel_label(path)).map_err(|e| Failure::format(path, e))
    } else {
        io::load_timestamps(path).map_err(|e| Failure::format(path, e))
    }
}

pub fn save_stream(path: &Path, stream: &TimestampStream) -> Result<()> {
    let result = if is_csv(path) {
        File::create(path).and_then(|f| io::write_timestamps_csv(BufWriter::new(f), stream))
    } else {
        io::save_timestamps(path, stream)
    };
    result.map_err(|e| Failure::io(path, e))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Failure::io(path, e))
}
