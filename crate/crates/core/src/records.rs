//! Tracker output CSV: `frame,id,x,y,w,h,confidence,mode`, one header line,
//! 1-based frame numbers.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::tracker::{TrackMode, TrackRecord};

pub const HEADER: &str = "frame,id,x,y,w,h,confidence,mode";

/// One parsed output row. `frame` is 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputRecord {
    pub frame: usize,
    pub id: u64,
    pub bbox: BoundingBox,
    pub confidence: f64,
    pub mode: TrackMode,
}

impl From<&TrackRecord> for OutputRecord {
    fn from(r: &TrackRecord) -> Self {
        OutputRecord {
            frame: r.frame,
            id: r.state.id,
            bbox: r.state.bbox,
            confidence: r.state.confidence,
            mode: r.state.mode,
        }
    }
}

pub fn write_records<W: Write>(mut w: W, records: &[TrackRecord]) -> std::io::Result<()> {
    writeln!(w, "{HEADER}")?;
    for r in records {
        let b = r.state.bbox;
        writeln!(
            w,
            "{},{},{:.2},{:.2},{:.2},{:.2},{:.4},{}",
            r.frame + 1,
            r.state.id,
            b.x,
            b.y,
            b.w,
            b.h,
            r.state.confidence,
            r.state.mode
        )?;
    }
    Ok(())
}

pub fn format_records(records: &[TrackRecord]) -> String {
    let mut buf = Vec::new();
    write_records(&mut buf, records).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("records are ASCII")
}

pub fn parse_records_str(text: &str, path: &Path) -> Result<Vec<OutputRecord>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (n == 0 && line.starts_with("frame")) {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message,
        };
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 8 {
            return Err(err(format!("expected 8 fields, found {}", f.len())));
        }
        let num = |i: usize| f[i].parse::<f64>().map_err(|e| err(format!("field {}: {e}", i + 1)));
        let frame: usize = f[0].parse().map_err(|e| err(format!("frame: {e}")))?;
        if frame == 0 {
            return Err(err("frame numbers start at 1".into()));
        }
        let id: u64 = f[1].parse().map_err(|e| err(format!("id: {e}")))?;
        let bbox = BoundingBox::new(num(2)?, num(3)?, num(4)?, num(5)?);
        if !bbox.is_valid() {
            return Err(err(format!("invalid box {bbox:?}")));
        }
        let confidence = num(6)?;
        let mode = TrackMode::parse(f[7]).ok_or_else(|| err(format!("unknown mode {:?}", f[7])))?;
        out.push(OutputRecord {
            frame: frame - 1,
            id,
            bbox,
            confidence,
            mode,
        });
    }
    Ok(out)
}

pub fn read_records(path: &Path) -> Result<Vec<OutputRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_records_str(&text, path)
}
