//! Time-tag files and CSV exports.
//!
//! Binary tag files ("PTAG") start with a 16-byte header: the magic `PTAG`,
//! a little-endian `u16` format version and ten reserved zero bytes. Records
//! follow, 16 bytes each: channel `u8`, three zero bytes, `time_ps` as
//! little-endian `u64` and a reserved zero `u32`. Records are sorted by time.
//!
//! The CSV alternative has one `channel,time_ps` row per tag, optionally
//! preceded by that header line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use photonlab_core::correlator::CorrelationHistogram;
use photonlab_core::TimeTag;

use crate::report::Series;
use crate::{Error, Result};

pub const MAGIC: [u8; 4] = *b"PTAG";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 16;
pub const RECORD_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TagFormat {
    Binary,
    Csv,
}

impl TagFormat {
    /// CSV for a `.csv` extension, binary otherwise.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => TagFormat::Csv,
            _ => TagFormat::Binary,
        }
    }
}

/// Merge per-channel streams into one time-ordered stream. Ties keep the lower
/// channel first.
pub fn interleave(channels: &[&[TimeTag]]) -> Vec<TimeTag> {
    let mut all: Vec<TimeTag> = channels.iter().flat_map(|c| c.iter().copied()).collect();
    all.sort_by_key(|t| (t.time_ps, t.channel));
    all
}

/// Split a stream by channel; index `i` holds channel `i`.
pub fn split_channels(tags: &[TimeTag]) -> Vec<Vec<TimeTag>> {
    let n = tags.iter().map(|t| t.channel as usize + 1).max().unwrap_or(0);
    let mut out = vec![Vec::new(); n];
    for t in tags {
        out[t.channel as usize].push(*t);
    }
    out
}

pub fn write_tags_binary<W: Write>(mut w: W, tags: &[TimeTag]) -> std::io::Result<()> {
    let mut header = [0u8; HEADER_LEN];
    header[..4].copy_from_slice(&MAGIC);
    header[4..6].copy_from_slice(&FORMAT_VERSION.to_le_bytes());
    w.write_all(&header)?;
    let mut rec = [0u8; RECORD_LEN];
    for t in tags {
        rec[0] = t.channel;
        rec[4..12].copy_from_slice(&t.time_ps.to_le_bytes());
        w.write_all(&rec)?;
    }
    w.flush()
}

/// Read a binary tag stream. `name` labels errors, which carry the byte offset
/// of the offending header field or record.
pub fn read_tags_binary<R: Read>(mut r: R, name: &str) -> Result<Vec<TimeTag>> {
    let bad = |offset: u64, message: String| Error::TagFormat { path: name.into(), offset, message };
    let mut header = [0u8; HEADER_LEN];
    let got = read_full(&mut r, &mut header).map_err(|e| Error::io(name, e))?;
    if got < HEADER_LEN {
        return Err(bad(got as u64, format!("truncated header: {got} of {HEADER_LEN} bytes")));
    }
    if header[..4] != MAGIC {
        return Err(bad(0, "missing PTAG magic".into()));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != FORMAT_VERSION {
        return Err(bad(4, format!("unsupported format version {version}")));
    }
    if let Some(i) = header[6..].iter().position(|&b| b != 0) {
        return Err(bad(6 + i as u64, "reserved header byte is not zero".into()));
    }

    let mut tags = Vec::new();
    let mut r = BufReader::new(r);
    let mut rec = [0u8; RECORD_LEN];
    let mut offset = HEADER_LEN as u64;
    let mut last = 0u64;
    loop {
        let got = read_full(&mut r, &mut rec).map_err(|e| Error::io(name, e))?;
        if got == 0 {
            break;
        }
        if got < RECORD_LEN {
            return Err(bad(offset, format!("truncated record: {got} of {RECORD_LEN} bytes")));
        }
        if let Some(i) = rec[1..4].iter().position(|&b| b != 0) {
            return Err(bad(offset + 1 + i as u64, "padding byte is not zero".into()));
        }
        if let Some(i) = rec[12..].iter().position(|&b| b != 0) {
            return Err(bad(offset + 12 + i as u64, "reserved record byte is not zero".into()));
        }
        let time_ps = u64::from_le_bytes(rec[4..12].try_into().expect("eight bytes"));
        if time_ps > TimeTag::MAX_TIME_PS {
            return Err(bad(offset + 4, format!("time {time_ps} ps out of range")));
        }
        if time_ps < last {
            return Err(bad(offset + 4, format!("time {time_ps} ps precedes the previous record ({last} ps)")));
        }
        last = time_ps;
        tags.push(TimeTag::new(rec[0], time_ps));
        offset += RECORD_LEN as u64;
    }
    Ok(tags)
}

fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut n = 0;
    while n < buf.len() {
        match r.read(&mut buf[n..]) {
            Ok(0) => break,
            Ok(k) => n += k,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(n)
}

pub fn write_tags_csv<W: Write>(mut w: W, tags: &[TimeTag]) -> std::io::Result<()> {
    writeln!(w, "channel,time_ps")?;
    for t in tags {
        writeln!(w, "{},{}", t.channel, t.time_ps)?;
    }
    w.flush()
}

/// Read `channel,time_ps` rows. Errors carry the byte offset of the bad line.
pub fn read_tags_csv<R: Read>(r: R, name: &str) -> Result<Vec<TimeTag>> {
    let mut r = BufReader::new(r);
    let mut tags = Vec::new();
    let mut line = String::new();
    let mut offset = 0u64;
    let mut last = 0u64;
    let mut first = true;
    loop {
        line.clear();
        let n = r.read_line(&mut line).map_err(|e| Error::io(name, e))?;
        if n == 0 {
            break;
        }
        let start = offset;
        offset += n as u64;
        let row = line.trim();
        if row.is_empty() || row.starts_with('#') {
            continue;
        }
        if std::mem::take(&mut first) && row.eq_ignore_ascii_case("channel,time_ps") {
            continue;
        }
        let bad = |message: String| Error::TagFormat { path: name.into(), offset: start, message };
        let (ch, t) = row.split_once(',').ok_or_else(|| bad(format!("expected `channel,time_ps`, got `{row}`")))?;
        let channel: u8 = ch.trim().parse().map_err(|_| bad(format!("bad channel `{}`", ch.trim())))?;
        let time_ps: u64 = t.trim().parse().map_err(|_| bad(format!("bad time `{}`", t.trim())))?;
        if time_ps > TimeTag::MAX_TIME_PS {
            return Err(bad(format!("time {time_ps} ps out of range")));
        }
        if time_ps < last {
            return Err(bad(format!("time {time_ps} ps precedes the previous row ({last} ps)")));
        }
        last = time_ps;
        tags.push(TimeTag::new(channel, time_ps));
    }
    Ok(tags)
}

/// Write a tag file, choosing the format from the extension.
pub fn save_tags(path: &Path, tags: &[TimeTag]) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let w = BufWriter::new(f);
    match TagFormat::from_path(path) {
        TagFormat::Binary => write_tags_binary(w, tags),
        TagFormat::Csv => write_tags_csv(w, tags),
    }
    .map_err(|e| Error::io(path, e))
}

/// Read a tag file, choosing the format from the extension.
pub fn load_tags(path: &Path) -> Result<Vec<TimeTag>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    match TagFormat::from_path(path) {
        TagFormat::Binary => read_tags_binary(f, &name),
        TagFormat::Csv => read_tags_csv(f, &name),
    }
}

/// `bin_center_ps,counts` rows of a correlation histogram.
pub fn write_histogram_csv<W: Write>(mut w: W, h: &CorrelationHistogram) -> std::io::Result<()> {
    writeln!(w, "bin_center_ps,counts")?;
    for (i, c) in h.counts.iter().enumerate() {
        writeln!(w, "{},{}", h.bin_center_ps(i), c)?;
    }
    w.flush()
}

/// Data and model columns of a plotted series. The model, sampled on its own
/// grid, follows the data as `model_x,model_y` rows after a blank line.
pub fn write_series_csv<W: Write>(mut w: W, s: &Series) -> std::io::Result<()> {
    writeln!(w, "{},{}", csv_label(&s.x_label), csv_label(&s.y_label))?;
    for (x, y) in &s.points {
        writeln!(w, "{x},{y}")?;
    }
    if !s.model.is_empty() {
        writeln!(w)?;
        writeln!(w, "model_x,model_y")?;
        for (x, y) in &s.model {
            writeln!(w, "{x},{y}")?;
        }
    }
    w.flush()
}

fn csv_label(s: &str) -> String {
    if s.contains([',', '"']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
