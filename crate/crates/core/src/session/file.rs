//! Line-delimited session files: a header line followed by one telemetry
//! record per line, all JSON.

use std::io::{BufRead, Write};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::TelemetryRecord;
use crate::error::{Error, Result};
use crate::scenario::Scenario;

pub const FORMAT_VERSION: &str = "pamon/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionHeader {
    pub format: String,
    pub session_id: String,
    pub seed: u64,
    pub scenario: Scenario,
}

/// Writes the header immediately and one line per record afterwards.
pub struct SessionRecorder<W: Write> {
    out: W,
}

impl<W: Write> SessionRecorder<W> {
    pub fn new(mut out: W, header: &SessionHeader) -> Result<Self> {
        writeln!(out, "{}", to_json(header)?)?;
        Ok(Self { out })
    }

    pub fn record(&mut self, rec: &TelemetryRecord) -> Result<()> {
        writeln!(self.out, "{}", to_json(rec)?)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string(v).map_err(|e| Error::invalid(e.to_string()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionFile {
    pub header: SessionHeader,
    pub records: Vec<TelemetryRecord>,
    /// Record lines exactly as stored, without the trailing newline.
    pub lines: Vec<String>,
}

impl SessionFile {
    pub fn new(header: SessionHeader, records: Vec<TelemetryRecord>) -> Result<Self> {
        let lines = records.iter().map(to_json).collect::<Result<_>>()?;
        Ok(Self {
            header,
            records,
            lines,
        })
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", to_json(&self.header)?)?;
        for l in &self.lines {
            writeln!(out, "{l}")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut v = Vec::new();
        self.write_to(&mut v)?;
        Ok(v)
    }

    /// Record lines paired with the delay to wait before emitting each one at
    /// `speed`× the original session-clock pacing. An infinite speed yields
    /// zero delays.
    pub fn replay(&self, speed: f64) -> Result<impl Iterator<Item = (Duration, &str)> + '_> {
        if !(speed > 0.0) {
            return Err(Error::invalid(format!("replay speed must be positive, got {speed}")));
        }
        let mut prev: Option<f64> = None;
        Ok(self.records.iter().zip(&self.lines).map(move |(r, line)| {
            let gap = prev.map_or(0.0, |p| (r.session_time - p).max(0.0));
            prev = Some(r.session_time);
            let delay = if speed.is_infinite() { 0.0 } else { gap / speed };
            (Duration::from_secs_f64(delay), line.as_str())
        }))
    }

    /// Session-clock span covered by the records, s.
    pub fn span(&self) -> f64 {
        match (self.records.first(), self.records.last()) {
            (Some(a), Some(b)) => b.session_time - a.session_time,
            _ => 0.0,
        }
    }
}

/// Parses a session file. Errors carry the 1-based line number and, for
/// record lines, the last line that parsed.
pub fn read_session<R: BufRead>(reader: R) -> Result<SessionFile> {
    let mut header: Option<SessionHeader> = None;
    let mut records = Vec::new();
    let mut lines = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if header.is_none() {
            let h: SessionHeader = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: lineno,
                message: format!("bad header: {e}"),
            })?;
            if h.format != FORMAT_VERSION {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("unsupported format {:?}, expected {FORMAT_VERSION:?}", h.format),
                });
            }
            header = Some(h);
            continue;
        }
        let rec: TelemetryRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            message: format!("bad record ({e}); last valid line is {}", lineno - 1),
        })?;
        records.push(rec);
        lines.push(line);
    }
    let header = header.ok_or(Error::Parse {
        line: 1,
        message: "missing header line".into(),
    })?;
    Ok(SessionFile {
        header,
        records,
        lines,
    })
}
