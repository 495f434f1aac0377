//! Telemetry file formats.
//!
//! Text (v1): a version pragma, provenance comments, a header naming every
//! channel with its unit, then one comma-separated record per frame:
//!
//! ```text
//! # ycycle-telemetry v1
//! # driver=test_engineer session=0 force_train=false
//! t_s,bucket_dp_bar,velocity_mps,joystick_dir,drive_dp_bar,boom_dp_bar,label
//! 0,18.73,...,travel
//! ```
//!
//! Floats are written in shortest round-trip form, so write/read is
//! bit-exact. The binary variant (magic `YCTELB01`) carries the same logical
//! schema: provenance, a little-endian u64 frame count, then per frame six
//! little-endian f64 values and one label byte.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::pipeline::{Label, LabeledSeries, Provenance, TelemetryFrame, CHANNEL_NAMES};

pub const TEXT_MAGIC: &str = "# ycycle-telemetry v1";
pub const BINARY_MAGIC: &[u8; 8] = b"YCTELB01";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TelemetryFormat {
    Text,
    Binary,
}

impl TelemetryFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            TelemetryFormat::Text => "csv",
            TelemetryFormat::Binary => "ytb",
        }
    }
}

pub fn render_text(series: &LabeledSeries) -> String {
    let p = &series.provenance;
    let mut out = String::with_capacity(series.len() * 64);
    out.push_str(TEXT_MAGIC);
    out.push('\n');
    out.push_str(&format!(
        "# driver={} session={} force_train={}\n",
        p.driver, p.session, p.force_train
    ));
    out.push_str("t_s,");
    out.push_str(&CHANNEL_NAMES.join(","));
    out.push_str(",label\n");
    for (f, l) in series.frames.iter().zip(series.labels.iter()) {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            f.t, f.bucket_dp, f.velocity, f.joystick_dir, f.drive_dp, f.boom_dp,
            l.name()
        ));
    }
    out
}

pub fn parse_text(content: &str) -> Result<LabeledSeries> {
    let mut lines = content.lines();
    match lines.next() {
        Some(line) if line.trim() == TEXT_MAGIC => {}
        Some(line) => {
            return Err(Error::Format(format!(
                "unsupported telemetry header '{line}' (expected '{TEXT_MAGIC}')"
            )))
        }
        None => return Err(Error::Format("empty telemetry file".into())),
    }

    let mut provenance = Provenance::default();
    let mut frames = Vec::new();
    let mut labels = Vec::new();
    for line in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            for token in rest.split_whitespace() {
                if let Some((key, value)) = token.split_once('=') {
                    match key {
                        "driver" => provenance.driver = value.to_string(),
                        "session" => {
                            provenance.session = value
                                .parse()
                                .map_err(|_| Error::Format(format!("bad session '{value}'")))?
                        }
                        "force_train" => {
                            provenance.force_train = value
                                .parse()
                                .map_err(|_| Error::Format(format!("bad force_train '{value}'")))?
                        }
                        _ => {}
                    }
                }
            }
            continue;
        }
        if line.starts_with("t_s,") {
            continue; // column header
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::Format(format!(
                "expected 7 fields, got {}: '{line}'",
                fields.len()
            )));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Format(format!("bad number '{s}'")))
        };
        frames.push(TelemetryFrame {
            t: num(fields[0])?,
            bucket_dp: num(fields[1])?,
            velocity: num(fields[2])?,
            joystick_dir: num(fields[3])?,
            drive_dp: num(fields[4])?,
            boom_dp: num(fields[5])?,
        });
        labels.push(match fields[6] {
            "travel" => Label::Travel,
            "loading" => Label::Loading,
            "unloading" => Label::Unloading,
            other => return Err(Error::Format(format!("unknown label '{other}'"))),
        });
    }
    let series = LabeledSeries {
        frames,
        labels,
        provenance,
    };
    series.validate()?;
    Ok(series)
}

pub fn render_binary(series: &LabeledSeries) -> Vec<u8> {
    let p = &series.provenance;
    let mut out = Vec::with_capacity(series.len() * 49 + 64);
    out.extend_from_slice(BINARY_MAGIC);
    let driver = p.driver.as_bytes();
    out.extend_from_slice(&(driver.len() as u32).to_le_bytes());
    out.extend_from_slice(driver);
    out.extend_from_slice(&p.session.to_le_bytes());
    out.push(p.force_train as u8);
    out.extend_from_slice(&(series.len() as u64).to_le_bytes());
    for (f, l) in series.frames.iter().zip(series.labels.iter()) {
        for v in [f.t, f.bucket_dp, f.velocity, f.joystick_dir, f.drive_dp, f.boom_dp] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.push(l.index() as u8);
    }
    out
}

pub fn parse_binary(bytes: &[u8]) -> Result<LabeledSeries> {
    let mut cursor = 0usize;
    let take = |cursor: &mut usize, n: usize| -> Result<&[u8]> {
        if *cursor + n > bytes.len() {
            return Err(Error::Format("truncated binary telemetry".into()));
        }
        let slice = &bytes[*cursor..*cursor + n];
        *cursor += n;
        Ok(slice)
    };
    let magic = take(&mut cursor, 8)?;
    if magic != BINARY_MAGIC {
        return Err(Error::Format(
            "not a binary telemetry file (bad magic)".into(),
        ));
    }
    let mut u32buf = [0u8; 4];
    u32buf.copy_from_slice(take(&mut cursor, 4)?);
    let driver_len = u32::from_le_bytes(u32buf) as usize;
    let driver = String::from_utf8(take(&mut cursor, driver_len)?.to_vec())
        .map_err(|_| Error::Format("driver name is not utf-8".into()))?;
    u32buf.copy_from_slice(take(&mut cursor, 4)?);
    let session = u32::from_le_bytes(u32buf);
    let force_train = take(&mut cursor, 1)?[0] != 0;
    let mut u64buf = [0u8; 8];
    u64buf.copy_from_slice(take(&mut cursor, 8)?);
    let count = u64::from_le_bytes(u64buf) as usize;

    let mut frames = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    let mut f64buf = [0u8; 8];
    for _ in 0..count {
        let mut vals = [0.0f64; 6];
        for v in vals.iter_mut() {
            f64buf.copy_from_slice(take(&mut cursor, 8)?);
            *v = f64::from_le_bytes(f64buf);
        }
        let label = Label::from_index(take(&mut cursor, 1)?[0] as usize)?;
        frames.push(TelemetryFrame {
            t: vals[0],
            bucket_dp: vals[1],
            velocity: vals[2],
            joystick_dir: vals[3],
            drive_dp: vals[4],
            boom_dp: vals[5],
        });
        labels.push(label);
    }
    let series = LabeledSeries {
        frames,
        labels,
        provenance: Provenance {
            driver,
            session,
            force_train,
        },
    };
    series.validate()?;
    Ok(series)
}

pub fn write_series(path: &Path, series: &LabeledSeries, format: TelemetryFormat) -> Result<()> {
    let bytes = match format {
        TelemetryFormat::Text => render_text(series).into_bytes(),
        TelemetryFormat::Binary => render_binary(series),
    };
    fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Reads either format, sniffing by magic bytes.
pub fn read_series(path: &Path) -> Result<LabeledSeries> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    if bytes.starts_with(BINARY_MAGIC) {
        parse_binary(&bytes)
    } else {
        let content = String::from_utf8(bytes)
            .map_err(|_| Error::Format(format!("{} is neither text nor binary telemetry", path.display())))?;
        parse_text(&content)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_cycle, CycleGeometry, DriverProfile};

    fn sample_series() -> LabeledSeries {
        let profile = DriverProfile {
            name: "io_test".into(),
            aggressiveness: 0.4,
            proficiency: 0.9,
            base_cycle_duration_s: 28.0,
            duration_jitter: 0.1,
        };
        let mut s = generate_cycle(&profile, &CycleGeometry::default(), 1.0, 77).unwrap();
        s.provenance.session = 3;
        s.provenance.force_train = true;
        s
    }

    #[test]
    fn text_roundtrip_is_exact() {
        let series = sample_series();
        let rendered = render_text(&series);
        let parsed = parse_text(&rendered).unwrap();
        assert_eq!(parsed, series);
    }

    #[test]
    fn binary_roundtrip_is_exact() {
        let series = sample_series();
        let parsed = parse_binary(&render_binary(&series)).unwrap();
        assert_eq!(parsed, series);
    }

    #[test]
    fn version_mismatch_is_format_error() {
        assert!(matches!(
            parse_text("# ycycle-telemetry v9\n"),
            Err(Error::Format(_))
        ));
        assert!(matches!(parse_binary(b"NOTMAGIC"), Err(Error::Format(_))));
    }

    #[test]
    fn malformed_rows_rejected() {
        let bad = format!("{TEXT_MAGIC}\n1,2,3\n");
        assert!(matches!(parse_text(&bad), Err(Error::Format(_))));
    }
}
