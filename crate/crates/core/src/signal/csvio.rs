//! Plain-text session interchange: one CSV file per recording session.
//!
//! Schema: header `t,<channel names...>,label`, one row per sample with the
//! timestamp in seconds, channel values as decimal floats, and an integer
//! label. Files are named `<user>_<session>.csv`; the sample rate is
//! inferred from the timestamp column.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::signal::session::{ChannelSpec, SessionRecording};

/// Conventional file name for a session.
pub fn session_file_name(user_id: &str, session_id: &str) -> String {
    format!("{user_id}_{session_id}.csv")
}

/// Splits `<user>_<session>` at the first underscore (user ids therefore
/// may not contain one).
pub fn parse_session_file_name(name: &str) -> Result<(String, String)> {
    let stem = name
        .strip_suffix(".csv")
        .ok_or_else(|| Error::Format(format!("'{name}' is not a .csv file")))?;
    let (user, session) = stem.split_once('_').ok_or_else(|| {
        Error::Format(format!(
            "'{name}' does not match the <user>_<session>.csv convention"
        ))
    })?;
    if user.is_empty() || session.is_empty() {
        return Err(Error::Format(format!(
            "'{name}' has an empty user or session id"
        )));
    }
    Ok((user.to_string(), session.to_string()))
}

pub fn write_session_csv<W: Write>(w: W, session: &SessionRecording) -> Result<()> {
    let mut w = BufWriter::new(w);
    let names: Vec<&str> = session.channels.iter().map(|c| c.name.as_str()).collect();
    writeln!(w, "t,{},label", names.join(","))?;
    let c = session.n_channels();
    for t in 0..session.n_samples() {
        write!(w, "{:.6}", t as f64 / session.sample_rate_hz)?;
        for ci in 0..c {
            write!(w, ",{:.6}", session.samples[t * c + ci])?;
        }
        writeln!(w, ",{}", session.labels[t])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a session to `<dir>/<user>_<session>.csv` and returns the path.
pub fn write_session_file(dir: &Path, session: &SessionRecording) -> Result<std::path::PathBuf> {
    let path = dir.join(session_file_name(&session.user_id, &session.session_id));
    let file = std::fs::File::create(&path)?;
    write_session_csv(file, session)?;
    Ok(path)
}

/// Reads a session; user and session ids come from the caller (usually the
/// file name). The sample rate is recovered from the timestamp column and
/// rounded to 3 decimals to absorb the 6-decimal text formatting.
pub fn read_session_csv<R: Read>(
    r: R,
    user_id: &str,
    session_id: &str,
) -> Result<SessionRecording> {
    let mut lines = BufReader::new(r).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty CSV: missing header".into()))??;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 3 || cols[0] != "t" || cols[cols.len() - 1] != "label" {
        return Err(Error::Format(format!(
            "header must be `t,<channels...>,label`, got '{header}'"
        )));
    }
    let channels: Vec<ChannelSpec> = cols[1..cols.len() - 1]
        .iter()
        .map(|n| ChannelSpec::from_name(n))
        .collect::<Result<_>>()?;
    let c = channels.len();

    let mut times = Vec::new();
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    for (row, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != c + 2 {
            return Err(Error::Format(format!(
                "row {}: expected {} fields, got {}",
                row + 2,
                c + 2,
                fields.len()
            )));
        }
        let parse_f = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| {
                Error::Format(format!("row {}: bad {what} value '{s}'", row + 2))
            })
        };
        times.push(parse_f(fields[0], "timestamp")?);
        for f in &fields[1..=c] {
            samples.push(parse_f(f, "channel")?);
        }
        let label: usize = fields[c + 1].parse().map_err(|_| {
            Error::Format(format!(
                "row {}: bad label '{}' (expected a non-negative integer)",
                row + 2,
                fields[c + 1]
            ))
        })?;
        labels.push(label);
    }
    if times.len() < 2 {
        return Err(Error::Format(
            "session needs at least 2 samples to infer a sample rate".into(),
        ));
    }
    let span = times[times.len() - 1] - times[0];
    if span <= 0.0 {
        return Err(Error::Format(
            "timestamps must be strictly increasing".into(),
        ));
    }
    let fs = ((times.len() - 1) as f64 / span * 1000.0).round() / 1000.0;
    Ok(SessionRecording {
        user_id: user_id.to_string(),
        session_id: session_id.to_string(),
        sample_rate_hz: fs,
        channels,
        samples,
        labels,
    })
}

/// Reads a session file, taking ids from the file name.
pub fn read_session_file(path: &Path) -> Result<SessionRecording> {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::Format(format!("unreadable file name: {}", path.display())))?;
    let (user, session) = parse_session_file_name(name)?;
    let file = std::fs::File::open(path)?;
    read_session_csv(file, &user, &session)
}

/// Lists `*.csv` session files in a directory, sorted by name for
/// deterministic ingest order.
pub fn list_session_files(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "csv") {
            out.push(path);
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no .csv session files found in {}",
            dir.display()
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::session::factory_channels;

    fn sample_session(fs: f64, n: usize) -> SessionRecording {
        let channels = factory_channels();
        let c = channels.len();
        SessionRecording {
            user_id: "u3".into(),
            session_id: "s1".into(),
            sample_rate_hz: fs,
            channels,
            samples: (0..n * c).map(|i| (i as f64).sin()).collect(),
            labels: (0..n).map(|i| i % 4).collect(),
        }
    }

    #[test]
    fn round_trip_preserves_everything_at_six_decimals() {
        let s = sample_session(30.0, 40);
        let mut buf = Vec::new();
        write_session_csv(&mut buf, &s).unwrap();
        let back = read_session_csv(buf.as_slice(), "u3", "s1").unwrap();
        assert_eq!(back.sample_rate_hz, 30.0);
        assert_eq!(back.n_samples(), 40);
        assert_eq!(back.labels, s.labels);
        assert_eq!(back.channels.len(), 20);
        for (a, b) in back.samples.iter().zip(&s.samples) {
            assert!((a - b).abs() < 5e-7, "{a} vs {b}");
        }
    }

    #[test]
    fn rate_inference_survives_text_truncation() {
        // 50 Hz timestamps written at 6 decimals still infer exactly 50.
        let s = sample_session(50.0, 123);
        let mut buf = Vec::new();
        write_session_csv(&mut buf, &s).unwrap();
        let back = read_session_csv(buf.as_slice(), "u", "s").unwrap();
        assert_eq!(back.sample_rate_hz, 50.0);
    }

    #[test]
    fn file_name_convention() {
        assert_eq!(session_file_name("u2", "s4"), "u2_s4.csv");
        assert_eq!(
            parse_session_file_name("u2_s4.csv").unwrap(),
            ("u2".into(), "s4".into())
        );
        assert!(parse_session_file_name("nounderscore.csv").is_err());
        assert!(parse_session_file_name("u2_s4.txt").is_err());
    }

    #[test]
    fn malformed_rows_are_format_errors() {
        let text = "t,r_acc_x,label\n0.000000,1.0,0\n0.033333,oops,1\n";
        let err = read_session_csv(text.as_bytes(), "u", "s").unwrap_err();
        assert!(matches!(err, Error::Format(_)));

        let text = "t,r_acc_x,label\n0.000000,1.0\n";
        assert!(read_session_csv(text.as_bytes(), "u", "s").is_err());

        let text = "time,r_acc_x,label\n";
        assert!(read_session_csv(text.as_bytes(), "u", "s").is_err());
    }

    #[test]
    fn directory_listing_is_sorted() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["u1_s0.csv", "u0_s1.csv", "u0_s0.csv", "notes.txt"] {
            std::fs::write(dir.path().join(name), "x").unwrap();
        }
        let files = list_session_files(dir.path()).unwrap();
        let names: Vec<_> = files
            .iter()
            .map(|p| p.file_name().unwrap().to_str().unwrap().to_string())
            .collect();
        assert_eq!(names, vec!["u0_s0.csv", "u0_s1.csv", "u1_s0.csv"]);
    }
}
