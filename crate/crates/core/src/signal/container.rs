//! On-disk windowed-dataset container (`TSAKDS1`).
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic            7 bytes  "TSAKDS1"
//! version          u16      currently 1
//! sample_rate_hz   f64
//! win_len          u32
//! n_channels       u32
//! n_classes        u32
//! n_sessions       u32
//! n_windows        u64
//! class names      n_classes × (u16 len + utf-8)
//! channel specs    n_channels × (name, kind u8, unit, normalize u8)
//! session table    n_sessions × (user, session, n_samples u64,
//!                                n_channels × (min f64, max f64))
//! window table     n_windows × (session u32, start u32, label u16)
//! tensor           n_windows × n_channels × win_len × f32
//! checksum         32 bytes, sha256 of everything above
//! ```
//!
//! Strings are u16 length + utf-8. The checksum doubles as the dataset
//! hash quoted in run manifests.

use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::signal::session::{ChannelKind, ChannelSpec};
use crate::signal::window::{SessionMeta, WindowedDataset};
use crate::util::hex32;

const MAGIC: &[u8; 7] = b"TSAKDS1";
pub const CONTAINER_VERSION: u16 = 1;

fn kind_to_u8(k: ChannelKind) -> u8 {
    match k {
        ChannelKind::Accel => 0,
        ChannelKind::Gyro => 1,
        ChannelKind::Capacitive => 2,
    }
}

fn u8_to_kind(v: u8) -> Result<ChannelKind> {
    match v {
        0 => Ok(ChannelKind::Accel),
        1 => Ok(ChannelKind::Gyro),
        2 => Ok(ChannelKind::Capacitive),
        other => Err(Error::Format(format!("unknown channel kind tag {other}"))),
    }
}

struct HashWriter<W: Write> {
    inner: W,
    hasher: Sha256,
}

impl<W: Write> Write for HashWriter<W> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

fn put_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    let bytes = s.as_bytes();
    if bytes.len() > u16::MAX as usize {
        return Err(Error::Format(format!("string too long: {} bytes", bytes.len())));
    }
    w.write_all(&(bytes.len() as u16).to_le_bytes())?;
    w.write_all(bytes)?;
    Ok(())
}

/// Serializes the dataset; returns its sha256 checksum (the dataset hash).
pub fn write_container<W: Write>(w: W, ds: &WindowedDataset) -> Result<[u8; 32]> {
    let c = ds.n_channels();
    let mut w = HashWriter {
        inner: w,
        hasher: Sha256::new(),
    };
    w.write_all(MAGIC)?;
    w.write_all(&CONTAINER_VERSION.to_le_bytes())?;
    w.write_all(&ds.sample_rate_hz.to_le_bytes())?;
    w.write_all(&(ds.win_len as u32).to_le_bytes())?;
    w.write_all(&(c as u32).to_le_bytes())?;
    w.write_all(&(ds.class_names.len() as u32).to_le_bytes())?;
    w.write_all(&(ds.sessions.len() as u32).to_le_bytes())?;
    w.write_all(&(ds.n_windows() as u64).to_le_bytes())?;
    for name in &ds.class_names {
        put_str(&mut w, name)?;
    }
    for ch in &ds.channels {
        put_str(&mut w, &ch.name)?;
        w.write_all(&[kind_to_u8(ch.kind)])?;
        put_str(&mut w, &ch.unit)?;
        w.write_all(&[u8::from(ch.normalize)])?;
    }
    for s in &ds.sessions {
        if s.channel_extrema.len() != c {
            return Err(Error::Shape(format!(
                "session {}/{} has {} extrema entries, expected {}",
                s.user_id,
                s.session_id,
                s.channel_extrema.len(),
                c
            )));
        }
        put_str(&mut w, &s.user_id)?;
        put_str(&mut w, &s.session_id)?;
        w.write_all(&s.n_samples.to_le_bytes())?;
        for &(lo, hi) in &s.channel_extrema {
            w.write_all(&lo.to_le_bytes())?;
            w.write_all(&hi.to_le_bytes())?;
        }
    }
    for i in 0..ds.n_windows() {
        w.write_all(&ds.window_session[i].to_le_bytes())?;
        w.write_all(&ds.window_start[i].to_le_bytes())?;
        w.write_all(&ds.labels[i].to_le_bytes())?;
    }
    for &v in &ds.windows {
        w.write_all(&v.to_le_bytes())?;
    }
    let digest: [u8; 32] = w.hasher.finalize().into();
    w.inner.write_all(&digest)?;
    w.inner.flush()?;
    Ok(digest)
}

pub fn save_container(path: &Path, ds: &WindowedDataset) -> Result<[u8; 32]> {
    let file = std::fs::File::create(path)?;
    write_container(std::io::BufWriter::new(file), ds)
}

struct Rd<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Rd<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format(format!(
                "truncated container: wanted {n} bytes at offset {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u16()? as usize;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| Error::Format("invalid utf-8 in container string".into()))
    }
}

/// Deserializes and checksum-verifies a container; returns the dataset and
/// its hash.
pub fn read_container(bytes: &[u8]) -> Result<(WindowedDataset, [u8; 32])> {
    if bytes.len() < MAGIC.len() + 32 {
        return Err(Error::Format("container too short".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 32);
    let digest: [u8; 32] = Sha256::digest(body).into();
    if digest != tail {
        return Err(Error::Format(
            "container checksum mismatch: file is corrupt".into(),
        ));
    }
    let mut r = Rd { buf: body, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::Format("bad magic: not a TSAKDS1 container".into()));
    }
    let version = r.u16()?;
    if version != CONTAINER_VERSION {
        return Err(Error::Format(format!(
            "unsupported container version {version}"
        )));
    }
    let sample_rate_hz = r.f64()?;
    let win_len = r.u32()? as usize;
    let n_channels = r.u32()? as usize;
    let n_classes = r.u32()? as usize;
    let n_sessions = r.u32()? as usize;
    let n_windows = r.u64()? as usize;
    let mut class_names = Vec::with_capacity(n_classes);
    for _ in 0..n_classes {
        class_names.push(r.string()?);
    }
    let mut channels = Vec::with_capacity(n_channels);
    for _ in 0..n_channels {
        let name = r.string()?;
        let kind = u8_to_kind(r.u8()?)?;
        let unit = r.string()?;
        let normalize = r.u8()? != 0;
        channels.push(ChannelSpec {
            name,
            kind,
            unit,
            normalize,
        });
    }
    let mut sessions = Vec::with_capacity(n_sessions);
    for _ in 0..n_sessions {
        let user_id = r.string()?;
        let session_id = r.string()?;
        let n_samples = r.u64()?;
        let mut extrema = Vec::with_capacity(n_channels);
        for _ in 0..n_channels {
            extrema.push((r.f64()?, r.f64()?));
        }
        sessions.push(SessionMeta {
            user_id,
            session_id,
            n_samples,
            channel_extrema: extrema,
        });
    }
    let mut window_session = Vec::with_capacity(n_windows);
    let mut window_start = Vec::with_capacity(n_windows);
    let mut labels = Vec::with_capacity(n_windows);
    for _ in 0..n_windows {
        let s = r.u32()?;
        if s as usize >= n_sessions {
            return Err(Error::Format(format!(
                "window references session {s}, only {n_sessions} present"
            )));
        }
        window_session.push(s);
        window_start.push(r.u32()?);
        let l = r.u16()?;
        if l as usize >= n_classes {
            return Err(Error::Format(format!(
                "window label {l} out of range for {n_classes} classes"
            )));
        }
        labels.push(l);
    }
    let tensor_len = n_windows * n_channels * win_len;
    let raw = r.take(tensor_len * 4)?;
    let mut windows = Vec::with_capacity(tensor_len);
    for chunk in raw.chunks_exact(4) {
        windows.push(f32::from_le_bytes(chunk.try_into().unwrap()));
    }
    if r.pos != body.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after tensor",
            body.len() - r.pos
        )));
    }
    Ok((
        WindowedDataset {
            sample_rate_hz,
            win_len,
            channels,
            class_names,
            sessions,
            windows,
            labels,
            window_session,
            window_start,
        },
        digest,
    ))
}

pub fn load_container(path: &Path) -> Result<(WindowedDataset, [u8; 32])> {
    let bytes = std::fs::read(path)?;
    read_container(&bytes)
}

/// Dataset hash as quoted in run manifests.
pub fn dataset_hash_hex(digest: &[u8; 32]) -> String {
    hex32(digest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::session::{factory_channels, SessionRecording};
    use crate::signal::window::segment_windows;

    fn sample_dataset() -> WindowedDataset {
        let channels = factory_channels();
        let c = channels.len();
        let n = 260;
        let rec = SessionRecording {
            user_id: "u0".into(),
            session_id: "s0".into(),
            sample_rate_hz: 50.0,
            channels,
            samples: (0..n * c).map(|i| (i as f64 * 0.37).sin()).collect(),
            labels: (0..n).map(|i| (i / 60) % 4).collect(),
        };
        let names = vec!["a".into(), "b".into(), "c".into(), "d".into()];
        segment_windows(&rec, names, 2.0, 0.5).unwrap()
    }

    #[test]
    fn round_trip_is_lossless() {
        let ds = sample_dataset();
        let mut buf = Vec::new();
        let hash = write_container(&mut buf, &ds).unwrap();
        let (back, hash2) = read_container(&buf).unwrap();
        assert_eq!(hash, hash2);
        assert_eq!(back, ds);
    }

    #[test]
    fn hash_is_deterministic_and_content_sensitive() {
        let ds = sample_dataset();
        let mut a = Vec::new();
        let mut b = Vec::new();
        let ha = write_container(&mut a, &ds).unwrap();
        let hb = write_container(&mut b, &ds).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(a, b, "byte-identical serialization");

        let mut changed = ds.clone();
        changed.windows[0] += 1.0;
        let mut cbuf = Vec::new();
        let hc = write_container(&mut cbuf, &changed).unwrap();
        assert_ne!(ha, hc);
    }

    #[test]
    fn corruption_is_detected() {
        let ds = sample_dataset();
        let mut buf = Vec::new();
        write_container(&mut buf, &ds).unwrap();
        let mid = buf.len() / 2;
        buf[mid] ^= 0x01;
        assert!(matches!(read_container(&buf), Err(Error::Format(_))));
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let mut buf = vec![0u8; 64];
        buf[..7].copy_from_slice(b"NOTDS1!");
        assert!(read_container(&buf).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.tsakds");
        let ds = sample_dataset();
        let h1 = save_container(&path, &ds).unwrap();
        let (back, h2) = load_container(&path).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(back.n_windows(), ds.n_windows());
    }
}
