//! Binary recording container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//!   magic       4 bytes  "SKNA"
//!   version     u32      format version (currently 1)
//!   endian tag  u32      0x01020304, written natively by a little-endian
//!                        writer; a mismatch marks a byte-order problem
//!   fs          f64      primary sample rate of the dataset
//!   records     u32      number of record blocks
//!   -- per record --
//!   id length   u16      subject id, UTF-8
//!   id bytes    ..
//!   role        u8       0 = skna, 1 = emg
//!   fs          f64      sample rate of this record
//!   n periods   u32      labelled period table
//!     start     u64
//!     end       u64
//!     condition u8       0 = baseline, 1 = stimulation
//!   n samples   u64
//!   payload     n * f32  samples in microvolts
//!   -- footer --
//!   manifest length u64
//!   manifest bytes  ..   JSON: seeds, profiles, provenance
//! ```
//!
//! Payloads are stored as 32-bit floats; in-memory processing is f64.

use std::io::{Read, Write};
use std::path::Path;

use serde_json::Value;
use thiserror::Error;

use crate::signal::{Condition, Period, SampledSignal};

pub const MAGIC: &[u8; 4] = b"SKNA";
pub const FORMAT_VERSION: u32 = 1;
pub const ENDIAN_TAG: u32 = 0x0102_0304;

/// Role of a record inside a container.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordRole {
    Skna,
    Emg,
}

impl RecordRole {
    fn to_byte(self) -> u8 {
        match self {
            RecordRole::Skna => 0,
            RecordRole::Emg => 1,
        }
    }

    fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(RecordRole::Skna),
            1 => Some(RecordRole::Emg),
            _ => None,
        }
    }
}

/// One named recording with its labelled periods.
#[derive(Debug, Clone)]
pub struct Record {
    pub subject_id: String,
    pub role: RecordRole,
    pub signal: SampledSignal,
}

/// A set of recordings plus a free-form JSON manifest (seeds, profiles,
/// provenance). The primary rate `fs` is the rate shared by SKNA records.
#[derive(Debug, Clone)]
pub struct RecordingContainer {
    pub fs: f64,
    pub records: Vec<Record>,
    pub manifest: Value,
}

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a recording container: magic {found:02x?} at byte 0")]
    ForeignMagic { found: [u8; 4] },
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u32),
    #[error("endianness tag mismatch: read {0:#010x}")]
    EndiannessMismatch(u32),
    #[error("container truncated at byte {offset} while reading {what} of record '{record}'")]
    Truncated {
        offset: u64,
        what: &'static str,
        record: String,
    },
    #[error("record '{record}': invalid {what} value {value}")]
    InvalidField {
        record: String,
        what: &'static str,
        value: u64,
    },
    #[error("record '{record}': bad subject id: {source}")]
    BadSubjectId {
        record: String,
        source: std::string::FromUtf8Error,
    },
    #[error("record '{record}': {source}")]
    BadSignal {
        record: String,
        source: crate::signal::SignalError,
    },
    #[error("bad manifest JSON: {0}")]
    BadManifest(#[from] serde_json::Error),
    #[error("duplicate subject id '{0}'")]
    DuplicateSubject(String),
}

impl RecordingContainer {
    pub fn new(fs: f64, manifest: Value) -> Self {
        RecordingContainer {
            fs,
            records: Vec::new(),
            manifest,
        }
    }

    pub fn push(&mut self, record: Record) -> Result<(), ContainerError> {
        if self
            .records
            .iter()
            .any(|r| r.subject_id == record.subject_id)
        {
            return Err(ContainerError::DuplicateSubject(record.subject_id));
        }
        self.records.push(record);
        Ok(())
    }

    pub fn find(&self, subject_id: &str) -> Option<&Record> {
        self.records.iter().find(|r| r.subject_id == subject_id)
    }

    pub fn records_with_role(&self, role: RecordRole) -> impl Iterator<Item = &Record> + '_ {
        self.records.iter().filter(move |r| r.role == role)
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<(), ContainerError> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&ENDIAN_TAG.to_le_bytes())?;
        w.write_all(&self.fs.to_le_bytes())?;
        w.write_all(&(self.records.len() as u32).to_le_bytes())?;
        for r in &self.records {
            let id = r.subject_id.as_bytes();
            w.write_all(&(id.len() as u16).to_le_bytes())?;
            w.write_all(id)?;
            w.write_all(&[r.role.to_byte()])?;
            w.write_all(&r.signal.fs.to_le_bytes())?;
            w.write_all(&(r.signal.periods.len() as u32).to_le_bytes())?;
            for p in &r.signal.periods {
                w.write_all(&(p.start as u64).to_le_bytes())?;
                w.write_all(&(p.end as u64).to_le_bytes())?;
                w.write_all(&[match p.condition {
                    Condition::Baseline => 0u8,
                    Condition::Stimulation => 1u8,
                }])?;
            }
            w.write_all(&(r.signal.samples.len() as u64).to_le_bytes())?;
            let mut payload = Vec::with_capacity(r.signal.samples.len() * 4);
            for &v in &r.signal.samples {
                payload.extend_from_slice(&(v as f32).to_le_bytes());
            }
            w.write_all(&payload)?;
        }
        let manifest = serde_json::to_vec(&self.manifest)?;
        w.write_all(&(manifest.len() as u64).to_le_bytes())?;
        w.write_all(&manifest)?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ContainerError> {
        let file = std::fs::File::create(path)?;
        let mut buf = std::io::BufWriter::new(file);
        self.write_to(&mut buf)?;
        buf.flush()?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, ContainerError> {
        let mut reader = CountingReader { inner: &mut r, offset: 0 };
        let mut magic = [0u8; 4];
        reader
            .read_exact_or(&mut magic, "magic", "<header>")?;
        if &magic != MAGIC {
            return Err(ContainerError::ForeignMagic { found: magic });
        }
        let version = reader.read_u32("version", "<header>")?;
        if version != FORMAT_VERSION {
            return Err(ContainerError::UnsupportedVersion(version));
        }
        let endian = reader.read_u32("endianness tag", "<header>")?;
        if endian != ENDIAN_TAG {
            return Err(ContainerError::EndiannessMismatch(endian));
        }
        let fs = reader.read_f64("fs", "<header>")?;
        let n_records = reader.read_u32("record count", "<header>")?;
        let mut out = RecordingContainer::new(fs, Value::Null);
        for i in 0..n_records {
            let anon = format!("<record {i}>");
            let id_len = reader.read_u16("subject id length", &anon)? as usize;
            let mut id = vec![0u8; id_len];
            reader.read_exact_or(&mut id, "subject id", &anon)?;
            let subject_id =
                String::from_utf8(id).map_err(|source| ContainerError::BadSubjectId {
                    record: anon.clone(),
                    source,
                })?;
            let role_byte = reader.read_u8("role", &subject_id)?;
            let role = RecordRole::from_byte(role_byte).ok_or(ContainerError::InvalidField {
                record: subject_id.clone(),
                what: "role",
                value: role_byte as u64,
            })?;
            let rec_fs = reader.read_f64("record fs", &subject_id)?;
            let n_periods = reader.read_u32("period count", &subject_id)?;
            let mut periods = Vec::with_capacity(n_periods as usize);
            for _ in 0..n_periods {
                let start = reader.read_u64("period start", &subject_id)? as usize;
                let end = reader.read_u64("period end", &subject_id)? as usize;
                let cond = reader.read_u8("period condition", &subject_id)?;
                let condition = match cond {
                    0 => Condition::Baseline,
                    1 => Condition::Stimulation,
                    other => {
                        return Err(ContainerError::InvalidField {
                            record: subject_id,
                            what: "condition",
                            value: other as u64,
                        })
                    }
                };
                periods.push(Period {
                    start,
                    end,
                    condition,
                });
            }
            let n_samples = reader.read_u64("sample count", &subject_id)? as usize;
            let mut payload = vec![0u8; n_samples * 4];
            reader.read_exact_or(&mut payload, "payload", &subject_id)?;
            let samples: Vec<f64> = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            let signal = SampledSignal::new(rec_fs, samples, periods).map_err(|source| {
                ContainerError::BadSignal {
                    record: subject_id.clone(),
                    source,
                }
            })?;
            out.push(Record {
                subject_id,
                role,
                signal,
            })?;
        }
        let manifest_len = reader.read_u64("manifest length", "<footer>")? as usize;
        let mut manifest = vec![0u8; manifest_len];
        reader.read_exact_or(&mut manifest, "manifest", "<footer>")?;
        out.manifest = serde_json::from_slice(&manifest)?;
        Ok(out)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ContainerError> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

struct CountingReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> CountingReader<R> {
    fn read_exact_or(
        &mut self,
        buf: &mut [u8],
        what: &'static str,
        record: &str,
    ) -> Result<(), ContainerError> {
        match self.inner.read_exact(buf) {
            Ok(()) => {
                self.offset += buf.len() as u64;
                Ok(())
            }
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
                Err(ContainerError::Truncated {
                    offset: self.offset,
                    what,
                    record: record.to_string(),
                })
            }
            Err(e) => Err(ContainerError::Io(e)),
        }
    }

    fn read_u8(&mut self, what: &'static str, record: &str) -> Result<u8, ContainerError> {
        let mut b = [0u8; 1];
        self.read_exact_or(&mut b, what, record)?;
        Ok(b[0])
    }

    fn read_u16(&mut self, what: &'static str, record: &str) -> Result<u16, ContainerError> {
        let mut b = [0u8; 2];
        self.read_exact_or(&mut b, what, record)?;
        Ok(u16::from_le_bytes(b))
    }

    fn read_u32(&mut self, what: &'static str, record: &str) -> Result<u32, ContainerError> {
        let mut b = [0u8; 4];
        self.read_exact_or(&mut b, what, record)?;
        Ok(u32::from_le_bytes(b))
    }

    fn read_u64(&mut self, what: &'static str, record: &str) -> Result<u64, ContainerError> {
        let mut b = [0u8; 8];
        self.read_exact_or(&mut b, what, record)?;
        Ok(u64::from_le_bytes(b))
    }

    fn read_f64(&mut self, what: &'static str, record: &str) -> Result<f64, ContainerError> {
        let mut b = [0u8; 8];
        self.read_exact_or(&mut b, what, record)?;
        Ok(f64::from_le_bytes(b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn sample_container() -> RecordingContainer {
        let mut c = RecordingContainer::new(
            2048.0,
            json!({"master_seed": 7, "tool": "synthetic"}),
        );
        let periods = vec![
            Period {
                start: 0,
                end: 64,
                condition: Condition::Baseline,
            },
            Period {
                start: 64,
                end: 128,
                condition: Condition::Stimulation,
            },
        ];
        let samples: Vec<f64> = (0..128).map(|i| (i as f64 * 0.1).sin()).collect();
        c.push(Record {
            subject_id: "s01".into(),
            role: RecordRole::Skna,
            signal: SampledSignal::new(2048.0, samples, periods).unwrap(),
        })
        .unwrap();
        let emg: Vec<f64> = (0..200).map(|i| (i as f64 * 0.03).cos()).collect();
        c.push(Record {
            subject_id: "emg01".into(),
            role: RecordRole::Emg,
            signal: SampledSignal::new(4000.0, emg, vec![]).unwrap(),
        })
        .unwrap();
        c
    }

    #[test]
    fn round_trip_preserves_payloads_and_manifest() {
        let c = sample_container();
        let mut bytes = Vec::new();
        c.write_to(&mut bytes).unwrap();
        let back = RecordingContainer::read_from(&bytes[..]).unwrap();
        assert_eq!(back.records.len(), 2);
        assert_eq!(back.fs, 2048.0);
        assert_eq!(back.manifest, c.manifest);
        for (a, b) in c.records.iter().zip(&back.records) {
            assert_eq!(a.subject_id, b.subject_id);
            assert_eq!(a.role, b.role);
            assert_eq!(a.signal.fs, b.signal.fs);
            assert_eq!(a.signal.periods, b.signal.periods);
            // Payload survives at f32 precision exactly.
            for (x, y) in a.signal.samples.iter().zip(&b.signal.samples) {
                assert_eq!(*x as f32, *y as f32);
                assert_eq!(*y, (*y as f32) as f64);
            }
        }
        // A second write of the re-read container is byte-identical.
        let mut bytes2 = Vec::new();
        back.write_to(&mut bytes2).unwrap();
        assert_eq!(bytes, bytes2);
    }

    #[test]
    fn truncated_payload_reports_offset_and_record() {
        let c = sample_container();
        let mut bytes = Vec::new();
        c.write_to(&mut bytes).unwrap();
        bytes.truncate(bytes.len() / 2);
        let err = RecordingContainer::read_from(&bytes[..]).unwrap_err();
        match err {
            ContainerError::Truncated { offset, record, .. } => {
                assert!(offset > 0);
                assert!(!record.is_empty());
            }
            other => panic!("expected truncation error, got {other}"),
        }
    }

    #[test]
    fn foreign_magic_is_rejected_without_a_panic() {
        let bytes = b"RIFFxxxxyyyyzzzz".to_vec();
        let err = RecordingContainer::read_from(&bytes[..]).unwrap_err();
        assert!(matches!(err, ContainerError::ForeignMagic { .. }));
    }

    #[test]
    fn wrong_version_and_endian_tag_are_rejected() {
        let c = sample_container();
        let mut bytes = Vec::new();
        c.write_to(&mut bytes).unwrap();
        let mut v = bytes.clone();
        v[4] = 9; // version
        assert!(matches!(
            RecordingContainer::read_from(&v[..]).unwrap_err(),
            ContainerError::UnsupportedVersion(_)
        ));
        let mut e = bytes;
        e[8..12].copy_from_slice(&0x0403_0201u32.to_le_bytes());
        assert!(matches!(
            RecordingContainer::read_from(&e[..]).unwrap_err(),
            ContainerError::EndiannessMismatch(_)
        ));
    }

    #[test]
    fn duplicate_subjects_are_rejected() {
        let mut c = sample_container();
        let err = c
            .push(Record {
                subject_id: "s01".into(),
                role: RecordRole::Skna,
                signal: SampledSignal::new(2048.0, vec![0.0; 4], vec![]).unwrap(),
            })
            .unwrap_err();
        assert!(matches!(err, ContainerError::DuplicateSubject(_)));
    }
}
