//! Binary feature matrix file.
//!
//! Layout: `SDFX` magic, u32 format version, u64 header length, a JSON
//! header, then `n_rows` fixed-size little-endian records:
//! stay_id i64, patient_id i64, label u8, year bucket index u8,
//! pad_hours u8, then `24 * 3F + S` f64 values (hourly block, then statics).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{flat_len, ModelInput};
use crate::cohort::WINDOW_HOURS;
use crate::types::{PatientId, StayId, YearBucket};

pub const MAGIC: &[u8; 4] = b"SDFX";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ContainerError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StaticKind {
    Numeric,
    OneHot,
    Icd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainerHeader {
    pub feature_set: String,
    pub task: String,
    pub hours: usize,
    pub n_features: usize,
    pub n_static: usize,
    pub n_rows: usize,
    /// `3F` names: values, then `present:` flags, then `dt:` channels.
    pub channel_names: Vec<String>,
    pub static_names: Vec<String>,
    pub static_kinds: Vec<StaticKind>,
}

impl ContainerHeader {
    pub fn channel_names_for(hourly_names: &[String]) -> Vec<String> {
        let mut out: Vec<String> = hourly_names.to_vec();
        out.extend(hourly_names.iter().map(|n| format!("present:{n}")));
        out.extend(hourly_names.iter().map(|n| format!("dt:{n}")));
        out
    }

    fn record_len(&self) -> usize {
        8 + 8 + 3 + 8 * flat_len(self.n_features, self.n_static)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub stay_id: StayId,
    pub patient_id: PatientId,
    pub year_bucket: YearBucket,
    pub input: ModelInput,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub header: ContainerHeader,
    pub rows: Vec<FeatureRow>,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> ContainerError + '_ {
    move |source| ContainerError::Io {
        path: path.display().to_string(),
        source,
    }
}

impl FeatureMatrix {
    pub fn write(&self, path: &Path) -> Result<(), ContainerError> {
        let h = &self.header;
        if h.n_rows != self.rows.len() {
            return Err(ContainerError::Format(format!(
                "header declares {} rows but {} are present",
                h.n_rows,
                self.rows.len()
            )));
        }
        let json = serde_json::to_vec(h).map_err(|e| ContainerError::Format(e.to_string()))?;
        let err = io_err(path);
        let mut w = BufWriter::new(File::create(path).map_err(&err)?);
        let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(&err);
        put(MAGIC)?;
        put(&FORMAT_VERSION.to_le_bytes())?;
        put(&(json.len() as u64).to_le_bytes())?;
        put(&json)?;
        let mut rec = Vec::with_capacity(h.record_len());
        for r in &self.rows {
            let x = &r.input;
            if x.n_features != h.n_features || x.static_values.len() != h.n_static {
                return Err(ContainerError::Format(format!(
                    "stay {} has dims ({}, {}), header says ({}, {})",
                    r.stay_id,
                    x.n_features,
                    x.static_values.len(),
                    h.n_features,
                    h.n_static
                )));
            }
            rec.clear();
            rec.extend_from_slice(&r.stay_id.0.to_le_bytes());
            rec.extend_from_slice(&r.patient_id.0.to_le_bytes());
            rec.push(x.label as u8);
            rec.push(r.year_bucket.index() as u8);
            rec.push(x.pad_hours as u8);
            for v in x.hourly.iter().chain(&x.static_values) {
                rec.extend_from_slice(&v.to_le_bytes());
            }
            put(&rec)?;
        }
        w.flush().map_err(&err)
    }

    pub fn read(path: &Path) -> Result<Self, ContainerError> {
        let err = io_err(path);
        let mut r = BufReader::new(File::open(path).map_err(&err)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(&err)?;
        if &magic != MAGIC {
            return Err(ContainerError::Format(format!(
                "{}: not a feature matrix file",
                path.display()
            )));
        }
        let mut u32b = [0u8; 4];
        r.read_exact(&mut u32b).map_err(&err)?;
        let version = u32::from_le_bytes(u32b);
        if version != FORMAT_VERSION {
            return Err(ContainerError::Format(format!(
                "unsupported feature matrix version {version}"
            )));
        }
        let mut u64b = [0u8; 8];
        r.read_exact(&mut u64b).map_err(&err)?;
        let mut json = vec![0u8; u64::from_le_bytes(u64b) as usize];
        r.read_exact(&mut json).map_err(&err)?;
        let header: ContainerHeader =
            serde_json::from_slice(&json).map_err(|e| ContainerError::Format(e.to_string()))?;
        if header.hours != WINDOW_HOURS {
            return Err(ContainerError::Format(format!("expected 24 hours, header has {}", header.hours)));
        }
        let n_hourly = WINDOW_HOURS * 3 * header.n_features;
        let mut rec = vec![0u8; header.record_len()];
        let mut rows = Vec::with_capacity(header.n_rows);
        for _ in 0..header.n_rows {
            r.read_exact(&mut rec).map_err(&err)?;
            let i64_at = |o: usize| i64::from_le_bytes(rec[o..o + 8].try_into().expect("8 bytes"));
            let bucket = YearBucket::from_index(rec[17] as usize)
                .ok_or_else(|| ContainerError::Format(format!("bad bucket index {}", rec[17])))?;
            let values: Vec<f64> = rec[19..]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            rows.push(FeatureRow {
                stay_id: StayId(i64_at(0)),
                patient_id: PatientId(i64_at(8)),
                year_bucket: bucket,
                input: ModelInput::new(
                    header.n_features,
                    values[..n_hourly].to_vec(),
                    values[n_hourly..].to_vec(),
                    rec[18] as usize,
                    rec[16] != 0,
                ),
            });
        }
        if r.read(&mut [0u8; 1]).map_err(&err)? != 0 {
            return Err(ContainerError::Format("trailing bytes after last record".into()));
        }
        Ok(Self { header, rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let names = vec!["hr".to_string()];
        let header = ContainerHeader {
            feature_set: "custom".into(),
            task: "sepsis".into(),
            hours: 24,
            n_features: 1,
            n_static: 2,
            n_rows: 2,
            channel_names: ContainerHeader::channel_names_for(&names),
            static_names: vec!["age".into(), "icd:HIV".into()],
            static_kinds: vec![StaticKind::Numeric, StaticKind::Icd],
        };
        let row = |id: i64, bucket, pad| FeatureRow {
            stay_id: StayId(id),
            patient_id: PatientId(id + 100),
            year_bucket: bucket,
            input: ModelInput::new(1, (0..72).map(|i| i as f64 * 0.5 + id as f64).collect(), vec![1.5, -0.25], pad, id % 2 == 0),
        };
        let m = FeatureMatrix {
            header,
            rows: vec![row(1, YearBucket::Y2008, 0), row(2, YearBucket::Y2017, 18)],
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.bin");
        m.write(&p).unwrap();
        assert_eq!(FeatureMatrix::read(&p).unwrap(), m);
        assert_eq!(m.header.channel_names[1], "present:hr");
    }

    #[test]
    fn rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.bin");
        std::fs::write(&p, b"nope").unwrap();
        assert!(matches!(FeatureMatrix::read(&p), Err(ContainerError::Format(_))));
    }
}
