use std::collections::BTreeSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which pool produced a prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    /// A model trained on the full data and then unlearned.
    Seen,
    /// A model retrained without the deleted classes.
    NotSeen,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Seen => "seen",
            Origin::NotSeen => "not_seen",
        }
    }

    pub fn is_seen(self) -> bool {
        self == Origin::Seen
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Origin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seen" => Ok(Origin::Seen),
            "not_seen" => Ok(Origin::NotSeen),
            other => Err(Error::Format(format!("unknown origin {other:?}"))),
        }
    }
}

/// One pre-softmax prediction of one shadow model on one test input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitRecord {
    pub model_id: usize,
    pub origin: Origin,
    /// Original class index of the predicted input.
    pub true_class: usize,
    pub logits: Vec<f64>,
}

/// Writes records as `model_id,origin,true_class,l0,l1,...`.
pub fn write_records<W: Write>(writer: W, records: &[LogitRecord]) -> Result<()> {
    let dim = check_dimension(records)?;
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["model_id".to_string(), "origin".into(), "true_class".into()];
    header.extend((0..dim).map(|i| format!("l{i}")));
    w.write_record(&header).map_err(csv_error)?;
    for r in records {
        let mut row = vec![r.model_id.to_string(), r.origin.to_string(), r.true_class.to_string()];
        row.extend(r.logits.iter().map(f64::to_string));
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(reader: R) -> Result<Vec<LogitRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.len() < 4
        || &header[0] != "model_id"
        || &header[1] != "origin"
        || &header[2] != "true_class"
        || header.iter().skip(3).enumerate().any(|(i, h)| h != format!("l{i}"))
    {
        return Err(Error::Format(format!("unexpected records header {header:?}")));
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_error)?;
        let parse_usize = |i: usize| -> Result<usize> {
            row[i]
                .parse()
                .map_err(|_| Error::Format(format!("bad integer {:?} in records", &row[i])))
        };
        let logits = row
            .iter()
            .skip(3)
            .map(|v| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::Format(format!("bad logit {v:?} in records")))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(LogitRecord {
            model_id: parse_usize(0)?,
            origin: row[1].parse()?,
            true_class: parse_usize(2)?,
            logits,
        });
    }
    Ok(out)
}

pub fn save_records(path: impl AsRef<Path>, records: &[LogitRecord]) -> Result<()> {
    write_records(std::fs::File::create(path)?, records)
}

pub fn load_records(path: impl AsRef<Path>) -> Result<Vec<LogitRecord>> {
    read_records(std::fs::File::open(path)?)
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

/// Common logit dimension of a record set.
pub fn check_dimension(records: &[LogitRecord]) -> Result<usize> {
    let dim = records.first().ok_or(Error::EmptyInput("records"))?.logits.len();
    if records.iter().any(|r| r.logits.len() != dim) {
        return Err(Error::shape("records have different logit dimensions"));
    }
    Ok(dim)
}

/// Records split by pool.
///
/// Shadow runs number models `0..N` (seen), `N..2N` (not seen) and, when a
/// baseline pool is trained, `2N..3N` (a second not-seen pool). `N` is the
/// number of distinct seen model ids.
#[derive(Debug, Clone, Default)]
pub struct RecordPools<'a> {
    pub seen: Vec<&'a LogitRecord>,
    pub not_seen: Vec<&'a LogitRecord>,
    pub baseline: Vec<&'a LogitRecord>,
}

impl<'a> RecordPools<'a> {
    pub fn split(records: &'a [LogitRecord]) -> RecordPools<'a> {
        let n = records
            .iter()
            .filter(|r| r.origin.is_seen())
            .map(|r| r.model_id)
            .collect::<BTreeSet<_>>()
            .len();
        let mut pools = RecordPools::default();
        for r in records {
            match r.origin {
                Origin::Seen => pools.seen.push(r),
                Origin::NotSeen if n > 0 && r.model_id >= 2 * n => pools.baseline.push(r),
                Origin::NotSeen => pools.not_seen.push(r),
            }
        }
        pools
    }

    /// Seen and not-seen records, baseline excluded.
    pub fn attack_records(&self) -> Vec<&'a LogitRecord> {
        self.seen.iter().chain(&self.not_seen).copied().collect()
    }
}
