//! Point collections with optional ground truth, plus CSV and binary I/O.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use log::warn;

use crate::error::{Error, Result};
use crate::numerics::{norm2, RealMatrix};

/// Points are the columns of an `m × N` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub points: RealMatrix,
    /// Ground-truth cluster ids in `0..L`.
    pub labels: Option<Vec<usize>>,
    /// Number of points carrying each label; empty without labels.
    pub per_cluster_counts: Vec<usize>,
}

const BINARY_MAGIC: &[u8; 4] = b"UCDS";
const BINARY_VERSION: u16 = 1;

impl Dataset {
    pub fn new(points: RealMatrix, labels: Option<Vec<usize>>) -> Result<Self> {
        let per_cluster_counts = match &labels {
            Some(l) => {
                if l.len() != points.cols() {
                    return Err(Error::invalid(format!(
                        "{} labels for {} points",
                        l.len(),
                        points.cols()
                    )));
                }
                let k = l.iter().max().map_or(0, |&v| v + 1);
                let mut counts = vec![0; k];
                for &v in l {
                    counts[v] += 1;
                }
                counts
            }
            None => Vec::new(),
        };
        Ok(Dataset {
            points,
            labels,
            per_cluster_counts,
        })
    }

    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        self.points.rows()
    }

    /// Number of points.
    pub fn len(&self) -> usize {
        self.points.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, j: usize) -> &[f64] {
        self.points.column(j)
    }

    pub fn num_clusters(&self) -> Option<usize> {
        self.labels.as_ref().map(|_| self.per_cluster_counts.len())
    }

    /// Rescale every column to unit norm. Zero columns are an error.
    pub fn normalized(self) -> Result<Self> {
        let m = self.dim();
        let mut data = self.points.as_slice().to_vec();
        for (j, col) in data.chunks_mut(m.max(1)).enumerate() {
            let n = norm2(col);
            if n == 0.0 {
                return Err(Error::invalid(format!("point {j} is the zero vector")));
            }
            col.iter_mut().for_each(|v| *v /= n);
        }
        let points = RealMatrix::from_column_major(m, self.len(), data)?;
        Ok(Dataset { points, ..self })
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (0..self.len()).all(|j| (norm2(self.point(j)) - 1.0).abs() <= tol)
    }

    /// Reject datasets whose columns are not unit norm to 1e-8.
    pub fn require_normalized(&self) -> Result<()> {
        if let Some(j) = (0..self.len()).find(|&j| (norm2(self.point(j)) - 1.0).abs() > 1e-8) {
            return Err(Error::invalid(format!(
                "point {j} has norm {}, expected unit-norm data",
                norm2(self.point(j))
            )));
        }
        Ok(())
    }

    pub(crate) fn warn_on_singletons(&self) {
        for (l, &c) in self.per_cluster_counts.iter().enumerate() {
            if c == 1 {
                warn!("cluster {l} has a single point; it cannot be connected to its own cluster");
            }
        }
    }

    /// Write one point per row with header `x0,...,x{m-1}[,label]`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..self.dim()).map(|i| format!("x{i}")).collect();
        if self.labels.is_some() {
            header.push("label".into());
        }
        w.write_record(&header)?;
        for j in 0..self.len() {
            let mut row: Vec<String> = self.point(j).iter().map(|v| v.to_string()).collect();
            if let Some(l) = &self.labels {
                row.push(l[j].to_string());
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read the format produced by [`Dataset::write_csv`].
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        let has_label = header.iter().next_back() == Some("label");
        let m = header.len() - usize::from(has_label);
        for (i, name) in header.iter().take(m).enumerate() {
            if name != format!("x{i}") {
                return Err(Error::format(format!(
                    "unexpected column name {name:?} at {i}"
                )));
            }
        }
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for (row_idx, record) in r.records().enumerate() {
            let record = record?;
            if record.len() != header.len() {
                return Err(Error::format(format!(
                    "row {row_idx} has {} fields",
                    record.len()
                )));
            }
            for field in record.iter().take(m) {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::format(format!("row {row_idx}: bad number {field:?}")))?;
                data.push(v);
            }
            if has_label {
                let field = &record[m];
                labels.push(
                    field.trim().parse().map_err(|_| {
                        Error::format(format!("row {row_idx}: bad label {field:?}"))
                    })?,
                );
            }
        }
        let n = data.len().checked_div(m).unwrap_or(labels.len());
        let points = RealMatrix::from_column_major(m, n, data)?;
        Dataset::new(points, has_label.then_some(labels))
    }

    /// Versioned little-endian binary encoding.
    ///
    /// Layout: magic `UCDS`, `u16` version, `u16` flags (bit 0: labels
    /// present), `u64` rows, `u64` columns, column-major `f64` entries, then
    /// one `u32` label per column when flagged.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(BINARY_MAGIC)?;
        w.write_u16::<LittleEndian>(BINARY_VERSION)?;
        w.write_u16::<LittleEndian>(u16::from(self.labels.is_some()))?;
        w.write_u64::<LittleEndian>(self.dim() as u64)?;
        w.write_u64::<LittleEndian>(self.len() as u64)?;
        for &v in self.points.as_slice() {
            w.write_f64::<LittleEndian>(v)?;
        }
        if let Some(labels) = &self.labels {
            for &l in labels {
                let l = u32::try_from(l).map_err(|_| Error::invalid("label exceeds u32"))?;
                w.write_u32::<LittleEndian>(l)?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let truncated = |e: std::io::Error| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::format("truncated dataset file"),
            _ => Error::Io(e),
        };
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != BINARY_MAGIC {
            return Err(Error::format("not a dataset file (bad magic)"));
        }
        let version = r.read_u16::<LittleEndian>().map_err(truncated)?;
        if version != BINARY_VERSION {
            return Err(Error::format(format!(
                "unsupported dataset version {version}"
            )));
        }
        let flags = r.read_u16::<LittleEndian>().map_err(truncated)?;
        let m = r.read_u64::<LittleEndian>().map_err(truncated)? as usize;
        let n = r.read_u64::<LittleEndian>().map_err(truncated)? as usize;
        let total = m
            .checked_mul(n)
            .ok_or_else(|| Error::format("dataset dimensions overflow"))?;
        let mut data = Vec::with_capacity(total.min(1 << 24));
        for _ in 0..total {
            data.push(r.read_f64::<LittleEndian>().map_err(truncated)?);
        }
        let labels = if flags & 1 == 1 {
            let mut labels = Vec::with_capacity(n.min(1 << 24));
            for _ in 0..n {
                labels.push(r.read_u32::<LittleEndian>().map_err(truncated)? as usize);
            }
            Some(labels)
        } else {
            None
        };
        let points = RealMatrix::from_column_major(m, n, data)
            .map_err(|e| Error::format(format!("invalid dataset payload: {e}")))?;
        Dataset::new(points, labels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Dataset {
        let pts = RealMatrix::from_columns(&[
            vec![0.6, 0.8, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![1.0 / 3f64.sqrt(), -1.0 / 3f64.sqrt(), 1.0 / 3f64.sqrt()],
        ])
        .unwrap();
        Dataset::new(pts, Some(vec![1, 0, 1])).unwrap()
    }

    #[test]
    fn counts_follow_labels() {
        let d = sample();
        assert_eq!(d.per_cluster_counts, vec![1, 2]);
        assert_eq!(d.num_clusters(), Some(2));
        assert!(Dataset::new(RealMatrix::zeros(2, 2), Some(vec![0])).is_err());
    }

    #[test]
    fn normalization_rejects_zero_column() {
        let d = Dataset::new(RealMatrix::zeros(2, 1), None).unwrap();
        assert!(d.normalized().is_err());
        let d = Dataset::new(RealMatrix::from_columns(&[vec![3.0, 4.0]]).unwrap(), None).unwrap();
        let d = d.normalized().unwrap();
        assert!(d.is_normalized(1e-15));
    }

    #[test]
    fn csv_header_and_round_trip() {
        let d = sample();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x0,x1,x2,label\n"));
        assert_eq!(Dataset::read_csv(&buf[..]).unwrap(), d);

        let unlabeled = Dataset::new(d.points.clone(), None).unwrap();
        let mut buf = Vec::new();
        unlabeled.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"x0,x1,x2\n"));
        assert_eq!(Dataset::read_csv(&buf[..]).unwrap(), unlabeled);
    }

    #[test]
    fn binary_rejects_bad_magic_and_truncation() {
        let mut buf = Vec::new();
        sample().write_binary(&mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(
            Dataset::read_binary(&bad[..]),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            Dataset::read_binary(&buf[..buf.len() - 2]),
            Err(Error::Format(_))
        ));
    }

    proptest! {
        #[test]
        fn binary_and_csv_round_trip(
            m in 1usize..5,
            cols in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 5), 1..6),
            labeled in any::<bool>(),
        ) {
            let cols: Vec<Vec<f64>> = cols.into_iter().map(|c| c[..m].to_vec()).collect();
            let labels = labeled.then(|| (0..cols.len()).map(|i| i % 3).collect());
            let d = Dataset::new(RealMatrix::from_columns(&cols).unwrap(), labels).unwrap();

            let mut bin = Vec::new();
            d.write_binary(&mut bin).unwrap();
            prop_assert_eq!(&Dataset::read_binary(&bin[..]).unwrap(), &d);

            let mut text = Vec::new();
            d.write_csv(&mut text).unwrap();
            prop_assert_eq!(&Dataset::read_csv(&text[..]).unwrap(), &d);
        }
    }
}
