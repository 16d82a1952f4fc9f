//! MNIST IDX files, digit sampling, and experiment result files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{BigEndian, WriteBytesExt};
use log::warn;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{norm2, RealMatrix};
use crate::rng::{derive_seed, rng_from_seed};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const MNIST_SIDE: usize = 28;

/// Raw image tensor from an IDX file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    /// `count · rows · cols` bytes, image after image, each row-major.
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn image(&self, i: usize) -> &[u8] {
        let size = self.rows * self.cols;
        &self.pixels[i * size..(i + 1) * size]
    }
}

fn read_exact_or_format<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::format(format!("truncated {what}")),
        _ => Error::Io(e),
    })
}

fn read_u32_be<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact_or_format(r, &mut b, what)?;
    Ok(u32::from_be_bytes(b))
}

fn check_no_trailing<R: Read>(r: &mut R, what: &str) -> Result<()> {
    let mut extra = [0u8; 1];
    match r.read(&mut extra)? {
        0 => Ok(()),
        _ => Err(Error::format(format!("trailing bytes after {what}"))),
    }
}

pub fn parse_idx_images<R: Read>(mut r: R) -> Result<IdxImages> {
    let magic = read_u32_be(&mut r, "IDX image header")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::format(format!(
            "bad IDX image magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"
        )));
    }
    let count = read_u32_be(&mut r, "IDX image header")? as usize;
    let rows = read_u32_be(&mut r, "IDX image header")? as usize;
    let cols = read_u32_be(&mut r, "IDX image header")? as usize;
    let total = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::format("IDX image dimensions overflow"))?;
    let mut pixels = Vec::new();
    let got = r.by_ref().take(total as u64).read_to_end(&mut pixels)?;
    if got != total {
        return Err(Error::format(format!(
            "truncated IDX image payload: {got} of {total} bytes"
        )));
    }
    check_no_trailing(&mut r, "IDX image payload")?;
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels,
    })
}

pub fn parse_idx_labels<R: Read>(mut r: R) -> Result<Vec<u8>> {
    let magic = read_u32_be(&mut r, "IDX label header")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::format(format!(
            "bad IDX label magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"
        )));
    }
    let count = read_u32_be(&mut r, "IDX label header")? as usize;
    let mut labels = vec![0u8; count];
    read_exact_or_format(&mut r, &mut labels, "IDX label payload")?;
    if let Some(pos) = labels.iter().position(|&l| l > 9) {
        return Err(Error::format(format!(
            "label {} at index {pos} is not a digit",
            labels[pos]
        )));
    }
    check_no_trailing(&mut r, "IDX label payload")?;
    Ok(labels)
}

pub fn read_idx_images(path: impl AsRef<Path>) -> Result<IdxImages> {
    parse_idx_images(BufReader::new(File::open(path)?))
}

pub fn read_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    parse_idx_labels(BufReader::new(File::open(path)?))
}

pub fn write_idx_images<W: Write>(mut w: W, images: &IdxImages) -> Result<()> {
    if images.pixels.len() != images.count * images.rows * images.cols {
        return Err(Error::invalid(
            "pixel buffer does not match the image dimensions",
        ));
    }
    w.write_u32::<BigEndian>(IDX_IMAGES_MAGIC)?;
    for v in [images.count, images.rows, images.cols] {
        w.write_u32::<BigEndian>(
            u32::try_from(v).map_err(|_| Error::invalid("IDX dimension exceeds u32"))?,
        )?;
    }
    w.write_all(&images.pixels)?;
    Ok(())
}

pub fn write_idx_labels<W: Write>(mut w: W, labels: &[u8]) -> Result<()> {
    w.write_u32::<BigEndian>(IDX_LABELS_MAGIC)?;
    w.write_u32::<BigEndian>(
        u32::try_from(labels.len()).map_err(|_| Error::invalid("too many labels"))?,
    )?;
    w.write_all(labels)?;
    Ok(())
}

/// MNIST images as 784-dimensional columns scaled to [0, 1].
#[derive(Clone, Debug)]
pub struct MnistSet {
    pub images: RealMatrix,
    pub labels: Vec<u8>,
}

impl MnistSet {
    pub fn from_idx(images: &IdxImages, labels: Vec<u8>) -> Result<Self> {
        if images.rows != MNIST_SIDE || images.cols != MNIST_SIDE {
            return Err(Error::format(format!(
                "expected {MNIST_SIDE}x{MNIST_SIDE} images, got {}x{}",
                images.rows, images.cols
            )));
        }
        if images.count != labels.len() {
            return Err(Error::format(format!(
                "{} images but {} labels",
                images.count,
                labels.len()
            )));
        }
        let data = images
            .pixels
            .iter()
            .map(|&p| f64::from(p) / 255.0)
            .collect();
        let images = RealMatrix::from_column_major(MNIST_SIDE * MNIST_SIDE, images.count, data)?;
        Ok(MnistSet { images, labels })
    }

    pub fn load(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Self> {
        Self::from_idx(
            &read_idx_images(images_path)?,
            read_idx_labels(labels_path)?,
        )
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Draw `n_per_digit` images of each requested digit without replacement
/// and normalize them to unit length.
///
/// Labels are remapped to `0..L` in ascending digit order. All-zero images
/// cannot be normalized; they are skipped with a warning and another image
/// of the same digit is drawn.
pub fn sample_digit_subset(
    set: &MnistSet,
    digits: &[u8],
    n_per_digit: usize,
    seed: u64,
) -> Result<Dataset> {
    if n_per_digit == 0 {
        return Err(Error::invalid("n_per_digit must be positive"));
    }
    let mut digits = digits.to_vec();
    digits.sort_unstable();
    digits.dedup();
    if digits.is_empty() {
        return Err(Error::invalid("no digits requested"));
    }
    let m = set.images.rows();
    let mut data = Vec::with_capacity(m * n_per_digit * digits.len());
    let mut labels = Vec::with_capacity(n_per_digit * digits.len());
    for (label, &digit) in digits.iter().enumerate() {
        let mut pool: Vec<usize> = (0..set.len()).filter(|&i| set.labels[i] == digit).collect();
        if pool.len() < n_per_digit {
            return Err(Error::invalid(format!(
                "digit {digit} has {} images, {n_per_digit} requested",
                pool.len()
            )));
        }
        let mut rng = rng_from_seed(derive_seed(seed, &[u64::from(digit)]));
        pool.shuffle(&mut rng);
        let mut taken = 0;
        for &i in &pool {
            if taken == n_per_digit {
                break;
            }
            let img = set.images.column(i);
            let norm = norm2(img);
            if norm == 0.0 {
                warn!(
                    "image {i} (digit {digit}) is blank and cannot be normalized; drawing another"
                );
                continue;
            }
            data.extend(img.iter().map(|v| v / norm));
            labels.push(label);
            taken += 1;
        }
        if taken < n_per_digit {
            return Err(Error::invalid(format!(
                "digit {digit} has only {taken} non-blank images, {n_per_digit} requested"
            )));
        }
    }
    if n_per_digit == 1 {
        warn!("one image per digit: clusters cannot be connected internally");
    }
    let n = labels.len();
    Dataset::new(RealMatrix::from_column_major(m, n, data)?, Some(labels))
}

/// One row of an experiment result file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub experiment: String,
    pub algorithm: String,
    pub n: usize,
    pub trial_seed: u64,
    pub error: f64,
    /// Fixed neighborhood size or OMP iteration cap; empty when unused.
    pub q_param: Option<usize>,
    pub tau: Option<f64>,
    #[serde(rename = "L_hat")]
    pub l_hat: usize,
}

/// Write records with the header
/// `experiment,algorithm,n,trial_seed,error,q_param,tau,L_hat`.
pub fn write_results_csv<W: Write>(writer: W, records: &[ResultRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if records.is_empty() {
        w.write_record([
            "experiment",
            "algorithm",
            "n",
            "trial_seed",
            "error",
            "q_param",
            "tau",
            "L_hat",
        ])?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results_csv<R: Read>(reader: R) -> Result<Vec<ResultRecord>> {
    let mut r = csv::Reader::from_reader(reader);
    r.deserialize()
        .map(|rec| rec.map_err(Error::from))
        .collect()
}

/// Mean and standard deviation of the error for one (algorithm, n) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub algorithm: String,
    pub n: usize,
    pub trials: usize,
    pub mean_error: f64,
    /// Sample standard deviation (`n − 1` denominator); zero for one trial.
    pub std_error: f64,
}

/// Group records by (algorithm, n) in order of first appearance.
pub fn summarize(records: &[ResultRecord]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, usize)> = Vec::new();
    for r in records {
        let key = (r.algorithm.clone(), r.n);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(algorithm, n)| {
            let errs: Vec<f64> = records
                .iter()
                .filter(|r| r.algorithm == algorithm && r.n == n)
                .map(|r| r.error)
                .collect();
            let k = errs.len() as f64;
            let mean = errs.iter().sum::<f64>() / k;
            let var = if errs.len() > 1 {
                errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (k - 1.0)
            } else {
                0.0
            };
            SummaryRow {
                algorithm,
                n,
                trials: errs.len(),
                mean_error: mean,
                std_error: var.sqrt(),
            }
        })
        .collect()
}

/// JSON document: configuration echo, per-trial records, and the summary.
pub fn write_summary_json<W: Write, C: Serialize>(
    writer: W,
    config: &C,
    records: &[ResultRecord],
) -> Result<()> {
    #[derive(Serialize)]
    struct Doc<'a, C> {
        config: &'a C,
        records: &'a [ResultRecord],
        summary: Vec<SummaryRow>,
    }
    let mut w = BufWriter::new(writer);
    serde_json::to_writer_pretty(
        &mut w,
        &Doc {
            config,
            records,
            summary: summarize(records),
        },
    )?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}
