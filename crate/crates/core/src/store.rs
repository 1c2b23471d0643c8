//! Dataset ingestion and on-disk formats: IDX files, the synthetic blob
//! fixture, `ACTV` activation dumps and the JSON run manifest.
//!
//! `ACTV` layout (all integers little-endian):
//!
//! | bytes | field |
//! |-------|-------|
//! | 4 | magic `ACTV` |
//! | 4 | version `u32` = 1 |
//! | 4 | `name_len` `u32` |
//! | name_len | layer name, UTF-8 |
//! | 4 | `n_samples` `u32` |
//! | 4 | `feature_dim` `u32` |
//! | 8 | reserved `u64` = 0 |
//! | 4·n·d | `f32` payload, row-major |

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, FormatError, Result};
use crate::tensor::Tensor;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const ACTV_MAGIC: &[u8; 4] = b"ACTV";
pub const ACTV_VERSION: u32 = 1;

/// Size of the fixed part of an `ACTV` header, excluding the name bytes.
pub const ACTV_FIXED_HEADER: u64 = 28;

/// Integer class index per sample.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelArray {
    labels: Vec<u32>,
    n_classes: usize,
}

impl LabelArray {
    pub fn new(labels: Vec<u32>, n_classes: usize) -> Result<Self> {
        if let Some((i, &y)) = labels
            .iter()
            .enumerate()
            .find(|(_, &y)| y as usize >= n_classes)
        {
            return Err(Error::Index(format!(
                "label {y} at sample {i} is outside [0, {n_classes})"
            )));
        }
        Ok(Self { labels, n_classes })
    }

    /// Infers the class count as `max + 1`.
    pub fn from_vec(labels: Vec<u32>) -> Self {
        let n_classes = labels.iter().max().map_or(0, |&m| m as usize + 1);
        Self { labels, n_classes }
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
        }
    }

    pub fn truncate(&mut self, n: usize) {
        self.labels.truncate(n);
    }
}

/// Decoded content of an IDX file.
#[derive(Clone, Debug, PartialEq)]
pub enum IdxData {
    /// `[n, rows·cols]` pixels scaled to `[0, 1]`, plus the image side lengths.
    Images {
        pixels: Tensor<f32>,
        rows: usize,
        cols: usize,
    },
    Labels(LabelArray),
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

pub fn read_idx(path: impl AsRef<Path>) -> Result<IdxData> {
    parse_idx(&read_file(path.as_ref())?)
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxData> {
    if bytes.len() < 8 {
        return Err(FormatError::Length {
            expected: 8,
            found: bytes.len() as u64,
        }
        .into());
    }
    let magic = be_u32(bytes, 0);
    let count = be_u32(bytes, 4) as usize;
    match magic {
        IDX_LABELS_MAGIC => {
            let expected = 8 + count;
            if bytes.len() != expected {
                return Err(FormatError::Length {
                    expected: expected as u64,
                    found: bytes.len() as u64,
                }
                .into());
            }
            let labels: Vec<u32> = bytes[8..].iter().map(|&b| u32::from(b)).collect();
            Ok(IdxData::Labels(LabelArray::from_vec(labels)))
        }
        IDX_IMAGES_MAGIC => {
            if bytes.len() < 16 {
                return Err(FormatError::Length {
                    expected: 16,
                    found: bytes.len() as u64,
                }
                .into());
            }
            let rows = be_u32(bytes, 8) as usize;
            let cols = be_u32(bytes, 12) as usize;
            let expected = 16 + count * rows * cols;
            if bytes.len() != expected {
                return Err(FormatError::Length {
                    expected: expected as u64,
                    found: bytes.len() as u64,
                }
                .into());
            }
            let data = bytes[16..].iter().map(|&b| f32::from(b) / 255.0).collect();
            Ok(IdxData::Images {
                pixels: Tensor::new(vec![count, rows * cols], data)?,
                rows,
                cols,
            })
        }
        other => Err(FormatError::BadMagic {
            expected: format!("{IDX_IMAGES_MAGIC:#010x} or {IDX_LABELS_MAGIC:#010x}"),
            found: format!("{other:#010x}"),
        }
        .into()),
    }
}

pub fn read_idx_images(path: impl AsRef<Path>) -> Result<(Tensor<f32>, usize, usize)> {
    match read_idx(path.as_ref())? {
        IdxData::Images { pixels, rows, cols } => Ok((pixels, rows, cols)),
        IdxData::Labels(_) => Err(FormatError::Invalid(format!(
            "{} holds labels, expected images",
            path.as_ref().display()
        ))
        .into()),
    }
}

pub fn read_idx_labels(path: impl AsRef<Path>) -> Result<LabelArray> {
    match read_idx(path.as_ref())? {
        IdxData::Labels(l) => Ok(l),
        IdxData::Images { .. } => Err(FormatError::Invalid(format!(
            "{} holds images, expected labels",
            path.as_ref().display()
        ))
        .into()),
    }
}

pub fn encode_idx_labels(labels: &[u32]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    for &l in labels {
        let b = u8::try_from(l)
            .map_err(|_| FormatError::Invalid(format!("label {l} does not fit in a byte")))?;
        out.push(b);
    }
    Ok(out)
}

/// Images given as `[0, 1]` floats are quantized to bytes.
pub fn encode_idx_images(pixels: &Tensor<f32>, rows: usize, cols: usize) -> Result<Vec<u8>> {
    if pixels.cols() != rows * cols {
        return Err(Error::Dimension(format!(
            "{} pixels per image cannot be {rows}×{cols}",
            pixels.cols()
        )));
    }
    let mut out = Vec::with_capacity(16 + pixels.len());
    out.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(pixels.rows() as u32).to_be_bytes());
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out.extend_from_slice(&(cols as u32).to_be_bytes());
    out.extend(pixels.data().iter().map(|&v| to_byte(v)));
    Ok(out)
}

pub(crate) fn to_byte(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &LabelArray) -> Result<()> {
    write_bytes(path.as_ref(), &encode_idx_labels(labels.labels())?)
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Gaussian blobs with unit variance, `n_per` samples each, grouped by blob.
/// Centers are pairwise at least `separation` apart.
pub fn make_blobs(
    k: usize,
    n_per: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<(Tensor<f32>, LabelArray)> {
    let (x, labels, _) = make_blobs_with_centers(k, n_per, dim, separation, seed)?;
    Ok((x, labels))
}

pub fn make_blobs_with_centers(
    k: usize,
    n_per: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<(Tensor<f32>, LabelArray, Vec<Vec<f64>>)> {
    if k < 2 {
        return Err(Error::Config("make_blobs needs at least 2 clusters".into()));
    }
    if !(separation > 0.0) || dim == 0 {
        return Err(Error::Config(
            "make_blobs needs positive separation and dimension".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = blob_centers(k, dim, separation, &mut rng)?;
    let mut data = Vec::with_capacity(k * n_per * dim);
    let mut labels = Vec::with_capacity(k * n_per);
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..n_per {
            for &m in center {
                let z: f64 = rng.sample(StandardNormal);
                data.push((m + z) as f32);
            }
            labels.push(c as u32);
        }
    }
    Ok((
        Tensor::new(vec![k * n_per, dim], data)?,
        LabelArray::new(labels, k)?,
        centers,
    ))
}

fn blob_centers(k: usize, dim: usize, separation: f64, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    if dim >= k {
        // Scaled, shuffled axes: every pair sits exactly `separation` apart.
        let scale = separation / std::f64::consts::SQRT_2;
        let mut axes: Vec<usize> = (0..dim).collect();
        axes.shuffle(rng);
        return Ok(axes[..k]
            .iter()
            .map(|&a| {
                let mut c = vec![0.0; dim];
                c[a] = scale;
                c
            })
            .collect());
    }
    let side = separation * k as f64;
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    for _ in 0..100_000 {
        if centers.len() == k {
            break;
        }
        let cand: Vec<f64> = (0..dim).map(|_| rng.random_range(0.0..side)).collect();
        let far = centers.iter().all(|c| {
            c.iter()
                .zip(&cand)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
                >= separation
        });
        if far {
            centers.push(cand);
        }
    }
    if centers.len() < k {
        return Err(Error::Config(format!(
            "could not place {k} centers {separation} apart in {dim} dimensions"
        )));
    }
    Ok(centers)
}

/// One layer's activations for a set of samples.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationDump {
    pub layer_name: String,
    pub n_samples: usize,
    pub feature_dim: usize,
    pub data: Vec<f32>,
}

impl ActivationDump {
    pub fn new(layer_name: impl Into<String>, tensor: &Tensor<f32>) -> Result<Self> {
        let layer_name = layer_name.into();
        if layer_name.is_empty() {
            return Err(Error::Config("activation dump needs a layer name".into()));
        }
        Ok(Self {
            layer_name,
            n_samples: tensor.rows(),
            feature_dim: tensor.cols(),
            data: tensor.data().to_vec(),
        })
    }

    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::new(vec![self.n_samples, self.feature_dim], self.data.clone())
            .expect("dump invariant: data length = n·d")
    }

    /// Total encoded size in bytes.
    pub fn encoded_len(&self) -> u64 {
        ACTV_FIXED_HEADER + self.layer_name.len() as u64 + 4 * (self.n_samples * self.feature_dim) as u64
    }
}

pub fn write_dump_to(w: &mut impl Write, dump: &ActivationDump) -> Result<()> {
    if dump.data.len() != dump.n_samples * dump.feature_dim {
        return Err(Error::Dimension(format!(
            "dump {} claims {}×{} but holds {} values",
            dump.layer_name,
            dump.n_samples,
            dump.feature_dim,
            dump.data.len()
        )));
    }
    if let Some(i) = dump.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::Degenerate(format!(
            "dump {} has a non-finite value at {i}",
            dump.layer_name
        )));
    }
    let io = |e| Error::io("<actv stream>", e);
    let mut header = Vec::with_capacity(ACTV_FIXED_HEADER as usize + dump.layer_name.len());
    header.extend_from_slice(ACTV_MAGIC);
    header.extend_from_slice(&ACTV_VERSION.to_le_bytes());
    header.extend_from_slice(&(dump.layer_name.len() as u32).to_le_bytes());
    header.extend_from_slice(dump.layer_name.as_bytes());
    header.extend_from_slice(&(dump.n_samples as u32).to_le_bytes());
    header.extend_from_slice(&(dump.feature_dim as u32).to_le_bytes());
    header.extend_from_slice(&0u64.to_le_bytes());
    w.write_all(&header).map_err(io)?;
    let mut payload = Vec::with_capacity(dump.data.len() * 4);
    for v in &dump.data {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&payload).map_err(io)
}

/// Header fields of an `ACTV` record.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DumpHeader {
    pub layer_name: String,
    pub n_samples: usize,
    pub feature_dim: usize,
}

fn read_exact_or_len(r: &mut impl Read, buf: &mut [u8], consumed: u64) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Format(FormatError::Length {
                expected: consumed + buf.len() as u64,
                found: consumed,
            })
        } else {
            Error::io("<actv stream>", e)
        }
    })
}

pub fn read_dump_header(r: &mut impl Read) -> Result<DumpHeader> {
    let mut fixed = [0u8; 12];
    read_exact_or_len(r, &mut fixed, 0)?;
    if &fixed[0..4] != ACTV_MAGIC {
        return Err(FormatError::BadMagic {
            expected: "ACTV".into(),
            found: format!("{:02x?}", &fixed[0..4]),
        }
        .into());
    }
    let version = u32::from_le_bytes(fixed[4..8].try_into().expect("4 bytes"));
    if version != ACTV_VERSION {
        return Err(FormatError::Version {
            expected: ACTV_VERSION,
            found: version,
        }
        .into());
    }
    let name_len = u32::from_le_bytes(fixed[8..12].try_into().expect("4 bytes")) as usize;
    let mut name = vec![0u8; name_len];
    read_exact_or_len(r, &mut name, 12)?;
    let layer_name = String::from_utf8(name)
        .map_err(|_| FormatError::Invalid("layer name is not UTF-8".into()))?;
    let mut rest = [0u8; 16];
    read_exact_or_len(r, &mut rest, 12 + name_len as u64)?;
    let n_samples = u32::from_le_bytes(rest[0..4].try_into().expect("4 bytes")) as usize;
    let feature_dim = u32::from_le_bytes(rest[4..8].try_into().expect("4 bytes")) as usize;
    let reserved = u64::from_le_bytes(rest[8..16].try_into().expect("8 bytes"));
    if reserved != 0 {
        return Err(FormatError::Invalid(format!("reserved field is {reserved}, expected 0")).into());
    }
    Ok(DumpHeader {
        layer_name,
        n_samples,
        feature_dim,
    })
}

pub fn read_dump_from(r: &mut impl Read) -> Result<ActivationDump> {
    let header = read_dump_header(r)?;
    let n = header.n_samples * header.feature_dim;
    let mut payload = vec![0u8; n * 4];
    let consumed = ACTV_FIXED_HEADER + header.layer_name.len() as u64;
    read_exact_or_len(r, &mut payload, consumed)?;
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok(ActivationDump {
        layer_name: header.layer_name,
        n_samples: header.n_samples,
        feature_dim: header.feature_dim,
        data,
    })
}

pub fn write_dump(dump: &ActivationDump, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::with_capacity(dump.encoded_len() as usize);
    write_dump_to(&mut buf, dump)?;
    write_bytes(path.as_ref(), &buf)
}

pub fn read_dump(path: impl AsRef<Path>) -> Result<ActivationDump> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    let mut cursor = bytes.as_slice();
    let dump = read_dump_from(&mut cursor)?;
    if !cursor.is_empty() {
        return Err(FormatError::Length {
            expected: dump.encoded_len(),
            found: bytes.len() as u64,
        }
        .into());
    }
    Ok(dump)
}

/// Reads only the header of a dump file.
pub fn peek_dump(path: impl AsRef<Path>) -> Result<DumpHeader> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dump_header(&mut BufReader::new(f))
}

/// Writes named tensors as consecutive `ACTV` records. Tensors are stored
/// as `[rows, cols]`; 1-D tensors as a single row.
pub fn write_tensor_bundle(path: impl AsRef<Path>, tensors: &[(String, Tensor<f32>)]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for (name, t) in tensors {
        let t2 = if t.shape().len() == 1 {
            t.clone().reshape(vec![1, t.len()])?
        } else {
            t.clone()
        };
        write_dump_to(&mut buf, &ActivationDump::new(name.clone(), &t2)?)?;
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    w.write_all(&buf).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_tensor_bundle(path: impl AsRef<Path>) -> Result<Vec<(String, Tensor<f32>)>> {
    let bytes = read_file(path.as_ref())?;
    let mut cursor = bytes.as_slice();
    let mut out = Vec::new();
    while !cursor.is_empty() {
        let d = read_dump_from(&mut cursor)?;
        let t = d.to_tensor();
        out.push((d.layer_name, t));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitInfo {
    pub count: usize,
}

/// Index of everything a pipeline run has written, keyed by logical name.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub splits: BTreeMap<String, SplitInfo>,
    pub classes: Vec<String>,
    /// Logical name → path relative to the manifest directory.
    pub files: BTreeMap<String, String>,
    pub baseline_checksum: String,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if self.classes.len() < 2 {
            return Err(Error::Config(format!(
                "manifest lists {} classes; at least 2 are required",
                self.classes.len()
            )));
        }
        Ok(())
    }

    /// Checks that every referenced dump's sample count matches its split.
    /// Dumps are recognized by the `<split>/` prefix of their logical name.
    pub fn check_counts(&self, root: &Path) -> Result<()> {
        for (name, rel) in &self.files {
            let Some((split, _)) = name.split_once('/') else {
                continue;
            };
            let Some(info) = self.splits.get(split) else {
                continue;
            };
            if rel.ends_with(".actv") {
                let h = peek_dump(root.join(rel))?;
                if h.n_samples != info.count {
                    return Err(Error::Alignment(format!(
                        "{rel} has {} samples but split {split} has {}",
                        h.n_samples, info.count
                    )));
                }
            } else if rel.ends_with(".idx") {
                let l = read_idx_labels(root.join(rel))?;
                if l.len() != info.count {
                    return Err(Error::Alignment(format!(
                        "{rel} has {} labels but split {split} has {}",
                        l.len(),
                        info.count
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let m: Self = read_json(path)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path, self)
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::json(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path: PathBuf = path.as_ref().to_path_buf();
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::json(&path, e))?;
    s.push('\n');
    write_bytes(&path, s.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn idx_images_scale_endpoints() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&[0, 255, 255, 0, 0, 0, 255, 255]);
        let IdxData::Images { pixels, rows, cols } = parse_idx(&bytes).unwrap() else {
            panic!("expected images");
        };
        assert_eq!((rows, cols), (2, 2));
        assert_eq!(pixels.shape(), &[2, 4]);
        assert_eq!(pixels.data(), &[0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn idx_labels_roundtrip() {
        let bytes = encode_idx_labels(&[3, 1, 4]).unwrap();
        let IdxData::Labels(l) = parse_idx(&bytes).unwrap() else {
            panic!("expected labels");
        };
        assert_eq!(l.labels(), &[3, 1, 4]);
    }

    #[test]
    fn idx_errors() {
        let mut bytes = encode_idx_labels(&[1, 2]).unwrap();
        bytes[3] = 0x05;
        match parse_idx(&bytes) {
            Err(Error::Format(FormatError::BadMagic { found, .. })) => {
                assert_eq!(found, "0x00000805")
            }
            other => panic!("unexpected {other:?}"),
        }
        let mut bytes = encode_idx_labels(&[1, 2, 3]).unwrap();
        bytes.pop();
        assert!(matches!(
            parse_idx(&bytes),
            Err(Error::Format(FormatError::Length { expected: 11, found: 10 }))
        ));
    }

    #[test]
    fn blobs_are_deterministic_and_separated() {
        let (a, la) = make_blobs(4, 20, 6, 12.0, 3).unwrap();
        let (b, lb) = make_blobs(4, 20, 6, 12.0, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
        let (_, _, centers) = make_blobs_with_centers(5, 1, 3, 4.0, 9).unwrap();
        for i in 0..5 {
            for j in 0..i {
                let d: f64 = centers[i]
                    .iter()
                    .zip(&centers[j])
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt();
                assert!(d >= 4.0);
            }
        }
    }

    #[test]
    fn far_blobs_are_nearest_center_separable() {
        let (x, labels, centers) = make_blobs_with_centers(2, 200, 5, 100.0, 11).unwrap();
        for (row, &y) in x.iter_rows().zip(labels.labels()) {
            let d: Vec<f64> = centers
                .iter()
                .map(|c| c.iter().zip(row).map(|(a, &b)| (a - f64::from(b)).powi(2)).sum())
                .collect();
            let nearest = if d[0] <= d[1] { 0 } else { 1 };
            assert_eq!(nearest, y as usize);
        }
    }

    #[test]
    fn blob_means_are_statistically_close() {
        let n_per = 400;
        let (x, labels, centers) = make_blobs_with_centers(3, n_per, 4, 10.0, 21).unwrap();
        // unit variance per coordinate: standard error 1/√n
        let tol = 5.0 / (n_per as f64).sqrt();
        for (c, center) in centers.iter().enumerate() {
            let mut mean = [0.0f64; 4];
            for (row, &y) in x.iter_rows().zip(labels.labels()) {
                if y as usize == c {
                    for (m, &v) in mean.iter_mut().zip(row) {
                        *m += f64::from(v) / n_per as f64;
                    }
                }
            }
            for (m, c) in mean.iter().zip(center) {
                assert!((m - c).abs() < tol, "mean {m} vs center {c}");
            }
        }
    }

    #[test]
    fn dump_errors_are_distinct() {
        let t = Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let dump = ActivationDump::new("layer1", &t).unwrap();
        let mut buf = Vec::new();
        write_dump_to(&mut buf, &dump).unwrap();
        assert_eq!(buf.len() as u64, dump.encoded_len());

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(
            read_dump_from(&mut bad.as_slice()),
            Err(Error::Format(FormatError::BadMagic { .. }))
        ));
        let mut bad = buf.clone();
        bad[4] = 2;
        assert!(matches!(
            read_dump_from(&mut bad.as_slice()),
            Err(Error::Format(FormatError::Version { found: 2, .. }))
        ));
        let bad = &buf[..buf.len() - 2];
        assert!(matches!(
            read_dump_from(&mut &bad[..]),
            Err(Error::Format(FormatError::Length { .. }))
        ));
    }

    #[test]
    fn manifest_needs_two_classes() {
        let m = DatasetManifest {
            splits: BTreeMap::new(),
            classes: vec!["only".into()],
            files: BTreeMap::new(),
            baseline_checksum: String::new(),
        };
        assert!(m.validate().is_err());
    }
}
