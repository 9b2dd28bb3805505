//! On-disk dataset formats: IDX (MNIST), the USPS text layout, and a small
//! binary container for arbitrary in-memory datasets.
//!
//! Nothing here downloads. The shipped MNIST subset lives under
//! `data/mnist-subset` and is checked against [`MNIST_SUBSET_SHA256`].

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use archsel_core::data::{DataError, Dataset, SplitTag};
use archsel_core::Tensor;
use sha2::{Digest, Sha256};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const FIXTURE_MAGIC: [u8; 8] = *b"ARCHSEL1";
pub const USPS_SIDE: usize = 16;
pub const USPS_CLASSES: usize = 10;
/// Training-set size the USPS loader compares against.
pub const USPS_REFERENCE_TRAIN: usize = 10_000;

/// File names and SHA-256 digests of the shipped MNIST subset.
pub const MNIST_SUBSET_SHA256: [(&str, &str); 4] = [
    ("train-images-idx3-ubyte", "e13222a422d00677a4f406a4422eed238403006a72c790925b87cc506bcb7044"),
    ("train-labels-idx1-ubyte", "c3cf14b4e070fa60056ab644e21a036fccd3bb299de4835aeabd6290a70bad00"),
    ("val-images-idx3-ubyte", "8a53371836e983f02b803b2bc4b95e56b25b3d6fb3eb48d16a9c3733f21bdd9a"),
    ("val-labels-idx1-ubyte", "65151d97a8a6cc7a75bc9c83025a6d13aa728828b632294de6ea39221084cdf5"),
];

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: bad magic 0x{found:08x}, expected 0x{expected:08x}", path.display())]
    BadMagic { path: PathBuf, expected: u32, found: u32 },
    #[error("{}: truncated, expected {expected} bytes, found {found}", path.display())]
    TruncatedFile { path: PathBuf, expected: u64, found: u64 },
    #[error("{}: {found} bytes but the header declares {expected}", path.display())]
    TrailingData { path: PathBuf, expected: u64, found: u64 },
    #[error("{images} images but {labels} labels")]
    DimensionMismatch { images: usize, labels: usize },
    #[error("{}:{line}: {message}", path.display())]
    ParseError { path: PathBuf, line: usize, message: String },
    #[error("{}: checksum mismatch, expected {expected}, found {found}", path.display())]
    Checksum { path: PathBuf, expected: String, found: String },
    #[error("{0}")]
    Data(#[from] DataError),
}

/// Non-fatal findings of a loader.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LoadWarning {
    CountMismatch { expected: usize, found: usize },
}

impl std::fmt::Display for LoadWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LoadWarning::CountMismatch { expected, found } => {
                write!(f, "loaded {found} samples, reference count is {expected}")
            }
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, LoadError> {
    fs::read(path).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().unwrap())
}

fn check_len(path: &Path, bytes: &[u8], expected: u64) -> Result<(), LoadError> {
    let found = bytes.len() as u64;
    if found < expected {
        return Err(LoadError::TruncatedFile {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    if found > expected {
        return Err(LoadError::TrailingData {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

fn idx_header(path: &Path, bytes: &[u8], magic: u32, dims: usize) -> Result<Vec<usize>, LoadError> {
    let header = 4 + 4 * dims as u64;
    if (bytes.len() as u64) < 4 {
        return Err(LoadError::TruncatedFile {
            path: path.to_path_buf(),
            expected: header,
            found: bytes.len() as u64,
        });
    }
    let found = be_u32(bytes, 0);
    if found != magic {
        return Err(LoadError::BadMagic {
            path: path.to_path_buf(),
            expected: magic,
            found,
        });
    }
    if (bytes.len() as u64) < header {
        return Err(LoadError::TruncatedFile {
            path: path.to_path_buf(),
            expected: header,
            found: bytes.len() as u64,
        });
    }
    let shape: Vec<usize> = (0..dims).map(|i| be_u32(bytes, 4 + 4 * i) as usize).collect();
    let body: u64 = shape.iter().map(|&d| d as u64).product();
    check_len(path, bytes, header + body)?;
    Ok(shape)
}

/// Reads an IDX image/label pair. Pixels are unsigned bytes scaled by 1/255
/// into one channel. With `num_classes = None` the class count is the
/// largest label plus one.
pub fn load_idx(
    images_path: &Path,
    labels_path: &Path,
    name: &str,
    split: SplitTag,
    num_classes: Option<usize>,
) -> Result<Dataset, LoadError> {
    let img = read(images_path)?;
    let shape = idx_header(images_path, &img, IDX_IMAGES_MAGIC, 3)?;
    let lab = read(labels_path)?;
    let lshape = idx_header(labels_path, &lab, IDX_LABELS_MAGIC, 1)?;
    let (n, h, w) = (shape[0], shape[1], shape[2]);
    if n != lshape[0] {
        return Err(LoadError::DimensionMismatch {
            images: n,
            labels: lshape[0],
        });
    }
    let pixels: Vec<f64> = img[16..].iter().map(|&b| b as f64 / 255.0).collect();
    let labels: Vec<usize> = lab[8..].iter().map(|&b| b as usize).collect();
    let k = num_classes.unwrap_or_else(|| labels.iter().max().map_or(1, |m| m + 1));
    let images = Tensor::new(vec![n, 1, h, w], pixels).map_err(|e| DataError::BadShape(format!("{e:?}")))?;
    Ok(Dataset::new(name, split, images, labels, k)?)
}

/// Writes `ds` as an IDX pair. Only single-channel data whose values are
/// multiples of 1/255 in [0, 1] survive the byte quantization exactly.
pub fn write_idx(ds: &Dataset, images_path: &Path, labels_path: &Path) -> Result<(), LoadError> {
    let [c, h, w] = ds.sample_shape();
    if c != 1 {
        return Err(DataError::BadShape(format!("IDX holds one channel, dataset has {c}")).into());
    }
    let mut img = Vec::with_capacity(16 + ds.images().len());
    img.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    for d in [ds.len(), h, w] {
        img.extend_from_slice(&(d as u32).to_be_bytes());
    }
    img.extend(ds.images().data().iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    let mut lab = Vec::with_capacity(8 + ds.len());
    lab.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    for &l in ds.labels() {
        if l > 255 {
            return Err(DataError::InvalidArgument(format!("label {l} does not fit in a byte")).into());
        }
        lab.push(l as u8);
    }
    write_file(images_path, &img)?;
    write_file(labels_path, &lab)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), LoadError> {
    let io = |source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(bytes).map_err(io)
}

/// Reads the USPS text layout: one sample per line, a digit label followed
/// by 256 grey values of a 16×16 image in row-major order, separated by
/// whitespace. Blank lines are skipped. The label may be written as a
/// float (`6.0000`) but must be an integer in 0..=9.
///
/// Grey values are mapped to [0, 1] according to the file's range: if any
/// value is negative the file is read as [-1, 1] and mapped by `(v+1)/2`;
/// otherwise if any value exceeds 1 it is read as [0, 255]; otherwise it is
/// taken as already in [0, 1].
///
/// With `expected = Some(n)` a different sample count yields a
/// [`LoadWarning::CountMismatch`], not an error.
pub fn load_usps(
    path: &Path,
    name: &str,
    split: SplitTag,
    expected: Option<usize>,
) -> Result<(Dataset, Vec<LoadWarning>), LoadError> {
    let bytes = read(path)?;
    let text = String::from_utf8(bytes).map_err(|e| LoadError::ParseError {
        path: path.to_path_buf(),
        line: 0,
        message: format!("not UTF-8: {e}"),
    })?;
    let pe = |line: usize, message: String| LoadError::ParseError {
        path: path.to_path_buf(),
        line,
        message,
    };
    let plane = USPS_SIDE * USPS_SIDE;
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let mut fields = line.split_whitespace();
        let Some(first) = fields.next() else { continue };
        let label: f64 = first.parse().map_err(|_| pe(line_no, format!("bad label {first:?}")))?;
        if label.fract() != 0.0 || !(0.0..USPS_CLASSES as f64).contains(&label) {
            return Err(pe(line_no, format!("label {first} is not a digit")));
        }
        labels.push(label as usize);
        let before = values.len();
        for f in fields {
            let v: f64 = f.parse().map_err(|_| pe(line_no, format!("bad value {f:?}")))?;
            if !v.is_finite() {
                return Err(pe(line_no, format!("non-finite value {f:?}")));
            }
            values.push(v);
        }
        let got = values.len() - before;
        if got != plane {
            return Err(pe(line_no, format!("expected {plane} values after the label, found {got}")));
        }
    }
    if labels.is_empty() {
        return Err(pe(1, "no samples".into()));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let map: fn(f64) -> f64 = if min < 0.0 {
        if min < -1.0 || max > 1.0 {
            return Err(pe(0, format!("values span [{min}, {max}], not a known range")));
        }
        |v| (v + 1.0) / 2.0
    } else if max > 1.0 {
        if max > 255.0 {
            return Err(pe(0, format!("values span [{min}, {max}], not a known range")));
        }
        |v| v / 255.0
    } else {
        |v| v
    };
    values.iter_mut().for_each(|v| *v = map(*v));
    let n = labels.len();
    let mut warnings = Vec::new();
    if let Some(e) = expected.filter(|&e| e != n) {
        warnings.push(LoadWarning::CountMismatch { expected: e, found: n });
    }
    let images = Tensor::new(vec![n, 1, USPS_SIDE, USPS_SIDE], values).expect("counted above");
    Ok((Dataset::new(name, split, images, labels, USPS_CLASSES)?, warnings))
}

/// Binary container for any dataset, all integers little-endian:
///
/// | offset | size  | field                        |
/// |--------|-------|------------------------------|
/// | 0      | 8     | magic `ARCHSEL1`             |
/// | 8      | 4     | K (classes)                  |
/// | 12     | 4     | C                            |
/// | 16     | 4     | H                            |
/// | 20     | 4     | W                            |
/// | 24     | 8     | N                            |
/// | 32     | 4·N   | labels, u32                  |
/// | …      | 8·NCHW| pixels, f64, sample-major    |
///
/// The file is exactly that long; values round-trip bit for bit.
pub fn write_fixture(ds: &Dataset, path: &Path) -> Result<(), LoadError> {
    let [c, h, w] = ds.sample_shape();
    let mut out = Vec::with_capacity(32 + 4 * ds.len() + 8 * ds.images().len());
    out.extend_from_slice(&FIXTURE_MAGIC);
    for d in [ds.num_classes(), c, h, w] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&(ds.len() as u64).to_le_bytes());
    for &l in ds.labels() {
        out.extend_from_slice(&(l as u32).to_le_bytes());
    }
    for v in ds.images().data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    write_file(path, &out)
}

pub fn load_fixture(path: &Path, name: &str, split: SplitTag) -> Result<Dataset, LoadError> {
    let bytes = read(path)?;
    let found = bytes.len() as u64;
    if found < 32 {
        return Err(LoadError::TruncatedFile {
            path: path.to_path_buf(),
            expected: 32,
            found,
        });
    }
    if bytes[..8] != FIXTURE_MAGIC {
        return Err(LoadError::BadMagic {
            path: path.to_path_buf(),
            expected: u32::from_be_bytes(FIXTURE_MAGIC[..4].try_into().unwrap()),
            found: u32::from_be_bytes(bytes[..4].try_into().unwrap()),
        });
    }
    let le32 = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as u64;
    let (k, c, h, w) = (le32(8), le32(12), le32(16), le32(20));
    let n = u64::from_le_bytes(bytes[24..32].try_into().unwrap());
    let expected = n
        .checked_mul(c * h * w)
        .and_then(|p| p.checked_mul(8))
        .and_then(|p| p.checked_add(32 + 4 * n))
        .unwrap_or(u64::MAX);
    check_len(path, &bytes, expected)?;
    let n = n as usize;
    let labels: Vec<usize> = bytes[32..32 + 4 * n]
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()) as usize)
        .collect();
    let pixels: Vec<f64> = bytes[32 + 4 * n..]
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    let images = Tensor::new(vec![n, c as usize, h as usize, w as usize], pixels).expect("length checked");
    Ok(Dataset::new(name, split, images, labels, k as usize)?)
}

pub fn sha256_file(path: &Path) -> Result<String, LoadError> {
    let bytes = read(path)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Checks every file of the shipped MNIST subset against its digest.
pub fn verify_mnist_subset(dir: &Path) -> Result<(), LoadError> {
    for (file, digest) in MNIST_SUBSET_SHA256 {
        let path = dir.join(file);
        let found = sha256_file(&path)?;
        if found != digest {
            return Err(LoadError::Checksum {
                path,
                expected: digest.into(),
                found,
            });
        }
    }
    Ok(())
}

/// Train and validation sets of an MNIST-style directory holding
/// `{train,val}-{images-idx3,labels-idx1}-ubyte`.
pub fn load_idx_dir(dir: &Path, name: &str) -> Result<(Dataset, Dataset), LoadError> {
    let train = load_idx(
        &dir.join("train-images-idx3-ubyte"),
        &dir.join("train-labels-idx1-ubyte"),
        name,
        SplitTag::Train,
        Some(10),
    )?;
    let val = load_idx(
        &dir.join("val-images-idx3-ubyte"),
        &dir.join("val-labels-idx1-ubyte"),
        name,
        SplitTag::Validation,
        Some(10),
    )?;
    Ok((train, val))
}
