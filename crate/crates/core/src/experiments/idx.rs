use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::diffcore::Tensor;
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Images scaled to `[0, 1]`, one flattened image per row.
#[derive(Clone, Debug, PartialEq)]
pub struct MnistSplit {
    pub images: Tensor,
    pub labels: Vec<usize>,
}

impl MnistSplit {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// The first `n` items.
    pub fn head(&self, n: usize) -> MnistSplit {
        let n = n.min(self.len());
        let c = self.images.cols();
        MnistSplit {
            images: Tensor::matrix(n, c, self.images.data()[..n * c].to_vec()).expect("prefix of a valid matrix"),
            labels: self.labels[..n].to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MnistDataset {
    pub train: MnistSplit,
    pub test: MnistSplit,
}

/// Dimensions and payload of a `u8` IDX file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxArray {
    pub magic: u32,
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

fn format_err<T>(path: &Path, offset: u64, msg: impl Into<String>) -> Result<T> {
    Err(Error::Format {
        path: path.to_path_buf(),
        offset,
        msg: msg.into(),
    })
}

/// File contents, transparently gunzipped when they start with the gzip magic.
pub fn read_maybe_gzip(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        if let Err(e) = GzDecoder::new(&raw[..]).read_to_end(&mut out) {
            return format_err(path, 0, format!("gzip stream: {e}"));
        }
        Ok(out)
    } else {
        Ok(raw)
    }
}

pub fn parse_idx(path: &Path, bytes: &[u8], expect_magic: u32) -> Result<IdxArray> {
    if bytes.len() < 4 {
        return format_err(
            path,
            0,
            format!("expected at least 4 header bytes, file has {}", bytes.len()),
        );
    }
    let magic = u32::from_be_bytes(bytes[..4].try_into().expect("4 bytes"));
    if magic != expect_magic {
        return format_err(
            path,
            0,
            format!("bad magic 0x{magic:08x}, expected 0x{expect_magic:08x}"),
        );
    }
    let ndims = (magic & 0xff) as usize;
    let header = 4 + 4 * ndims;
    if bytes.len() < header {
        return format_err(
            path,
            bytes.len() as u64,
            format!("truncated header: expected {header} bytes, file has {}", bytes.len()),
        );
    }
    let dims: Vec<usize> = (0..ndims)
        .map(|i| u32::from_be_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes")) as usize)
        .collect();
    let payload: usize = dims.iter().product();
    let expected = header + payload;
    if bytes.len() != expected {
        let what = if bytes.len() < expected {
            "truncated"
        } else {
            "trailing data"
        };
        return format_err(
            path,
            bytes.len().min(expected) as u64,
            format!("{what}: expected {expected} bytes, file has {}", bytes.len()),
        );
    }
    Ok(IdxArray {
        magic,
        dims,
        data: bytes[header..].to_vec(),
    })
}

pub fn read_idx(path: &Path, expect_magic: u32) -> Result<IdxArray> {
    parse_idx(path, &read_maybe_gzip(path)?, expect_magic)
}

pub fn encode_idx(magic: u32, dims: &[usize], data: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * dims.len() + data.len());
    out.extend_from_slice(&magic.to_be_bytes());
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(data);
    out
}

/// Write an IDX file; gzip-compressed when `gzip` is set.
pub fn write_idx(path: &Path, magic: u32, dims: &[usize], data: &[u8], gzip: bool) -> Result<()> {
    let bytes = encode_idx(magic, dims, data);
    if gzip {
        let mut enc = GzEncoder::new(fs::File::create(path)?, Compression::default());
        enc.write_all(&bytes)?;
        enc.finish()?;
    } else {
        fs::write(path, bytes)?;
    }
    Ok(())
}

/// Load an image file (`[n, rows, cols]`) and a label file (`[n]`) into a split.
pub fn load_split(images: &Path, labels: &Path) -> Result<MnistSplit> {
    let img = read_idx(images, IMAGES_MAGIC)?;
    let lab = read_idx(labels, LABELS_MAGIC)?;
    let n = img.dims[0];
    if lab.dims[0] != n {
        return format_err(labels, 4, format!("{} labels for {n} images", lab.dims[0]));
    }
    if let Some(i) = lab.data.iter().position(|&l| l > 9) {
        return format_err(labels, 8 + i as u64, format!("label {} out of range 0..9", lab.data[i]));
    }
    let c = img.dims[1] * img.dims[2];
    let pixels = img.data.iter().map(|&p| p as f64 / 255.0).collect();
    Ok(MnistSplit {
        images: Tensor::matrix(n, c, pixels)?,
        labels: lab.data.iter().map(|&l| l as usize).collect(),
    })
}

/// Canonical file names inside `dir`, with or without a `.gz` suffix.
pub fn mnist_paths(dir: &Path) -> Result<[PathBuf; 4]> {
    let names = [
        "train-images-idx3-ubyte",
        "train-labels-idx1-ubyte",
        "t10k-images-idx3-ubyte",
        "t10k-labels-idx1-ubyte",
    ];
    let mut out: [PathBuf; 4] = Default::default();
    for (slot, name) in out.iter_mut().zip(names) {
        let plain = dir.join(name);
        let gz = dir.join(format!("{name}.gz"));
        *slot = if plain.exists() {
            plain
        } else if gz.exists() {
            gz
        } else {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("{} not found (also tried .gz)", plain.display()),
            )));
        };
    }
    Ok(out)
}

/// Load `[train images, train labels, test images, test labels]`.
pub fn load_mnist_idx(paths: &[PathBuf; 4]) -> Result<MnistDataset> {
    Ok(MnistDataset {
        train: load_split(&paths[0], &paths[1])?,
        test: load_split(&paths[2], &paths[3])?,
    })
}
