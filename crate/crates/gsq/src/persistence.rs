//! Bit-exact codebook/tensor/index serialization and image-patch ingestion.
//!
//! All integers and floats are little-endian. Codebook payloads are stored
//! group-major, index-major, component-minor, matching the contiguous channel
//! split used by the quantizer.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::batch::VectorBatch;
use crate::codebook::{Codebook, InitKind};
use crate::config::QuantizerConfig;
use crate::error::{Error, Result};

pub const CODEBOOK_MAGIC: &[u8; 4] = b"GSQC";
pub const TENSOR_MAGIC: &[u8; 4] = b"GSQT";
pub const FORMAT_VERSION: u32 = 1;

/// CRC-32 (IEEE 802.3, reflected).
pub fn crc32(data: &[u8]) -> u32 {
    let mut crc = 0xffff_ffffu32;
    for &byte in data {
        crc ^= byte as u32;
        for _ in 0..8 {
            let mask = (crc & 1).wrapping_neg();
            crc = (crc >> 1) ^ (0xedb8_8320 & mask);
        }
    }
    !crc
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::CorruptFile("unexpected end of file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes(1)?[0])
    }
}

fn init_kind_tag(kind: InitKind) -> u8 {
    match kind {
        InitKind::SphericalGaussian => 0,
        InitKind::UniformInterval => 1,
        InitKind::Explicit => 2,
    }
}

fn init_kind_from_tag(tag: u8) -> Result<InitKind> {
    match tag {
        0 => Ok(InitKind::SphericalGaussian),
        1 => Ok(InitKind::UniformInterval),
        2 => Ok(InitKind::Explicit),
        t => Err(Error::CorruptFile(format!("unknown init kind tag {t}"))),
    }
}

pub fn save_codebook(codebook: &Codebook, config: &QuantizerConfig, path: &Path) -> Result<()> {
    config.validate()?;
    codebook.matches(config)?;
    let mut out = Vec::new();
    out.extend_from_slice(CODEBOOK_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(config.latent_dim as u32).to_le_bytes());
    out.extend_from_slice(&(config.groups as u32).to_le_bytes());
    out.extend_from_slice(&(config.group_dim as u32).to_le_bytes());
    out.extend_from_slice(&(config.vocab as u32).to_le_bytes());
    let flags = (config.shared_codebook as u8)
        | (config.l2_lookup as u8) << 1
        | (config.fixed_codebook as u8) << 2;
    out.push(flags);
    out.push(init_kind_tag(codebook.init_kind()));
    match &config.finite_levels {
        Some(levels) => {
            out.extend_from_slice(&(levels.len() as u32).to_le_bytes());
            for &l in levels {
                out.extend_from_slice(&(l as u32).to_le_bytes());
            }
        }
        None => out.extend_from_slice(&0u32.to_le_bytes()),
    }
    let mut payload = Vec::with_capacity(codebook.num_tables() * config.vocab * config.group_dim * 4);
    for table in codebook.tables() {
        for &v in table {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc32(&payload).to_le_bytes());
    let mut f = fs::File::create(path)?;
    f.write_all(&out)?;
    Ok(())
}

pub fn load_codebook(path: &Path) -> Result<(Codebook, QuantizerConfig)> {
    let buf = fs::read(path)?;
    let mut r = Reader::new(&buf);
    if r.bytes(4)? != CODEBOOK_MAGIC {
        return Err(Error::CorruptFile("bad magic".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch { found: version, expected: FORMAT_VERSION });
    }
    let latent_dim = r.u32()? as usize;
    let groups = r.u32()? as usize;
    let group_dim = r.u32()? as usize;
    let vocab = r.u32()? as usize;
    let flags = r.u8()?;
    let init_kind = init_kind_from_tag(r.u8()?)?;
    let levels_count = r.u32()? as usize;
    let finite_levels = if levels_count > 0 {
        let mut levels = Vec::with_capacity(levels_count);
        for _ in 0..levels_count {
            levels.push(r.u32()? as usize);
        }
        Some(levels)
    } else {
        None
    };
    let config = QuantizerConfig {
        latent_dim,
        groups,
        group_dim,
        vocab,
        shared_codebook: flags & 1 != 0,
        l2_lookup: flags & 2 != 0,
        finite_levels,
        fixed_codebook: flags & 4 != 0,
    };
    config
        .validate()
        .map_err(|e| Error::CorruptFile(format!("invalid stored config: {e}")))?;

    let num_tables = config.num_tables();
    let payload_len = num_tables * vocab * group_dim * 4;
    let payload = r.bytes(payload_len)?;
    let stored_crc = r.u32()?;
    if r.pos != buf.len() {
        return Err(Error::CorruptFile("trailing bytes".into()));
    }
    if crc32(payload) != stored_crc {
        return Err(Error::ChecksumMismatch);
    }
    let mut tables = Vec::with_capacity(num_tables);
    let mut it = payload.chunks_exact(4);
    for _ in 0..num_tables {
        let table: Vec<f32> = (&mut it)
            .take(vocab * group_dim)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        tables.push(table);
    }
    let codebook = Codebook::from_tables(group_dim, vocab, tables, init_kind)
        .map_err(|e| Error::CorruptFile(format!("invalid stored codebook: {e}")))?;
    Ok((codebook, config))
}

/// Writes a self-describing float32 tensor (.gsqt): magic, version, endian
/// tag, dims, payload, checksum.
pub fn save_tensor(path: &Path, dims: &[usize], data: &[f32]) -> Result<()> {
    let expected: usize = dims.iter().product();
    if expected != data.len() {
        return Err(Error::DimensionMismatch { expected, actual: data.len() });
    }
    let mut out = Vec::new();
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(1); // little-endian tag
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    let mut payload = Vec::with_capacity(data.len() * 4);
    for &v in data {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc32(&payload).to_le_bytes());
    fs::write(path, out)?;
    Ok(())
}

pub fn load_tensor(path: &Path) -> Result<(Vec<usize>, Vec<f32>)> {
    let buf = fs::read(path)?;
    let mut r = Reader::new(&buf);
    if r.bytes(4)? != TENSOR_MAGIC {
        return Err(Error::CorruptFile("bad magic".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch { found: version, expected: FORMAT_VERSION });
    }
    let endian = r.u8()?;
    if endian != 1 {
        return Err(Error::CorruptFile(format!("unsupported endian tag {endian}")));
    }
    let ndims = r.u32()? as usize;
    let mut dims = Vec::with_capacity(ndims);
    for _ in 0..ndims {
        dims.push(r.u32()? as usize);
    }
    let count: usize = dims.iter().product();
    let payload = r.bytes(count * 4)?;
    let stored_crc = r.u32()?;
    if crc32(payload) != stored_crc {
        return Err(Error::ChecksumMismatch);
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok((dims, data))
}

/// Writes an N x G code-index matrix: header (N, G, V) then row-major u32,
/// all little-endian.
pub fn save_indices(path: &Path, indices: &[u32], groups: usize, vocab: usize) -> Result<()> {
    if groups == 0 || indices.len() % groups != 0 {
        return Err(Error::DimensionMismatch { expected: groups, actual: indices.len() });
    }
    let n = indices.len() / groups;
    let mut out = Vec::with_capacity(12 + indices.len() * 4);
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(groups as u32).to_le_bytes());
    out.extend_from_slice(&(vocab as u32).to_le_bytes());
    for &i in indices {
        out.extend_from_slice(&i.to_le_bytes());
    }
    fs::write(path, out)?;
    Ok(())
}

/// Loads an index matrix, rejecting any index >= the stored vocabulary.
pub fn load_indices(path: &Path) -> Result<(Vec<u32>, usize, usize)> {
    let buf = fs::read(path)?;
    let mut r = Reader::new(&buf);
    let n = r.u32()? as usize;
    let groups = r.u32()? as usize;
    let vocab = r.u32()? as usize;
    let payload = r.bytes(n * groups * 4)?;
    if r.pos != buf.len() {
        return Err(Error::CorruptFile("trailing bytes".into()));
    }
    let indices: Vec<u32> = payload
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    if let Some(&bad) = indices.iter().find(|&&i| i as usize >= vocab) {
        return Err(Error::IndexOutOfRange { index: bad, vocab });
    }
    Ok((indices, groups, vocab))
}

/// An 8-bit interleaved RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

fn skip_ppm_whitespace(buf: &[u8], mut pos: usize) -> usize {
    loop {
        while pos < buf.len() && buf[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < buf.len() && buf[pos] == b'#' {
            while pos < buf.len() && buf[pos] != b'\n' {
                pos += 1;
            }
        } else {
            return pos;
        }
    }
}

fn read_ppm_int(buf: &[u8], pos: usize) -> Result<(usize, usize)> {
    let pos = skip_ppm_whitespace(buf, pos);
    let start = pos;
    let mut end = pos;
    while end < buf.len() && buf[end].is_ascii_digit() {
        end += 1;
    }
    if end == start {
        return Err(Error::UnreadableImage("expected integer in ppm header".into()));
    }
    let s = std::str::from_utf8(&buf[start..end]).unwrap();
    Ok((s.parse().map_err(|_| Error::UnreadableImage("bad integer".into()))?, end))
}

/// Binary P6 PPM decoder, maxval 255 only.
pub fn read_ppm(path: &Path) -> Result<RgbImage> {
    let buf = fs::read(path).map_err(|e| Error::UnreadableImage(format!("{}: {e}", path.display())))?;
    if buf.len() < 2 || &buf[0..2] != b"P6" {
        return Err(Error::UnreadableImage("not a binary P6 ppm".into()));
    }
    let (width, pos) = read_ppm_int(&buf, 2)?;
    let (height, pos) = read_ppm_int(&buf, pos)?;
    let (maxval, pos) = read_ppm_int(&buf, pos)?;
    if maxval != 255 {
        return Err(Error::UnreadableImage(format!("unsupported maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the pixel data
    let pos = pos + 1;
    let need = width * height * 3;
    if buf.len() < pos + need {
        return Err(Error::UnreadableImage("truncated pixel data".into()));
    }
    Ok(RgbImage {
        width,
        height,
        pixels: buf[pos..pos + need].to_vec(),
    })
}

pub fn write_ppm(path: &Path, image: &RgbImage) -> Result<()> {
    let mut f = fs::File::create(path)?;
    write!(f, "P6\n{} {}\n255\n", image.width, image.height)?;
    f.write_all(&image.pixels)?;
    Ok(())
}

/// Raster-order patch extraction parameters over a set of image files.
#[derive(Debug, Clone)]
pub struct PatchCorpusSpec {
    pub paths: Vec<PathBuf>,
    pub patch_size: usize,
    pub stride: usize,
}

impl PatchCorpusSpec {
    pub fn vector_dim(&self) -> usize {
        3 * self.patch_size * self.patch_size
    }
}

/// Flattens one image into raster-order RGB patch vectors scaled into [0,1].
pub fn extract_patches(image: &RgbImage, patch_size: usize, stride: usize, out: &mut VectorBatch) -> Result<()> {
    if patch_size == 0 || stride == 0 {
        return Err(Error::InvalidConfig("patch_size and stride must be positive".into()));
    }
    if patch_size > image.height || patch_size > image.width {
        return Err(Error::PatchTooLarge {
            patch: patch_size,
            height: image.height,
            width: image.width,
        });
    }
    let mut patch = vec![0f32; 3 * patch_size * patch_size];
    let mut y = 0;
    while y + patch_size <= image.height {
        let mut x = 0;
        while x + patch_size <= image.width {
            let mut k = 0;
            for py in 0..patch_size {
                for px in 0..patch_size {
                    let base = ((y + py) * image.width + x + px) * 3;
                    for c in 0..3 {
                        patch[k] = image.pixels[base + c] as f32 / 255.0;
                        k += 1;
                    }
                }
            }
            out.push_row(&patch)?;
            x += stride;
        }
        y += stride;
    }
    Ok(())
}

/// Deterministic raster-order ingestion over every file in the spec.
pub fn ingest_patches(spec: &PatchCorpusSpec) -> Result<VectorBatch> {
    let mut batch = VectorBatch::empty(spec.vector_dim());
    for path in &spec.paths {
        let image = read_ppm(path)?;
        extract_patches(&image, spec.patch_size, spec.stride, &mut batch)?;
    }
    Ok(batch)
}

/// Re-assembles patch vectors (rows of `patches`) into an image of the given
/// geometry, averaging where strided patches overlap.
pub fn reassemble_patches(
    patches: &VectorBatch,
    width: usize,
    height: usize,
    patch_size: usize,
    stride: usize,
) -> Result<RgbImage> {
    if patches.dim() != 3 * patch_size * patch_size {
        return Err(Error::DimensionMismatch {
            expected: 3 * patch_size * patch_size,
            actual: patches.dim(),
        });
    }
    let mut acc = vec![0f64; width * height * 3];
    let mut weight = vec![0f64; width * height * 3];
    let mut rows = patches.rows();
    let mut y = 0;
    while y + patch_size <= height {
        let mut x = 0;
        while x + patch_size <= width {
            let row = rows
                .next()
                .ok_or_else(|| Error::InsufficientData("fewer patches than grid cells".into()))?;
            let mut k = 0;
            for py in 0..patch_size {
                for px in 0..patch_size {
                    let base = ((y + py) * width + x + px) * 3;
                    for c in 0..3 {
                        acc[base + c] += row[k] as f64;
                        weight[base + c] += 1.0;
                        k += 1;
                    }
                }
            }
            x += stride;
        }
        y += stride;
    }
    let pixels = acc
        .iter()
        .zip(&weight)
        .map(|(&a, &w)| {
            if w == 0.0 {
                0
            } else {
                ((a / w) * 255.0).round().clamp(0.0, 255.0) as u8
            }
        })
        .collect();
    Ok(RgbImage { width, height, pixels })
}
