//! Raster and tensor persistence.
//!
//! PNG ingestion/emission is limited to 8-bit images (palette files are
//! expanded on decode). Feature stacks persist in the DMPT container, a
//! little-endian byte layout fixed here:
//!
//! ```text
//! magic    4 bytes  "DMPT"
//! version  u16      currently 1
//! dtype    u8       0 = unsigned 8-bit, 1 = 32-bit float
//! channels u32
//! height   u32
//! width    u32
//! payload  channels * height * width * dtype-size bytes,
//!          channel-major, row-major within each channel
//! meta_len u32
//! meta     meta_len bytes of JSON: {"labels": [...]}
//! ```

use std::fs;
use std::path::Path;

use image::ImageEncoder as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{GrayImage, LabelMask, RgbImage};
use crate::stack::{FeatureStack, StackData};

pub const TENSOR_MAGIC: [u8; 4] = *b"DMPT";
pub const TENSOR_VERSION: u16 = 1;
pub const DTYPE_U8: u8 = 0;
pub const DTYPE_F32: u8 = 1;
const HEADER_LEN: usize = 19;

/// An 8-bit PNG decoded by pixel layout; alpha channels are dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecodedPng {
    Rgb(RgbImage),
    Gray(GrayImage),
}

impl DecodedPng {
    pub fn width(&self) -> u32 {
        match self {
            DecodedPng::Rgb(i) => i.width(),
            DecodedPng::Gray(i) => i.width(),
        }
    }

    pub fn height(&self) -> u32 {
        match self {
            DecodedPng::Rgb(i) => i.height(),
            DecodedPng::Gray(i) => i.height(),
        }
    }
}

fn decode_png(path: &Path) -> Result<image::DynamicImage> {
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    image::load_from_memory_with_format(&bytes, image::ImageFormat::Png).map_err(|e| {
        Error::PngDecode {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    })
}

/// Read an 8-bit PNG as RGB or grayscale depending on its pixel layout.
pub fn read_png(path: impl AsRef<Path>) -> Result<DecodedPng> {
    let path = path.as_ref();
    match decode_png(path)? {
        image::DynamicImage::ImageLuma8(b) => Ok(DecodedPng::Gray(GrayImage::new(
            b.width(),
            b.height(),
            b.into_raw(),
        )?)),
        image::DynamicImage::ImageLumaA8(b) => {
            let (w, h) = (b.width(), b.height());
            let data = b.into_raw().chunks_exact(2).map(|px| px[0]).collect();
            Ok(DecodedPng::Gray(GrayImage::new(w, h, data)?))
        }
        image::DynamicImage::ImageRgb8(b) => Ok(DecodedPng::Rgb(RgbImage::new(
            b.width(),
            b.height(),
            b.into_raw(),
        )?)),
        image::DynamicImage::ImageRgba8(b) => {
            let (w, h) = (b.width(), b.height());
            let data = b
                .into_raw()
                .chunks_exact(4)
                .flat_map(|px| [px[0], px[1], px[2]])
                .collect();
            Ok(DecodedPng::Rgb(RgbImage::new(w, h, data)?))
        }
        other => Err(Error::UnsupportedPng {
            path: path.to_path_buf(),
            detail: format!("only 8-bit PNGs are supported, got {:?}", other.color()),
        }),
    }
}

/// Read a single-channel 8-bit PNG as a label mask. Color PNGs are rejected
/// because their label encoding would be ambiguous.
pub fn read_png_mask(path: impl AsRef<Path>) -> Result<LabelMask> {
    let path = path.as_ref();
    match read_png(path)? {
        DecodedPng::Gray(g) => {
            let (w, h) = (g.width(), g.height());
            LabelMask::new(w, h, g.into_data())
        }
        DecodedPng::Rgb(_) => Err(Error::UnsupportedPng {
            path: path.to_path_buf(),
            detail: "label masks must be single-channel".into(),
        }),
    }
}

fn write_png_bytes(
    path: &Path,
    data: &[u8],
    width: u32,
    height: u32,
    color: image::ExtendedColorType,
) -> Result<()> {
    let mut bytes = Vec::new();
    image::codecs::png::PngEncoder::new(&mut bytes)
        .write_image(data, width, height, color)
        .map_err(|e| Error::Data(format!("PNG encode failed: {e}")))?;
    fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_png_gray(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    write_png_bytes(
        path.as_ref(),
        img.data(),
        img.width(),
        img.height(),
        image::ExtendedColorType::L8,
    )
}

pub fn write_png_rgb(path: impl AsRef<Path>, img: &RgbImage) -> Result<()> {
    write_png_bytes(
        path.as_ref(),
        img.data(),
        img.width(),
        img.height(),
        image::ExtendedColorType::Rgb8,
    )
}

/// Labels are stored verbatim as 8-bit gray intensities.
pub fn write_png_mask(path: impl AsRef<Path>, mask: &LabelMask) -> Result<()> {
    write_png_bytes(
        path.as_ref(),
        mask.labels(),
        mask.width(),
        mask.height(),
        image::ExtendedColorType::L8,
    )
}

#[derive(Serialize, Deserialize)]
struct TensorMeta {
    labels: Vec<String>,
}

/// Bit-exact payload length implied by a header.
pub fn tensor_payload_len(dtype: u8, channels: u32, height: u32, width: u32) -> u64 {
    let dsize = if dtype == DTYPE_F32 { 4 } else { 1 };
    channels as u64 * height as u64 * width as u64 * dsize
}

/// Serialize a stack to the DMPT byte layout.
pub fn tensor_to_bytes(stack: &FeatureStack) -> Vec<u8> {
    let (dtype, payload): (u8, Vec<u8>) = match stack.data() {
        StackData::Raw8(v) => (DTYPE_U8, v.clone()),
        StackData::UnitFloat(v) => (
            DTYPE_F32,
            v.iter().flat_map(|x| x.to_le_bytes()).collect(),
        ),
    };
    let meta = serde_json::to_vec(&TensorMeta {
        labels: stack.labels().to_vec(),
    })
    .expect("labels serialize");
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + 4 + meta.len());
    out.extend_from_slice(&TENSOR_MAGIC);
    out.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
    out.push(dtype);
    out.extend_from_slice(&stack.channels().to_le_bytes());
    out.extend_from_slice(&stack.height().to_le_bytes());
    out.extend_from_slice(&stack.width().to_le_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    out
}

pub fn write_tensor(stack: &FeatureStack, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path.as_ref(), tensor_to_bytes(stack)).map_err(|source| Error::Io {
        path: path.as_ref().to_path_buf(),
        source,
    })
}

/// Parse the DMPT byte layout back into a stack.
pub fn tensor_from_bytes(bytes: &[u8]) -> Result<FeatureStack> {
    let need = |expected: usize| -> Result<()> {
        if bytes.len() < expected {
            Err(Error::Truncated {
                expected: expected as u64,
                found: bytes.len() as u64,
            })
        } else {
            Ok(())
        }
    };
    need(HEADER_LEN)?;
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != TENSOR_MAGIC {
        return Err(Error::BadMagic {
            found: magic,
            expected: TENSOR_MAGIC,
        });
    }
    let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
    if version != TENSOR_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: TENSOR_VERSION,
        });
    }
    let dtype = bytes[6];
    if dtype != DTYPE_U8 && dtype != DTYPE_F32 {
        return Err(Error::MalformedTensor(format!("unknown dtype code {dtype}")));
    }
    let channels = u32::from_le_bytes(bytes[7..11].try_into().unwrap());
    let height = u32::from_le_bytes(bytes[11..15].try_into().unwrap());
    let width = u32::from_le_bytes(bytes[15..19].try_into().unwrap());
    if channels == 0 || height == 0 || width == 0 {
        return Err(Error::MalformedTensor(format!(
            "zero dimension in header: {channels}x{height}x{width}"
        )));
    }
    let payload_len = tensor_payload_len(dtype, channels, height, width);
    let payload_end = HEADER_LEN as u64 + payload_len;
    if payload_end + 4 > bytes.len() as u64 {
        return Err(Error::Truncated {
            expected: payload_end + 4,
            found: bytes.len() as u64,
        });
    }
    let payload = &bytes[HEADER_LEN..payload_end as usize];
    let meta_start = payload_end as usize + 4;
    let meta_len =
        u32::from_le_bytes(bytes[payload_end as usize..meta_start].try_into().unwrap()) as usize;
    need(meta_start + meta_len)?;
    if bytes.len() != meta_start + meta_len {
        return Err(Error::MalformedTensor(format!(
            "{} trailing bytes after metadata",
            bytes.len() - meta_start - meta_len
        )));
    }
    let meta: TensorMeta = serde_json::from_slice(&bytes[meta_start..meta_start + meta_len])
        .map_err(|e| Error::MalformedTensor(format!("metadata JSON: {e}")))?;
    if meta.labels.len() != channels as usize {
        return Err(Error::MalformedTensor(format!(
            "{} labels for {channels} channels",
            meta.labels.len()
        )));
    }
    let data = match dtype {
        DTYPE_U8 => StackData::Raw8(payload.to_vec()),
        _ => StackData::UnitFloat(
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
    };
    FeatureStack::from_parts(channels, width, height, data, meta.labels)
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<FeatureStack> {
    let bytes = fs::read(path.as_ref()).map_err(|source| Error::Io {
        path: path.as_ref().to_path_buf(),
        source,
    })?;
    tensor_from_bytes(&bytes)
}
