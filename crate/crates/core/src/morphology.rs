//! Flat structuring-element grayscale morphology.
//!
//! Two code paths compute every erosion/dilation: a naive per-pixel scan
//! ([`reference`]) that serves as the behavioral contract, and the
//! optimized path behind [`dilate`]/[`erode`] that must agree with it
//! bit-exactly. Square elements separate into a horizontal and a vertical
//! 1-D pass, each a monotonic-deque sliding extremum with amortized O(1)
//! work per pixel. Disk elements decompose into per-row chords: one
//! horizontal pass per distinct chord half-width, then a vertical combine.
//!
//! Out-of-bounds samples take the nearest edge pixel (edge replication),
//! which keeps constant images fixed points of all four operators and
//! never manufactures extreme values at borders. Everything is pure
//! integer arithmetic on `u8`, so the algebraic identities (idempotence,
//! duality, extensivity) hold exactly.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Smallest/largest legal structuring-element size.
pub const MIN_SE_SIZE: u32 = 3;
pub const MAX_SE_SIZE: u32 = 99;

/// Below this pixel count the disk path uses a plain scan instead of the
/// chord decomposition; both are exact, the scan just wins on overhead.
const DISK_NAIVE_AREA: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SeShape {
    Square,
    Disk,
}

impl fmt::Display for SeShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SeShape::Square => write!(f, "square"),
            SeShape::Disk => write!(f, "disk"),
        }
    }
}

impl FromStr for SeShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "square" => Ok(SeShape::Square),
            "disk" => Ok(SeShape::Disk),
            other => Err(Error::Parameter(format!(
                "unknown SE shape \"{other}\", expected one of: square, disk"
            ))),
        }
    }
}

/// Flat structuring element: a shape, an odd size, and the explicit set of
/// (dx, dy) offsets from the center anchor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuringElement {
    shape: SeShape,
    size: u32,
    radius: u32,
    offsets: Vec<(i32, i32)>,
    /// Chord half-width per |dy| in 0..=radius: the largest |dx| such that
    /// (dx, dy) belongs to the element. For squares this is `radius` in
    /// every row.
    half_widths: Vec<u32>,
}

/// Build a structuring element. `size` is the side length (square) or
/// diameter (disk) and must be an odd integer in 3..=99 so the anchor sits
/// on the exact center.
pub fn make_se(shape: SeShape, size: u32) -> Result<StructuringElement> {
    if size % 2 == 0 || !(MIN_SE_SIZE..=MAX_SE_SIZE).contains(&size) {
        return Err(Error::Parameter(format!(
            "structuring element size must be an odd integer in \
             {MIN_SE_SIZE}..={MAX_SE_SIZE}, got {size}"
        )));
    }
    let radius = (size - 1) / 2;
    let r = radius as i32;
    let mut offsets = Vec::new();
    let mut half_widths = vec![0u32; radius as usize + 1];
    for dy in -r..=r {
        for dx in -r..=r {
            let keep = match shape {
                SeShape::Square => true,
                SeShape::Disk => dx * dx + dy * dy <= r * r,
            };
            if keep {
                offsets.push((dx, dy));
                let d = dy.unsigned_abs() as usize;
                half_widths[d] = half_widths[d].max(dx.unsigned_abs());
            }
        }
    }
    Ok(StructuringElement {
        shape,
        size,
        radius,
        offsets,
        half_widths,
    })
}

impl StructuringElement {
    pub fn shape(&self) -> SeShape {
        self.shape
    }

    pub fn size(&self) -> u32 {
        self.size
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    /// Offsets in row-major order (dy outer, dx inner), always containing
    /// (0, 0).
    pub fn offsets(&self) -> &[(i32, i32)] {
        &self.offsets
    }
}

/// Neighborhood maximum over the element at every pixel.
pub fn dilate(img: &GrayImage, se: &StructuringElement) -> GrayImage {
    filter::<true>(img, se)
}

/// Neighborhood minimum over the element at every pixel.
pub fn erode(img: &GrayImage, se: &StructuringElement) -> GrayImage {
    filter::<false>(img, se)
}

/// Erosion followed by dilation; removes bright structures smaller than
/// the element.
pub fn open(img: &GrayImage, se: &StructuringElement) -> GrayImage {
    dilate(&erode(img, se), se)
}

/// Dilation followed by erosion; fills dark structures smaller than the
/// element.
pub fn close(img: &GrayImage, se: &StructuringElement) -> GrayImage {
    erode(&dilate(img, se), se)
}

fn filter<const MAX: bool>(img: &GrayImage, se: &StructuringElement) -> GrayImage {
    match se.shape {
        SeShape::Square => square_filter::<MAX>(img, se.radius as usize),
        SeShape::Disk => disk_filter::<MAX>(img, se),
    }
}

#[inline(always)]
fn dominates<const MAX: bool>(a: u8, b: u8) -> bool {
    if MAX {
        a >= b
    } else {
        a <= b
    }
}

/// 1-D sliding extremum over windows [i-radius, i+radius] clipped to the
/// slice. Under edge replication the out-of-range samples repeat the end
/// pixels, which are already inside every clipped window, so clipping and
/// replication give identical results.
fn sliding_row<const MAX: bool>(
    src: &[u8],
    dst: &mut [u8],
    radius: usize,
    deque: &mut VecDeque<usize>,
) {
    let n = src.len();
    debug_assert_eq!(dst.len(), n);
    if radius == 0 {
        dst.copy_from_slice(src);
        return;
    }
    deque.clear();
    for j in 0..=radius.min(n - 1) {
        while let Some(&b) = deque.back() {
            if dominates::<MAX>(src[j], src[b]) {
                deque.pop_back();
            } else {
                break;
            }
        }
        deque.push_back(j);
    }
    dst[0] = src[deque[0]];
    for i in 1..n {
        if deque[0] + radius < i {
            deque.pop_front();
        }
        let j = i + radius;
        if j < n {
            while let Some(&b) = deque.back() {
                if dominates::<MAX>(src[j], src[b]) {
                    deque.pop_back();
                } else {
                    break;
                }
            }
            deque.push_back(j);
        }
        dst[i] = src[deque[0]];
    }
}

/// Separable square filter: horizontal pass, then vertical pass over the
/// intermediate. Exact because the clamped square neighborhood is the
/// cartesian product of the clamped per-axis ranges.
fn square_filter<const MAX: bool>(img: &GrayImage, radius: usize) -> GrayImage {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let src = img.data();
    let mut tmp = vec![0u8; w * h];
    let mut deque = VecDeque::with_capacity(2 * radius + 2);
    for y in 0..h {
        sliding_row::<MAX>(&src[y * w..][..w], &mut tmp[y * w..][..w], radius, &mut deque);
    }
    let mut out = vec![0u8; w * h];
    let mut col_in = vec![0u8; h];
    let mut col_out = vec![0u8; h];
    for x in 0..w {
        for y in 0..h {
            col_in[y] = tmp[y * w + x];
        }
        sliding_row::<MAX>(&col_in, &mut col_out, radius, &mut deque);
        for y in 0..h {
            out[y * w + x] = col_out[y];
        }
    }
    GrayImage::from_raw(img.width(), img.height(), out)
}

/// Disk filter via chord decomposition: the disk is a union of horizontal
/// chords, one per dy, so the result combines per-row sliding extrema of
/// the chord half-widths across the vertical extent.
fn disk_filter<const MAX: bool>(img: &GrayImage, se: &StructuringElement) -> GrayImage {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w * h < DISK_NAIVE_AREA {
        return naive_scan::<MAX>(img, se);
    }
    let src = img.data();
    let radius = se.radius as usize;

    // One horizontal pass per distinct chord half-width.
    let mut filtered: BTreeMap<u32, Vec<u8>> = BTreeMap::new();
    let mut deque = VecDeque::with_capacity(2 * radius + 2);
    for &hw in &se.half_widths {
        filtered.entry(hw).or_insert_with(|| {
            let mut buf = vec![0u8; w * h];
            for y in 0..h {
                sliding_row::<MAX>(
                    &src[y * w..][..w],
                    &mut buf[y * w..][..w],
                    hw as usize,
                    &mut deque,
                );
            }
            buf
        });
    }
    let by_abs_dy: Vec<&[u8]> = (0..=radius)
        .map(|d| filtered[&se.half_widths[d]].as_slice())
        .collect();

    let mut out = vec![0u8; w * h];
    let r = radius as i64;
    for y in 0..h {
        let out_row = &mut out[y * w..][..w];
        let mut first = true;
        for dy in -r..=r {
            let sy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
            let src_row = &by_abs_dy[dy.unsigned_abs() as usize][sy * w..][..w];
            if first {
                out_row.copy_from_slice(src_row);
                first = false;
            } else if MAX {
                for (o, &s) in out_row.iter_mut().zip(src_row) {
                    *o = (*o).max(s);
                }
            } else {
                for (o, &s) in out_row.iter_mut().zip(src_row) {
                    *o = (*o).min(s);
                }
            }
        }
    }
    GrayImage::from_raw(img.width(), img.height(), out)
}

/// Plain per-pixel scan used by the disk path on tiny images. Kept separate
/// from [`reference`] so the production path never shares code with the
/// oracle it is tested against.
fn naive_scan<const MAX: bool>(img: &GrayImage, se: &StructuringElement) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    let mut out = Vec::with_capacity(w as usize * h as usize);
    for y in 0..h {
        for x in 0..w {
            let mut acc: Option<u8> = None;
            for &(dx, dy) in &se.offsets {
                let v = img.pixel_clamped(x as i64 + dx as i64, y as i64 + dy as i64);
                acc = Some(match acc {
                    None => v,
                    Some(a) => {
                        if dominates::<MAX>(v, a) {
                            v
                        } else {
                            a
                        }
                    }
                });
            }
            out.push(acc.expect("element contains at least the anchor"));
        }
    }
    GrayImage::from_raw(w, h, out)
}

/// Reference implementations: the slowest possible per-pixel scans over the
/// explicit offset set. These define the semantics the optimized paths are
/// required to reproduce bit-exactly, and stay independent of them.
pub mod reference {
    use super::StructuringElement;
    use crate::image::GrayImage;

    pub fn dilate(img: &GrayImage, se: &StructuringElement) -> GrayImage {
        scan(img, se, |nbhd, v| v > nbhd)
    }

    pub fn erode(img: &GrayImage, se: &StructuringElement) -> GrayImage {
        scan(img, se, |nbhd, v| v < nbhd)
    }

    pub fn open(img: &GrayImage, se: &StructuringElement) -> GrayImage {
        dilate(&erode(img, se), se)
    }

    pub fn close(img: &GrayImage, se: &StructuringElement) -> GrayImage {
        erode(&dilate(img, se), se)
    }

    fn scan(
        img: &GrayImage,
        se: &StructuringElement,
        replace: impl Fn(u8, u8) -> bool,
    ) -> GrayImage {
        let (w, h) = (img.width(), img.height());
        let mut out = Vec::with_capacity(w as usize * h as usize);
        for y in 0..h {
            for x in 0..w {
                let mut best = img.pixel_clamped(
                    x as i64 + se.offsets[0].0 as i64,
                    y as i64 + se.offsets[0].1 as i64,
                );
                for &(dx, dy) in &se.offsets[1..] {
                    let v = img.pixel_clamped(x as i64 + dx as i64, y as i64 + dy as i64);
                    if replace(best, v) {
                        best = v;
                    }
                }
                out.push(best);
            }
        }
        GrayImage::from_raw(w, h, out)
    }
}
