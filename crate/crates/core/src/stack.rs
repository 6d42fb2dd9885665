//! Grayscale conversion and depth-extended channel stacking.
//!
//! The depth-extended layout concatenates every closing DMP band, the
//! grayscale image, and every opening DMP band along the channel dimension,
//! giving 2k+1 channels for a k-pair differential spec. Four named presets
//! cover the standard pair lists.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::image::{GrayImage, RgbImage};
use crate::morphology::SeShape;
use crate::profile::{dmp, DifferentialSpec};

/// ITU-R BT.601 luma, computed as round-half-up integer arithmetic:
/// `(299 R + 587 G + 114 B + 500) / 1000`.
pub fn to_luma(img: &RgbImage) -> GrayImage {
    let data = img
        .data()
        .chunks_exact(3)
        .map(|px| luma_u8(px[0], px[1], px[2]))
        .collect();
    GrayImage::from_raw(img.width(), img.height(), data)
}

#[inline]
pub fn luma_u8(r: u8, g: u8, b: u8) -> u8 {
    let sum = 299 * r as u32 + 587 * g as u32 + 114 * b as u32;
    ((sum + 500) / 1000) as u8
}

/// The named differential pair lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DmpPreset {
    Original,
    Improved,
    Evo1,
    Evo2,
}

pub const PRESET_NAMES: [&str; 4] = ["original", "improved", "evo1", "evo2"];

impl DmpPreset {
    pub const ALL: [DmpPreset; 4] = [
        DmpPreset::Original,
        DmpPreset::Improved,
        DmpPreset::Evo1,
        DmpPreset::Evo2,
    ];

    /// (outer, inner) size pairs for this preset.
    pub fn pairs(self) -> &'static [(u32, u32)] {
        match self {
            DmpPreset::Original => &[(5, 3), (7, 5), (9, 7)],
            DmpPreset::Improved => &[
                (5, 3),
                (7, 5),
                (9, 7),
                (15, 9),
                (21, 15),
                (27, 21),
                (35, 27),
            ],
            DmpPreset::Evo1 => &[
                (29, 5),
                (23, 5),
                (19, 13),
                (17, 13),
                (17, 9),
                (15, 11),
                (13, 7),
            ],
            DmpPreset::Evo2 => &[
                (29, 5),
                (23, 9),
                (23, 5),
                (19, 13),
                (17, 13),
                (15, 11),
                (13, 7),
            ],
        }
    }
}

impl fmt::Display for DmpPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            DmpPreset::Original => "original",
            DmpPreset::Improved => "improved",
            DmpPreset::Evo1 => "evo1",
            DmpPreset::Evo2 => "evo2",
        };
        write!(f, "{name}")
    }
}

impl FromStr for DmpPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "original" => Ok(DmpPreset::Original),
            "improved" => Ok(DmpPreset::Improved),
            "evo1" => Ok(DmpPreset::Evo1),
            "evo2" => Ok(DmpPreset::Evo2),
            other => Err(Error::Parameter(format!(
                "unknown preset \"{other}\", expected one of: {}",
                PRESET_NAMES.join(", ")
            ))),
        }
    }
}

/// Materialize a preset's pair list as a differential spec with the
/// requested SE shape.
pub fn preset(name: DmpPreset, shape: SeShape) -> DifferentialSpec {
    DifferentialSpec::new(shape, name.pairs().to_vec()).expect("preset pair lists are valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueDomain {
    /// Raw 8-bit intensities 0..=255.
    Raw8,
    /// f32 in [0, 1], exactly raw / 255.
    UnitFloat,
}

impl fmt::Display for ValueDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueDomain::Raw8 => write!(f, "raw8"),
            ValueDomain::UnitFloat => write!(f, "unit"),
        }
    }
}

impl FromStr for ValueDomain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "raw8" => Ok(ValueDomain::Raw8),
            "unit" | "unitfloat" => Ok(ValueDomain::UnitFloat),
            other => Err(Error::Parameter(format!(
                "unknown value domain \"{other}\", expected one of: raw8, unit"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StackData {
    Raw8(Vec<u8>),
    UnitFloat(Vec<f32>),
}

/// Channel-major multi-band tensor with per-channel provenance labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack {
    channels: u32,
    width: u32,
    height: u32,
    data: StackData,
    labels: Vec<String>,
}

impl FeatureStack {
    /// Assemble a Raw8 stack from equally-sized gray planes.
    pub fn from_gray_channels(planes: &[GrayImage], labels: Vec<String>) -> Result<Self> {
        if planes.is_empty() {
            return Err(Error::Parameter("feature stack needs at least one channel".into()));
        }
        if labels.len() != planes.len() {
            return Err(Error::Parameter(format!(
                "{} labels for {} channels",
                labels.len(),
                planes.len()
            )));
        }
        let (w, h) = (planes[0].width(), planes[0].height());
        let mut data = Vec::with_capacity(planes.len() * w as usize * h as usize);
        for p in planes {
            if (p.width(), p.height()) != (w, h) {
                return Err(Error::Data(format!(
                    "channel size {}x{} differs from {}x{}",
                    p.width(),
                    p.height(),
                    w,
                    h
                )));
            }
            data.extend_from_slice(p.data());
        }
        Ok(Self {
            channels: planes.len() as u32,
            width: w,
            height: h,
            data: StackData::Raw8(data),
            labels,
        })
    }

    /// Assemble a stack from raw channel-major data; every consistency
    /// invariant is checked.
    pub fn from_parts(
        channels: u32,
        width: u32,
        height: u32,
        data: StackData,
        labels: Vec<String>,
    ) -> Result<Self> {
        let expected = channels as usize * width as usize * height as usize;
        let actual = match &data {
            StackData::Raw8(v) => v.len(),
            StackData::UnitFloat(v) => v.len(),
        };
        if channels == 0 || width == 0 || height == 0 || actual != expected || labels.len() != channels as usize {
            return Err(Error::Data(format!(
                "inconsistent stack: {channels} channels, {width}x{height}, {actual} values, {} labels",
                labels.len()
            )));
        }
        Ok(Self {
            channels,
            width,
            height,
            data,
            labels,
        })
    }

    pub fn channels(&self) -> u32 {
        self.channels
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn data(&self) -> &StackData {
        &self.data
    }

    pub fn domain(&self) -> ValueDomain {
        match self.data {
            StackData::Raw8(_) => ValueDomain::Raw8,
            StackData::UnitFloat(_) => ValueDomain::UnitFloat,
        }
    }

    fn plane(&self, c: u32) -> std::ops::Range<usize> {
        let n = self.width as usize * self.height as usize;
        let start = c as usize * n;
        start..start + n
    }

    /// Channel plane as raw bytes; `None` if the stack is float.
    pub fn channel_raw8(&self, c: u32) -> Option<&[u8]> {
        match &self.data {
            StackData::Raw8(v) => Some(&v[self.plane(c)]),
            StackData::UnitFloat(_) => None,
        }
    }

    /// Channel plane as f32; `None` if the stack is raw bytes.
    pub fn channel_f32(&self, c: u32) -> Option<&[f32]> {
        match &self.data {
            StackData::UnitFloat(v) => Some(&v[self.plane(c)]),
            StackData::Raw8(_) => None,
        }
    }

    /// (min, max) of one channel in its native domain.
    pub fn channel_min_max(&self, c: u32) -> (f64, f64) {
        match &self.data {
            StackData::Raw8(v) => {
                let plane = &v[self.plane(c)];
                let min = *plane.iter().min().unwrap();
                let max = *plane.iter().max().unwrap();
                (min as f64, max as f64)
            }
            StackData::UnitFloat(v) => {
                let plane = &v[self.plane(c)];
                let mut min = f64::INFINITY;
                let mut max = f64::NEG_INFINITY;
                for &x in plane {
                    min = min.min(x as f64);
                    max = max.max(x as f64);
                }
                (min, max)
            }
        }
    }

    /// Convert to the requested domain. Raw8 -> UnitFloat divides by 255;
    /// the reverse multiplies by 255 and rounds, which recovers every 8-bit
    /// value exactly.
    pub fn to_domain(self, domain: ValueDomain) -> FeatureStack {
        let data = match (self.data, domain) {
            (StackData::Raw8(v), ValueDomain::UnitFloat) => {
                StackData::UnitFloat(v.iter().map(|&x| x as f32 / 255.0).collect())
            }
            (StackData::UnitFloat(v), ValueDomain::Raw8) => StackData::Raw8(
                v.iter()
                    .map(|&x| (x * 255.0).round().clamp(0.0, 255.0) as u8)
                    .collect(),
            ),
            (same, _) => same,
        };
        FeatureStack { data, ..self }
    }
}

/// Depth-extended stack of an RGB image: luma-convert, compute the DMP,
/// then concatenate closing bands, the grayscale image, and opening bands.
pub fn stack_depth_extended(
    img: &RgbImage,
    spec: &DifferentialSpec,
    domain: ValueDomain,
) -> FeatureStack {
    stack_depth_extended_gray(&to_luma(img), spec, domain)
}

/// Depth-extended stack of an already-grayscale image.
pub fn stack_depth_extended_gray(
    gray: &GrayImage,
    spec: &DifferentialSpec,
    domain: ValueDomain,
) -> FeatureStack {
    let (odmp, cdmp) = dmp(gray, spec);
    let (c_bands, c_labels) = cdmp.into_parts();
    let (o_bands, o_labels) = odmp.into_parts();

    let mut planes = Vec::with_capacity(c_bands.len() + 1 + o_bands.len());
    let mut labels = Vec::with_capacity(planes.capacity());
    planes.extend(c_bands);
    labels.extend(c_labels);
    planes.push(gray.clone());
    labels.push("gray".to_string());
    planes.extend(o_bands);
    labels.extend(o_labels);

    FeatureStack::from_gray_channels(&planes, labels)
        .expect("bands share the source dimensions")
        .to_domain(domain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn luma_corner_cases() {
        assert_eq!(luma_u8(255, 255, 255), 255);
        assert_eq!(luma_u8(0, 0, 0), 0);
        assert_eq!(luma_u8(255, 0, 0), 76);
        assert_eq!(luma_u8(0, 255, 0), 150);
        assert_eq!(luma_u8(0, 0, 255), 29);
    }

    #[test]
    fn preset_pair_lists() {
        assert_eq!(DmpPreset::Original.pairs(), &[(5, 3), (7, 5), (9, 7)]);
        assert_eq!(DmpPreset::Improved.pairs().len(), 7);
        assert_eq!(DmpPreset::Improved.pairs()[6], (35, 27));
        assert_eq!(&DmpPreset::Evo2.pairs()[..2], &[(29, 5), (23, 9)]);
        assert_eq!(DmpPreset::Evo1.pairs().len(), 7);
        assert!("evo3".parse::<DmpPreset>().is_err());
        let err = "evo3".parse::<DmpPreset>().unwrap_err().to_string();
        for name in PRESET_NAMES {
            assert!(err.contains(name), "{err}");
        }
    }

    #[test]
    fn preset_spec_carries_shape_and_max_size() {
        let s = preset(DmpPreset::Original, SeShape::Square);
        assert_eq!(s.pairs().len(), 3);
        assert_eq!(s.distinct_sizes().last(), Some(&9));
        let s = preset(DmpPreset::Improved, SeShape::Disk);
        assert_eq!(s.shape(), SeShape::Disk);
        assert_eq!(s.distinct_sizes().last(), Some(&35));
    }

    #[test]
    fn channel_count_law() {
        let img = RgbImage::from_fn(16, 12, |x, y| [(x * 7) as u8, (y * 11) as u8, 90]).unwrap();
        for (name, want) in [
            (DmpPreset::Original, 7),
            (DmpPreset::Improved, 15),
            (DmpPreset::Evo1, 15),
            (DmpPreset::Evo2, 15),
        ] {
            let spec = preset(name, SeShape::Square);
            let stack = stack_depth_extended(&img, &spec, ValueDomain::Raw8);
            assert_eq!(stack.channels(), want);
            assert_eq!(stack.channels(), 2 * spec.pairs().len() as u32 + 1);
        }
    }

    #[test]
    fn middle_channel_is_luma_and_labels_align() {
        let img = RgbImage::from_fn(20, 10, |x, y| [x as u8 * 3, 255 - y as u8, 17]).unwrap();
        let spec = preset(DmpPreset::Original, SeShape::Disk);
        let stack = stack_depth_extended(&img, &spec, ValueDomain::Raw8);
        let gray = to_luma(&img);
        let k = spec.pairs().len() as u32;
        assert_eq!(stack.channel_raw8(k).unwrap(), gray.data());
        assert_eq!(stack.labels()[k as usize], "gray");
        assert_eq!(stack.labels()[0], "close[5-3]");
        assert_eq!(stack.labels()[(k + 1) as usize], "open[5-3]");

        // The band under a label equals the standalone dmp band.
        let (odmp, cdmp) = dmp(&gray, &spec);
        assert_eq!(stack.channel_raw8(0).unwrap(), cdmp.bands()[0].data());
        assert_eq!(stack.channel_raw8(k + 1).unwrap(), odmp.bands()[0].data());
    }

    #[test]
    fn constant_input_keeps_only_gray_channel() {
        let img = RgbImage::filled(10, 10, [120, 120, 120]).unwrap();
        let spec = preset(DmpPreset::Original, SeShape::Square);
        let stack = stack_depth_extended(&img, &spec, ValueDomain::Raw8);
        for c in 0..stack.channels() {
            let plane = stack.channel_raw8(c).unwrap();
            let want = if stack.labels()[c as usize] == "gray" { 120 } else { 0 };
            assert!(plane.iter().all(|&v| v == want));
        }
    }

    #[test]
    fn unit_float_round_trip_is_exact_for_every_byte() {
        for v in 0u8..=255 {
            let f = v as f32 / 255.0;
            assert!((0.0..=1.0).contains(&f));
            assert_eq!((f * 255.0).round() as u8, v);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5150);
        let mut data = vec![0u8; 3 * 8 * 8];
        rng.fill(&mut data[..]);
        let img = RgbImage::new(8, 8, data).unwrap();
        let spec = preset(DmpPreset::Original, SeShape::Square);
        let raw = stack_depth_extended(&img, &spec, ValueDomain::Raw8);
        let unit = raw.clone().to_domain(ValueDomain::UnitFloat);
        assert_eq!(unit.clone().to_domain(ValueDomain::Raw8), raw);
        let (lo, hi) = unit.channel_min_max(3);
        assert!(lo >= 0.0 && hi <= 1.0);
    }
}
