//! Morphological profiles and their differentials.
//!
//! A profile is the stack of openings (or closings) of one image at a list
//! of structuring-element sizes. The differential morphological profile
//! (DMP) takes per-pixel absolute differences between the bands of paired
//! sizes, highlighting structures whose scale falls between the pair.
//! `|a - b|` of two `u8` values fits in `u8`, so bands stay 8-bit and all
//! identities are exact.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::morphology::{close, make_se, open, SeShape, MAX_SE_SIZE, MIN_SE_SIZE};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileKind {
    Opening,
    Closing,
}

impl fmt::Display for ProfileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProfileKind::Opening => write!(f, "open"),
            ProfileKind::Closing => write!(f, "close"),
        }
    }
}

fn check_size(size: u32, what: &str, problems: &mut Vec<String>) {
    if size % 2 == 0 || !(MIN_SE_SIZE..=MAX_SE_SIZE).contains(&size) {
        problems.push(format!(
            "{what} size {size} must be an odd integer in {MIN_SE_SIZE}..={MAX_SE_SIZE}"
        ));
    }
}

/// Strictly increasing list of odd SE sizes for a plain profile.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProfileSpec {
    shape: SeShape,
    sizes: Vec<u32>,
}

impl ProfileSpec {
    pub fn new(shape: SeShape, sizes: Vec<u32>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::Parameter("profile size list is empty".into()));
        }
        let mut problems = Vec::new();
        for &s in &sizes {
            check_size(s, "profile", &mut problems);
        }
        for pair in sizes.windows(2) {
            if pair[1] <= pair[0] {
                problems.push(format!(
                    "profile sizes must be strictly increasing, got {} after {}",
                    pair[1], pair[0]
                ));
            }
        }
        if !problems.is_empty() {
            return Err(Error::Parameter(problems.join("; ")));
        }
        Ok(Self { shape, sizes })
    }

    pub fn shape(&self) -> SeShape {
        self.shape
    }

    pub fn sizes(&self) -> &[u32] {
        &self.sizes
    }
}

/// Ordered list of (outer, inner) SE-size pairs defining a DMP. Pairs need
/// not be consecutive, share endpoints, or nest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DifferentialSpec {
    shape: SeShape,
    pairs: Vec<(u32, u32)>,
}

impl DifferentialSpec {
    pub fn new(shape: SeShape, pairs: Vec<(u32, u32)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Parameter("differential pair list is empty".into()));
        }
        let mut problems = Vec::new();
        for &(outer, inner) in &pairs {
            check_size(outer, "outer", &mut problems);
            check_size(inner, "inner", &mut problems);
            if outer <= inner {
                problems.push(format!(
                    "differential pair [{outer}-{inner}] must have outer > inner"
                ));
            }
        }
        if !problems.is_empty() {
            return Err(Error::Parameter(problems.join("; ")));
        }
        Ok(Self { shape, pairs })
    }

    pub fn shape(&self) -> SeShape {
        self.shape
    }

    pub fn pairs(&self) -> &[(u32, u32)] {
        &self.pairs
    }

    /// Sorted deduplicated set of every size appearing in a pair.
    pub fn distinct_sizes(&self) -> Vec<u32> {
        self.pairs
            .iter()
            .flat_map(|&(a, b)| [a, b])
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }
}

/// A stack of same-sized bands with per-band provenance labels such as
/// `open[5]` or `close[9-7]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Profile {
    kind: ProfileKind,
    bands: Vec<GrayImage>,
    labels: Vec<String>,
}

impl Profile {
    pub fn kind(&self) -> ProfileKind {
        self.kind
    }

    pub fn bands(&self) -> &[GrayImage] {
        &self.bands
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn into_parts(self) -> (Vec<GrayImage>, Vec<String>) {
        (self.bands, self.labels)
    }
}

/// Openings of `img` at every size of `spec`, in spec order.
pub fn opening_profile(img: &GrayImage, spec: &ProfileSpec) -> Profile {
    plain_profile(img, spec, ProfileKind::Opening)
}

/// Closings of `img` at every size of `spec`, in spec order.
pub fn closing_profile(img: &GrayImage, spec: &ProfileSpec) -> Profile {
    plain_profile(img, spec, ProfileKind::Closing)
}

fn plain_profile(img: &GrayImage, spec: &ProfileSpec, kind: ProfileKind) -> Profile {
    let bands: Vec<GrayImage> = spec
        .sizes
        .par_iter()
        .map(|&size| {
            let se = make_se(spec.shape, size).expect("spec sizes validated");
            match kind {
                ProfileKind::Opening => open(img, &se),
                ProfileKind::Closing => close(img, &se),
            }
        })
        .collect();
    let labels = spec.sizes.iter().map(|s| format!("{kind}[{s}]")).collect();
    Profile { kind, bands, labels }
}

/// Differential morphological profile: for each pair (outer, inner) the
/// opening band is `|open(outer) - open(inner)|` and the closing band is
/// `|close(outer) - close(inner)|`, per pixel. Openings and closings are
/// computed once per distinct size and reused across pairs sharing it.
pub fn dmp(img: &GrayImage, spec: &DifferentialSpec) -> (Profile, Profile) {
    let sizes = spec.distinct_sizes();
    let per_size: HashMap<u32, (GrayImage, GrayImage)> = sizes
        .par_iter()
        .map(|&size| {
            let se = make_se(spec.shape, size).expect("spec sizes validated");
            (size, (open(img, &se), close(img, &se)))
        })
        .collect();

    let mut opening_bands = Vec::with_capacity(spec.pairs.len());
    let mut closing_bands = Vec::with_capacity(spec.pairs.len());
    let mut opening_labels = Vec::with_capacity(spec.pairs.len());
    let mut closing_labels = Vec::with_capacity(spec.pairs.len());
    for &(outer, inner) in &spec.pairs {
        let (outer_open, outer_close) = &per_size[&outer];
        let (inner_open, inner_close) = &per_size[&inner];
        opening_bands.push(abs_diff(outer_open, inner_open));
        closing_bands.push(abs_diff(outer_close, inner_close));
        opening_labels.push(format!("open[{outer}-{inner}]"));
        closing_labels.push(format!("close[{outer}-{inner}]"));
    }
    (
        Profile {
            kind: ProfileKind::Opening,
            bands: opening_bands,
            labels: opening_labels,
        },
        Profile {
            kind: ProfileKind::Closing,
            bands: closing_bands,
            labels: closing_labels,
        },
    )
}

fn abs_diff(a: &GrayImage, b: &GrayImage) -> GrayImage {
    debug_assert_eq!((a.width(), a.height()), (b.width(), b.height()));
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| x.abs_diff(y))
        .collect();
    GrayImage::from_raw(a.width(), a.height(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morphology::SeShape;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(seed: u64, w: u32, h: u32) -> GrayImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = vec![0u8; w as usize * h as usize];
        rng.fill(&mut data[..]);
        GrayImage::new(w, h, data).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(ProfileSpec::new(SeShape::Square, vec![]).is_err());
        assert!(ProfileSpec::new(SeShape::Square, vec![3, 3]).is_err());
        assert!(ProfileSpec::new(SeShape::Square, vec![5, 3]).is_err());
        assert!(ProfileSpec::new(SeShape::Square, vec![3, 4]).is_err());
        assert!(ProfileSpec::new(SeShape::Square, vec![3, 5, 9]).is_ok());

        assert!(DifferentialSpec::new(SeShape::Disk, vec![]).is_err());
        assert!(DifferentialSpec::new(SeShape::Disk, vec![(3, 5)]).is_err());
        assert!(DifferentialSpec::new(SeShape::Disk, vec![(5, 5)]).is_err());
        assert!(DifferentialSpec::new(SeShape::Disk, vec![(6, 3)]).is_err());
        // Evo-style pairs sharing endpoints out of order are fine.
        assert!(DifferentialSpec::new(SeShape::Disk, vec![(29, 5), (23, 9), (23, 5)]).is_ok());
    }

    #[test]
    fn validation_lists_every_problem() {
        let err = DifferentialSpec::new(SeShape::Disk, vec![(4, 3), (3, 9)]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("outer size 4"), "{msg}");
        assert!(msg.contains("[3-9]"), "{msg}");
    }

    #[test]
    fn constant_image_gives_constant_profile_and_zero_dmp() {
        let img = GrayImage::filled(20, 12, 133).unwrap();
        let spec = ProfileSpec::new(SeShape::Square, vec![3, 5]).unwrap();
        let prof = opening_profile(&img, &spec);
        assert_eq!(prof.bands().len(), 2);
        for band in prof.bands() {
            assert_eq!(band, &img);
        }
        let dspec = DifferentialSpec::new(SeShape::Disk, vec![(9, 3), (15, 5)]).unwrap();
        let (odmp, cdmp) = dmp(&img, &dspec);
        for band in odmp.bands().iter().chain(cdmp.bands()) {
            assert!(band.data().iter().all(|&v| v == 0));
        }
    }

    #[test]
    fn impulse_opening_profile_is_zero() {
        let img = GrayImage::from_fn(9, 9, |x, y| if (x, y) == (4, 4) { 255 } else { 0 }).unwrap();
        let spec = ProfileSpec::new(SeShape::Square, vec![3]).unwrap();
        let prof = opening_profile(&img, &spec);
        assert!(prof.bands()[0].data().iter().all(|&v| v == 0));
    }

    #[test]
    fn dark_impulse_closing_profile_is_full() {
        let img = GrayImage::from_fn(9, 9, |x, y| if (x, y) == (4, 4) { 0 } else { 255 }).unwrap();
        let spec = ProfileSpec::new(SeShape::Square, vec![3]).unwrap();
        let prof = closing_profile(&img, &spec);
        assert!(prof.bands()[0].data().iter().all(|&v| v == 255));
    }

    #[test]
    fn profiles_match_brute_force_oracle() {
        use crate::morphology::reference;
        let img = random_image(21, 32, 32);
        let spec = ProfileSpec::new(SeShape::Square, vec![3, 5, 7, 9]).unwrap();
        let prof = opening_profile(&img, &spec);
        for (band, &size) in prof.bands().iter().zip(spec.sizes()) {
            let se = make_se(SeShape::Square, size).unwrap();
            assert_eq!(band, &reference::open(&img, &se));
        }
        assert_eq!(prof.labels()[2], "open[7]");
        let prof = closing_profile(&img, &spec);
        for (band, &size) in prof.bands().iter().zip(spec.sizes()) {
            let se = make_se(SeShape::Square, size).unwrap();
            assert_eq!(band, &reference::close(&img, &se));
        }
    }

    #[test]
    fn dmp_bands_match_per_pair_oracle() {
        use crate::morphology::reference;
        let img = random_image(31, 24, 20);
        let spec = DifferentialSpec::new(
            SeShape::Disk,
            vec![(29, 5), (23, 9), (23, 5), (19, 13), (17, 13), (15, 11), (13, 7)],
        )
        .unwrap();
        let (odmp, cdmp) = dmp(&img, &spec);
        for (i, &(outer, inner)) in spec.pairs().iter().enumerate() {
            let se_o = make_se(SeShape::Disk, outer).unwrap();
            let se_i = make_se(SeShape::Disk, inner).unwrap();
            assert_eq!(
                odmp.bands()[i],
                abs_diff(&reference::open(&img, &se_o), &reference::open(&img, &se_i))
            );
            assert_eq!(
                cdmp.bands()[i],
                abs_diff(&reference::close(&img, &se_o), &reference::close(&img, &se_i))
            );
        }
    }

    #[test]
    fn dmp_memoization_matches_per_pair_recompute() {
        let img = random_image(22, 24, 24);
        // Shares size 5 and 23 across pairs, like the evolved presets.
        let pairs = vec![(29, 5), (23, 9), (23, 5)];
        let spec = DifferentialSpec::new(SeShape::Disk, pairs.clone()).unwrap();
        let (odmp, cdmp) = dmp(&img, &spec);
        assert_eq!(odmp.bands().len(), pairs.len());
        assert_eq!(cdmp.bands().len(), pairs.len());
        for (i, &(outer, inner)) in pairs.iter().enumerate() {
            let se_o = make_se(SeShape::Disk, outer).unwrap();
            let se_i = make_se(SeShape::Disk, inner).unwrap();
            let fresh_open = abs_diff(&open(&img, &se_o), &open(&img, &se_i));
            let fresh_close = abs_diff(&close(&img, &se_o), &close(&img, &se_i));
            assert_eq!(odmp.bands()[i], fresh_open);
            assert_eq!(cdmp.bands()[i], fresh_close);
            assert_eq!(odmp.labels()[i], format!("open[{outer}-{inner}]"));
            assert_eq!(cdmp.labels()[i], format!("close[{outer}-{inner}]"));
        }
    }

    #[test]
    fn nested_square_pair_differential_has_consistent_sign() {
        // For square elements the opening is non-increasing in size, so the
        // differential equals open(inner) - open(outer) before the absolute
        // value.
        let img = random_image(23, 28, 28);
        let se3 = make_se(SeShape::Square, 3).unwrap();
        let se9 = make_se(SeShape::Square, 9).unwrap();
        let (o3, o9) = (open(&img, &se3), open(&img, &se9));
        for i in 0..img.data().len() {
            assert!(o3.data()[i] >= o9.data()[i]);
        }
    }
}
