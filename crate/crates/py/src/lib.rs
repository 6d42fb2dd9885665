//! Python bindings for the DMP toolkit.
//!
//! Images are numpy arrays: grayscale `uint8 [H, W]`, RGB `uint8 [H, W, 3]`,
//! band stacks channel-major `[C, H, W]`. Heavy operations release the GIL.

use numpy::ndarray::{Array2, Array3};
use numpy::{
    IntoPyArray, PyArray2, PyArray3, PyReadonlyArray2, PyReadonlyArray3, PyReadonlyArrayDyn,
};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use dmp_core::image::{GrayImage, LabelMask, RgbImage};
use dmp_core::metrics::ConfusionMatrix;
use dmp_core::morphology::{self, make_se, SeShape};
use dmp_core::profile::DifferentialSpec;
use dmp_core::stack::{
    DmpPreset, FeatureStack, StackData, ValueDomain,
};
use dmp_core::tiler;

fn pyerr(e: dmp_core::Error) -> PyErr {
    match &e {
        dmp_core::Error::Io { .. } | dmp_core::Error::PngDecode { .. } => {
            PyIOError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn gray_from_array(arr: &PyReadonlyArray2<'_, u8>) -> PyResult<GrayImage> {
    let view = arr.as_array();
    let (h, w) = (view.nrows() as u32, view.ncols() as u32);
    let data: Vec<u8> = view.iter().copied().collect();
    GrayImage::new(w, h, data).map_err(pyerr)
}

fn mask_from_array(arr: &PyReadonlyArray2<'_, u8>) -> PyResult<LabelMask> {
    let view = arr.as_array();
    let (h, w) = (view.nrows() as u32, view.ncols() as u32);
    let data: Vec<u8> = view.iter().copied().collect();
    LabelMask::new(w, h, data).map_err(pyerr)
}

fn rgb_from_array(arr: &PyReadonlyArray3<'_, u8>) -> PyResult<RgbImage> {
    let view = arr.as_array();
    let (h, w, c) = view.dim();
    if c != 3 {
        return Err(PyValueError::new_err(format!(
            "rgb array must be [H, W, 3], got last axis {c}"
        )));
    }
    let data: Vec<u8> = view.iter().copied().collect();
    RgbImage::new(w as u32, h as u32, data).map_err(pyerr)
}

fn gray_to_array<'py>(py: Python<'py>, img: GrayImage) -> Bound<'py, PyArray2<u8>> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    Array2::from_shape_vec((h, w), img.into_data())
        .expect("image length matches shape")
        .into_pyarray(py)
}

fn parse_shape(shape: &str) -> PyResult<SeShape> {
    shape.parse().map_err(pyerr)
}

fn spec_from(shape: &str, pairs: Vec<(u32, u32)>) -> PyResult<DifferentialSpec> {
    DifferentialSpec::new(parse_shape(shape)?, pairs).map_err(pyerr)
}

/// (dx, dy) offsets of a structuring element.
#[pyfunction]
fn se_offsets(shape: &str, size: u32) -> PyResult<Vec<(i32, i32)>> {
    let se = make_se(parse_shape(shape)?, size).map_err(pyerr)?;
    Ok(se.offsets().to_vec())
}

macro_rules! morph_fn {
    ($name:ident, $op:path, $doc:literal) => {
        #[doc = $doc]
        #[pyfunction]
        fn $name<'py>(
            py: Python<'py>,
            img: PyReadonlyArray2<'py, u8>,
            shape: &str,
            size: u32,
        ) -> PyResult<Bound<'py, PyArray2<u8>>> {
            let se = make_se(parse_shape(shape)?, size).map_err(pyerr)?;
            let gray = gray_from_array(&img)?;
            let out = py.detach(move || $op(&gray, &se));
            Ok(gray_to_array(py, out))
        }
    };
}

morph_fn!(dilate, morphology::dilate, "Neighborhood maximum over the SE.");
morph_fn!(erode, morphology::erode, "Neighborhood minimum over the SE.");
morph_fn!(opening, morphology::open, "Erosion followed by dilation.");
morph_fn!(closing, morphology::close, "Dilation followed by erosion.");

/// BT.601 luma of an RGB array, round-half-up integer arithmetic.
#[pyfunction]
fn to_luma<'py>(
    py: Python<'py>,
    rgb: PyReadonlyArray3<'py, u8>,
) -> PyResult<Bound<'py, PyArray2<u8>>> {
    let img = rgb_from_array(&rgb)?;
    Ok(gray_to_array(py, dmp_core::stack::to_luma(&img)))
}

/// (outer, inner) pair list of a named preset.
#[pyfunction]
fn preset_pairs(name: &str) -> PyResult<Vec<(u32, u32)>> {
    let preset: DmpPreset = name.parse().map_err(pyerr)?;
    Ok(preset.pairs().to_vec())
}

/// Differential morphological profile of a grayscale array. Returns
/// `(opening_bands, closing_bands)`, each `uint8 [K, H, W]` in pair order.
#[pyfunction]
fn dmp<'py>(
    py: Python<'py>,
    img: PyReadonlyArray2<'py, u8>,
    shape: &str,
    pairs: Vec<(u32, u32)>,
) -> PyResult<(Bound<'py, PyArray3<u8>>, Bound<'py, PyArray3<u8>>)> {
    let spec = spec_from(shape, pairs)?;
    let gray = gray_from_array(&img)?;
    let (odmp, cdmp) = py.detach(move || dmp_core::profile::dmp(&gray, &spec));
    let pack = |bands: Vec<GrayImage>| {
        let (w, h) = (bands[0].width() as usize, bands[0].height() as usize);
        let mut flat = Vec::with_capacity(bands.len() * w * h);
        let k = bands.len();
        for band in bands {
            flat.extend_from_slice(band.data());
        }
        Array3::from_shape_vec((k, h, w), flat)
            .expect("band lengths match")
            .into_pyarray(py)
    };
    let (o_bands, _) = odmp.into_parts();
    let (c_bands, _) = cdmp.into_parts();
    Ok((pack(o_bands), pack(c_bands)))
}

/// Depth-extended feature stack: closing bands, gray, opening bands.
/// `img` is either RGB `[H, W, 3]` (luma-converted first) or gray `[H, W]`.
/// Returns `(stack, labels)` where the stack is `[C, H, W]`, float32 in
/// [0, 1] for `domain="unit"` or uint8 for `domain="raw8"`.
#[pyfunction]
#[pyo3(signature = (img, shape, pairs, domain="unit"))]
fn stack_depth_extended<'py>(
    py: Python<'py>,
    img: PyReadonlyArrayDyn<'py, u8>,
    shape: &str,
    pairs: Vec<(u32, u32)>,
    domain: &str,
) -> PyResult<(Py<PyAny>, Vec<String>)> {
    let spec = spec_from(shape, pairs)?;
    let domain: ValueDomain = domain.parse().map_err(pyerr)?;
    let view = img.as_array();
    let stack = match view.ndim() {
        2 => {
            let v = view.into_dimensionality::<numpy::ndarray::Ix2>().unwrap();
            let gray = GrayImage::new(
                v.ncols() as u32,
                v.nrows() as u32,
                v.iter().copied().collect(),
            )
            .map_err(pyerr)?;
            py.detach(move || dmp_core::stack::stack_depth_extended_gray(&gray, &spec, domain))
        }
        3 => {
            let v = view.into_dimensionality::<numpy::ndarray::Ix3>().unwrap();
            let (h, w, c) = v.dim();
            if c != 3 {
                return Err(PyValueError::new_err(format!(
                    "rgb array must be [H, W, 3], got last axis {c}"
                )));
            }
            let rgb = RgbImage::new(w as u32, h as u32, v.iter().copied().collect())
                .map_err(pyerr)?;
            py.detach(move || dmp_core::stack::stack_depth_extended(&rgb, &spec, domain))
        }
        n => {
            return Err(PyValueError::new_err(format!(
                "expected a [H, W] or [H, W, 3] array, got {n} dimensions"
            )))
        }
    };
    stack_to_py(py, stack)
}

fn stack_to_py(py: Python<'_>, stack: FeatureStack) -> PyResult<(Py<PyAny>, Vec<String>)> {
    let shape = (
        stack.channels() as usize,
        stack.height() as usize,
        stack.width() as usize,
    );
    let labels = stack.labels().to_vec();
    let array: Py<PyAny> = match stack.data() {
        StackData::Raw8(v) => Array3::from_shape_vec(shape, v.clone())
            .expect("stack length matches shape")
            .into_pyarray(py)
            .into_any()
            .unbind(),
        StackData::UnitFloat(v) => Array3::from_shape_vec(shape, v.clone())
            .expect("stack length matches shape")
            .into_pyarray(py)
            .into_any()
            .unbind(),
    };
    Ok((array, labels))
}

/// Row-major (x, y) tile origins covering a raster.
#[pyfunction]
#[pyo3(signature = (image_width, image_height, window=896, step=512))]
fn plan_tiles(
    image_width: u32,
    image_height: u32,
    window: u32,
    step: u32,
) -> PyResult<Vec<(u32, u32)>> {
    Ok(tiler::plan_tiles(image_width, image_height, window, step)
        .map_err(pyerr)?
        .origins)
}

/// Window-sized crop with edge replication past the borders.
#[pyfunction]
fn extract_tile<'py>(
    py: Python<'py>,
    img: PyReadonlyArray2<'py, u8>,
    origin: (u32, u32),
    window: u32,
) -> PyResult<Bound<'py, PyArray2<u8>>> {
    let gray = gray_from_array(&img)?;
    let tile = tiler::extract_tile_gray(&gray, origin, window).map_err(pyerr)?;
    Ok(gray_to_array(py, tile))
}

/// Majority-vote reassembly of per-tile label masks (`uint8 [N, window,
/// window]` in plan order); ties go to the lowest class index.
#[pyfunction]
fn stitch_labels<'py>(
    py: Python<'py>,
    image_width: u32,
    image_height: u32,
    window: u32,
    step: u32,
    tiles: PyReadonlyArray3<'py, u8>,
    num_classes: usize,
) -> PyResult<Bound<'py, PyArray2<u8>>> {
    let plan = tiler::plan_tiles(image_width, image_height, window, step).map_err(pyerr)?;
    let view = tiles.as_array();
    let (n, th, tw) = view.dim();
    let masks: Vec<LabelMask> = (0..n)
        .map(|i| {
            let flat: Vec<u8> = view.index_axis(numpy::ndarray::Axis(0), i).iter().copied().collect();
            LabelMask::new(tw as u32, th as u32, flat).map_err(pyerr)
        })
        .collect::<PyResult<_>>()?;
    let mask = tiler::stitch_labels(&plan, &masks, num_classes).map_err(pyerr)?;
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    Ok(Array2::from_shape_vec((h, w), mask.labels().to_vec())
        .expect("mask length matches shape")
        .into_pyarray(py))
}

/// C x C confusion counts, `counts[gt, pred]`.
#[pyfunction]
fn confusion_matrix<'py>(
    py: Python<'py>,
    gt: PyReadonlyArray2<'py, u8>,
    pred: PyReadonlyArray2<'py, u8>,
    num_classes: usize,
) -> PyResult<Bound<'py, PyArray2<u64>>> {
    let gt = mask_from_array(&gt)?;
    let pred = mask_from_array(&pred)?;
    let mut cm = ConfusionMatrix::new(num_classes).map_err(pyerr)?;
    cm.accumulate(&gt, &pred, None).map_err(pyerr)?;
    Ok(
        Array2::from_shape_vec((num_classes, num_classes), cm.counts().to_vec())
            .expect("matrix is square")
            .into_pyarray(py),
    )
}

/// Per-class and macro metrics from confusion counts. Absent classes have
/// `None` entries and are excluded from the macro averages.
#[pyfunction]
#[pyo3(signature = (counts, exclude_background=false))]
fn compute_metrics<'py>(
    py: Python<'py>,
    counts: PyReadonlyArray2<'py, u64>,
    exclude_background: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let view = counts.as_array();
    let (r, c) = view.dim();
    if r != c {
        return Err(PyValueError::new_err(format!(
            "confusion matrix must be square, got {r}x{c}"
        )));
    }
    let mut total = vec![0u64; r * c];
    for ((g, p), &v) in view.indexed_iter() {
        total[g * c + p] = v;
    }
    let cm = ConfusionMatrix::from_counts(r, total).map_err(pyerr)?;
    let metrics = if exclude_background {
        cm.compute_metrics_skipping(&[0])
    } else {
        cm.compute_metrics()
    };
    let dict = PyDict::new(py);
    let per: Vec<Bound<'_, PyDict>> = metrics
        .per_class
        .iter()
        .map(|pc| {
            let d = PyDict::new(py);
            d.set_item("class", pc.class).unwrap();
            d.set_item("iou", pc.iou).unwrap();
            d.set_item("precision", pc.precision).unwrap();
            d.set_item("recall", pc.recall).unwrap();
            d.set_item("f1", pc.f1).unwrap();
            d
        })
        .collect();
    dict.set_item("per_class", per)?;
    dict.set_item("excluded", &metrics.excluded)?;
    dict.set_item("skipped", &metrics.skipped)?;
    dict.set_item("miou", metrics.miou)?;
    dict.set_item("mf1", metrics.mf1)?;
    dict.set_item("mprecision", metrics.mprecision)?;
    dict.set_item("mrecall", metrics.mrecall)?;
    Ok(dict)
}

/// Color-coded error mask for one foreground class as `uint8 [H, W, 3]`.
#[pyfunction]
fn render_error_mask<'py>(
    py: Python<'py>,
    gt: PyReadonlyArray2<'py, u8>,
    pred: PyReadonlyArray2<'py, u8>,
    foreground_class: u8,
) -> PyResult<Bound<'py, PyArray3<u8>>> {
    let gt = mask_from_array(&gt)?;
    let pred = mask_from_array(&pred)?;
    let img = dmp_core::metrics::render_error_mask(&gt, &pred, foreground_class).map_err(pyerr)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(Array3::from_shape_vec((h, w, 3), img.data().to_vec())
        .expect("rgb length matches shape")
        .into_pyarray(py))
}

/// Write a `[C, H, W]` uint8 or float32 stack to a DMPT container.
#[pyfunction]
fn write_tensor(path: &str, array: Bound<'_, PyAny>, labels: Vec<String>) -> PyResult<()> {
    let stack = if let Ok(arr) = array.extract::<PyReadonlyArray3<u8>>() {
        let (c, h, w) = arr.as_array().dim();
        FeatureStack::from_parts(
            c as u32,
            w as u32,
            h as u32,
            StackData::Raw8(arr.as_array().iter().copied().collect()),
            labels,
        )
        .map_err(pyerr)?
    } else if let Ok(arr) = array.extract::<PyReadonlyArray3<f32>>() {
        let (c, h, w) = arr.as_array().dim();
        FeatureStack::from_parts(
            c as u32,
            w as u32,
            h as u32,
            StackData::UnitFloat(arr.as_array().iter().copied().collect()),
            labels,
        )
        .map_err(pyerr)?
    } else {
        return Err(PyValueError::new_err(
            "array must be a [C, H, W] uint8 or float32 ndarray",
        ));
    };
    dmp_core::formats::write_tensor(&stack, path).map_err(pyerr)
}

/// Read a DMPT container; returns `(array, labels)`.
#[pyfunction]
fn read_tensor(py: Python<'_>, path: &str) -> PyResult<(Py<PyAny>, Vec<String>)> {
    let stack = dmp_core::formats::read_tensor(path).map_err(pyerr)?;
    stack_to_py(py, stack)
}

#[pymodule]
fn dmp_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(se_offsets, m)?)?;
    m.add_function(wrap_pyfunction!(dilate, m)?)?;
    m.add_function(wrap_pyfunction!(erode, m)?)?;
    m.add_function(wrap_pyfunction!(opening, m)?)?;
    m.add_function(wrap_pyfunction!(closing, m)?)?;
    m.add_function(wrap_pyfunction!(to_luma, m)?)?;
    m.add_function(wrap_pyfunction!(preset_pairs, m)?)?;
    m.add_function(wrap_pyfunction!(dmp, m)?)?;
    m.add_function(wrap_pyfunction!(stack_depth_extended, m)?)?;
    m.add_function(wrap_pyfunction!(plan_tiles, m)?)?;
    m.add_function(wrap_pyfunction!(extract_tile, m)?)?;
    m.add_function(wrap_pyfunction!(stitch_labels, m)?)?;
    m.add_function(wrap_pyfunction!(confusion_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(compute_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(render_error_mask, m)?)?;
    m.add_function(wrap_pyfunction!(write_tensor, m)?)?;
    m.add_function(wrap_pyfunction!(read_tensor, m)?)?;
    Ok(())
}
