//! Exit-code and interface behavior of the `dmptool` binary.

use std::path::Path;
use std::process::Command;

use dmp_core::formats::{read_tensor, write_png_rgb};
use dmp_core::image::RgbImage;

const BIN: &str = env!("CARGO_BIN_EXE_dmptool");

fn dmptool(args: &[&str], dir: &Path) -> (Option<i32>, String, String) {
    let out = Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn dmptool");
    (
        out.status.code(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write_test_image(dir: &Path) {
    let img = RgbImage::from_fn(64, 48, |x, y| [(x * 4) as u8, (y * 5) as u8, 128]).unwrap();
    write_png_rgb(dir.join("img.png"), &img).unwrap();
}

#[test]
fn unknown_preset_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    write_test_image(tmp.path());
    let (code, _, err) = dmptool(
        &["dmp", "img.png", "--preset", "evolved", "-o", "out.dmpt"],
        tmp.path(),
    );
    assert_eq!(code, Some(2));
    assert!(err.contains("original, improved, evo1, evo2"), "{err}");
}

#[test]
fn explicit_pairs_follow_channel_law() {
    let tmp = tempfile::tempdir().unwrap();
    write_test_image(tmp.path());
    let (code, out, _) = dmptool(
        &["dmp", "img.png", "--pairs", "9-3,5-3", "-o", "out.dmpt"],
        tmp.path(),
    );
    assert_eq!(code, Some(0));
    assert!(out.contains("channels: 5"), "{out}");
    let stack = read_tensor(tmp.path().join("out.dmpt")).unwrap();
    assert_eq!(stack.channels(), 5);
    assert_eq!(
        stack.labels(),
        &["close[9-3]", "close[5-3]", "gray", "open[9-3]", "open[5-3]"]
    );
}

#[test]
fn zero_byte_input_is_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("zero.png"), b"").unwrap();
    let (code, _, err) = dmptool(
        &["dmp", "zero.png", "--preset", "original", "-o", "out.dmpt"],
        tmp.path(),
    );
    assert_eq!(code, Some(1));
    assert!(err.contains("zero.png"), "{err}");
}

#[test]
fn empty_eval_directories_are_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(tmp.path().join("a")).unwrap();
    std::fs::create_dir_all(tmp.path().join("b")).unwrap();
    let (code, _, err) = dmptool(
        &["eval", "--gt-dir", "a", "--pred-dir", "b", "--num-classes", "4"],
        tmp.path(),
    );
    assert_eq!(code, Some(2));
    assert!(err.contains("nothing to evaluate"), "{err}");
}

#[test]
fn eval_prints_the_worked_example() {
    // gt [0,0;1,1] vs pred [0,1;1,1] as a single pair: mIoU = 7/12 -> 58.33.
    let tmp = tempfile::tempdir().unwrap();
    let gt_dir = tmp.path().join("gt");
    let pred_dir = tmp.path().join("pred");
    std::fs::create_dir_all(&gt_dir).unwrap();
    std::fs::create_dir_all(&pred_dir).unwrap();
    let gt = dmp_core::image::LabelMask::new(2, 2, vec![0, 0, 1, 1]).unwrap();
    let pred = dmp_core::image::LabelMask::new(2, 2, vec![0, 1, 1, 1]).unwrap();
    dmp_core::formats::write_png_mask(gt_dir.join("t.png"), &gt).unwrap();
    dmp_core::formats::write_png_mask(pred_dir.join("t.png"), &pred).unwrap();
    let (code, out, _) = dmptool(
        &["eval", "--gt-dir", "gt", "--pred-dir", "pred", "--num-classes", "2"],
        tmp.path(),
    );
    assert_eq!(code, Some(0));
    let macro_row = out.lines().find(|l| l.starts_with("macro")).unwrap();
    assert!(macro_row.contains("58.33"), "{out}");
}

#[test]
fn unmatched_filenames_are_listed() {
    let tmp = tempfile::tempdir().unwrap();
    let gt = tmp.path().join("gt");
    let pred = tmp.path().join("pred");
    std::fs::create_dir_all(&gt).unwrap();
    std::fs::create_dir_all(&pred).unwrap();
    let mask = dmp_core::image::LabelMask::filled(4, 4, 1).unwrap();
    dmp_core::formats::write_png_mask(gt.join("a.png"), &mask).unwrap();
    dmp_core::formats::write_png_mask(gt.join("b.png"), &mask).unwrap();
    dmp_core::formats::write_png_mask(pred.join("b.png"), &mask).unwrap();
    dmp_core::formats::write_png_mask(pred.join("c.png"), &mask).unwrap();
    let (code, _, err) = dmptool(
        &["eval", "--gt-dir", "gt", "--pred-dir", "pred", "--num-classes", "4"],
        tmp.path(),
    );
    assert_eq!(code, Some(1));
    assert!(err.contains("a.png"), "{err}");
    assert!(err.contains("c.png"), "{err}");
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let tmp = tempfile::tempdir().unwrap();
    write_test_image(tmp.path());
    std::fs::write(
        tmp.path().join("cfg.json"),
        r#"{"preset": "original", "shape": "disk", "domain": "raw8"}"#,
    )
    .unwrap();

    let (code, out, _) = dmptool(
        &["--config", "cfg.json", "dmp", "img.png", "-o", "a.dmpt", "--print-config"],
        tmp.path(),
    );
    assert_eq!(code, Some(0));
    assert!(out.contains("\"shape\": \"disk\""), "{out}");
    assert!(out.contains("channels: 7"), "{out}");

    // Flag overrides the file preset: improved -> 15 channels.
    let (code, out, _) = dmptool(
        &[
            "--config", "cfg.json", "dmp", "img.png", "-o", "b.dmpt", "--preset", "improved",
        ],
        tmp.path(),
    );
    assert_eq!(code, Some(0));
    assert!(out.contains("channels: 15"), "{out}");
}

#[test]
fn config_violations_are_listed_atomically() {
    let tmp = tempfile::tempdir().unwrap();
    write_test_image(tmp.path());
    let (code, _, err) = dmptool(
        &[
            "dmp", "img.png", "-o", "x.dmpt",
            "--pairs", "3-9,4-2",
            "--shape", "rhombus",
        ],
        tmp.path(),
    );
    assert_eq!(code, Some(2));
    assert!(err.contains("rhombus"), "{err}");
    assert!(err.contains("[3-9]"), "{err}");
    assert!(err.contains("outer size 4"), "{err}");
}

#[test]
fn thread_count_does_not_change_output() {
    let tmp = tempfile::tempdir().unwrap();
    write_test_image(tmp.path());
    for (threads, name) in [("1", "t1.dmpt"), ("4", "t4.dmpt")] {
        let (code, _, _) = dmptool(
            &[
                "--threads", threads, "dmp", "img.png", "--preset", "evo1", "--shape", "disk",
                "-o", name,
            ],
            tmp.path(),
        );
        assert_eq!(code, Some(0));
    }
    let a = std::fs::read(tmp.path().join("t1.dmpt")).unwrap();
    let b = std::fs::read(tmp.path().join("t4.dmpt")).unwrap();
    assert_eq!(a, b, "outputs must not depend on --threads");
}
