//! Structural checks of the vendored MNIST subset against an independent
//! manual parse of the IDX headers.

use std::path::PathBuf;

use ticnn::data::{distort, load_idx, DistortKind, DistortionSpec};

fn data_dir() -> PathBuf {
    if let Ok(dir) = std::env::var("TICNN_MNIST_DIR") {
        return PathBuf::from(dir);
    }
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist")
}

fn be_u32(bytes: &[u8], off: usize) -> u32 {
    u32::from_be_bytes([bytes[off], bytes[off + 1], bytes[off + 2], bytes[off + 3]])
}

#[test]
fn vendored_idx_headers_match_manual_inspection() {
    let dir = data_dir();
    let img_path = dir.join("train-images-idx3-ubyte");
    let lbl_path = dir.join("train-labels-idx1-ubyte");

    // independent header read, no parser involved
    let raw = std::fs::read(&img_path).expect("vendored MNIST images present");
    assert_eq!(be_u32(&raw, 0), 0x0000_0803);
    let count = be_u32(&raw, 4) as usize;
    let rows = be_u32(&raw, 8) as usize;
    let cols = be_u32(&raw, 12) as usize;
    assert_eq!((rows, cols), (28, 28));
    assert_eq!(raw.len(), 16 + count * rows * cols);

    let raw_lbl = std::fs::read(&lbl_path).expect("vendored MNIST labels present");
    assert_eq!(be_u32(&raw_lbl, 0), 0x0000_0801);
    assert_eq!(be_u32(&raw_lbl, 4) as usize, count);

    let set = load_idx(&img_path, &lbl_path).unwrap();
    assert_eq!(set.len(), count);
    assert_eq!(set.images.shape().h, 28);
    assert_eq!(set.images.shape().w, 28);
    assert!(set.labels.iter().all(|&l| l < 10));
    assert!(set.images.data().iter().all(|&v| (0.0..=1.0).contains(&v)));

    // pixel values match the raw bytes exactly under /255 scaling
    for probe in [0usize, 1000, count * rows * cols - 1] {
        let expect = raw[16 + probe] as f64 / 255.0;
        assert_eq!(set.images.data()[probe] as f64, expect);
    }
}

#[test]
fn test_split_is_balanced_and_big_enough() {
    let dir = data_dir();
    let set = load_idx(
        &dir.join("t10k-images-idx3-ubyte"),
        &dir.join("t10k-labels-idx1-ubyte"),
    )
    .unwrap();
    assert!(set.len() >= 1000, "need at least 1000 held-out images");
    let mut counts = [0usize; 10];
    for &l in &set.labels {
        counts[l as usize] += 1;
    }
    let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
    assert_eq!(lo, hi, "held-out split should be class balanced: {counts:?}");
}

#[test]
fn translate_protocol_keeps_digit_bytes() {
    let dir = data_dir();
    let set = load_idx(
        &dir.join("t10k-images-idx3-ubyte"),
        &dir.join("t10k-labels-idx1-ubyte"),
    )
    .unwrap()
    .take(32)
    .unwrap();
    let out = distort(&set, &DistortionSpec::new(DistortKind::Translate, 5)).unwrap();
    let os = out.images.shape();
    assert_eq!((os.h, os.w), (42, 42));
    // every canvas contains the source digit pixels at some integer offset
    for i in 0..set.len() {
        let src = set.images.example(i);
        let dst = out.images.example(i);
        let mut hits = 0;
        for oy in 0..=14 {
            for ox in 0..=14 {
                if (0..28).all(|y| {
                    (0..28).all(|x| dst[(y + oy) * 42 + (x + ox)] == src[y * 28 + x])
                }) {
                    hits += 1;
                }
            }
        }
        assert!(hits >= 1, "digit {i} lost by translation");
    }
    assert_eq!(out.labels, set.labels);
}
