//! MNIST IDX parsing/writing, the R/S/T/RTS distortion protocols, and
//! deterministic minibatch scheduling.
//!
//! Distorted datasets are generated once from a seed and persisted back in
//! IDX layout, so any MNIST tool can read them; training-time randomness
//! comes only from the transform layers.

use std::fs;
use std::io::Read;
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::tensor::{Shape, Tensor};
use crate::transform::{apply_into, build_sampler, compose, AffineParams};
use crate::{Error, Real, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

/// Provenance of a dataset: how it was produced.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SetMeta {
    pub name: String,
    pub distortion: String,
    pub seed: u64,
    pub canvas: usize,
}

/// Images with class labels. Pixels are stored in [0, 1].
#[derive(Clone, Debug)]
pub struct LabeledImageSet {
    pub images: Tensor,
    pub labels: Vec<u8>,
    pub meta: SetMeta,
}

impl LabeledImageSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Copy the given examples into a minibatch.
    pub fn gather(&self, indices: &[usize]) -> Result<(Tensor, Vec<u8>)> {
        let s = self.images.shape();
        let f = s.features();
        let mut data = Vec::with_capacity(indices.len() * f);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.images.example(i));
            labels.push(self.labels[i]);
        }
        let batch = Tensor::from_vec(Shape::new(indices.len(), s.c, s.h, s.w), data)?;
        Ok((batch, labels))
    }

    /// A new set containing the first `count` examples.
    pub fn take(&self, count: usize) -> Result<LabeledImageSet> {
        let count = count.min(self.len());
        let (images, labels) = self.gather(&(0..count).collect::<Vec<_>>())?;
        Ok(LabeledImageSet { images, labels, meta: self.meta.clone() })
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .map_err(|e| Error::Format(format!("cannot open {}: {e}", path.display())))?
        .read_to_end(&mut bytes)?;
    Ok(bytes)
}

/// Decode a big-endian IDX image/label file pair. Image bytes are scaled to
/// [0, 1] by division by 255.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledImageSet> {
    let img_bytes = read_file(images_path)?;
    let mut cur = std::io::Cursor::new(&img_bytes);
    let magic = cur
        .read_u32::<BigEndian>()
        .map_err(|_| Error::Format(format!("{}: truncated header", images_path.display())))?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}",
            images_path.display()
        )));
    }
    let count = cur.read_u32::<BigEndian>().map_err(|_| truncated(images_path))? as usize;
    let rows = cur.read_u32::<BigEndian>().map_err(|_| truncated(images_path))? as usize;
    let cols = cur.read_u32::<BigEndian>().map_err(|_| truncated(images_path))? as usize;
    let payload = &img_bytes[16..];
    let expect = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::Format(format!("{}: dim overflow", images_path.display())))?;
    if payload.len() != expect {
        return Err(Error::Format(format!(
            "{}: payload holds {} bytes, header promises {expect}",
            images_path.display(),
            payload.len()
        )));
    }

    let lbl_bytes = read_file(labels_path)?;
    let mut cur = std::io::Cursor::new(&lbl_bytes);
    let magic = cur.read_u32::<BigEndian>().map_err(|_| truncated(labels_path))?;
    if magic != LABELS_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic {magic:#010x}, expected {LABELS_MAGIC:#010x}",
            labels_path.display()
        )));
    }
    let lbl_count = cur.read_u32::<BigEndian>().map_err(|_| truncated(labels_path))? as usize;
    if lbl_count != count {
        return Err(Error::Format(format!(
            "{} images but {} labels",
            count, lbl_count
        )));
    }
    let labels = lbl_bytes[8..].to_vec();
    if labels.len() != count {
        return Err(Error::Format(format!(
            "{}: payload holds {} labels, header promises {count}",
            labels_path.display(),
            labels.len()
        )));
    }

    let data: Vec<Real> = payload.iter().map(|&b| b as Real / 255.0).collect();
    let images = Tensor::from_vec(Shape::new(count, 1, rows, cols), data)?;
    let name = images_path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(LabeledImageSet {
        images,
        labels,
        meta: SetMeta { name, distortion: "none".into(), seed: 0, canvas: cols },
    })
}

fn truncated(path: &Path) -> Error {
    Error::Format(format!("{}: truncated header", path.display()))
}

/// Decode an IDX image file without labels (used for retrieval corpora).
pub fn load_idx_images(images_path: &Path) -> Result<Tensor> {
    let bytes = read_file(images_path)?;
    let mut cur = std::io::Cursor::new(&bytes);
    let magic = cur.read_u32::<BigEndian>().map_err(|_| truncated(images_path))?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}",
            images_path.display()
        )));
    }
    let count = cur.read_u32::<BigEndian>().map_err(|_| truncated(images_path))? as usize;
    let rows = cur.read_u32::<BigEndian>().map_err(|_| truncated(images_path))? as usize;
    let cols = cur.read_u32::<BigEndian>().map_err(|_| truncated(images_path))? as usize;
    let payload = &bytes[16..];
    let expect = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::Format(format!("{}: dim overflow", images_path.display())))?;
    if payload.len() != expect {
        return Err(Error::Format(format!(
            "{}: payload holds {} bytes, header promises {expect}",
            images_path.display(),
            payload.len()
        )));
    }
    Tensor::from_vec(
        Shape::new(count, 1, rows, cols),
        payload.iter().map(|&b| b as Real / 255.0).collect(),
    )
}

/// Write a set back out as an IDX pair. Pixels are quantized with
/// round(clamp(v)·255). Files are written atomically (temp + rename).
pub fn save_idx(set: &LabeledImageSet, images_path: &Path, labels_path: &Path) -> Result<()> {
    let s = set.images.shape();
    let mut img = Vec::with_capacity(16 + s.len());
    img.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    img.extend_from_slice(&(s.n as u32).to_be_bytes());
    img.extend_from_slice(&(s.h as u32).to_be_bytes());
    img.extend_from_slice(&(s.w as u32).to_be_bytes());
    img.extend(
        set.images
            .data()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    let mut lbl = Vec::with_capacity(8 + set.labels.len());
    lbl.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    lbl.extend_from_slice(&(set.labels.len() as u32).to_be_bytes());
    lbl.extend_from_slice(&set.labels);
    write_atomic(images_path, &img)?;
    write_atomic(labels_path, &lbl)
}

/// Write via a sibling temp file and rename, so readers never observe a
/// half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp_write");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Which distortion protocol to apply.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DistortKind {
    None,
    /// Uniform random rotation.
    Rotate,
    /// Uniform random isotropic scaling.
    Scale,
    /// Random integer placement on a larger canvas.
    Translate,
    /// Rotation + scaling, then random canvas placement.
    Rts,
}

impl DistortKind {
    pub fn parse(s: &str) -> Result<DistortKind> {
        match s {
            "none" => Ok(DistortKind::None),
            "R" => Ok(DistortKind::Rotate),
            "S" => Ok(DistortKind::Scale),
            "T" => Ok(DistortKind::Translate),
            "RTS" => Ok(DistortKind::Rts),
            other => Err(Error::Input(format!(
                "unknown distortion kind {other:?}, expected none|R|S|T|RTS"
            ))),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            DistortKind::None => "none",
            DistortKind::Rotate => "R",
            DistortKind::Scale => "S",
            DistortKind::Translate => "T",
            DistortKind::Rts => "RTS",
        }
    }
}

/// Parameter ranges for [`distort`]. All draws are uniform.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistortionSpec {
    pub kind: DistortKind,
    pub angle_min: Real,
    pub angle_max: Real,
    pub scale_min: Real,
    pub scale_max: Real,
    pub canvas: usize,
    pub seed: u64,
}

impl DistortionSpec {
    /// The distorted-MNIST defaults: R ±90°, S [0.7, 1.2], T on a 42-pixel
    /// canvas, RTS ±45° with both.
    pub fn new(kind: DistortKind, seed: u64) -> DistortionSpec {
        let (angle_min, angle_max) = match kind {
            DistortKind::Rotate => (-90.0, 90.0),
            DistortKind::Rts => (-45.0, 45.0),
            _ => (0.0, 0.0),
        };
        DistortionSpec {
            kind,
            angle_min,
            angle_max,
            scale_min: 0.7,
            scale_max: 1.2,
            canvas: 42,
            seed,
        }
    }

    fn validate(&self, side: usize) -> Result<()> {
        if self.angle_min > self.angle_max || self.scale_min > self.scale_max {
            return Err(Error::Input(format!("invalid parameter ranges: {self:?}")));
        }
        if self.scale_min <= 0.0 {
            return Err(Error::Input("scale range must be positive".into()));
        }
        let uses_canvas = matches!(
            self.kind,
            DistortKind::Translate | DistortKind::Rts | DistortKind::None
        );
        if uses_canvas && self.canvas < side {
            return Err(Error::Input(format!(
                "canvas {} smaller than source side {side}",
                self.canvas
            )));
        }
        Ok(())
    }
}

/// One image's drawn parameters.
#[derive(Clone, Copy, Debug)]
struct Draw {
    angle: Real,
    scale: Real,
    off_x: usize,
    off_y: usize,
}

fn uniform(rng: &mut ChaCha8Rng, lo: Real, hi: Real) -> Real {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

/// Apply the distortion protocol to every image. Per-image parameters are
/// pre-drawn in image order (angle, scale, offsets — only those the kind
/// uses), so the result is reproducible no matter how the warps execute.
pub fn distort(set: &LabeledImageSet, spec: &DistortionSpec) -> Result<LabeledImageSet> {
    let s = set.images.shape();
    spec.validate(s.h.max(s.w))?;
    if spec.kind == DistortKind::None && spec.canvas == s.h && spec.canvas == s.w {
        let mut out = set.clone();
        out.meta = meta_for(set, spec);
        return Ok(out);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let draws: Vec<Draw> = (0..s.n)
        .map(|_| {
            let angle = match spec.kind {
                DistortKind::Rotate | DistortKind::Rts => {
                    uniform(&mut rng, spec.angle_min, spec.angle_max)
                }
                _ => 0.0,
            };
            let scale = match spec.kind {
                DistortKind::Scale | DistortKind::Rts => {
                    uniform(&mut rng, spec.scale_min, spec.scale_max)
                }
                _ => 1.0,
            };
            let (off_x, off_y) = match spec.kind {
                DistortKind::Translate | DistortKind::Rts => (
                    rng.gen_range(0..=spec.canvas - s.w),
                    rng.gen_range(0..=spec.canvas - s.h),
                ),
                // centered placement for canvas-padded undistorted sets
                DistortKind::None => ((spec.canvas - s.w) / 2, (spec.canvas - s.h) / 2),
                _ => (0, 0),
            };
            Draw { angle, scale, off_x, off_y }
        })
        .collect();

    let uses_canvas = matches!(
        spec.kind,
        DistortKind::Translate | DistortKind::Rts | DistortKind::None
    );
    let (out_h, out_w) = if uses_canvas { (spec.canvas, spec.canvas) } else { (s.h, s.w) };
    let mut images = Tensor::zeros(Shape::new(s.n, 1, out_h, out_w))?;
    let needs_warp = matches!(
        spec.kind,
        DistortKind::Rotate | DistortKind::Scale | DistortKind::Rts
    );

    images
        .data_mut()
        .par_chunks_exact_mut(out_h * out_w)
        .enumerate()
        .try_for_each(|(i, out_img)| -> Result<()> {
            let src = set.images.example(i);
            let draw = &draws[i];
            let warped;
            let digit: &[Real] = if needs_warp {
                let params = AffineParams {
                    theta_deg: draw.angle,
                    sx: draw.scale,
                    sy: draw.scale,
                    dx: 0.0,
                    dy: 0.0,
                };
                let plan = build_sampler(&compose(&params, s.h, s.w)?, s.h, s.w)?;
                let mut buf = vec![0.0; s.h * s.w];
                apply_into(&plan, src, &mut buf);
                warped = buf;
                &warped
            } else {
                src
            };
            if uses_canvas {
                for y in 0..s.h {
                    let dst =
                        &mut out_img[(y + draw.off_y) * out_w + draw.off_x..][..s.w];
                    dst.copy_from_slice(&digit[y * s.w..(y + 1) * s.w]);
                }
            } else {
                out_img.copy_from_slice(digit);
            }
            Ok(())
        })?;

    Ok(LabeledImageSet { images, labels: set.labels.clone(), meta: meta_for(set, spec) })
}

fn meta_for(set: &LabeledImageSet, spec: &DistortionSpec) -> SetMeta {
    SetMeta {
        name: set.meta.name.clone(),
        distortion: spec.kind.tag().into(),
        seed: spec.seed,
        canvas: spec.canvas,
    }
}

/// Sidecar metadata in plain key=value lines.
pub fn write_meta(path: &Path, spec: &DistortionSpec) -> Result<()> {
    let text = format!(
        "kind={}\nangle_min={}\nangle_max={}\nscale_min={}\nscale_max={}\ncanvas={}\nseed={}\n",
        spec.kind.tag(),
        spec.angle_min,
        spec.angle_max,
        spec.scale_min,
        spec.scale_max,
        spec.canvas,
        spec.seed
    );
    write_atomic(path, text.as_bytes())
}

/// Epoch-shuffled minibatch index scheduler. The shuffle for epoch `e` is
/// seeded by `seed + e·0x9E3779B97F4A7C15` (wrapping), so any epoch can be
/// regenerated independently.
#[derive(Clone, Copy, Debug)]
pub struct Batcher {
    n: usize,
    batch_size: usize,
    seed: u64,
}

impl Batcher {
    pub fn new(n: usize, batch_size: usize, seed: u64) -> Result<Batcher> {
        if batch_size == 0 || n == 0 {
            return Err(Error::Input(format!(
                "batcher needs n >= 1 and batch_size >= 1, got {n}/{batch_size}"
            )));
        }
        Ok(Batcher { n, batch_size, seed })
    }

    pub fn epoch_permutation(&self, epoch: u64) -> Vec<usize> {
        let mut indices: Vec<usize> = (0..self.n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(
            self.seed.wrapping_add(epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15)),
        );
        indices.shuffle(&mut rng);
        indices
    }

    /// Minibatches of one epoch; the final partial batch is kept.
    pub fn batches(&self, epoch: u64) -> Vec<Vec<usize>> {
        self.epoch_permutation(epoch)
            .chunks(self.batch_size)
            .map(|c| c.to_vec())
            .collect()
    }
}
