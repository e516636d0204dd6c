//! 8-bit image exports for human inspection (binary PPM/PGM). Lossy by
//! design; the `T2NP` containers remain the exact storage format.

use crate::tensor::Tensor;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Write an RGB [3,H,W] tensor in [0,1] as binary PPM (P6).
pub fn export_ppm(image: &Tensor<f32>, path: &Path) -> io::Result<()> {
    let sh = image.shape();
    assert_eq!(sh.len(), 3, "expected [3,H,W]");
    assert_eq!(sh[0], 3, "expected RGB");
    let (h, w) = (sh[1], sh[2]);
    let d = image.data();
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "P6\n{w} {h}\n255\n")?;
    let plane = h * w;
    for p in 0..plane {
        out.write_all(&[to_u8(d[p]), to_u8(d[plane + p]), to_u8(d[2 * plane + p])])?;
    }
    out.flush()
}

/// Write a depth [1,H,W] tensor as binary PGM (P5), normalized from
/// [d_min, d_max] to [0,255]. Visualization only.
pub fn export_pgm(depth: &Tensor<f32>, d_min: f32, d_max: f32, path: &Path) -> io::Result<()> {
    let sh = depth.shape();
    assert_eq!(sh.len(), 3, "expected [1,H,W]");
    assert_eq!(sh[0], 1, "expected single channel");
    let (h, w) = (sh[1], sh[2]);
    let span = (d_max - d_min).max(1e-6);
    let d = depth.data();
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "P5\n{w} {h}\n255\n")?;
    for p in 0..h * w {
        out.write_all(&[to_u8((d[p] - d_min) / span)])?;
    }
    out.flush()
}
