//! PNG and 16-bit PGM helpers.

use std::io::Write;
use std::path::Path;

use image::RgbImage;

use crate::{Error, Result};

pub fn read_rgb(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(img.to_rgb8())
}

pub fn write_png(image: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    image.save_with_format(path, image::ImageFormat::Png).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Binary PGM with maxval 65535 (big-endian samples).
pub fn write_pgm16(path: impl AsRef<Path>, width: usize, height: usize, data: &[u16]) -> Result<()> {
    assert_eq!(data.len(), width * height);
    let path = path.as_ref();
    let mut bytes = format!("P5\n{width} {height}\n65535\n").into_bytes();
    bytes.reserve(data.len() * 2);
    for v in data {
        bytes.extend_from_slice(&v.to_be_bytes());
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&bytes))
        .map_err(|e| Error::io(path, e))
}
