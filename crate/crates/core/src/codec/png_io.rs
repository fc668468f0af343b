//! 8-bit grayscale PNG persistence and the JSON manifest sidecar.

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use super::{CodecManifest, GrayImage};
use crate::error::{Error, Result};

fn png_err(e: impl std::fmt::Display) -> Error {
    Error::Png(e.to_string())
}

/// Encode as 8-bit grayscale PNG bytes (row-major, height = rows).
pub fn png_bytes(image: &GrayImage) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, image.width() as u32, image.height() as u32);
        encoder.set_color(png::ColorType::Grayscale);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header().map_err(png_err)?;
        let data: Vec<u8> = image
            .pixels()
            .iter()
            .map(|&p| (p * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        writer.write_image_data(&data).map_err(png_err)?;
        writer.finish().map_err(png_err)?;
    }
    Ok(out)
}

/// Decode PNG bytes. Grayscale is read directly; RGB(A) is reduced to the
/// channel mean. 16-bit input is stripped to 8 bits.
pub fn image_from_png_bytes(bytes: &[u8]) -> Result<GrayImage> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = decoder.read_info().map_err(png_err)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Png("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(png_err)?;
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        other => return Err(Error::Png(format!("unsupported color type {other:?}"))),
    };
    let colour = match channels {
        1 | 2 => 1,
        _ => 3,
    };
    let (w, h) = (info.width as usize, info.height as usize);
    let mut pixels = Vec::with_capacity(w * h);
    for row in 0..h {
        let line = &buf[row * info.line_size..row * info.line_size + w * channels];
        for px in line.chunks_exact(channels) {
            let sum: u32 = px[..colour].iter().map(|&b| b as u32).sum();
            pixels.push(if colour == 1 {
                sum as f64 / 255.0
            } else {
                (sum as f64 / 3.0).round() / 255.0
            });
        }
    }
    GrayImage::new(h, w, pixels)
}

pub fn write_png(image: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, png_bytes(image)?)?;
    Ok(())
}

pub fn read_png(path: impl AsRef<Path>) -> Result<GrayImage> {
    image_from_png_bytes(&fs::read(path)?)
}

/// `<image>.manifest.json` next to the image.
pub fn manifest_path(image_path: impl AsRef<Path>) -> PathBuf {
    let mut s = image_path.as_ref().as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

pub fn write_manifest(manifest: &CodecManifest, image_path: impl AsRef<Path>) -> Result<()> {
    fs::write(
        manifest_path(image_path),
        serde_json::to_string_pretty(manifest)? + "\n",
    )?;
    Ok(())
}

pub fn read_manifest(image_path: impl AsRef<Path>) -> Result<CodecManifest> {
    Ok(serde_json::from_str(&fs::read_to_string(manifest_path(
        image_path,
    ))?)?)
}
