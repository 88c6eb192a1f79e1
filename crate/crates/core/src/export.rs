//! 8-bit image output.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::render::Framebuffer;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Ppm,
    Png,
}

impl ImageFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "ppm" => Some(ImageFormat::Ppm),
            "png" => Some(ImageFormat::Png),
            _ => None,
        }
    }
}

impl FromStr for ImageFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ppm" => Ok(ImageFormat::Ppm),
            "png" => Ok(ImageFormat::Png),
            _ => Err(Error::InvalidArgument(format!("unknown image format {s:?}"))),
        }
    }
}

/// Binary `P6` with maxval 255.
pub fn write_ppm(fb: &Framebuffer, mut w: impl Write) -> std::io::Result<()> {
    write!(w, "P6\n{} {}\n255\n", fb.width, fb.height)?;
    w.write_all(&fb.to_rgb8())?;
    w.flush()
}

pub fn write_png(fb: &Framebuffer, w: impl Write) -> Result<()> {
    let mut enc = png::Encoder::new(w, fb.width, fb.height);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| Error::Encode(e.to_string()))?;
    writer
        .write_image_data(&fb.to_rgb8())
        .map_err(|e| Error::Encode(e.to_string()))?;
    writer.finish().map_err(|e| Error::Encode(e.to_string()))
}

pub fn encode_png(fb: &Framebuffer) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    write_png(fb, &mut out)?;
    Ok(out)
}

pub fn save_image(fb: &Framebuffer, path: impl AsRef<Path>, format: ImageFormat) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let w = BufWriter::new(file);
    match format {
        ImageFormat::Ppm => write_ppm(fb, w).map_err(|e| Error::io(path, e)),
        ImageFormat::Png => write_png(fb, w),
    }
}
