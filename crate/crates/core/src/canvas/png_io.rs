use std::fs::File;
use std::io::{BufWriter, Cursor};
use std::path::Path;

use super::CanvasImage;
use crate::error::{Error, Result};

/// Loads an 8-bit RGB or RGBA PNG. Alpha is composited over white.
pub fn load_png(path: impl AsRef<Path>) -> Result<CanvasImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_png(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn decode_png(bytes: &[u8]) -> Result<CanvasImage> {
    let decoder = png::Decoder::new(Cursor::new(bytes));
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::format(format!("png header: {e}")))?;
    let buf_len = reader
        .output_buffer_size()
        .ok_or_else(|| Error::format("png too large"))?;
    let mut buf = vec![0u8; buf_len];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::format(format!("png data: {e}")))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::format(format!(
            "unsupported bit depth {:?}",
            info.bit_depth
        )));
    }
    let channels = match info.color_type {
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        other => return Err(Error::format(format!("unsupported color type {other:?}"))),
    };
    let (width, height) = (info.width as usize, info.height as usize);
    let mut pixels = Vec::with_capacity(width * height);
    for row in buf[..info.buffer_size()].chunks_exact(info.line_size) {
        for px in row[..width * channels].chunks_exact(channels) {
            let rgb = [px[0], px[1], px[2]].map(|v| v as f64 / 255.0);
            if channels == 4 {
                let a = px[3] as f64 / 255.0;
                pixels.push(rgb.map(|v| a * v + (1.0 - a)));
            } else {
                pixels.push(rgb);
            }
        }
    }
    CanvasImage::new(width, height, pixels)
}

/// Writes an 8-bit RGB PNG with `round(v * 255)` quantization.
pub fn save_png(img: &CanvasImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(
        BufWriter::new(file),
        img.width() as u32,
        img.height() as u32,
    );
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let data: Vec<u8> = img
        .pixels()
        .iter()
        .flatten()
        .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    let as_io = |e: png::EncodingError| match e {
        png::EncodingError::IoError(io) => Error::io(path, io),
        other => Error::format(other.to_string()),
    };
    let mut writer = encoder.write_header().map_err(as_io)?;
    writer.write_image_data(&data).map_err(as_io)?;
    writer.finish().map_err(as_io)
}
