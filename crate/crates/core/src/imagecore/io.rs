//! PNG (8/16-bit) and PFM file I/O.
//!
//! PFM files are written little-endian (negative scale) with rows stored
//! bottom-to-top, as the format prescribes. Samples are `f32` on disk.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use super::{clip_quantize, BitDepth, ImageF};
use crate::{Error, Result};

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source }
}

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format { path: path.to_path_buf(), message: message.into() }
}

pub fn write_pfm(path: &Path, img: &ImageF) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = BufWriter::new(file);
    let tag = if img.channels() == 3 { "PF" } else { "Pf" };
    let row_len = img.width() * img.channels();
    let mut body = Vec::with_capacity(img.data().len() * 4 + 32);
    write!(body, "{tag}\n{} {}\n-1.0\n", img.width(), img.height()).expect("write to vec");
    for row in img.data().chunks(row_len.max(1)).rev() {
        for &v in row {
            body.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out.write_all(&body).and_then(|_| out.flush()).map_err(|e| io_err(path, e))
}

fn read_header_token(reader: &mut impl BufRead, path: &Path) -> Result<String> {
    // tokens are whitespace separated; the last header token is followed by a
    // single whitespace byte before the raster
    let mut token = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        reader.read_exact(&mut byte).map_err(|e| io_err(path, e))?;
        if byte[0].is_ascii_whitespace() {
            if token.is_empty() {
                continue;
            }
            break;
        }
        token.push(byte[0]);
        if token.len() > 64 {
            return Err(format_err(path, "malformed PFM header"));
        }
    }
    String::from_utf8(token).map_err(|_| format_err(path, "non-ASCII PFM header"))
}

pub fn read_pfm(path: &Path) -> Result<ImageF> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = BufReader::new(file);
    let channels = match read_header_token(&mut reader, path)?.as_str() {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(format_err(path, format!("bad PFM magic {other:?}"))),
    };
    let parse = |s: String, what: &str| -> Result<f64> {
        s.parse::<f64>().map_err(|_| format_err(path, format!("bad PFM {what} {s:?}")))
    };
    let width = parse(read_header_token(&mut reader, path)?, "width")? as usize;
    let height = parse(read_header_token(&mut reader, path)?, "height")? as usize;
    let scale = parse(read_header_token(&mut reader, path)?, "scale")?;
    if scale == 0.0 {
        return Err(format_err(path, "PFM scale must be non-zero"));
    }
    let little_endian = scale < 0.0;

    let row_len = width * channels;
    let mut raw = vec![0u8; row_len * height * 4];
    reader.read_exact(&mut raw).map_err(|e| io_err(path, e))?;
    let mut data = vec![0.0f64; row_len * height];
    for (file_row, chunk) in raw.chunks(row_len * 4).enumerate() {
        let y = height - 1 - file_row;
        for (i, b) in chunk.chunks_exact(4).enumerate() {
            let bytes = [b[0], b[1], b[2], b[3]];
            let v = if little_endian { f32::from_le_bytes(bytes) } else { f32::from_be_bytes(bytes) };
            data[y * row_len + i] = v as f64;
        }
    }
    ImageF::new(width, height, channels, data).map_err(|e| format_err(path, e.to_string()))
}

/// Clips to `[0, 1]`, quantizes and writes an RGB or grayscale PNG.
pub fn write_png(path: &Path, img: &ImageF, depth: BitDepth) -> Result<()> {
    let q = clip_quantize(img, depth);
    let (w, h) = (img.width() as u32, img.height() as u32);
    let levels = depth.levels();
    let dynamic = match (depth, img.channels()) {
        (BitDepth::Eight, 3) => DynamicImage::ImageRgb8(
            ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, to_ints(&q, levels)).expect("buffer size"),
        ),
        (BitDepth::Eight, _) => DynamicImage::ImageLuma8(
            ImageBuffer::<Luma<u8>, _>::from_raw(w, h, to_ints(&q, levels)).expect("buffer size"),
        ),
        (BitDepth::Sixteen, 3) => DynamicImage::ImageRgb16(
            ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, to_ints(&q, levels)).expect("buffer size"),
        ),
        (BitDepth::Sixteen, _) => DynamicImage::ImageLuma16(
            ImageBuffer::<Luma<u16>, _>::from_raw(w, h, to_ints(&q, levels)).expect("buffer size"),
        ),
    };
    dynamic
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| format_err(path, e.to_string()))
}

fn to_ints<T: TryFrom<u32>>(img: &ImageF, levels: f64) -> Vec<T>
where
    T::Error: std::fmt::Debug,
{
    img.data().iter().map(|&v| T::try_from((v * levels).round() as u32).expect("quantized")).collect()
}

/// Decodes any supported raster (PNG, JPEG) into `[0, 1]` floats. Grayscale
/// inputs stay single-channel; everything else becomes RGB.
pub fn read_raster(path: &Path) -> Result<ImageF> {
    let decoded = image::open(path).map_err(|e| format_err(path, e.to_string()))?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let img = match decoded {
        DynamicImage::ImageLuma8(buf) => {
            ImageF::new(w, h, 1, buf.into_raw().into_iter().map(|v| v as f64 / 255.0).collect())
        }
        DynamicImage::ImageLuma16(buf) => {
            ImageF::new(w, h, 1, buf.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect())
        }
        DynamicImage::ImageRgb16(_) | DynamicImage::ImageRgba16(_) | DynamicImage::ImageLumaA16(_) => {
            let buf = decoded.into_rgb16();
            ImageF::new(w, h, 3, buf.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect())
        }
        other => {
            let buf = other.into_rgb8();
            ImageF::new(w, h, 3, buf.into_raw().into_iter().map(|v| v as f64 / 255.0).collect())
        }
    };
    img.map_err(|e| format_err(path, e.to_string()))
}

/// Reads a PFM or any raster format, chosen by file extension.
pub fn read_image(path: &Path) -> Result<ImageF> {
    let is_pfm = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pfm"));
    if is_pfm {
        read_pfm(path)
    } else {
        read_raster(path)
    }
}
