use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageReader};

use super::image::{EdgeMap, GrayImage};
use crate::error::{dim_err, Error, Result};
use crate::Tensor;

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn decode(path: &Path) -> Result<image::DynamicImage> {
    let reader = ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    reader
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn encode(path: &Path, bytes: &[u8], w: usize, h: usize, subtype: PnmSubtype, color: ExtendedColorType) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    PnmEncoder::new(BufWriter::new(file))
        .with_subtype(subtype)
        .write_image(bytes, w as u32, h as u32, color)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// Reads any supported PNM file as a 3×H×W tensor in `[0, 1]`.
pub fn read_rgb(path: impl AsRef<Path>) -> Result<Tensor> {
    let img = decode(path.as_ref())?.into_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raw = img.as_raw();
    let mut data = vec![0.0; 3 * h * w];
    for i in 0..h * w {
        for c in 0..3 {
            data[c * h * w + i] = f64::from(raw[3 * i + c]) / 255.0;
        }
    }
    Tensor::new(&[3, h, w], data)
}

pub fn write_rgb(path: impl AsRef<Path>, rgb: &Tensor) -> Result<()> {
    let (h, w) = match rgb.shape() {
        &[3, h, w] => (h, w),
        s => return Err(dim_err!("expected a 3×H×W tensor, got {s:?}")),
    };
    let d = rgb.data();
    let n = h * w;
    let bytes: Vec<u8> = (0..n).flat_map(|i| [d[i], d[n + i], d[2 * n + i]].map(to_byte)).collect();
    encode(path.as_ref(), &bytes, w, h, PnmSubtype::Pixmap(SampleEncoding::Binary), ExtendedColorType::Rgb8)
}

pub fn read_gray(path: impl AsRef<Path>) -> Result<GrayImage> {
    let img = decode(path.as_ref())?.into_luma8();
    let pixels = img.as_raw().iter().map(|&b| f64::from(b) / 255.0).collect();
    GrayImage::new(img.height() as usize, img.width() as usize, pixels)
}

pub fn write_gray(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    let bytes: Vec<u8> = img.pixels().iter().map(|&p| to_byte(p)).collect();
    encode(
        path.as_ref(),
        &bytes,
        img.width(),
        img.height(),
        PnmSubtype::Graymap(SampleEncoding::Binary),
        ExtendedColorType::L8,
    )
}

/// Edge maps are stored as P5 with on-pixels at 255.
pub fn write_edge_map(path: impl AsRef<Path>, edges: &EdgeMap) -> Result<()> {
    let bytes: Vec<u8> = edges.pixels().iter().map(|&p| p * 255).collect();
    encode(
        path.as_ref(),
        &bytes,
        edges.width(),
        edges.height(),
        PnmSubtype::Graymap(SampleEncoding::Binary),
        ExtendedColorType::L8,
    )
}

pub fn read_edge_map(path: impl AsRef<Path>) -> Result<EdgeMap> {
    let img = decode(path.as_ref())?.into_luma8();
    let pixels = img.as_raw().iter().map(|&b| u8::from(b >= 128)).collect();
    EdgeMap::new(img.height() as usize, img.width() as usize, pixels)
}
