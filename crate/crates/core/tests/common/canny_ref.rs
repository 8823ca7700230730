use image::{GrayImage as Luma8, Luma};
use imageproc::filter::gaussian_blur_f32;
use imageproc::gradients::{horizontal_sobel, vertical_sobel};
use xview::synthproxy::{EdgeMap, GrayImage};

pub fn to_luma8(img: &GrayImage) -> Luma8 {
    Luma8::from_fn(img.width() as u32, img.height() as u32, |x, y| {
        Luma([(img.get(y as usize, x as usize) * 255.0).round() as u8])
    })
}

/// Runs imageproc's detector with thresholds scaled by its own peak gradient.
pub fn reference_canny(img: &GrayImage, low: f64, high: f64) -> EdgeMap {
    let src = to_luma8(img);
    let blurred = gaussian_blur_f32(&src, 1.4);
    let gx = horizontal_sobel(&blurred);
    let gy = vertical_sobel(&blurred);
    let peak = gx
        .iter()
        .zip(gy.iter())
        .map(|(a, b)| (*a as f32).hypot(*b as f32))
        .fold(0.0f32, f32::max);
    let out = imageproc::edges::canny(&src, low as f32 * peak, high as f32 * peak);
    let pixels = out.as_raw().iter().map(|&p| u8::from(p > 0)).collect();
    EdgeMap::new(img.height(), img.width(), pixels).unwrap()
}

pub fn iou(a: &EdgeMap, b: &EdgeMap) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &q) in a.pixels().iter().zip(b.pixels()) {
        inter += usize::from(p & q);
        union += usize::from(p | q);
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Five shapes with clean, well separated contours.
pub fn shapes() -> Vec<(&'static str, GrayImage)> {
    let n = 48;
    vec![
        ("vertical-step", GrayImage::from_fn(n, n, |_, x| if x < 24 { 0.0 } else { 1.0 }).unwrap()),
        (
            "rectangle",
            GrayImage::from_fn(n, n, |y, x| if (12..36).contains(&y) && (10..38).contains(&x) { 0.9 } else { 0.1 })
                .unwrap(),
        ),
        (
            "disc",
            GrayImage::from_fn(n, n, |y, x| {
                let (dy, dx) = (y as f64 - 23.5, x as f64 - 23.5);
                if dy * dy + dx * dx < 14.0 * 14.0 { 1.0 } else { 0.0 }
            })
            .unwrap(),
        ),
        ("diagonal", GrayImage::from_fn(n, n, |y, x| if x > y { 0.8 } else { 0.2 }).unwrap()),
        (
            "two-bars",
            GrayImage::from_fn(n, n, |y, _| if (8..18).contains(&y) || (30..40).contains(&y) { 1.0 } else { 0.0 })
                .unwrap(),
        ),
    ]
}
