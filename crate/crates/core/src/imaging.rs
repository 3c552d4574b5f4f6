//! 8-bit RGB image helpers: bilinear sampling, warps, PNG I/O and tensor
//! conversion.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::nn::InputGeometry;
use crate::tensor::Tensor;

pub type Image = RgbImage;

/// Bilinear sample at continuous pixel coordinates (pixel centers at
/// integer positions), clamping to the nearest edge outside the image.
pub fn sample_bilinear(img: &Image, x: f64, y: f64) -> [f64; 3] {
    let (w, h) = img.dimensions();
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = x.floor() as u32;
    let y0 = y.floor() as u32;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let p = |xx, yy| img.get_pixel(xx, yy).0;
    let (a, b, c, d) = (p(x0, y0), p(x1, y0), p(x0, y1), p(x1, y1));
    let mut out = [0.0; 3];
    for ch in 0..3 {
        let top = a[ch] as f64 * (1.0 - fx) + b[ch] as f64 * fx;
        let bot = c[ch] as f64 * (1.0 - fx) + d[ch] as f64 * fx;
        out[ch] = top * (1.0 - fy) + bot * fy;
    }
    out
}

pub fn to_rgb8(v: [f64; 3]) -> Rgb<u8> {
    Rgb(v.map(|c| c.round().clamp(0.0, 255.0) as u8))
}

/// Fill an image by pulling each output pixel center `(x+0.5, y+0.5)` from
/// source coordinates given by `map` (also in pixel-center-at-+0.5 units).
pub fn warp(src: &Image, out_w: u32, out_h: u32, map: impl Fn(f64, f64) -> (f64, f64)) -> Image {
    Image::from_fn(out_w, out_h, |x, y| {
        let (sx, sy) = map(x as f64 + 0.5, y as f64 + 0.5);
        to_rgb8(sample_bilinear(src, sx - 0.5, sy - 0.5))
    })
}

/// Resize the axis-aligned region `(x, y, w, h)` of `src` to `out_w × out_h`.
pub fn crop_resize(src: &Image, region: (f64, f64, f64, f64), out_w: u32, out_h: u32) -> Image {
    let (rx, ry, rw, rh) = region;
    let (sx, sy) = (rw / out_w as f64, rh / out_h as f64);
    warp(src, out_w, out_h, |x, y| (rx + x * sx, ry + y * sy))
}

pub fn resize(src: &Image, out_w: u32, out_h: u32) -> Image {
    let (w, h) = src.dimensions();
    if (w, h) == (out_w, out_h) {
        return src.clone();
    }
    crop_resize(src, (0.0, 0.0, w as f64, h as f64), out_w, out_h)
}

/// Rotate about the image center by `degrees` (counter-clockwise), keeping
/// the size and clamping to the edge where the source runs out.
pub fn rotate(src: &Image, degrees: f64) -> Image {
    if degrees == 0.0 {
        return src.clone();
    }
    let (w, h) = src.dimensions();
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let (s, c) = degrees.to_radians().sin_cos();
    warp(src, w, h, |x, y| {
        let (dx, dy) = (x - cx, y - cy);
        // inverse rotation; image y points down
        (cx + c * dx - s * dy, cy + s * dx + c * dy)
    })
}

/// `p' = clamp(128 + f·(p − 128))`.
pub fn adjust_contrast(src: &Image, factor: f64) -> Image {
    if factor == 1.0 {
        return src.clone();
    }
    let mut out = src.clone();
    for p in out.pixels_mut() {
        for c in p.0.iter_mut() {
            *c = (128.0 + factor * (*c as f64 - 128.0)).round().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

pub fn hflip(src: &Image) -> Image {
    image::imageops::flip_horizontal(src)
}

/// CHW tensor with channels scaled to roughly `[-0.5, 0.5]`.
pub fn to_tensor(img: &Image) -> Tensor {
    let (w, h) = img.dimensions();
    let (w, h) = (w as usize, h as usize);
    let mut data = vec![0.0f32; 3 * w * h];
    for (x, y, p) in img.enumerate_pixels() {
        let i = y as usize * w + x as usize;
        for c in 0..3 {
            data[c * w * h + i] = p.0[c] as f32 / 255.0 - 0.5;
        }
    }
    Tensor::new(vec![3, h, w], data).expect("consistent extents")
}

/// Convert for a network input, resizing first when the geometry differs.
pub fn to_input(img: &Image, geom: InputGeometry) -> Result<Tensor> {
    if geom.channels != 3 {
        return Err(Error::Shape(format!(
            "RGB images need a 3-channel input geometry, got {}",
            geom.channels
        )));
    }
    let (w, h) = (geom.width as u32, geom.height as u32);
    if img.dimensions() == (w, h) {
        Ok(to_tensor(img))
    } else {
        Ok(to_tensor(&resize(img, w, h)))
    }
}

pub fn load_png(path: &Path) -> Result<Image> {
    let img = image::open(path).map_err(|e| Error::Image {
        path: path.into(),
        source: e,
    })?;
    Ok(img.to_rgb8())
}

pub fn encode_png(img: &Image) -> Vec<u8> {
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)
        .expect("in-memory PNG encoding");
    buf.into_inner()
}

pub fn save_png(img: &Image, path: &Path) -> Result<()> {
    crate::fsio::write_atomic(path, &encode_png(img))
}

/// Fraction of pixels that differ in any channel.
pub fn pixel_diff_fraction(a: &Image, b: &Image) -> f64 {
    assert_eq!(a.dimensions(), b.dimensions());
    let n = a.pixels().zip(b.pixels()).filter(|(p, q)| p != q).count();
    n as f64 / (a.width() * a.height()) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn noise(w: u32, h: u32, seed: u64) -> Image {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(w, h, |_, _| Rgb([rng.random(), rng.random(), rng.random()]))
    }

    #[test]
    fn identities_are_exact() {
        let img = noise(17, 9, 1);
        assert_eq!(crop_resize(&img, (0.0, 0.0, 17.0, 9.0), 17, 9), img);
        assert_eq!(rotate(&img, 0.0), img);
        assert_eq!(adjust_contrast(&img, 1.0), img);
        assert_eq!(hflip(&hflip(&img)), img);
    }

    #[test]
    fn rotation_by_quarter_turn_moves_corners() {
        let mut img = Image::new(8, 8);
        img.put_pixel(7, 0, Rgb([255, 0, 0]));
        let r = rotate(&img, 90.0);
        // counter-clockwise: top-right goes to top-left
        assert_eq!(r.get_pixel(0, 0).0, [255, 0, 0]);
    }

    #[test]
    fn contrast_clamps_around_midpoint() {
        let img = Image::from_pixel(1, 1, Rgb([0, 128, 250]));
        assert_eq!(adjust_contrast(&img, 2.0).get_pixel(0, 0).0, [0, 128, 255]);
        assert_eq!(adjust_contrast(&img, 0.5).get_pixel(0, 0).0, [64, 128, 189]);
    }

    #[test]
    fn tensor_layout_is_chw() {
        let mut img = Image::new(2, 1);
        img.put_pixel(1, 0, Rgb([255, 0, 51]));
        let t = to_tensor(&img);
        assert_eq!(t.shape(), &[3, 1, 2]);
        assert_eq!(t.data()[1], 0.5);
        assert_eq!(t.data()[3], -0.5);
        assert!((t.data()[5] + 0.3).abs() < 1e-6);
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.png");
        let img = noise(5, 4, 3);
        save_png(&img, &p).unwrap();
        assert_eq!(load_png(&p).unwrap(), img);
        let err = load_png(&dir.path().join("missing.png")).unwrap_err();
        assert!(err.to_string().contains("missing.png"));
    }
}

/// Images addressed by manifest-relative path: kept in memory when freshly
/// generated, otherwise read from disk under `root`.
#[derive(Clone, Debug, Default)]
pub struct ImageStore {
    root: std::path::PathBuf,
    memory: std::collections::HashMap<String, Image>,
}

impl ImageStore {
    pub fn on_disk(root: impl Into<std::path::PathBuf>) -> Self {
        ImageStore {
            root: root.into(),
            memory: Default::default(),
        }
    }

    pub fn in_memory() -> Self {
        ImageStore::default()
    }

    pub fn insert(&mut self, path: impl Into<String>, img: Image) {
        self.memory.insert(path.into(), img);
    }

    pub fn extend(&mut self, other: ImageStore) {
        self.memory.extend(other.memory);
    }

    pub fn len(&self) -> usize {
        self.memory.len()
    }

    pub fn is_empty(&self) -> bool {
        self.memory.is_empty()
    }

    pub fn get(&self, path: &str) -> Result<std::borrow::Cow<'_, Image>> {
        match self.memory.get(path) {
            Some(img) => Ok(std::borrow::Cow::Borrowed(img)),
            None => load_png(&self.root.join(path)).map(std::borrow::Cow::Owned),
        }
    }

    /// Write every in-memory image as PNG under `dir`, in sorted path order.
    pub fn write_all(&self, dir: &Path) -> Result<()> {
        let mut paths: Vec<&String> = self.memory.keys().collect();
        paths.sort();
        for p in paths {
            save_png(&self.memory[p], &dir.join(p))?;
        }
        Ok(())
    }
}
