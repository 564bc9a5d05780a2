//! Binary density maps (DMAP), checkpoints (CKPT), and 8-bit PGM images.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageFormat};

use crate::error::{Error, Result};
use crate::groundtruth::DensityMap;
use crate::model::{ModelParams, Param};
use crate::numerics::Tensor4;
use crate::scalar::Scalar;

pub const DMAP_MAGIC: &[u8; 8] = b"DMAP0001";
pub const CKPT_MAGIC: &[u8; 8] = b"SSRHEF01";
const DMAP_HEADER: usize = 20;

/// Little-endian reader over a byte slice that reports truncation as a format error.
struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], what: &'static str) -> Self {
        Self { bytes, pos: 0, what }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Format(format!("{}: truncated at byte {} (wanted {n} more)", self.what, self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n
            .checked_mul(8)
            .ok_or_else(|| Error::Format(format!("{}: value count {n} overflows", self.what)))?;
        Ok(self
            .take(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Format(format!(
                "{}: {} trailing bytes",
                self.what,
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize, what: &str) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("{what} {v} does not fit in 32 bits")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_f64s<T: Scalar>(out: &mut Vec<u8>, values: &[T]) {
    for v in values {
        out.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
    }
}

pub fn encode_dmap<T: Scalar>(d: &DensityMap<T>) -> Result<Vec<u8>> {
    if d.values.len() != d.height * d.width {
        return Err(Error::shape(format!(
            "density map has {} values for {}x{}",
            d.values.len(),
            d.width,
            d.height
        )));
    }
    let mut out = Vec::with_capacity(DMAP_HEADER + 8 * d.values.len());
    out.extend_from_slice(DMAP_MAGIC);
    put_u32(&mut out, d.height, "height")?;
    put_u32(&mut out, d.width, "width")?;
    put_u32(&mut out, d.stride, "stride")?;
    put_f64s(&mut out, &d.values);
    Ok(out)
}

pub fn decode_dmap<T: Scalar>(bytes: &[u8]) -> Result<DensityMap<T>> {
    let mut r = Reader::new(bytes, "DMAP");
    if r.take(8)? != DMAP_MAGIC {
        return Err(Error::Format("DMAP: bad magic".into()));
    }
    let height = r.u32()?;
    let width = r.u32()?;
    let stride = r.u32()?;
    let values = r.f64s(height * width)?;
    r.finish()?;
    Ok(DensityMap {
        height,
        width,
        stride,
        values: values.into_iter().map(T::of).collect(),
    })
}

pub fn write_dmap<T: Scalar>(d: &DensityMap<T>, path: impl AsRef<Path>) -> Result<()> {
    Ok(fs::write(path, encode_dmap(d)?)?)
}

pub fn read_dmap<T: Scalar>(path: impl AsRef<Path>) -> Result<DensityMap<T>> {
    decode_dmap(&fs::read(path)?)
}

/// Entries in insertion order: name, rank, dims, then the values.
pub fn encode_checkpoint<T: Scalar>(params: &ModelParams<T>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(CKPT_MAGIC);
    put_u32(&mut out, params.len(), "entry count")?;
    for (name, p) in params.iter() {
        put_u32(&mut out, name.len(), "name length")?;
        out.extend_from_slice(name.as_bytes());
        let shape = p.shape();
        put_u32(&mut out, shape.len(), "rank")?;
        for d in shape {
            put_u32(&mut out, d, "dimension")?;
        }
        put_f64s(&mut out, p.as_slice());
    }
    Ok(out)
}

pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<ModelParams<T>> {
    let mut r = Reader::new(bytes, "CKPT");
    if r.take(8)? != CKPT_MAGIC {
        return Err(Error::Format("CKPT: bad magic".into()));
    }
    let count = r.u32()?;
    let mut params = ModelParams::new();
    for _ in 0..count {
        let len = r.u32()?;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Format("CKPT: parameter name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32()?;
        let shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::Format(format!("CKPT: {name} has an overflowing shape")))?;
        let values = r.f64s(n)?.into_iter().map(T::of).collect();
        let p = Param::from_shape(&shape, values).map_err(|e| Error::Format(format!("CKPT: {name}: {e}")))?;
        if params.get(&name).is_ok() {
            return Err(Error::Format(format!("CKPT: duplicate entry {name}")));
        }
        params.insert(name, p);
    }
    r.finish()?;
    Ok(params)
}

pub fn save_checkpoint<T: Scalar>(params: &ModelParams<T>, path: impl AsRef<Path>) -> Result<()> {
    Ok(fs::write(path, encode_checkpoint(params)?)?)
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<ModelParams<T>> {
    decode_checkpoint(&fs::read(path)?)
}

/// Binary (P5) 8-bit graymap.
pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Result<Vec<u8>> {
    if pixels.len() != width * height {
        return Err(Error::shape(format!("{} pixels for a {width}x{height} image", pixels.len())));
    }
    let (w, h) = (
        u32::try_from(width).map_err(|_| Error::invalid("image too wide"))?,
        u32::try_from(height).map_err(|_| Error::invalid("image too tall"))?,
    );
    let mut out = Vec::new();
    PnmEncoder::new(&mut out)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(pixels, w, h, ExtendedColorType::L8)
        .map_err(|e| Error::Format(format!("PGM encode: {e}")))?;
    Ok(out)
}

/// Decodes a PNM image into a 1×1×H×W tensor scaled to [0, 1]. Color images
/// are reduced to the unweighted mean of their R, G, B channels.
pub fn decode_pgm<T: Scalar>(bytes: &[u8]) -> Result<Tensor4<T>> {
    let img = image::ImageReader::with_format(Cursor::new(bytes), ImageFormat::Pnm)
        .decode()
        .map_err(|e| Error::Format(format!("PNM decode: {e}")))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<T> = if img.color().has_color() {
        img.into_rgb8()
            .pixels()
            .map(|p| T::of(p.0.iter().map(|&c| c as f64).sum::<f64>() / (3.0 * 255.0)))
            .collect()
    } else {
        img.into_luma8().into_raw().into_iter().map(|b| T::of(b as f64 / 255.0)).collect()
    };
    Tensor4::from_vec([1, 1, h, w], data)
}

/// Quantizes a [0, 1] single-plane image to 8 bits.
pub fn image_to_bytes<T: Scalar>(image: &Tensor4<T>) -> Vec<u8> {
    image
        .plane(0, 0)
        .iter()
        .map(|v| (v.to_f64_lossy().clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect()
}

pub fn write_pgm<T: Scalar>(image: &Tensor4<T>, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_pgm(image.width(), image.height(), &image_to_bytes(image))?;
    Ok(fs::write(path, bytes)?)
}

pub fn read_pgm<T: Scalar>(path: impl AsRef<Path>) -> Result<Tensor4<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    decode_pgm(&bytes)
}

/// Min-max normalizes to 8 bits and writes a P5 image. A constant map
/// (including all zeros) becomes all black.
pub fn export_density_image<T: Scalar>(d: &DensityMap<T>, path: impl AsRef<Path>) -> Result<()> {
    Ok(fs::write(path, density_to_pgm(d)?)?)
}

pub fn density_to_pgm<T: Scalar>(d: &DensityMap<T>) -> Result<Vec<u8>> {
    let vals: Vec<f64> = d.values.iter().map(|v| v.to_f64_lossy()).collect();
    let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    let pixels: Vec<u8> = vals
        .iter()
        .map(|&v| {
            if range > 0.0 {
                ((v - lo) / range * 255.0).round() as u8
            } else {
                0
            }
        })
        .collect();
    encode_pgm(d.width, d.height, &pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_map() -> DensityMap<f64> {
        DensityMap {
            height: 3,
            width: 2,
            stride: 8,
            values: vec![0.0, 1.5, -0.0, f64::MIN_POSITIVE, 1e-300, 0.1 + 0.2],
        }
    }

    #[test]
    fn dmap_layout_and_round_trip() {
        let d = sample_map();
        let bytes = encode_dmap(&d).unwrap();
        assert_eq!(bytes.len(), 20 + 8 * 6);
        assert_eq!(&bytes[..8], b"DMAP0001");
        assert_eq!(&bytes[8..12], &3u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &2u32.to_le_bytes());
        assert_eq!(&bytes[16..20], &8u32.to_le_bytes());
        assert_eq!(&bytes[28..36], &1.5f64.to_le_bytes());
        let back: DensityMap<f64> = decode_dmap(&bytes).unwrap();
        assert_eq!(encode_dmap(&back).unwrap(), bytes);
        assert_eq!(back.values[2].to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn dmap_rejects_bad_input() {
        let bytes = encode_dmap(&sample_map()).unwrap();
        assert!(decode_dmap::<f64>(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_dmap::<f64>(&extra).is_err());
        let mut bad = bytes;
        bad[0] = b'X';
        assert!(matches!(decode_dmap::<f64>(&bad), Err(Error::Format(_))));
    }

    #[test]
    fn checkpoint_round_trip_keeps_order_and_bits() {
        let mut p = ModelParams::new();
        p.insert("z.weight", Param::Conv(Tensor4::from_fn([2, 1, 3, 3], |[o, _, y, x]| (o + y * x) as f64 / 3.0)));
        p.insert("a.bias", Param::Vector(vec![f64::EPSILON, -1.0]));
        let bytes = encode_checkpoint(&p).unwrap();
        let back: ModelParams<f64> = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.names().collect::<Vec<_>>(), vec!["z.weight", "a.bias"]);
        assert_eq!(encode_checkpoint(&back).unwrap(), bytes);
        assert!(decode_checkpoint::<f64>(&bytes[..bytes.len() - 3]).is_err());
    }

    #[test]
    fn pgm_round_trip() {
        let img = Tensor4::from_fn([1, 1, 3, 5], |[_, _, y, x]| ((y * 5 + x) * 17) as f64 / 255.0);
        let bytes = encode_pgm(5, 3, &image_to_bytes(&img)).unwrap();
        assert!(bytes.starts_with(b"P5"));
        let back: Tensor4<f64> = decode_pgm(&bytes).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn color_input_averages_channels() {
        let ppm = [b"P6\n2 1\n255\n".as_slice(), &[30, 60, 90, 255, 0, 0]].concat();
        let img: Tensor4<f64> = decode_pgm(&ppm).unwrap();
        assert_eq!(img.dims(), [1, 1, 1, 2]);
        assert!((img.as_slice()[0] - 60.0 / 255.0).abs() < 1e-15);
        assert!((img.as_slice()[1] - 85.0 / 255.0).abs() < 1e-15);
    }

    #[test]
    fn density_image_normalization() {
        let pixels = |d: &DensityMap<f64>| {
            let img: Tensor4<f64> = decode_pgm(&density_to_pgm(d).unwrap()).unwrap();
            image_to_bytes(&img)
        };
        let zero = DensityMap::<f64>::zeros(4, 4, 1);
        assert!(pixels(&zero).iter().all(|&b| b == 0));
        let constant = DensityMap { values: vec![0.3; 16], ..zero.clone() };
        assert!(pixels(&constant).iter().all(|&b| b == 0));
        let mut ramp = zero;
        ramp.values = (0..16).map(|i| i as f64 * 0.01).collect();
        let px = pixels(&ramp);
        assert_eq!(px[15], 255);
        assert_eq!(px[0], 0);
    }
}
