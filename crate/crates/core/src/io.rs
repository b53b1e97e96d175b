//! File formats: the FPMSTACK binary image stack, PGM previews and atomic writes.
//!
//! FPMSTACK layout (little-endian): magic `FPMS`, `u32` version, `u32` count,
//! `u32` height, `u32` width, `u8` dtype (0 = real f32, 1 = complex f32 as
//! interleaved re, im), then the raw samples in image-major, row-major order.

use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;

use crate::design::DesignMatrix;
use crate::error::{FpmError, Result};
use crate::optics::LedGeometry;

pub const STACK_MAGIC: &[u8; 4] = b"FPMS";
pub const STACK_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum StackData {
    Real(Vec<Array2<f64>>),
    Complex(Vec<Array2<Complex64>>),
}

impl StackData {
    pub fn len(&self) -> usize {
        match self {
            StackData::Real(v) => v.len(),
            StackData::Complex(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn dims(&self) -> (usize, usize) {
        match self {
            StackData::Real(v) => v.first().map_or((0, 0), |a| a.dim()),
            StackData::Complex(v) => v.first().map_or((0, 0), |a| a.dim()),
        }
    }
}

/// Writes to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| FpmError::Format(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })?;
    Ok(())
}

pub fn encode_stack(data: &StackData) -> Result<Vec<u8>> {
    let (h, w) = data.dims();
    let mut out = Vec::with_capacity(21 + data.len() * h * w * 8);
    out.extend_from_slice(STACK_MAGIC);
    out.extend_from_slice(&STACK_VERSION.to_le_bytes());
    out.extend_from_slice(&(data.len() as u32).to_le_bytes());
    out.extend_from_slice(&(h as u32).to_le_bytes());
    out.extend_from_slice(&(w as u32).to_le_bytes());
    match data {
        StackData::Real(images) => {
            out.push(0);
            for img in images {
                if img.dim() != (h, w) {
                    return Err(FpmError::Shape("stack images differ in size".into()));
                }
                for v in img.iter() {
                    out.extend_from_slice(&(*v as f32).to_le_bytes());
                }
            }
        }
        StackData::Complex(images) => {
            out.push(1);
            for img in images {
                if img.dim() != (h, w) {
                    return Err(FpmError::Shape("stack images differ in size".into()));
                }
                for v in img.iter() {
                    out.extend_from_slice(&(v.re as f32).to_le_bytes());
                    out.extend_from_slice(&(v.im as f32).to_le_bytes());
                }
            }
        }
    }
    Ok(out)
}

pub fn decode_stack(bytes: &[u8]) -> Result<StackData> {
    if bytes.len() < 21 || &bytes[..4] != STACK_MAGIC {
        return Err(FpmError::Format("not an FPMSTACK file".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let version = word(4) as u32;
    if version != STACK_VERSION {
        return Err(FpmError::Format(format!("unsupported FPMSTACK version {version}")));
    }
    let (count, h, w) = (word(8), word(12), word(16));
    let dtype = bytes[20];
    let per = match dtype {
        0 => 4,
        1 => 8,
        d => return Err(FpmError::Format(format!("unknown dtype {d}"))),
    };
    let body = &bytes[21..];
    let expected = count * h * w * per;
    if body.len() != expected {
        return Err(FpmError::Format(format!(
            "payload is {} bytes, header implies {expected}",
            body.len()
        )));
    }
    let f = |i: usize| f32::from_le_bytes(body[i..i + 4].try_into().unwrap()) as f64;
    let n = h * w;
    Ok(if dtype == 0 {
        StackData::Real(
            (0..count)
                .map(|k| Array2::from_shape_fn((h, w), |(i, j)| f(4 * (k * n + i * w + j))))
                .collect(),
        )
    } else {
        StackData::Complex(
            (0..count)
                .map(|k| {
                    Array2::from_shape_fn((h, w), |(i, j)| {
                        let o = 8 * (k * n + i * w + j);
                        Complex64::new(f(o), f(o + 4))
                    })
                })
                .collect(),
        )
    })
}

pub fn write_stack(path: &Path, data: &StackData) -> Result<()> {
    write_atomic(path, &encode_stack(data)?)
}

pub fn read_stack(path: &Path) -> Result<StackData> {
    decode_stack(&std::fs::read(path)?)
}

/// Binary PGM (P5) with the image's range stretched to 0..255.
pub fn encode_pgm(img: &Array2<f64>) -> Vec<u8> {
    let (h, w) = img.dim();
    let lo = img.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = img.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(
        img.iter()
            .map(|v| (((v - lo) / span) * 255.0).round().clamp(0.0, 255.0) as u8),
    );
    out
}

pub fn write_pgm(path: &Path, img: &Array2<f64>) -> Result<()> {
    write_atomic(path, &encode_pgm(img))
}

const CELL: usize = 6;

fn led_extent(geometry: &LedGeometry) -> i32 {
    geometry
        .leds
        .iter()
        .map(|l| l.grid_index.0.abs().max(l.grid_index.1.abs()))
        .max()
        .unwrap_or(0)
}

/// LED grid with bright-field LEDs white, dark-field grey, empty sites black.
pub fn render_geometry(geometry: &LedGeometry) -> Array2<f64> {
    let e = led_extent(geometry);
    let side = (2 * e + 1) as usize * CELL;
    let mut img = Array2::zeros((side, side));
    for led in &geometry.leds {
        let v = if led.is_bright() { 1.0 } else { 0.5 };
        paint(&mut img, led.grid_index, e, 0, v);
    }
    img
}

/// One panel per measurement, LED brightness as grey level, panels side by side.
pub fn render_design(design: &DesignMatrix, geometry: &LedGeometry) -> Array2<f64> {
    let e = led_extent(geometry);
    let panel = (2 * e + 1) as usize * CELL;
    let gap = CELL;
    let width = design.k() * panel + design.k().saturating_sub(1) * gap;
    let mut img = Array2::zeros((panel, width.max(1)));
    for k in 0..design.k() {
        let row = design.weights.row(k);
        let peak = row.iter().cloned().fold(0.0, f64::max);
        for (c, led) in row.iter().zip(&geometry.leds) {
            // faint marker so unlit LEDs remain visible
            let v = if peak > 0.0 { 0.1 + 0.9 * c / peak } else { 0.1 };
            paint(&mut img, led.grid_index, e, k * (panel + gap), v);
        }
    }
    img
}

fn paint(img: &mut Array2<f64>, (m, n): (i32, i32), extent: i32, x0: usize, v: f64) {
    let cx = (m + extent) as usize * CELL;
    // image rows grow downward; LED row n grows upward
    let cy = (extent - n) as usize * CELL;
    for dy in 1..CELL - 1 {
        for dx in 1..CELL - 1 {
            img[[cy + dy, x0 + cx + dx]] = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn stack_roundtrip_is_exact_for_f32_values(
            vals in proptest::collection::vec(-1e6f32..1e6, 2 * 3 * 4 * 2),
            complex in any::<bool>(),
        ) {
            let data = if complex {
                StackData::Complex((0..2).map(|k| Array2::from_shape_fn((3, 4), |(i, j)| {
                    let o = 2 * (k * 12 + i * 4 + j);
                    Complex64::new(vals[o] as f64, vals[o + 1] as f64)
                })).collect())
            } else {
                StackData::Real((0..2).map(|k| Array2::from_shape_fn((3, 4), |(i, j)| vals[k * 12 + i * 4 + j] as f64)).collect())
            };
            let bytes = encode_stack(&data).unwrap();
            prop_assert_eq!(decode_stack(&bytes).unwrap(), data);
        }
    }

    #[test]
    fn header_layout() {
        let data = StackData::Real(vec![Array2::from_elem((2, 3), 1.5)]);
        let b = encode_stack(&data).unwrap();
        assert_eq!(&b[..4], b"FPMS");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[12..16].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(b[16..20].try_into().unwrap()), 3);
        assert_eq!(b[20], 0);
        assert_eq!(b.len(), 21 + 6 * 4);
        assert_eq!(&b[21..25], &1.5f32.to_le_bytes());
    }

    #[test]
    fn corrupt_stacks_are_rejected() {
        let data = StackData::Real(vec![Array2::from_elem((2, 2), 1.0)]);
        let mut b = encode_stack(&data).unwrap();
        assert!(decode_stack(&b[..b.len() - 1]).is_err());
        b[20] = 7;
        assert!(decode_stack(&b).is_err());
        assert!(decode_stack(b"nope").is_err());
    }

    #[test]
    fn pgm_header_and_range() {
        let img = Array2::from_shape_fn((2, 2), |(i, j)| (i * 2 + j) as f64);
        let b = encode_pgm(&img);
        assert!(b.starts_with(b"P5\n2 2\n255\n"));
        assert_eq!(&b[b.len() - 4..], &[0, 85, 170, 255]);
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.bin");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
        assert!(write_atomic(&dir.path().join("missing/x.bin"), b"x").is_err());
    }
}
