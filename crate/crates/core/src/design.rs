//! LED brightness designs: the feasible set, baseline generators and the
//! FPMDESIGN text format.

use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{Context, SystemConfig};
use crate::error::{FpmError, Result};
use crate::optics::LedGeometry;

/// `K x L` non-negative LED brightnesses, one row per measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub weights: Array2<f64>,
    /// `true` where an entry may be non-zero.
    pub mask: Array2<bool>,
    pub context: Option<Context>,
    pub name: String,
}

impl DesignMatrix {
    pub fn k(&self) -> usize {
        self.weights.nrows()
    }

    pub fn l(&self) -> usize {
        self.weights.ncols()
    }

    pub fn row(&self, k: usize) -> Vec<f64> {
        self.weights.row(k).to_vec()
    }

    /// Whether each measurement carries any bright-field light.
    pub fn bright_rows(&self, geometry: &LedGeometry) -> Vec<bool> {
        self.weights
            .rows()
            .into_iter()
            .map(|r| r.iter().zip(&geometry.leds).any(|(c, led)| *c > 0.0 && led.is_bright()))
            .collect()
    }

    /// Checks masked zeros, non-negativity and unit row sums within `tol`.
    pub fn check_feasible(&self, tol: f64) -> std::result::Result<(), String> {
        for (k, (row, mrow)) in self.weights.rows().into_iter().zip(self.mask.rows()).enumerate() {
            let mut sum = 0.0;
            for (l, (&c, &allowed)) in row.iter().zip(mrow.iter()).enumerate() {
                if c < 0.0 {
                    return Err(format!("entry ({k}, {l}) is negative: {c}"));
                }
                if !allowed && c != 0.0 {
                    return Err(format!("masked entry ({k}, {l}) is {c}"));
                }
                sum += c;
            }
            if (sum - 1.0).abs() > tol {
                return Err(format!("row {k} sums to {sum}"));
            }
        }
        Ok(())
    }
}

/// Projects raw weights onto the feasible set: zero masked entries, clamp
/// negatives to zero, then rescale each row to unit sum.
pub fn project(raw: &Array2<f64>, mask: &Array2<bool>) -> Result<Array2<f64>> {
    if raw.dim() != mask.dim() {
        return Err(FpmError::Shape(format!(
            "weights {:?} vs mask {:?}",
            raw.dim(),
            mask.dim()
        )));
    }
    let mut out = raw.clone();
    for (k, (mut row, mrow)) in out.rows_mut().into_iter().zip(mask.rows()).enumerate() {
        for (c, &allowed) in row.iter_mut().zip(mrow.iter()) {
            if !allowed || !(*c > 0.0) {
                *c = 0.0;
            }
        }
        let sum: f64 = row.sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(FpmError::DegenerateRow { row: k });
        }
        row.mapv_inplace(|c| c / sum);
    }
    Ok(out)
}

/// One measurement per LED.
pub fn single_led_design(geometry: &LedGeometry) -> DesignMatrix {
    let l = geometry.len();
    DesignMatrix {
        weights: Array2::eye(l),
        mask: Array2::from_elem((l, l), true),
        context: None,
        name: format!("single-led-{l}"),
    }
}

/// Three bright-field half-plane measurements (upper `n >= 0`, lower `n < 0`,
/// left `m <= 0`) followed by `K - 3` dark-field measurements that partition
/// the dark-field LEDs at random into near-equal groups.
pub fn heuristic_design(geometry: &LedGeometry, k: usize, seed: u64) -> Result<DesignMatrix> {
    if k < 4 {
        return Err(FpmError::Config(format!("heuristic design needs K >= 4, got {k}")));
    }
    let groups = k - 3;
    if groups > geometry.dark_count {
        return Err(FpmError::Config(format!(
            "K - 3 = {groups} dark-field rows exceed {} dark-field LEDs",
            geometry.dark_count
        )));
    }
    let l = geometry.len();
    let mut weights = Array2::zeros((k, l));
    let halves: [fn((i32, i32)) -> bool; 3] = [|(_, n)| n >= 0, |(_, n)| n < 0, |(m, _)| m <= 0];
    for (row, inside) in halves.iter().enumerate() {
        let members: Vec<usize> = (0..l)
            .filter(|&i| geometry.leds[i].is_bright() && inside(geometry.leds[i].grid_index))
            .collect();
        let w = 1.0 / members.len() as f64;
        for i in members {
            weights[[row, i]] = w;
        }
    }

    let mut dark: Vec<usize> = (0..l).filter(|&i| !geometry.leds[i].is_bright()).collect();
    dark.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = dark.len() / groups;
    let extra = dark.len() % groups;
    let mut it = dark.into_iter();
    for g in 0..groups {
        let size = base + usize::from(g < extra);
        let w = 1.0 / size as f64;
        for i in it.by_ref().take(size) {
            weights[[3 + g, i]] = w;
        }
    }
    Ok(DesignMatrix {
        weights,
        mask: Array2::from_elem((k, l), true),
        context: None,
        name: format!("heuristic-{k}"),
    })
}

/// Allowed entries for a learned design: leading bright-field-only rows
/// (one for amplitude, two otherwise), then dark-field-only rows.
pub fn context_mask(geometry: &LedGeometry, k: usize, context: Context) -> Result<Array2<bool>> {
    let nb = context.bright_rows();
    if k <= nb {
        return Err(FpmError::Config(format!("{context} designs need K > {nb}, got {k}")));
    }
    Ok(Array2::from_shape_fn((k, geometry.len()), |(row, l)| {
        (row < nb) == geometry.leds[l].is_bright()
    }))
}

/// `||c - mirror(c)||_1 / ||c||_1` under the point reflection `(m, n) -> (-m, -n)`.
pub fn mirror_asymmetry(row: &[f64], geometry: &LedGeometry) -> f64 {
    let mirror = geometry.mirror_indices();
    let norm: f64 = row.iter().map(|c| c.abs()).sum();
    if norm == 0.0 {
        return 0.0;
    }
    let diff: f64 = row
        .iter()
        .zip(&mirror)
        .map(|(c, m)| (c - m.map_or(0.0, |j| row[j])).abs())
        .sum();
    diff / norm
}

const MAGIC: &str = "FPMDESIGN v1";

pub fn write_design<W: Write>(out: &mut W, design: &DesignMatrix, fingerprint: u64) -> std::io::Result<()> {
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "{} {} {:016x}", design.k(), design.l(), fingerprint)?;
    for row in design.weights.rows() {
        let line: Vec<String> = row.iter().map(|c| format!("{c:.16e}")).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn save_design(path: &Path, design: &DesignMatrix, geometry: &LedGeometry, cfg: &SystemConfig) -> Result<()> {
    let mut buf = Vec::new();
    write_design(&mut buf, design, geometry.fingerprint(cfg))?;
    crate::io::write_atomic(path, &buf)
}

/// Parses an FPMDESIGN file; returns the design and its stored fingerprint.
pub fn parse_design(text: &str, path: &Path) -> Result<(DesignMatrix, u64)> {
    let err = |line: usize, msg: String| FpmError::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines();
    match lines.next() {
        Some(MAGIC) => {}
        Some(other) => return Err(err(1, format!("expected '{MAGIC}', got '{other}'"))),
        None => return Err(err(1, "empty file".into())),
    }
    let header = lines
        .next()
        .ok_or_else(|| err(2, "missing 'K L fingerprint' line".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 3 {
        return Err(err(2, format!("expected 'K L fingerprint', got '{header}'")));
    }
    let k: usize = fields[0]
        .parse()
        .map_err(|_| err(2, format!("bad K '{}'", fields[0])))?;
    let l: usize = fields[1]
        .parse()
        .map_err(|_| err(2, format!("bad L '{}'", fields[1])))?;
    let fp = u64::from_str_radix(fields[2], 16).map_err(|_| err(2, format!("bad fingerprint '{}'", fields[2])))?;
    let mut weights = Array2::zeros((k, l));
    for row in 0..k {
        let line_no = row + 3;
        let line = lines
            .next()
            .ok_or_else(|| err(line_no, format!("truncated: expected {k} rows, found {row}")))?;
        let vals: Vec<&str> = line.split_whitespace().collect();
        if vals.len() != l {
            return Err(err(line_no, format!("expected {l} values, found {}", vals.len())));
        }
        for (j, v) in vals.iter().enumerate() {
            weights[[row, j]] = v.parse().map_err(|_| err(line_no, format!("bad number '{v}'")))?;
        }
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "design".into());
    Ok((
        DesignMatrix {
            weights,
            mask: Array2::from_elem((k, l), true),
            context: None,
            name,
        },
        fp,
    ))
}

/// Loads a design and checks it was saved against this geometry.
pub fn load_design(path: &Path, geometry: &LedGeometry, cfg: &SystemConfig) -> Result<DesignMatrix> {
    let text = std::fs::read_to_string(path)?;
    let (design, found) = parse_design(&text, path)?;
    let expected = geometry.fingerprint(cfg);
    if found != expected {
        return Err(FpmError::Fingerprint { expected, found });
    }
    if design.l() != geometry.len() {
        return Err(FpmError::Shape(format!(
            "design has {} LEDs, geometry has {}",
            design.l(),
            geometry.len()
        )));
    }
    Ok(design)
}
