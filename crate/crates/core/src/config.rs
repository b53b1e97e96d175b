//! System, reconstruction and training parameters, plus the flat
//! `key = value` configuration file that drives every CLI command.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{FpmError, Result};

/// Optical system and sampling parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub wavelength_um: f64,
    pub na_obj: f64,
    /// Largest illumination NA admitted into the LED set.
    pub na_illum_max: f64,
    pub mag: f64,
    pub camera_px_um: f64,
    pub led_pitch_mm: f64,
    pub led_height_mm: f64,
    pub patch_px: usize,
    pub upsample: usize,
    /// Mean photon count of bright-field measurements under shot noise.
    pub bright_mean_counts: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            wavelength_um: 0.514,
            na_obj: 0.2,
            na_illum_max: 0.42,
            mag: 8.0,
            camera_px_um: 6.5,
            led_pitch_mm: 4.0,
            led_height_mm: 45.0,
            patch_px: 35,
            upsample: 3,
            bright_mean_counts: 10_000.0,
        }
    }
}

impl SystemConfig {
    pub fn hires_px(&self) -> usize {
        self.patch_px * self.upsample
    }

    /// Sample-plane pitch of the low-resolution camera grid.
    pub fn lores_pitch_um(&self) -> f64 {
        self.camera_px_um / self.mag
    }

    pub fn hires_pitch_um(&self) -> f64 {
        self.lores_pitch_um() / self.upsample as f64
    }

    /// Frequency bin spacing, identical on both grids.
    pub fn freq_step(&self) -> f64 {
        1.0 / (self.hires_px() as f64 * self.hires_pitch_um())
    }

    pub fn na_recon(&self) -> f64 {
        self.na_obj + self.na_illum_max
    }

    pub fn pupil_cutoff(&self) -> f64 {
        self.na_obj / self.wavelength_um
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(FpmError::Config(m));
        if !(self.wavelength_um > 0.0) {
            return bad(format!("wavelength_um must be > 0, got {}", self.wavelength_um));
        }
        if !(self.na_obj > 0.0 && self.na_obj < 1.0) {
            return bad(format!("na_obj must lie in (0, 1), got {}", self.na_obj));
        }
        if !(self.na_illum_max >= 0.0 && self.na_illum_max < 1.0) {
            return bad(format!("na_illum_max must lie in [0, 1), got {}", self.na_illum_max));
        }
        if !(self.mag > 0.0 && self.camera_px_um > 0.0) {
            return bad("mag and camera_px_um must be > 0".into());
        }
        if !(self.led_pitch_mm > 0.0 && self.led_height_mm > 0.0) {
            return bad("led_pitch_mm and led_height_mm must be > 0".into());
        }
        if self.upsample < 2 {
            return bad(format!("upsample must be >= 2, got {}", self.upsample));
        }
        if self.patch_px < 3 {
            return bad(format!("patch_px must be >= 3, got {}", self.patch_px));
        }
        if !(self.bright_mean_counts > 0.0) {
            return bad("bright_mean_counts must be > 0".into());
        }
        let hires_band = self.upsample as f64 / self.lores_pitch_um();
        let needed = 2.0 * self.na_recon() / self.wavelength_um;
        if hires_band < needed {
            return bad(format!(
                "high-res grid under-samples the synthetic aperture: {hires_band:.4} < {needed:.4} cycles/um"
            ));
        }
        let max_shift = (self.na_illum_max / self.wavelength_um / self.freq_step()).round() as usize;
        if self.patch_px + 2 * max_shift + 1 > self.hires_px() {
            return bad(format!(
                "shifted {p}-bin pupil window (max shift {max_shift} bins) does not fit the {q}-bin grid",
                p = self.patch_px,
                q = self.hires_px()
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitMode {
    #[default]
    UniformMean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconConfig {
    pub unroll_t: usize,
    pub step_alpha: f64,
    pub init_mode: InitMode,
    /// Constant phase of the initial field, radians.
    pub init_phase: f64,
}

impl Default for ReconConfig {
    fn default() -> Self {
        ReconConfig {
            unroll_t: 100,
            step_alpha: 0.5,
            init_mode: InitMode::UniformMean,
            init_phase: 0.0,
        }
    }
}

impl ReconConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_alpha > 0.0 && self.step_alpha.is_finite()) {
            return Err(FpmError::Config(format!(
                "step_alpha must be > 0, got {}",
                self.step_alpha
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    /// Stride between stored iterates for the reverse pass; 0 picks `ceil(sqrt(T))`.
    pub checkpoint_every: usize,
    /// Draw shot noise into the training measurements (held constant in the reverse pass).
    pub train_noise: bool,
    pub unroll: ReconConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.05,
            epochs: 50,
            batch: 5,
            seed: 0,
            checkpoint_every: 0,
            train_noise: true,
            unroll: ReconConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(FpmError::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        if self.batch == 0 {
            return Err(FpmError::Config("batch must be >= 1".into()));
        }
        self.unroll.validate()
    }

    pub fn stride(&self) -> usize {
        match self.checkpoint_every {
            0 => ((self.unroll.unroll_t as f64).sqrt().ceil() as usize).max(1),
            s => s,
        }
    }
}

/// Imaging application a design or loss is tailored to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Context {
    Amplitude,
    Phase,
    /// Weighted loss, `gamma` on amplitude and `1 - gamma` on phase.
    Mixed(f64),
}

impl Context {
    pub fn gamma(&self) -> f64 {
        match *self {
            Context::Amplitude => 1.0,
            Context::Phase => 0.0,
            Context::Mixed(g) => g,
        }
    }

    /// Number of leading bright-field-only measurements in learned designs.
    pub fn bright_rows(&self) -> usize {
        match self {
            Context::Amplitude => 1,
            Context::Phase | Context::Mixed(_) => 2,
        }
    }

    /// Whether the quantity of interest is amplitude (else phase).
    pub fn is_amplitude(&self) -> bool {
        self.gamma() >= 0.5
    }
}

impl FromStr for Context {
    type Err = FpmError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "amplitude" => Ok(Context::Amplitude),
            "phase" => Ok(Context::Phase),
            _ => {
                let g = s
                    .strip_prefix("mixed:")
                    .ok_or_else(|| FpmError::Config(format!("unknown context '{s}'")))?;
                let g: f64 = g
                    .parse()
                    .map_err(|_| FpmError::Config(format!("bad mixed weight '{g}'")))?;
                if !(0.0..=1.0).contains(&g) {
                    return Err(FpmError::Config(format!("mixed weight must lie in [0, 1], got {g}")));
                }
                Ok(Context::Mixed(g))
            }
        }
    }
}

impl fmt::Display for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Context::Amplitude => write!(f, "amplitude"),
            Context::Phase => write!(f, "phase"),
            Context::Mixed(g) => write!(f, "mixed:{g}"),
        }
    }
}

/// Everything a config file can set.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub system: SystemConfig,
    pub recon: ReconConfig,
    pub train: TrainConfig,
    pub context: Context,
    pub measurements: usize,
    pub dataset_size: usize,
    pub dataset_seed: u64,
    pub noise_seed: u64,
    pub design_seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            system: SystemConfig::default(),
            recon: ReconConfig::default(),
            train: TrainConfig::default(),
            context: Context::Amplitude,
            measurements: 10,
            dataset_size: 100,
            dataset_seed: 1,
            noise_seed: 2,
            design_seed: 3,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str, line: usize, path: &Path) -> Result<T> {
    value.parse().map_err(|_| FpmError::Parse {
        path: path.to_path_buf(),
        line,
        msg: format!("bad value '{value}' for key '{key}'"),
    })
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    /// Parses `key = value` lines; `#` starts a comment. Unknown keys are errors.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut cfg = Config::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| FpmError::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("expected 'key = value', got '{content}'"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            macro_rules! set {
                ($field:expr) => {
                    $field = parse_value(key, value, line, path)?
                };
            }
            match key {
                "wavelength_um" => set!(cfg.system.wavelength_um),
                "na_obj" => set!(cfg.system.na_obj),
                "na_illum_max" => set!(cfg.system.na_illum_max),
                "mag" => set!(cfg.system.mag),
                "camera_px_um" => set!(cfg.system.camera_px_um),
                "led_pitch_mm" => set!(cfg.system.led_pitch_mm),
                "led_height_mm" => set!(cfg.system.led_height_mm),
                "patch_px" => set!(cfg.system.patch_px),
                "upsample" => set!(cfg.system.upsample),
                "bright_mean_counts" => set!(cfg.system.bright_mean_counts),
                "unroll_t" => set!(cfg.recon.unroll_t),
                "step_alpha" => set!(cfg.recon.step_alpha),
                "init_phase" => set!(cfg.recon.init_phase),
                "lr" => set!(cfg.train.lr),
                "epochs" => set!(cfg.train.epochs),
                "batch" => set!(cfg.train.batch),
                "seed" => set!(cfg.train.seed),
                "checkpoint_every" => set!(cfg.train.checkpoint_every),
                "train_noise" => set!(cfg.train.train_noise),
                "context" => set!(cfg.context),
                "measurements" => set!(cfg.measurements),
                "dataset_size" => set!(cfg.dataset_size),
                "dataset_seed" => set!(cfg.dataset_seed),
                "noise_seed" => set!(cfg.noise_seed),
                "design_seed" => set!(cfg.design_seed),
                _ => {
                    return Err(FpmError::Parse {
                        path: path.to_path_buf(),
                        line,
                        msg: format!("unknown key '{key}'"),
                    })
                }
            }
        }
        cfg.train.unroll = cfg.recon.clone();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.recon.validate()?;
        self.train.validate()?;
        if self.dataset_size < 2 {
            return Err(FpmError::Config("dataset_size must be >= 2".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        Config::default().validate().unwrap();
        let s = SystemConfig::default();
        assert_eq!(s.hires_px(), 105);
        assert!((s.na_recon() - 0.62).abs() < 1e-15);
    }

    #[test]
    fn upsample_two_is_rejected() {
        // Nyquist holds (2.46 >= 2.41 cycles/um) but the outermost window leaves the grid.
        let s = SystemConfig {
            upsample: 2,
            ..SystemConfig::default()
        };
        let err = s.validate().unwrap_err();
        assert!(err.to_string().contains("window"), "{err}");
        let s = SystemConfig {
            upsample: 2,
            na_illum_max: 0.6,
            ..SystemConfig::default()
        };
        let err = s.validate().unwrap_err();
        assert!(err.to_string().contains("under-samples"), "{err}");
    }

    #[test]
    fn parse_file_and_reject_unknown_keys() {
        let text = "# comment\npatch_px = 21\nunroll_t = 30 # inline\ncontext = mixed:0.25\n";
        let cfg = Config::parse(text, Path::new("x.cfg")).unwrap();
        assert_eq!(cfg.system.patch_px, 21);
        assert_eq!(cfg.train.unroll.unroll_t, 30);
        assert_eq!(cfg.context, Context::Mixed(0.25));

        let err = Config::parse("bogus = 1\n", Path::new("x.cfg")).unwrap_err();
        assert!(err.to_string().contains("x.cfg:1"));
        let err = Config::parse("context = mixed:1.5\n", Path::new("x.cfg")).unwrap_err();
        assert!(err.to_string().contains("mixed"), "{err}");
    }

    #[test]
    fn stride_defaults_to_sqrt_unroll() {
        let t = TrainConfig::default();
        assert_eq!(t.stride(), 10);
    }
}
