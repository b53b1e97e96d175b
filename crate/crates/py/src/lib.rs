//! Python bindings: build a system from a config, make and load designs,
//! simulate stacks, reconstruct, train and score.

use std::path::PathBuf;

use ndarray::Array2;
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use fpm_core::design::{heuristic_design, load_design, save_design, single_led_design};
use fpm_core::metrics::{band_psnr, Band};
use fpm_core::optics::add_shot_noise;
use fpm_core::phantom::{generate_phantom, make_dataset, Split};
use fpm_core::pipeline::{bright_rows, evaluate_design, psnr_csv, simulate_stack};
use fpm_core::train::{train, TrainSetup};
use fpm_core::{
    build_led_geometry, reconstruct, Config, Context, DesignMatrix, ForwardModel, FpmError, LedGeometry,
    MeasurementStack,
};

create_exception!(fpm, FpmException, PyException);

fn err(e: FpmError) -> PyErr {
    FpmException::new_err(e.to_string())
}

fn to_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn from_rows(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(FpmException::new_err("ragged image rows"));
    }
    Array2::from_shape_vec((n, m), rows.into_iter().flatten().collect())
        .map_err(|e| FpmException::new_err(e.to_string()))
}

fn parse_context(s: Option<&str>, default: Context) -> PyResult<Context> {
    match s {
        Some(s) => s.parse().map_err(err),
        None => Ok(default),
    }
}

/// A `K x L` LED design.
#[pyclass(name = "Design", module = "fpm", from_py_object)]
#[derive(Clone)]
struct PyDesign {
    inner: DesignMatrix,
}

#[pymethods]
impl PyDesign {
    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn l(&self) -> usize {
        self.inner.l()
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn context(&self) -> Option<String> {
        self.inner.context.map(|c| c.to_string())
    }

    #[getter]
    fn weights(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.weights)
    }

    fn is_feasible(&self, tol: f64) -> bool {
        self.inner.check_feasible(tol).is_ok()
    }

    fn __repr__(&self) -> String {
        format!(
            "Design(name={:?}, K={}, L={})",
            self.inner.name,
            self.inner.k(),
            self.inner.l()
        )
    }
}

/// Result of a reconstruction.
#[pyclass(name = "Reconstruction", module = "fpm", get_all)]
struct PyReconstruction {
    amplitude: Vec<Vec<f64>>,
    phase: Vec<Vec<f64>>,
    cost_history: Vec<f64>,
}

/// Configured optical system: LED geometry plus forward model.
#[pyclass(name = "System", module = "fpm")]
struct PySystem {
    cfg: Config,
    geometry: LedGeometry,
    model: ForwardModel,
}

impl PySystem {
    fn build(cfg: Config) -> PyResult<Self> {
        cfg.validate().map_err(err)?;
        let geometry = build_led_geometry(&cfg.system).map_err(err)?;
        let model = ForwardModel::new(&cfg.system, &geometry).map_err(err)?;
        Ok(PySystem { cfg, geometry, model })
    }

    fn stack(&self, design: &DesignMatrix, images: Vec<Vec<Vec<f64>>>) -> PyResult<MeasurementStack> {
        let images = images.into_iter().map(from_rows).collect::<PyResult<Vec<_>>>()?;
        let bright = if images.len() == design.k() {
            bright_rows(design, &self.model)
        } else {
            vec![true; images.len()]
        };
        Ok(MeasurementStack {
            images,
            design_id: design.name.clone(),
            noisy: false,
            bright,
        })
    }
}

#[pymethods]
impl PySystem {
    /// Loads `config` if given, else uses the defaults.
    #[new]
    #[pyo3(signature = (config=None))]
    fn new(config: Option<PathBuf>) -> PyResult<Self> {
        let cfg = match config {
            Some(p) => Config::load(&p).map_err(err)?,
            None => Config::default(),
        };
        Self::build(cfg)
    }

    /// Builds a system from config file text.
    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Self::build(Config::parse(text, std::path::Path::new("<string>")).map_err(err)?)
    }

    #[getter]
    fn patch_px(&self) -> usize {
        self.model.patch_px()
    }

    #[getter]
    fn hires_px(&self) -> usize {
        self.model.hires_px()
    }

    #[getter]
    fn num_leds(&self) -> usize {
        self.geometry.len()
    }

    #[getter]
    fn bright_count(&self) -> usize {
        self.geometry.bright_count
    }

    #[getter]
    fn dark_count(&self) -> usize {
        self.geometry.dark_count
    }

    #[getter]
    fn context(&self) -> String {
        self.cfg.context.to_string()
    }

    /// `(m, n, xi_x, xi_y, na, region)` per LED.
    fn leds(&self) -> Vec<(i32, i32, f64, f64, f64, String)> {
        self.geometry
            .leds
            .iter()
            .map(|l| {
                (
                    l.grid_index.0,
                    l.grid_index.1,
                    l.xi_cyc_per_um.0,
                    l.xi_cyc_per_um.1,
                    l.na_illum,
                    l.region.as_str().to_string(),
                )
            })
            .collect()
    }

    fn single_design(&self) -> PyDesign {
        PyDesign {
            inner: single_led_design(&self.geometry),
        }
    }

    #[pyo3(signature = (k, seed=None))]
    fn heuristic_design(&self, k: usize, seed: Option<u64>) -> PyResult<PyDesign> {
        let inner = heuristic_design(&self.geometry, k, seed.unwrap_or(self.cfg.design_seed)).map_err(err)?;
        Ok(PyDesign { inner })
    }

    fn load_design(&self, path: PathBuf) -> PyResult<PyDesign> {
        let inner = load_design(&path, &self.geometry, &self.cfg.system).map_err(err)?;
        Ok(PyDesign { inner })
    }

    fn save_design(&self, design: &PyDesign, path: PathBuf) -> PyResult<()> {
        save_design(&path, &design.inner, &self.geometry, &self.cfg.system).map_err(err)
    }

    /// `(amplitude, phase)` of a generated phantom.
    #[pyo3(signature = (seed, context=None))]
    fn phantom(&self, seed: u64, context: Option<&str>) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let ctx = parse_context(context, self.cfg.context)?;
        let ph = generate_phantom(&self.cfg.system, ctx, seed);
        Ok((to_rows(&ph.field.amplitude()), to_rows(&ph.field.phase())))
    }

    /// Multiplexed intensity stack of a generated phantom, one image per design row.
    #[pyo3(signature = (design, phantom_seed, noise=false, noise_seed=None))]
    fn simulate(
        &self,
        design: &PyDesign,
        phantom_seed: u64,
        noise: bool,
        noise_seed: Option<u64>,
    ) -> PyResult<Vec<Vec<Vec<f64>>>> {
        let ph = generate_phantom(&self.cfg.system, self.cfg.context, phantom_seed);
        let mut stack = simulate_stack(&ph.field, &design.inner, &self.model).map_err(err)?;
        if noise {
            stack = add_shot_noise(&stack, &self.cfg.system, noise_seed.unwrap_or(self.cfg.noise_seed)).map_err(err)?;
        }
        Ok(stack.images.iter().map(to_rows).collect())
    }

    #[pyo3(signature = (design, stack, unroll_t=None))]
    fn reconstruct(
        &self,
        design: &PyDesign,
        stack: Vec<Vec<Vec<f64>>>,
        unroll_t: Option<usize>,
    ) -> PyResult<PyReconstruction> {
        let ms = self.stack(&design.inner, stack)?;
        let mut rcfg = self.cfg.recon.clone();
        if let Some(t) = unroll_t {
            rcfg.unroll_t = t;
        }
        let trace = reconstruct(&ms, &design.inner, &self.model, &rcfg).map_err(err)?;
        Ok(PyReconstruction {
            amplitude: to_rows(&trace.x_star.amplitude()),
            phase: to_rows(&trace.x_star.phase()),
            cost_history: trace.cost_history,
        })
    }

    /// Learns a design; returns it with the epoch log as CSV.
    #[pyo3(signature = (k=None, context=None))]
    fn train(&self, k: Option<usize>, context: Option<&str>) -> PyResult<(PyDesign, String)> {
        let context = parse_context(context, self.cfg.context)?;
        let dataset =
            make_dataset(&self.cfg.system, context, self.cfg.dataset_size, self.cfg.dataset_seed).map_err(err)?;
        let setup = TrainSetup {
            cfg: &self.cfg.system,
            model: &self.model,
            geometry: &self.geometry,
            k: k.unwrap_or(self.cfg.measurements),
            context,
        };
        let outcome = train(&dataset, &setup, &self.cfg.train).map_err(err)?;
        Ok((PyDesign { inner: outcome.best }, outcome.log.to_csv()))
    }

    /// Band PSNR CSV of `designs` over the test phantoms.
    fn evaluate(&self, designs: Vec<PyDesign>) -> PyResult<String> {
        let dataset = make_dataset(
            &self.cfg.system,
            self.cfg.context,
            self.cfg.dataset_size,
            self.cfg.dataset_seed,
        )
        .map_err(err)?;
        let test = dataset.split(Split::Test);
        let mut rows = Vec::new();
        for d in &designs {
            rows.extend(
                evaluate_design(
                    &d.inner,
                    &test,
                    &self.model,
                    &self.cfg.system,
                    &self.cfg.recon,
                    self.cfg.context,
                    Some(self.cfg.noise_seed),
                )
                .map_err(err)?,
            );
        }
        Ok(psnr_csv(&rows))
    }

    /// PSNR of `recon` against `truth` in the `"low"` or `"high"` band.
    fn band_psnr(&self, recon: Vec<Vec<f64>>, truth: Vec<Vec<f64>>, band: &str) -> PyResult<f64> {
        let band = match band {
            "low" => Band::Low,
            "high" => Band::High,
            other => return Err(FpmException::new_err(format!("unknown band '{other}'"))),
        };
        band_psnr(&from_rows(recon)?, &from_rows(truth)?, band, &self.cfg.system).map_err(err)
    }
}

#[pymodule]
pub fn fpm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystem>()?;
    m.add_class::<PyDesign>()?;
    m.add_class::<PyReconstruction>()?;
    m.add("FpmError", m.py().get_type::<FpmException>())?;
    Ok(())
}
