//! Python bindings: parameter classes, reference profiles, pass channels,
//! transmittance distributions, key-rate optimizers and scenario runs.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyTypeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use satqkd::{adaptive_optics, cv, dv, link, orbit, pdte, scenario, turbulence, Error};

fn to_py(e: Error) -> PyErr {
    if e.is_config() || matches!(e, Error::Domain(_)) {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

/// Plain-data Python class mirroring a core parameter struct field by field.
macro_rules! mirror {
    ($py:ident, $name:literal, $core:path, { $($f:ident: $t:ty),* $(,)? }) => {
        #[pyclass(name = $name, get_all, set_all, from_py_object)]
        #[derive(Clone, Debug)]
        pub struct $py {
            $(pub $f: $t),*
        }

        impl From<$core> for $py {
            fn from(c: $core) -> Self {
                $py { $($f: c.$f),* }
            }
        }

        impl From<&$py> for $core {
            fn from(p: &$py) -> Self {
                let mut c = <$core>::default();
                $(c.$f = p.$f;)*
                c
            }
        }

        #[pymethods]
        impl $py {
            /// Defaults, overridden by keyword arguments.
            #[new]
            #[pyo3(signature = (**kwargs))]
            fn new(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
                let mut s: Self = <$core>::default().into();
                if let Some(kw) = kwargs {
                    for (k, v) in kw.iter() {
                        match k.extract::<String>()?.as_str() {
                            $(stringify!($f) => s.$f = v.extract()?,)*
                            other => {
                                return Err(PyTypeError::new_err(format!(
                                    "{}: unknown field {other:?}", $name
                                )))
                            }
                        }
                    }
                }
                Ok(s)
            }

            fn __repr__(&self) -> String {
                format!("{:?}", self)
            }
        }
    };
}

mirror!(CommonParams, "CommonParams", link::CommonParams, {
    wavelength_m: f64,
    pointing_std_rad: f64,
    divergence_rad: f64,
    fixed_loss_db: f64,
    tau_zen: f64,
    symbol_rate_hz: f64,
    receiver_diameter_m: f64,
});

mirror!(AoConfig, "AoConfig", adaptive_optics::AoConfig, {
    corrected_radial_orders: u32,
    sampling_frequency_hz: f64,
    frame_delay: u32,
    aperture_diameter_m: f64,
    aperture_to_waist_ratio: f64,
    aliasing_fraction: f64,
    max_coupling: f64,
    fluctuation_coefficient: f64,
});

mirror!(DvParams, "DvParams", dv::DvParams, {
    mu: f64,
    nu: f64,
    p_mu: f64,
    p_nu: f64,
    q: f64,
    y0: f64,
    eta_d: f64,
    eta_opt: f64,
    e_d: f64,
    e_0: f64,
    f_ec: f64,
    eps_sec: f64,
    eps_cor: f64,
    n_pulses: f64,
    rep_rate_hz: f64,
    dt_window_s: f64,
});

mirror!(CvParams, "CvParams", cv::CvParams, {
    v_a: f64,
    beta: f64,
    eta: f64,
    v_el: f64,
    xi_fix: f64,
    pilot_energy_j: f64,
    pilot_bandwidth_hz: f64,
    symbol_rate_hz: f64,
    wavelength_m: f64,
    eps_pe: f64,
    n_symbols: f64,
});

#[pyclass(name = "TurbulenceProfile", from_py_object)]
#[derive(Clone)]
pub struct Profile(turbulence::TurbulenceProfile);

#[pymethods]
impl Profile {
    /// Layers as `(altitude_m, cn2, wind_mps)`.
    #[new]
    fn new(label: String, layers: Vec<(f64, f64, f64)>) -> PyResult<Self> {
        let layers = layers
            .into_iter()
            .map(|(altitude_m, cn2, wind_mps)| turbulence::Layer { altitude_m, cn2, wind_mps })
            .collect();
        turbulence::TurbulenceProfile::new(label, layers).map(Profile).map_err(to_py)
    }

    #[staticmethod]
    fn reference(label: &str) -> PyResult<Self> {
        turbulence::reference_profile(label).map(Profile).map_err(to_py)
    }

    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        turbulence::TurbulenceProfile::from_file(path).map(Profile).map_err(to_py)
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        self.0.write(path).map_err(to_py)
    }

    #[getter]
    fn label(&self) -> String {
        self.0.label().to_string()
    }

    #[getter]
    fn layers(&self) -> Vec<(f64, f64, f64)> {
        self.0.layers().iter().map(|l| (l.altitude_m, l.cn2, l.wind_mps)).collect()
    }

    /// `r0_m`, `tau0_s`, `theta0_rad` and `sigma_chi2` at one elevation.
    #[pyo3(signature = (elevation_deg, wavelength_m = 1550e-9, slew_rate_rad_s = 0.0))]
    fn integrated_params<'py>(
        &self,
        py: Python<'py>,
        elevation_deg: f64,
        wavelength_m: f64,
        slew_rate_rad_s: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let p = turbulence::integrated_params(&self.0, elevation_deg, wavelength_m, slew_rate_rad_s).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("r0_m", p.r0_m)?;
        d.set_item("tau0_s", p.tau0_s)?;
        d.set_item("theta0_rad", p.theta0_rad)?;
        d.set_item("sigma_chi2", p.sigma_chi2)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("TurbulenceProfile({:?}, {} layers)", self.0.label(), self.0.layers().len())
    }
}

#[pyclass(name = "TransmittanceDistribution", from_py_object)]
#[derive(Clone)]
pub struct Distribution(pdte::TransmittanceDistribution);

#[pymethods]
impl Distribution {
    #[new]
    fn new(grid: Vec<f64>, probabilities: Vec<f64>) -> PyResult<Self> {
        pdte::TransmittanceDistribution::new(grid, probabilities).map(Distribution).map_err(to_py)
    }

    #[staticmethod]
    fn read_csv(path: PathBuf) -> PyResult<Self> {
        pdte::TransmittanceDistribution::read_csv(path).map(Distribution).map_err(to_py)
    }

    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        self.0.write_csv(path).map_err(to_py)
    }

    #[getter]
    fn grid(&self) -> Vec<f64> {
        self.0.grid().to_vec()
    }

    #[getter]
    fn probabilities(&self) -> Vec<f64> {
        self.0.probabilities().to_vec()
    }

    fn mean(&self) -> f64 {
        self.0.mean()
    }

    fn mean_attenuation_db(&self) -> f64 {
        self.0.mean_attenuation_db()
    }

    fn cdf(&self, x: f64) -> f64 {
        self.0.cdf(x)
    }

    fn product(&self, other: &Distribution) -> Self {
        Distribution(self.0.product(&other.0))
    }

    #[pyo3(signature = (n, seed = 1))]
    fn sample(&self, n: usize, seed: u64) -> PyResult<Vec<f64>> {
        let sampler = self.0.sampler().map_err(to_py)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..n).map(|_| sampler.sample(&mut rng)).collect())
    }

    fn __len__(&self) -> usize {
        self.0.grid().len()
    }
}

#[pyclass(name = "PassChannel")]
pub struct PassChannel(link::PassChannel);

#[pymethods]
impl PassChannel {
    #[getter]
    fn pdte(&self) -> Distribution {
        Distribution(self.0.pdte.clone())
    }

    #[getter]
    fn duration_s(&self) -> f64 {
        self.0.duration_s
    }

    fn mean_coupling(&self) -> f64 {
        self.0.mean_coupling()
    }

    fn mean_geometric(&self) -> f64 {
        self.0.mean_geometric()
    }

    /// One dict per pass segment.
    fn segments<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.0
            .segments
            .iter()
            .map(|s| {
                let d = PyDict::new(py);
                d.set_item("elevation_deg", s.segment.elevation_deg)?;
                d.set_item("slant_range_m", s.segment.slant_range_m)?;
                d.set_item("slew_rate_rad_s", s.segment.slew_rate_rad_s)?;
                d.set_item("duration_s", s.segment.duration_s)?;
                d.set_item("r0_m", s.turbulence.r0_m)?;
                d.set_item("tau0_s", s.turbulence.tau0_s)?;
                d.set_item("theta0_rad", s.turbulence.theta0_rad)?;
                d.set_item("sigma_chi2", s.turbulence.sigma_chi2)?;
                d.set_item("residual_phase", s.budget.total_residual)?;
                d.set_item("coupling_mean", s.coupling.mean)?;
                d.set_item("coupling_std", s.coupling.std_dev)?;
                d.set_item("tau_atm", s.tau_atm)?;
                d.set_item("geometric_mean", s.geometric_mean)?;
                d.set_item("mean_transmittance", s.mean_transmittance)?;
                Ok(d)
            })
            .collect()
    }
}

/// Pass transmittance distribution for a circular orbit through zenith.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (profile, altitude_km, common = None, ao = None, segments = 64, grid_points = 2048, grid_min_db = -80.0))]
fn pass_channel(
    py: Python<'_>,
    profile: &Profile,
    altitude_km: f64,
    common: Option<CommonParams>,
    ao: Option<AoConfig>,
    segments: usize,
    grid_points: usize,
    grid_min_db: f64,
) -> PyResult<PassChannel> {
    let orbit = orbit::OrbitConfig::new(altitude_km).with_segments(segments);
    let common: link::CommonParams = common.as_ref().map(Into::into).unwrap_or_default();
    let ao: adaptive_optics::AoConfig = ao.as_ref().map(Into::into).unwrap_or_default();
    let grid = pdte::LogGrid::new(grid_points, grid_min_db).map_err(to_py)?;
    let model =
        link::LinkModel { orbit: &orbit, profile: &profile.0, ao: &ao, common: &common, coupling_override: None, grid };
    py.detach(|| model.pass_channel()).map(PassChannel).map_err(to_py)
}

/// Optimized decoy-state BB84 rates over a transmittance distribution.
#[pyfunction]
#[pyo3(signature = (params, distribution, max_groups = 10))]
fn optimize_dv<'py>(
    py: Python<'py>,
    params: &DvParams,
    distribution: &Distribution,
    max_groups: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let template: dv::DvParams = params.into();
    let r = py.detach(|| dv::optimize_dv(&template, &distribution.0, max_groups)).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("rate_asymptotic", r.rate_asymptotic)?;
    d.set_item("rate_finite", r.rate_finite)?;
    d.set_item("groups", r.groups)?;
    d.set_item("q", r.protocol.q)?;
    d.set_item("mu", r.protocol.mu)?;
    d.set_item("nu", r.protocol.nu)?;
    d.set_item("p_mu", r.protocol.p_mu)?;
    d.set_item("p_nu", r.protocol.p_nu)?;
    d.set_item("asymptotic_mu", r.asymptotic_mu)?;
    d.set_item("asymptotic_groups", r.asymptotic_groups)?;
    Ok(d)
}

/// Optimized Gaussian-modulated CV rates over a transmittance distribution.
#[pyfunction]
#[pyo3(signature = (params, distribution, max_groups = 12))]
fn optimize_cv<'py>(
    py: Python<'py>,
    params: &CvParams,
    distribution: &Distribution,
    max_groups: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let template: cv::CvParams = params.into();
    let r = py.detach(|| cv::optimize_cv(&template, &distribution.0, max_groups)).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("rate_asymptotic", r.rate_asymptotic)?;
    d.set_item("rate_finite", r.rate_finite)?;
    d.set_item("v_a", r.v_a)?;
    d.set_item("groups", r.groups)?;
    d.set_item("asymptotic_v_a", r.asymptotic_v_a)?;
    d.set_item("asymptotic_groups", r.asymptotic_groups)?;
    Ok(d)
}

#[pyfunction]
fn holevo_bound(v_a: f64, tau: f64, xi: f64, eta: f64, v_el: f64) -> PyResult<f64> {
    cv::holevo_bound(v_a, tau, xi, eta, v_el).map_err(to_py)
}

#[pyfunction]
fn cv_key_rate(params: &CvParams, tau: f64, xi: f64) -> PyResult<f64> {
    cv::key_rate_at(&params.into(), tau, xi).map_err(to_py)
}

#[pyfunction]
fn slant_range_km(altitude_km: f64, elevation_deg: f64) -> PyResult<f64> {
    orbit::slant_range(altitude_km, elevation_deg).map_err(to_py)
}

/// Background click probability per detection window for `sky_day`,
/// `sky_night` or `glare`.
#[pyfunction]
#[pyo3(signature = (mode, aperture_diameter_m = 1.5, wavelength_m = 1550e-9, eta_opt = 0.5248, eta_d = 0.85, dt_window_s = 1e-9))]
fn background_yield(
    mode: &str,
    aperture_diameter_m: f64,
    wavelength_m: f64,
    eta_opt: f64,
    eta_d: f64,
    dt_window_s: f64,
) -> PyResult<f64> {
    let mode = match mode {
        "sky_day" => dv::BackgroundMode::SkyDay,
        "sky_night" => dv::BackgroundMode::SkyNight,
        "glare" => dv::BackgroundMode::Glare,
        other => return Err(PyValueError::new_err(format!("unknown background mode {other:?}"))),
    };
    let rx = dv::Receiver { aperture_diameter_m, wavelength_m, eta_opt, eta_d };
    Ok(dv::BackgroundModel::default().yield_y0(mode, &rx, dt_window_s))
}

#[pyclass(name = "Scenario")]
pub struct Scenario(scenario::Scenario);

#[pymethods]
impl Scenario {
    /// Loads and validates a scenario file; every problem is listed in the
    /// raised `ValueError`.
    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        scenario::Scenario::from_file(path).map(Scenario).map_err(to_py)
    }

    #[getter]
    fn name(&self) -> String {
        self.0.settings.name.clone()
    }

    #[getter]
    fn profiles(&self) -> Vec<String> {
        self.0.profiles.iter().map(|p| p.label().to_string()).collect()
    }

    fn point_count(&self) -> usize {
        self.0.points().len()
    }

    /// Runs every sweep point and writes the result tables into `out_dir`.
    /// Returns the paths written.
    fn run(&self, py: Python<'_>, out_dir: PathBuf) -> PyResult<Vec<PathBuf>> {
        let results = py.detach(|| self.0.run());
        results.write(out_dir).map_err(to_py)
    }
}

#[pymodule]
#[pyo3(name = "satqkd")]
fn satqkd_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<CommonParams>()?;
    m.add_class::<AoConfig>()?;
    m.add_class::<DvParams>()?;
    m.add_class::<CvParams>()?;
    m.add_class::<Profile>()?;
    m.add_class::<Distribution>()?;
    m.add_class::<PassChannel>()?;
    m.add_class::<Scenario>()?;
    m.add_function(wrap_pyfunction!(pass_channel, m)?)?;
    m.add_function(wrap_pyfunction!(optimize_dv, m)?)?;
    m.add_function(wrap_pyfunction!(optimize_cv, m)?)?;
    m.add_function(wrap_pyfunction!(holevo_bound, m)?)?;
    m.add_function(wrap_pyfunction!(cv_key_rate, m)?)?;
    m.add_function(wrap_pyfunction!(slant_range_km, m)?)?;
    m.add_function(wrap_pyfunction!(background_yield, m)?)?;
    Ok(())
}
