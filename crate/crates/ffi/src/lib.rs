//! C interface to the blindmimo simulator.
//!
//! Every fallible call returns a [`BmStatus`]. On failure the message is kept
//! per thread and can be read with [`bm_last_error`] until the next call on
//! that thread. Objects are opaque handles released with their `_free`
//! function. Complex arrays are interleaved `re, im` doubles.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use blindmimo::dncnn::{denoise_y, DenoiserModel};
use blindmimo::estimator::{
    accumulate_covariance, average_virtual_pilots, build_y_matrix, chh_tilde_from_rho,
    detect_virtual_pilots, extract_gq, subtract_noise_floor, YDenoiser,
};
use blindmimo::harness::{
    run_point, EstimatorKind, ExperimentConfig, MetricRecord, OperatingPoint, Profile,
};
use blindmimo::numerics::ComplexMatrix;
use blindmimo::ofdm::QamConstellation;
use blindmimo::Error;
use num_complex::Complex64;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Estimation = 5,
    Panic = 6,
}

pub const BM_ESTIMATOR_BLIND: u32 = 0;
pub const BM_ESTIMATOR_BLIND_DNCNN: u32 = 1;
pub const BM_ESTIMATOR_DATA_AIDED: u32 = 2;

/// Trained denoiser loaded from a weight file.
pub struct BmDenoiser {
    model: DenoiserModel,
}

/// Experiment configuration that operating points are run against.
pub struct BmSimulation {
    cfg: ExperimentConfig,
}

/// Metrics of one operating point.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct BmMetricRecord {
    /// One of the `BM_ESTIMATOR_*` codes.
    pub estimator: u32,
    pub n_subcarriers: usize,
    pub n_users: usize,
    pub n_antennas: usize,
    pub constellation_order: usize,
    pub cp_len: usize,
    pub detection_symbols: usize,
    pub snr_db: f64,
    pub ebn0_db: f64,
    pub seed: u64,
    pub frames: usize,
    pub erasures: usize,
    pub channel_mse: f64,
    pub channel_mse_ci: f64,
    /// NaN for the data-aided estimator.
    pub pilot_mse: f64,
    /// NaN for the data-aided estimator.
    pub pilot_ser: f64,
    pub ber_detection: f64,
    /// NaN for the data-aided estimator.
    pub ber_sounding: f64,
    pub ber: f64,
    pub throughput: f64,
    pub zf_fallbacks: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

enum Failure {
    Null(&'static str),
    Invalid(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn status_of(e: &Error) -> BmStatus {
    match e {
        Error::Io(_) | Error::MissingFile(_) => BmStatus::Io,
        Error::CorruptWeights(_)
        | Error::WeightMismatch { .. }
        | Error::Schema(_)
        | Error::Csv(_) => BmStatus::Format,
        Error::EstimationFailure(_)
        | Error::IllConditioned { .. }
        | Error::NonFiniteLoss { .. } => BmStatus::Estimation,
        _ => BmStatus::InvalidArgument,
    }
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> BmStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    let (status, msg) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => return BmStatus::Ok,
        Ok(Err(Failure::Null(arg))) => (
            BmStatus::NullPointer,
            format!("null pointer passed as {arg}"),
        ),
        Ok(Err(Failure::Invalid(msg))) => (BmStatus::InvalidArgument, msg),
        Ok(Err(Failure::Core(e))) => (status_of(&e), e.to_string()),
        Err(p) => {
            let what = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            (BmStatus::Panic, format!("internal panic: {what}"))
        }
    };
    set_error(msg);
    status
}

unsafe fn str_arg<'a>(p: *const c_char, name: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Invalid(format!("{name} is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(
    p: *const T,
    len: usize,
    name: &'static str,
) -> Result<&'a [T], Failure> {
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut_arg<'a, T>(
    p: *mut T,
    len: usize,
    name: &'static str,
) -> Result<&'a mut [T], Failure> {
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn complex_from_interleaved(v: &[f64]) -> Vec<Complex64> {
    v.chunks_exact(2)
        .map(|c| Complex64::new(c[0], c[1]))
        .collect()
}

fn write_interleaved(src: &[Complex64], dst: &mut [f64]) {
    for (z, d) in src.iter().zip(dst.chunks_exact_mut(2)) {
        d[0] = z.re;
        d[1] = z.im;
    }
}

fn estimator_of(code: u32) -> Result<EstimatorKind, Failure> {
    match code {
        BM_ESTIMATOR_BLIND => Ok(EstimatorKind::Blind),
        BM_ESTIMATOR_BLIND_DNCNN => Ok(EstimatorKind::BlindDncnn),
        BM_ESTIMATOR_DATA_AIDED => Ok(EstimatorKind::DataAided),
        other => Err(Failure::Invalid(format!("unknown estimator code {other}"))),
    }
}

fn estimator_code(e: EstimatorKind) -> u32 {
    match e {
        EstimatorKind::Blind => BM_ESTIMATOR_BLIND,
        EstimatorKind::BlindDncnn => BM_ESTIMATOR_BLIND_DNCNN,
        EstimatorKind::DataAided => BM_ESTIMATOR_DATA_AIDED,
    }
}

impl From<&MetricRecord> for BmMetricRecord {
    fn from(r: &MetricRecord) -> Self {
        Self {
            estimator: estimator_code(r.estimator),
            n_subcarriers: r.n_subcarriers,
            n_users: r.n_users,
            n_antennas: r.n_antennas,
            constellation_order: r.constellation_order,
            cp_len: r.cp_len,
            detection_symbols: r.detection_symbols,
            snr_db: r.snr_db,
            ebn0_db: r.ebn0_db,
            seed: r.seed,
            frames: r.frames,
            erasures: r.erasures,
            channel_mse: r.channel_mse,
            channel_mse_ci: r.channel_mse_ci,
            pilot_mse: r.pilot_mse,
            pilot_ser: r.pilot_ser,
            ber_detection: r.ber_detection,
            ber_sounding: r.ber_sounding,
            ber: r.ber,
            throughput: r.throughput,
            zf_fallbacks: r.zf_fallbacks,
        }
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call on the same thread.
#[no_mangle]
pub extern "C" fn bm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads denoiser weights from `path` into `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn bm_denoiser_load(
    path: *const c_char,
    out: *mut *mut BmDenoiser,
) -> BmStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let model = blindmimo::dncnn::load_weights(Path::new(path))?;
        *out = Box::into_raw(Box::new(BmDenoiser { model }));
        Ok(())
    })
}

/// Side length N of the matrices the denoiser accepts, or 0 for NULL.
///
/// # Safety
/// `d` must be NULL or a handle from [`bm_denoiser_load`].
#[no_mangle]
pub unsafe extern "C" fn bm_denoiser_input_size(d: *const BmDenoiser) -> usize {
    d.as_ref().map_or(0, |d| d.model.input_size())
}

/// Denoises one row-major `n x n` complex matrix. `y` and `out` hold
/// `2 n n` doubles and may alias.
///
/// # Safety
/// `d` must be a live handle; `y` and `out` must point to `2 n n` doubles.
#[no_mangle]
pub unsafe extern "C" fn bm_denoiser_denoise(
    d: *const BmDenoiser,
    y: *const f64,
    n: usize,
    out: *mut f64,
) -> BmStatus {
    guard(|| {
        let d = d.as_ref().ok_or(Failure::Null("denoiser"))?;
        let len = 2 * n * n;
        let input = complex_from_interleaved(slice_arg(y, len, "y")?);
        let ym = ComplexMatrix::from_vec(n, n, input)?;
        let clean = denoise_y(&d.model, &ym)?;
        write_interleaved(clean.as_slice(), slice_mut_arg(out, len, "out")?);
        Ok(())
    })
}

/// # Safety
/// `d` must be NULL or a handle from [`bm_denoiser_load`], freed at most once.
#[no_mangle]
pub unsafe extern "C" fn bm_denoiser_free(d: *mut BmDenoiser) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Creates a simulation from a shipped profile ("desk" or "full").
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn bm_simulation_from_profile(
    name: *const c_char,
    out: *mut *mut BmSimulation,
) -> BmStatus {
    guard(|| {
        let profile: Profile = str_arg(name, "name")?.parse()?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        *out = Box::into_raw(Box::new(BmSimulation {
            cfg: ExperimentConfig::profile(profile),
        }));
        Ok(())
    })
}

/// Creates a simulation from TOML configuration text.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn bm_simulation_from_toml(
    toml: *const c_char,
    out: *mut *mut BmSimulation,
) -> BmStatus {
    guard(|| {
        let cfg = ExperimentConfig::from_toml(str_arg(toml, "toml")?)?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        *out = Box::into_raw(Box::new(BmSimulation { cfg }));
        Ok(())
    })
}

/// Sets frames per point, master seed and worker threads (0 = all cores).
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn bm_simulation_configure(
    sim: *mut BmSimulation,
    frames_per_point: usize,
    seed: u64,
    workers: usize,
) -> BmStatus {
    guard(|| {
        let sim = sim.as_mut().ok_or(Failure::Null("sim"))?;
        if frames_per_point == 0 {
            return Err(Failure::Invalid("frames_per_point must be positive".into()));
        }
        sim.cfg.frames_per_point = frames_per_point;
        sim.cfg.seed = seed;
        sim.cfg.workers = workers;
        Ok(())
    })
}

/// Simulates one operating point. `denoiser` may be NULL unless
/// `estimator` is `BM_ESTIMATOR_BLIND_DNCNN`.
///
/// # Safety
/// `sim` must be a live handle, `denoiser` NULL or live, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bm_simulation_run_point(
    sim: *const BmSimulation,
    estimator: u32,
    snr_db: f64,
    n_antennas: usize,
    denoiser: *const BmDenoiser,
    out: *mut BmMetricRecord,
) -> BmStatus {
    guard(|| {
        let sim = sim.as_ref().ok_or(Failure::Null("sim"))?;
        let out = out.as_mut().ok_or(Failure::Null("out"))?;
        let point = OperatingPoint {
            estimator: estimator_of(estimator)?,
            snr_db,
            n_antennas,
        };
        let model = denoiser.as_ref().map(|d| &d.model);
        let mut cfg = sim.cfg.clone();
        if !cfg.antennas.contains(&n_antennas) {
            cfg.antennas = vec![n_antennas];
        }
        let r = run_point(&cfg, point, model)?;
        *out = BmMetricRecord::from(&r);
        Ok(())
    })
}

/// # Safety
/// `sim` must be NULL or a live handle, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn bm_simulation_free(sim: *mut BmSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Blind virtual pilots of one user from its sounding slot.
///
/// `observations` holds the `n_antennas x n` frequency-domain samples
/// (antenna-major, interleaved), `rho` the `n_taps` tap powers of the
/// channel. `raw_out` receives the row averages and `detected_out` the
/// hard decisions with the reference at subcarrier 0, `2 n` doubles each.
///
/// # Safety
/// Pointers must be valid for the stated lengths; `denoiser` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn bm_estimate_virtual_pilots(
    observations: *const f64,
    n_antennas: usize,
    n: usize,
    rho: *const f64,
    n_taps: usize,
    noise_variance: f64,
    constellation_order: usize,
    reference_re: f64,
    reference_im: f64,
    denoiser: *const BmDenoiser,
    raw_out: *mut f64,
    detected_out: *mut f64,
) -> BmStatus {
    guard(|| {
        if n_antennas == 0 {
            return Err(Failure::Invalid("n_antennas must be positive".into()));
        }
        let obs =
            complex_from_interleaved(slice_arg(observations, 2 * n_antennas * n, "observations")?);
        let rho = slice_arg(rho, n_taps, "rho")?;
        let raw_out = slice_mut_arg(raw_out, 2 * n, "raw_out")?;
        let detected_out = slice_mut_arg(detected_out, 2 * n, "detected_out")?;
        let c = QamConstellation::new(constellation_order)?;
        let reference = Complex64::new(reference_re, reference_im);
        let chh = chh_tilde_from_rho(rho, n)?;
        let r = accumulate_covariance(obs.chunks_exact(n))?;
        let r = subtract_noise_floor(&r, noise_variance)?;
        let mut y = build_y_matrix(&extract_gq(&r, &chh)?, reference)?;
        if let Some(d) = denoiser.as_ref() {
            y.y = d.model.denoise(&y.y)?;
        }
        let raw = average_virtual_pilots(&y.y, &y.valid)?;
        let mut detected = detect_virtual_pilots(&raw, &c);
        detected[0] = reference;
        write_interleaved(&raw, raw_out);
        write_interleaved(&detected, detected_out);
        Ok(())
    })
}
