use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use blindmimo::dncnn::{save_weights, DenoiserModel, InputScaling};
use blindmimo::numerics::{frequency_response, SimRng};
use blindmimo::ofdm::QamConstellation;
use blindmimo_ffi::*;
use num_complex::Complex64;

fn last_error() -> String {
    let p = bm_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn version_matches_package() {
    let v = unsafe { CStr::from_ptr(bm_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn null_arguments_are_reported() {
    let mut sim = ptr::null_mut();
    assert_eq!(
        unsafe { bm_simulation_from_profile(ptr::null(), &mut sim) },
        BmStatus::NullPointer
    );
    assert!(last_error().contains("name"));
    let mut rec = BmMetricRecord::default();
    let s = unsafe { bm_simulation_run_point(ptr::null(), 0, 0.0, 16, ptr::null(), &mut rec) };
    assert_eq!(s, BmStatus::NullPointer);
    assert_eq!(unsafe { bm_denoiser_input_size(ptr::null()) }, 0);
    unsafe {
        bm_denoiser_free(ptr::null_mut());
        bm_simulation_free(ptr::null_mut());
    }
}

#[test]
fn missing_weights_is_an_io_error_naming_the_path() {
    let path = CString::new("/nonexistent/weights.bin").unwrap();
    let mut d = ptr::null_mut();
    assert_eq!(
        unsafe { bm_denoiser_load(path.as_ptr(), &mut d) },
        BmStatus::Io
    );
    assert!(last_error().contains("/nonexistent/weights.bin"));
    assert!(d.is_null());
}

#[test]
fn run_point_through_handles() {
    let name = CString::new("desk").unwrap();
    let mut sim = ptr::null_mut();
    unsafe {
        assert_eq!(
            bm_simulation_from_profile(name.as_ptr(), &mut sim),
            BmStatus::Ok
        );
        assert!(bm_last_error().is_null());
        assert_eq!(bm_simulation_configure(sim, 4, 3, 1), BmStatus::Ok);
        assert_eq!(
            bm_simulation_configure(sim, 0, 3, 1),
            BmStatus::InvalidArgument
        );

        let mut rec = BmMetricRecord::default();
        let s = bm_simulation_run_point(
            sim,
            BM_ESTIMATOR_DATA_AIDED,
            300.0,
            16,
            ptr::null(),
            &mut rec,
        );
        assert_eq!(s, BmStatus::Ok, "{}", last_error());
        assert_eq!((rec.frames, rec.n_antennas, rec.seed), (4, 16, 3));
        assert!(rec.channel_mse < 1e-18);
        assert!(rec.pilot_ser.is_nan());

        let s = bm_simulation_run_point(sim, 7, 0.0, 16, ptr::null(), &mut rec);
        assert_eq!(s, BmStatus::InvalidArgument);
        let s = bm_simulation_run_point(
            sim,
            BM_ESTIMATOR_BLIND_DNCNN,
            0.0,
            16,
            ptr::null(),
            &mut rec,
        );
        assert_eq!(s, BmStatus::InvalidArgument);
        assert!(last_error().contains("denoiser"));
        bm_simulation_free(sim);
    }
}

#[test]
fn bad_toml_is_rejected() {
    let text = CString::new("n_subcarriers = 30").unwrap();
    let mut sim = ptr::null_mut();
    assert_eq!(
        unsafe { bm_simulation_from_toml(text.as_ptr(), &mut sim) },
        BmStatus::InvalidArgument
    );
    assert!(sim.is_null());
}

fn load(path: &Path) -> *mut BmDenoiser {
    let c = CString::new(path.to_str().unwrap()).unwrap();
    let mut d = ptr::null_mut();
    assert_eq!(
        unsafe { bm_denoiser_load(c.as_ptr(), &mut d) },
        BmStatus::Ok
    );
    d
}

#[test]
fn untrained_denoiser_passes_in_range_input_through() {
    let c = QamConstellation::new(16).unwrap();
    let scaling = InputScaling::for_constellation(&c);
    let model = DenoiserModel::new(3, 4, 8, scaling, &mut SimRng::new(1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.bin");
    save_weights(&model, &path).unwrap();
    let d = load(&path);
    unsafe {
        assert_eq!(bm_denoiser_input_size(d), 8);
        let mut rng = SimRng::new(2);
        let y: Vec<f64> = (0..128).map(|_| rng.uniform() * 2.0 - 1.0).collect();
        let mut out = vec![0.0; 128];
        assert_eq!(
            bm_denoiser_denoise(d, y.as_ptr(), 8, out.as_mut_ptr()),
            BmStatus::Ok
        );
        assert_eq!(y, out);
        assert_eq!(
            bm_denoiser_denoise(d, y.as_ptr(), 4, out.as_mut_ptr()),
            BmStatus::InvalidArgument
        );
        bm_denoiser_free(d);
    }
}

#[test]
fn noiseless_virtual_pilots_from_many_antennas() {
    let (n, m) = (16, 20000);
    let rho = [0.6, 0.3, 0.1];
    let c = QamConstellation::new(16).unwrap();
    let mut rng = SimRng::new(5);
    let mut d: Vec<Complex64> = (0..n).map(|_| c.points()[rng.below(16)]).collect();
    d[0] = c.corner(0);
    let mut obs = Vec::with_capacity(2 * m * n);
    for _ in 0..m {
        let taps: Vec<Complex64> = rho
            .iter()
            .map(|&r| {
                Complex64::new(rng.standard_normal(), rng.standard_normal()) * (r / 2.0f64).sqrt()
            })
            .collect();
        for (h, s) in frequency_response(&taps, n).iter().zip(&d) {
            let z = h * s;
            obs.extend([z.re, z.im]);
        }
    }
    let mut raw = vec![0.0; 2 * n];
    let mut det = vec![0.0; 2 * n];
    let s = unsafe {
        bm_estimate_virtual_pilots(
            obs.as_ptr(),
            m,
            n,
            rho.as_ptr(),
            rho.len(),
            0.0,
            16,
            d[0].re,
            d[0].im,
            ptr::null(),
            raw.as_mut_ptr(),
            det.as_mut_ptr(),
        )
    };
    assert_eq!(s, BmStatus::Ok, "{}", last_error());
    for (k, z) in d.iter().enumerate() {
        assert_eq!((det[2 * k], det[2 * k + 1]), (z.re, z.im), "subcarrier {k}");
    }
}

#[test]
fn header_is_valid_c() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = dir.join("include/blindmimo.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in [
        "bm_denoiser_load",
        "bm_simulation_run_point",
        "bm_estimate_virtual_pilots",
        "BM_STATUS_PANIC",
    ] {
        assert!(text.contains(f), "{f} missing from header");
    }
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"blindmimo.h\"\nint main(void) { BmMetricRecord r; BmSimulation *s = 0; \
         return bm_simulation_run_point(s, BM_ESTIMATOR_BLIND, 0.0, 64, 0, &r) == BM_STATUS_OK; }\n",
    )
    .unwrap();
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    match Command::new(&cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-fsyntax-only")
        .arg("-I")
        .arg(dir.join("include"))
        .arg(&src)
        .output()
    {
        Ok(out) => assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        ),
        Err(e) => eprintln!("skipping C compile check: {cc} unavailable ({e})"),
    }
}
