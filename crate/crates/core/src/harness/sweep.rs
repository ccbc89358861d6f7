use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::Path;

use super::config::ExperimentConfig;
use super::metrics::{MetricRecord, CSV_COLUMNS};
use super::sim::{run_point_in, thread_pool, OperatingPoint};
use crate::dncnn::DenoiserModel;
use crate::error::{Error, Result};

/// Operating points in sweep order: antennas outermost, then estimator,
/// then SNR.
pub fn sweep_points(cfg: &ExperimentConfig) -> Vec<OperatingPoint> {
    let mut points = Vec::new();
    for &n_antennas in &cfg.antennas {
        for &estimator in &cfg.estimators {
            for &snr_db in &cfg.snr_db {
                points.push(OperatingPoint {
                    estimator,
                    snr_db,
                    n_antennas,
                });
            }
        }
    }
    points
}

fn same_point(r: &MetricRecord, p: &OperatingPoint) -> bool {
    r.estimator == p.estimator
        && r.n_antennas == p.n_antennas
        && r.snr_db.to_bits() == p.snr_db.to_bits()
}

/// Reads a results CSV, checking the header against [`CSV_COLUMNS`].
pub fn read_records(path: &Path) -> Result<Vec<MetricRecord>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut rdr = csv::Reader::from_path(path)?;
    let header = rdr.headers()?.clone();
    if header.is_empty() {
        return Err(Error::Schema(format!("{}: empty file", path.display())));
    }
    for (i, want) in CSV_COLUMNS.iter().enumerate() {
        match header.get(i) {
            Some(got) if got == *want => {}
            Some(got) => {
                return Err(Error::Schema(format!(
                    "{}: column {} is '{got}', expected '{want}'",
                    path.display(),
                    i + 1
                )))
            }
            None => {
                return Err(Error::Schema(format!(
                    "{}: missing column '{want}'",
                    path.display()
                )))
            }
        }
    }
    if header.len() > CSV_COLUMNS.len() {
        return Err(Error::Schema(format!(
            "{}: unexpected extra column '{}'",
            path.display(),
            &header[CSV_COLUMNS.len()]
        )));
    }
    rdr.deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| Error::Schema(format!("{}: row {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// Checks that a row left by an earlier run was produced by the same
/// settings, so resumed rows are comparable.
fn check_resumable(cfg: &ExperimentConfig, r: &MetricRecord) -> Result<()> {
    let fields: [(&str, String, String); 8] = [
        (
            "n_subcarriers",
            cfg.n_subcarriers.to_string(),
            r.n_subcarriers.to_string(),
        ),
        ("n_users", cfg.n_users.to_string(), r.n_users.to_string()),
        (
            "constellation_order",
            cfg.constellation_order.to_string(),
            r.constellation_order.to_string(),
        ),
        ("cp_len", cfg.cp_len().to_string(), r.cp_len.to_string()),
        (
            "detection_symbols",
            cfg.detection_symbols().to_string(),
            r.detection_symbols.to_string(),
        ),
        ("seed", cfg.seed.to_string(), r.seed.to_string()),
        (
            "frames",
            cfg.frames_per_point.to_string(),
            r.frames.to_string(),
        ),
        ("combiner", cfg.combiner.to_string(), r.combiner.clone()),
    ];
    for (name, want, got) in fields {
        if want != got {
            return Err(Error::Config(format!(
                "cannot resume: existing row has {name} = {got}, configuration has {want}"
            )));
        }
    }
    Ok(())
}

/// Drops a trailing partial line left by an interrupted write.
fn trim_partial_row(path: &Path) -> Result<()> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.is_empty() || bytes.ends_with(b"\n") {
        return Ok(());
    }
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    log::warn!("{}: dropping incomplete last row", path.display());
    OpenOptions::new()
        .write(true)
        .open(path)?
        .set_len(keep as u64)?;
    Ok(())
}

/// Runs every operating point of `cfg` and writes one CSV row per point,
/// flushed as soon as it is computed. With `resume`, rows already in `out`
/// are kept and their points skipped. Returns all rows in sweep order.
pub fn run_sweep(
    cfg: &ExperimentConfig,
    out: &Path,
    resume: bool,
    denoiser: Option<&DenoiserModel>,
) -> Result<Vec<MetricRecord>> {
    cfg.validate()?;
    let existing = if resume && out.exists() {
        trim_partial_row(out)?;
        if std::fs::metadata(out)?.len() == 0 {
            Vec::new()
        } else {
            let rows = read_records(out)?;
            for r in &rows {
                check_resumable(cfg, r)?;
            }
            rows
        }
    } else {
        Vec::new()
    };
    let mut file = if resume {
        OpenOptions::new().create(true).append(true).open(out)?
    } else {
        File::create(out)?
    };
    if file.metadata()?.len() == 0 {
        writeln!(file, "{}", CSV_COLUMNS.join(","))?;
        file.flush()?;
    }
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(file);

    let pool = thread_pool(cfg.workers)?;
    let points = sweep_points(cfg);
    let mut records = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        if let Some(r) = existing.iter().find(|r| same_point(r, p)) {
            log::info!(
                "[{}/{}] {} M={} SNR={} dB: kept",
                i + 1,
                points.len(),
                p.estimator,
                p.n_antennas,
                p.snr_db
            );
            records.push(r.clone());
            continue;
        }
        let r = run_point_in(&pool, cfg, *p, denoiser)?;
        log::info!(
            "[{}/{}] {} M={} SNR={} dB: mse {:.3e}, ber {:.3e}",
            i + 1,
            points.len(),
            p.estimator,
            p.n_antennas,
            p.snr_db,
            r.channel_mse,
            r.ber
        );
        writer.serialize(&r)?;
        writer.flush()?;
        records.push(r);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{EstimatorKind, Profile};

    fn small() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::profile(Profile::Desk);
        cfg.antennas = vec![16];
        cfg.snr_db = vec![0.0, 10.0];
        cfg.frames_per_point = 4;
        cfg
    }

    #[test]
    fn order_is_antennas_estimator_snr() {
        let mut cfg = small();
        cfg.antennas = vec![8, 16];
        let pts = sweep_points(&cfg);
        assert_eq!(pts.len(), 8);
        assert_eq!(
            (pts[0].n_antennas, pts[0].estimator, pts[0].snr_db),
            (8, EstimatorKind::Blind, 0.0)
        );
        assert_eq!((pts[1].n_antennas, pts[1].snr_db), (8, 10.0));
        assert_eq!(pts[2].estimator, EstimatorKind::DataAided);
        assert_eq!(pts[4].n_antennas, 16);
    }

    #[test]
    fn csv_roundtrip_keeps_nan() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("r.csv");
        let rows = run_sweep(&small(), &out, false, None).unwrap();
        let back = read_records(&out).unwrap();
        assert_eq!(back.len(), 4);
        for (a, b) in rows.iter().zip(&back) {
            assert_eq!(format!("{a:?}"), format!("{b:?}"));
        }
        assert!(back[2].pilot_mse.is_nan());
    }

    #[test]
    fn resume_skips_done_points_and_trims_partial_rows() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("r.csv");
        let full = run_sweep(&small(), &out, false, None).unwrap();
        let text = std::fs::read_to_string(&out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        let cut = format!("{}\n{}\n{}", lines[0], lines[1], &lines[2][..10]);
        std::fs::write(&out, cut).unwrap();
        let resumed = run_sweep(&small(), &out, true, None).unwrap();
        assert_eq!(format!("{full:?}"), format!("{resumed:?}"));
        assert_eq!(read_records(&out).unwrap().len(), 4);

        let mut other = small();
        other.seed = 99;
        let err = run_sweep(&other, &out, true, None).unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
    }

    #[test]
    fn schema_errors_name_the_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "estimator,combiner,n_subcarriers,users\n").unwrap();
        let err = read_records(&p).unwrap_err();
        assert!(err.to_string().contains("'n_users'"), "{err}");
        std::fs::write(&p, "").unwrap();
        assert!(matches!(read_records(&p), Err(Error::Schema(_))));
    }
}
