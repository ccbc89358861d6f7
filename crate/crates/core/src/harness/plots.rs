use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::metrics::MetricRecord;
use super::sweep::read_records;
use crate::error::{Error, Result};

/// One figure: which metric against which abscissa.
struct Figure {
    name: &'static str,
    title: &'static str,
    xlabel: &'static str,
    ylabel: &'static str,
    log_y: bool,
    x: fn(&MetricRecord) -> f64,
    y: fn(&MetricRecord) -> f64,
    blind_only: bool,
    series: Series,
}

/// What distinguishes the curves of a figure besides the estimator.
#[derive(Clone, Copy)]
enum Series {
    Antennas,
    Snr,
}

const FIGURES: [Figure; 5] = [
    Figure {
        name: "channel_mse",
        title: "Normalized channel MSE",
        xlabel: "SNR (dB)",
        ylabel: "NMSE",
        log_y: true,
        x: |r| r.snr_db,
        y: |r| r.channel_mse,
        blind_only: false,
        series: Series::Antennas,
    },
    Figure {
        name: "ber",
        title: "Bit error rate",
        xlabel: "Eb/N0 (dB)",
        ylabel: "BER",
        log_y: true,
        x: |r| r.ebn0_db,
        y: |r| r.ber,
        blind_only: false,
        series: Series::Antennas,
    },
    Figure {
        name: "throughput",
        title: "Sum throughput",
        xlabel: "SNR (dB)",
        ylabel: "bits/s/Hz",
        log_y: false,
        x: |r| r.snr_db,
        y: |r| r.throughput,
        blind_only: false,
        series: Series::Antennas,
    },
    Figure {
        name: "pilot_ser",
        title: "Virtual pilot symbol error rate",
        xlabel: "SNR (dB)",
        ylabel: "SER",
        log_y: true,
        x: |r| r.snr_db,
        y: |r| r.pilot_ser,
        blind_only: true,
        series: Series::Antennas,
    },
    Figure {
        name: "channel_mse_vs_antennas",
        title: "Normalized channel MSE",
        xlabel: "Receive antennas M",
        ylabel: "NMSE",
        log_y: true,
        x: |r| r.n_antennas as f64,
        y: |r| r.channel_mse,
        blind_only: false,
        series: Series::Snr,
    },
];

fn py_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:e}")
    } else {
        "float('nan')".into()
    }
}

fn py_str(s: &str) -> String {
    format!("'{}'", s.replace('\\', "\\\\").replace('\'', "\\'"))
}

fn script(fig: &Figure, records: &[MetricRecord]) -> String {
    let mut series: BTreeMap<(i64, String), (String, Vec<(f64, f64)>)> = BTreeMap::new();
    for r in records {
        if fig.blind_only && !r.estimator.is_blind() {
            continue;
        }
        let est = r.estimator.to_string();
        let (order, label) = match fig.series {
            Series::Antennas => (r.n_antennas as i64, format!("{est}, M={}", r.n_antennas)),
            Series::Snr => (
                (r.snr_db * 1000.0).round() as i64,
                format!("{est}, SNR={} dB", r.snr_db),
            ),
        };
        series
            .entry((order, est))
            .or_insert_with(|| (label, Vec::new()))
            .1
            .push(((fig.x)(r), (fig.y)(r)));
    }
    let mut s = String::new();
    s.push_str("import sys\nimport matplotlib\nmatplotlib.use('Agg')\nimport matplotlib.pyplot as plt\n\nSERIES = [\n");
    for (label, mut pts) in series.into_values() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let xs: Vec<String> = pts.iter().map(|p| py_float(p.0)).collect();
        let ys: Vec<String> = pts.iter().map(|p| py_float(p.1)).collect();
        let _ = writeln!(
            s,
            "    ({}, [{}], [{}]),",
            py_str(&label),
            xs.join(", "),
            ys.join(", ")
        );
    }
    let _ =
        write!(
        s,
        "]\n\nout = sys.argv[1] if len(sys.argv) > 1 else __file__.rsplit('.', 1)[0] + '.png'\n\
         fig, ax = plt.subplots(figsize=(6, 4.5))\n\
         for label, x, y in SERIES:\n    ax.plot(x, y, marker='o', label=label)\n\
         {}ax.set_xlabel({})\nax.set_ylabel({})\nax.set_title({})\n\
         ax.grid(True, which='both', alpha=0.3)\nax.legend(fontsize='small')\n\
         fig.tight_layout()\nfig.savefig(out, dpi=150)\n",
        if fig.log_y { "ax.set_yscale('log')\n" } else { "" },
        py_str(fig.xlabel),
        py_str(fig.ylabel),
        py_str(fig.title),
    );
    s
}

/// Writes one self-contained matplotlib script per figure into `out_dir`.
/// Running a script saves a PNG next to it.
pub fn emit_plots(records: &[MetricRecord], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(Error::Schema("no result rows to plot".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    FIGURES
        .iter()
        .map(|fig| {
            let path = out_dir.join(format!("{}.py", fig.name));
            std::fs::write(&path, script(fig, records))?;
            Ok(path)
        })
        .collect()
}

/// Reads and concatenates result files, then emits the plot scripts.
pub fn emit_plots_from_csv(csv_paths: &[PathBuf], out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut records = Vec::new();
    for p in csv_paths {
        records.extend(read_records(p)?);
    }
    emit_plots(&records, out_dir)
}
