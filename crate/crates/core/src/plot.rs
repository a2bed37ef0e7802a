//! Plot-ready data: one CSV per curve and a gnuplot script that draws them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Family {
    pub name: &'static str,
    x: &'static str,
    ys: &'static [&'static str],
    log_y: bool,
    xlabel: &'static str,
    ylabel: &'static str,
}

const RATES: &[&str] = &["k_asymptotic", "k_finite"];

pub const FAMILIES: &[Family] = &[
    Family {
        name: "rate_vs_altitude",
        x: "altitude_km",
        ys: RATES,
        log_y: true,
        xlabel: "Satellite altitude (km)",
        ylabel: "Secret key rate (bits/pulse)",
    },
    Family {
        name: "rate_vs_ao_orders",
        x: "ao_orders",
        ys: RATES,
        log_y: true,
        xlabel: "Corrected radial orders",
        ylabel: "Secret key rate (bits/pulse)",
    },
    Family {
        name: "attenuation_vs_altitude",
        x: "altitude_km",
        ys: &["mean_attenuation_db"],
        log_y: false,
        xlabel: "Satellite altitude (km)",
        ylabel: "Mean attenuation (dB)",
    },
    Family {
        name: "attenuation_vs_ao_orders",
        x: "ao_orders",
        ys: &["mean_attenuation_db"],
        log_y: false,
        xlabel: "Corrected radial orders",
        ylabel: "Mean attenuation (dB)",
    },
];

/// Columns that tell curves apart when present.
const LABEL_COLUMNS: &[&str] = &["profile", "background", "xi_fix", "diameter_m", "ao_orders", "altitude_km"];

pub fn family(name: &str) -> Result<&'static Family> {
    FAMILIES.iter().find(|f| f.name == name).ok_or_else(|| {
        let known: Vec<&str> = FAMILIES.iter().map(|f| f.name).collect();
        Error::Plot(format!("unknown plot family {name:?}; known families: {}", known.join(", ")))
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    pub label: String,
    pub points: Vec<(f64, Vec<f64>)>,
}

fn slug(label: &str) -> String {
    label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect()
}

/// Splits a result table into curves for `fam`, each sorted by x.
pub fn curves(table: &Path, fam: &Family) -> Result<Vec<Curve>> {
    let mut rdr = csv::Reader::from_path(table)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let x_col = col(fam.x).ok_or_else(|| Error::Plot(format!("{}: no column {}", table.display(), fam.x)))?;
    let y_cols = fam
        .ys
        .iter()
        .map(|y| col(y).ok_or_else(|| Error::Plot(format!("{}: no column {y}", table.display()))))
        .collect::<Result<Vec<_>>>()?;
    let status = col("status");
    let labels: Vec<(&str, usize)> =
        LABEL_COLUMNS.iter().filter(|&&c| c != fam.x).filter_map(|&c| col(c).map(|i| (c, i))).collect();

    let mut by_label: BTreeMap<String, Vec<(f64, Vec<f64>)>> = BTreeMap::new();
    let mut rows = 0usize;
    for rec in rdr.records() {
        let rec = rec?;
        rows += 1;
        if status.is_some_and(|s| &rec[s] != "ok") {
            continue;
        }
        let num = |i: usize| -> Result<f64> {
            rec[i].parse::<f64>().map_err(|_| Error::Plot(format!("{}: bad number {:?}", table.display(), &rec[i])))
        };
        let label = labels.iter().map(|(n, i)| format!("{n}={}", &rec[*i])).collect::<Vec<_>>().join(" ");
        let ys = y_cols.iter().map(|&i| num(i)).collect::<Result<Vec<_>>>()?;
        by_label.entry(label).or_default().push((num(x_col)?, ys));
    }
    if rows == 0 {
        return Err(Error::Plot(format!("{}: result table is empty", table.display())));
    }
    Ok(by_label
        .into_iter()
        .map(|(label, mut points)| {
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Curve { label, points }
        })
        .collect())
}

/// Writes `<family>/<curve>.csv` files and `<family>.gp` into `out_dir`.
/// Returns every path written, script last.
pub fn emit_plot_data(table: &Path, family_name: &str, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let fam = family(family_name)?;
    let curves = curves(table, fam)?;
    if curves.is_empty() {
        return Err(Error::Plot(format!("{}: no successful rows to plot", table.display())));
    }
    let data_dir = out_dir.join(fam.name);
    fs::create_dir_all(&data_dir)?;
    let mut written = Vec::new();
    let mut plots = Vec::new();
    for c in &curves {
        let name = if c.label.is_empty() { "curve".to_string() } else { slug(&c.label) };
        let path = data_dir.join(format!("{name}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        let mut header = vec![fam.x];
        header.extend(fam.ys);
        w.write_record(&header)?;
        for (x, ys) in &c.points {
            let mut rec = vec![x.to_string()];
            rec.extend(ys.iter().map(|y| y.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        for (j, y) in fam.ys.iter().enumerate() {
            plots.push(format!(
                "'{}/{name}.csv' using 1:{} with linespoints title '{} {y}'",
                fam.name,
                j + 2,
                c.label.replace('\'', "")
            ));
        }
        written.push(path);
    }

    let mut gp = String::new();
    writeln!(gp, "set datafile separator ','").unwrap();
    writeln!(gp, "set key autotitle columnhead outside").unwrap();
    writeln!(gp, "set xlabel '{}'", fam.xlabel).unwrap();
    writeln!(gp, "set ylabel '{}'", fam.ylabel).unwrap();
    if fam.log_y {
        writeln!(gp, "set logscale y").unwrap();
    }
    writeln!(gp, "set terminal pngcairo size 1200,800").unwrap();
    writeln!(gp, "set output '{}.png'", fam.name).unwrap();
    writeln!(gp, "plot \\\n    {}", plots.join(", \\\n    ")).unwrap();
    let script = out_dir.join(format!("{}.gp", fam.name));
    fs::write(&script, gp)?;
    written.push(script);
    Ok(written)
}
