use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::metrics::{error_stats, pct_error, ErrorStats};
use super::svg;
use crate::types::QualityVector;
use crate::{Error, Result};

pub const TARGET_NAMES: [&str; 4] = QualityVector::NAMES;

/// Edge of a bed-location cell in the density grid, in pixels.
pub const BED_CELL: usize = 20;

/// One evaluated part for one variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartRow {
    pub build_id: u32,
    pub part_id: u32,
    pub bed_x: usize,
    pub bed_y: usize,
    pub bed_z: usize,
    pub truth: QualityVector,
    pub pred: QualityVector,
    /// Reconstruction ADP of the part's encoded volume, when the variant has an encoder.
    pub adp: Option<f64>,
}

impl PartRow {
    /// Absolute percent error per target.
    pub fn pct_errors(&self) -> Result<[f64; 4]> {
        let (t, p) = (self.truth.to_array(), self.pred.to_array());
        Ok([
            pct_error(p[0], t[0])?,
            pct_error(p[1], t[1])?,
            pct_error(p[2], t[2])?,
            pct_error(p[3], t[3])?,
        ])
    }

    /// Signed percent deviation per target.
    pub fn deviations(&self) -> [f64; 4] {
        let (t, p) = (self.truth.to_array(), self.pred.to_array());
        [0, 1, 2, 3].map(|k| 100.0 * (p[k] - t[k]) / t[k])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantRows {
    pub variant: String,
    pub rows: Vec<PartRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub feature: String,
    pub target: String,
    pub r: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub variants: Vec<VariantRows>,
    pub correlations: Vec<Correlation>,
    /// Bed width and height in pixels, for the location grid.
    pub bed: [usize; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub variant: String,
    pub n: usize,
    /// Per target, in [`TARGET_NAMES`] order.
    pub stats: [ErrorStats; 4],
    pub mean_adp: Option<f64>,
}

impl SummaryRow {
    /// Mean of the three dimensional mean % errors.
    pub fn mean_dimensional_error(&self) -> f64 {
        (self.stats[0].mean + self.stats[1].mean + self.stats[2].mean) / 3.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BedCell {
    pub variant: String,
    pub col: usize,
    pub row: usize,
    pub n: usize,
    pub pred_density: f64,
    pub true_density: f64,
}

impl EvalReport {
    pub fn validate(&self) -> Result<()> {
        if self.variants.is_empty() {
            return Err(Error::InvalidArgument("report has no variants".into()));
        }
        for v in &self.variants {
            if v.rows.len() < 2 {
                return Err(Error::InvalidArgument(format!(
                    "variant {} has {} evaluated parts, need at least 2",
                    v.variant,
                    v.rows.len()
                )));
            }
        }
        Ok(())
    }

    /// One row per variant, recomputed from the per-part rows.
    pub fn summary(&self) -> Result<Vec<SummaryRow>> {
        self.validate()?;
        self.variants
            .iter()
            .map(|v| {
                let errs = v.rows.iter().map(PartRow::pct_errors).collect::<Result<Vec<_>>>()?;
                let col = |k: usize| error_stats(&errs.iter().map(|e| e[k]).collect::<Vec<_>>());
                let adps: Vec<f64> = v.rows.iter().filter_map(|r| r.adp).collect();
                Ok(SummaryRow {
                    variant: v.variant.clone(),
                    n: v.rows.len(),
                    stats: [col(0)?, col(1)?, col(2)?, col(3)?],
                    mean_adp: (!adps.is_empty()).then(|| adps.iter().sum::<f64>() / adps.len() as f64),
                })
            })
            .collect()
    }

    /// Mean predicted and true density per bed cell of [`BED_CELL`] pixels.
    pub fn bed_grid(&self) -> Vec<BedCell> {
        let cols = self.bed[0].div_ceil(BED_CELL).max(1);
        let rows = self.bed[1].div_ceil(BED_CELL).max(1);
        let mut out = Vec::new();
        for v in &self.variants {
            let mut acc = vec![(0usize, 0.0, 0.0); cols * rows];
            for r in &v.rows {
                let c = (r.bed_x / BED_CELL).min(cols - 1);
                let w = (r.bed_y / BED_CELL).min(rows - 1);
                let a = &mut acc[w * cols + c];
                a.0 += 1;
                a.1 += r.pred.density;
                a.2 += r.truth.density;
            }
            for (i, (n, p, t)) in acc.into_iter().enumerate() {
                if n > 0 {
                    out.push(BedCell {
                        variant: v.variant.clone(),
                        col: i % cols,
                        row: i / cols,
                        n,
                        pred_density: p / n as f64,
                        true_density: t / n as f64,
                    });
                }
            }
        }
        out
    }
}

/// Six significant digits, shortest decimal form.
pub fn sig6(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    let rounded: f64 = format!("{v:.5e}").parse().expect("formatted float parses");
    let s = format!("{rounded}");
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(sig6).unwrap_or_default()
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from("# pct error = mean absolute percent error over parts; std = population standard deviation\n");
    s.push_str("variant,n");
    for t in TARGET_NAMES {
        write!(s, ",{t}_pct_error,{t}_std").unwrap();
    }
    s.push_str(",mean_adp\n");
    for r in rows {
        write!(s, "{},{}", r.variant, r.n).unwrap();
        for st in &r.stats {
            write!(s, ",{},{}", sig6(st.mean), sig6(st.std)).unwrap();
        }
        writeln!(s, ",{}", opt(r.mean_adp)).unwrap();
    }
    s
}

pub fn per_part_csv(report: &EvalReport) -> Result<String> {
    let mut s = String::from("# pct_error = 100*|pred-true|/true; deviation = 100*(pred-true)/true\n");
    s.push_str("variant,build_id,part_id,bed_x,bed_y,bed_z");
    for t in TARGET_NAMES {
        write!(s, ",true_{t},pred_{t}").unwrap();
    }
    for t in TARGET_NAMES {
        write!(s, ",{t}_pct_error").unwrap();
    }
    for t in TARGET_NAMES {
        write!(s, ",{t}_deviation").unwrap();
    }
    s.push_str(",adp\n");
    for v in &report.variants {
        for r in &v.rows {
            write!(s, "{},{},{},{},{},{}", v.variant, r.build_id, r.part_id, r.bed_x, r.bed_y, r.bed_z).unwrap();
            let (t, p) = (r.truth.to_array(), r.pred.to_array());
            for k in 0..4 {
                write!(s, ",{},{}", sig6(t[k]), sig6(p[k])).unwrap();
            }
            for e in r.pct_errors()? {
                write!(s, ",{}", sig6(e)).unwrap();
            }
            for d in r.deviations() {
                write!(s, ",{}", sig6(d)).unwrap();
            }
            writeln!(s, ",{}", opt(r.adp)).unwrap();
        }
    }
    Ok(s)
}

pub fn bed_density_csv(cells: &[BedCell]) -> String {
    let mut s = format!("# bed cells of {BED_CELL} px; densities averaged over the parts whose origin lies in the cell\n");
    s.push_str("variant,col,row,x0,y0,n,pred_density,true_density\n");
    for c in cells {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            c.variant,
            c.col,
            c.row,
            c.col * BED_CELL,
            c.row * BED_CELL,
            c.n,
            sig6(c.pred_density),
            sig6(c.true_density)
        )
        .unwrap();
    }
    s
}

pub fn correlation_csv(entries: &[Correlation]) -> String {
    let mut s = String::from("feature,target,r,n\n");
    for c in entries {
        writeln!(s, "{},{},{},{}", c.feature, c.target, sig6(c.r), c.n).unwrap();
    }
    s
}

/// Write the report tables and their renderings into `dir`; returns the
/// paths written, in order.
pub fn emit_report(report: &EvalReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let summary = report.summary()?;
    let cells = report.bed_grid();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let summary_text = summary_csv(&summary);
    let per_part_text = per_part_csv(report)?;
    let bed_text = bed_density_csv(&cells);
    let mut files = vec![
        ("summary.csv", summary_text.clone()),
        ("summary.svg", svg::summary_chart(&summary, &summary_text)),
        ("per_part.csv", per_part_text.clone()),
        ("per_part.svg", svg::deviation_scatter(report, &per_part_text)),
        ("bed_density.csv", bed_text.clone()),
        ("bed_density.svg", svg::bed_heatmap(report, &cells, &bed_text)),
    ];
    if !report.correlations.is_empty() {
        files.push(("correlation.csv", correlation_csv(&report.correlations)));
    }
    let mut written = Vec::with_capacity(files.len());
    for (name, text) in files {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
