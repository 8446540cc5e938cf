//! CSV bundle for plotting: decay curves, stability scatter, coordinate-plane slices.

use crate::experiments::{DecaySweep, StabilityReport};
use crate::pipeline::RunResult;
use esmax_core::ScalarField;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Whatever is available; absent parts give header-only files.
#[derive(Clone, Debug, Default)]
pub struct PlotInputs {
    pub decay: Option<DecaySweep>,
    pub stability: Option<StabilityReport>,
    pub slices: Option<SliceFields>,
}

#[derive(Clone, Debug)]
pub struct SliceFields {
    pub l_true: ScalarField,
    pub l_rec: ScalarField,
    pub sigma_rec: ScalarField,
}

pub const DECAY_HEADER: [&str; 7] = [
    "h",
    "zeta_norm",
    "leading_term_error",
    "limit_term_error",
    "product_defect",
    "direction_sup",
    "direction_c1",
];

pub const STABILITY_HEADER: [&str; 10] = [
    "amplitude",
    "delta_in",
    "delta_l",
    "delta_sigma",
    "ratio_l",
    "ratio_sigma",
    "delta_exit",
    "ratio_exit",
    "delta_gamma",
    "ratio_gamma",
];

pub const SLICE_HEADER: [&str; 7] = ["i", "j", "u", "v", "l_true", "l_rec", "sigma_rec"];

/// Coordinate planes through the centre node: name and the two in-plane axes.
pub const PLANES: [(&str, [usize; 2]); 3] = [("xy", [0, 1]), ("xz", [0, 2]), ("yz", [1, 2])];

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>], footer: &[(String, String)]) -> RunResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let mut inner = w.into_inner().map_err(|e| e.into_error())?;
    for (k, v) in footer {
        writeln!(inner, "# {k}={v}")?;
    }
    inner.flush()?;
    Ok(())
}

fn decay_rows(d: &DecaySweep) -> Vec<Vec<String>> {
    d.remainder
        .rows
        .iter()
        .map(|r| {
            let dir = d.direction.iter().find(|x| x.h == r.h);
            vec![
                format!("{:e}", r.h),
                format!("{:e}", r.zeta_norm),
                format!("{:e}", r.leading_term_error),
                format!("{:e}", r.limit_term_error),
                format!("{:e}", r.product_defect),
                opt(dir.map(|x| x.sup)),
                opt(dir.map(|x| x.c1)),
            ]
        })
        .collect()
}

fn stability_rows(s: &StabilityReport) -> Vec<Vec<String>> {
    s.rows
        .iter()
        .map(|r| {
            vec![
                format!("{:e}", r.amplitude),
                format!("{:e}", r.delta_in),
                format!("{:e}", r.delta_l),
                format!("{:e}", r.delta_sigma),
                format!("{:e}", r.ratio_l),
                format!("{:e}", r.ratio_sigma),
                opt(r.delta_exit),
                opt(r.ratio_exit),
                opt(r.delta_gamma),
                opt(r.ratio_gamma),
            ]
        })
        .collect()
}

/// One row per node of the plane through the centre index, `N²` in all.
fn slice_rows(f: &SliceFields, axes: [usize; 2]) -> Vec<Vec<String>> {
    let g = *f.l_true.grid();
    let n = g.n();
    let mid = n / 2;
    let mut rows = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            let mut ijk = [mid; 3];
            ijk[axes[0]] = i;
            ijk[axes[1]] = j;
            let flat = g.index(ijk[0], ijk[1], ijk[2]);
            rows.push(vec![
                i.to_string(),
                j.to_string(),
                format!("{:e}", g.coord(i)),
                format!("{:e}", g.coord(j)),
                format!("{:e}", f.l_true.values()[flat].re),
                format!("{:e}", f.l_rec.values()[flat].re),
                format!("{:e}", f.sigma_rec.values()[flat].re),
            ]);
        }
    }
    rows
}

/// Writes `decay.csv`, `stability.csv` and `slice_{xy,xz,yz}.csv` into `dir`.
/// Fitted slopes and constants go in `# key=value` footer lines.
pub fn export_plot_data(inputs: &PlotInputs, dir: &Path) -> RunResult<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let path = dir.join("decay.csv");
    match &inputs.decay {
        Some(d) => {
            let footer = vec![
                ("leading_slope".to_string(), opt(d.remainder.leading_slope)),
                ("limit_slope".to_string(), opt(d.remainder.limit_slope)),
                ("direction_slope".to_string(), opt(d.direction_slope)),
            ];
            write_csv(&path, &DECAY_HEADER, &decay_rows(d), &footer)?;
        }
        None => write_csv(&path, &DECAY_HEADER, &[], &[])?,
    }
    written.push(path);
    let path = dir.join("stability.csv");
    match &inputs.stability {
        Some(s) => {
            let footer = vec![
                ("lipschitz_l".to_string(), format!("{:e}", s.lipschitz_l)),
                ("lipschitz_sigma".to_string(), format!("{:e}", s.lipschitz_sigma)),
                ("spread_l".to_string(), format!("{:e}", s.spread_l)),
            ];
            write_csv(&path, &STABILITY_HEADER, &stability_rows(s), &footer)?;
        }
        None => write_csv(&path, &STABILITY_HEADER, &[], &[])?,
    }
    written.push(path);
    for (name, axes) in PLANES {
        let path = dir.join(format!("slice_{name}.csv"));
        let rows = inputs.slices.as_ref().map(|f| slice_rows(f, axes)).unwrap_or_default();
        write_csv(&path, &SLICE_HEADER, &rows, &[])?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use esmax_core::Grid;

    fn lines(p: &Path) -> Vec<String> {
        std::fs::read_to_string(p).unwrap().lines().map(String::from).collect()
    }

    #[test]
    fn empty_inputs_give_header_only_files() {
        let dir = tempfile::tempdir().unwrap();
        let files = export_plot_data(&PlotInputs::default(), dir.path()).unwrap();
        assert_eq!(files.len(), 5);
        for f in &files {
            assert_eq!(lines(f).len(), 1, "{f:?}");
        }
        assert_eq!(lines(&files[0])[0], DECAY_HEADER.join(","));
    }

    #[test]
    fn slices_have_one_row_per_plane_node() {
        let g = Grid::periodic(16).unwrap();
        let f = ScalarField::from_real_fn(g, |x| x[0] + 10.0 * x[1] + 100.0 * x[2]);
        let s = SliceFields {
            l_true: f.clone(),
            l_rec: f.clone(),
            sigma_rec: f,
        };
        let dir = tempfile::tempdir().unwrap();
        let inputs = PlotInputs {
            slices: Some(s),
            ..Default::default()
        };
        let files = export_plot_data(&inputs, dir.path()).unwrap();
        for f in &files[2..] {
            assert_eq!(lines(f).len(), 1 + 256);
        }
        // the xz plane holds y at the centre coordinate (0 for even N)
        let row: Vec<String> = lines(&files[3])[1 + 16 * 3 + 5].split(',').map(String::from).collect();
        let v: f64 = row[4].parse().unwrap();
        let expect = g.coord(5) + 100.0 * g.coord(3);
        assert!((v - expect).abs() < 1e-12);
    }
}
