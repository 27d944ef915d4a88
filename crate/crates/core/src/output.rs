//! CSV and VTK snapshots and the diagnostics stream.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::integrator::StepRecord;
use crate::operators::{Scheme, State};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn snapshot_header(dim: usize) -> &'static str {
    if dim == 1 {
        "x,h,eta,u,m,b,troubled"
    } else {
        "x,y,h,eta,u,v,m_x,m_y,b,troubled"
    }
}

/// One row per element sample point (vertices and edge midpoints).
pub fn snapshot_csv(scheme: &Scheme, state: &State, troubled: &[usize]) -> String {
    let sp = &scheme.space;
    let dim = sp.dim;
    let tab = &sp.sample_tab;
    let mut flag = vec![false; sp.n_elements()];
    for &k in troubled {
        flag[k] = true;
    }
    let mut s = String::with_capacity(sp.n_elements() * tab.n_points * 64);
    s.push_str(snapshot_header(dim));
    s.push('\n');
    for (e, el) in sp.mesh.elements.iter().enumerate() {
        for (q, xi) in sp.sample_points.iter().enumerate() {
            let x = el.geometry.map(*xi);
            let h = tab.eval(q, state.h.comp(e, 0));
            let b = tab.eval(q, scheme.bottom.comp(e, 0));
            let mut row: Vec<f64> = Vec::with_capacity(10);
            row.extend_from_slice(&x[..dim]);
            row.push(h);
            row.push(h + b);
            for c in 0..dim {
                row.push(tab.eval(q, state.u.comp(e, c)));
            }
            for c in 0..dim {
                row.push(tab.eval(q, state.m.comp(e, c)));
            }
            row.push(b);
            for v in row {
                let _ = write!(s, "{v},");
            }
            let _ = writeln!(s, "{}", flag[e] as u8);
        }
    }
    s
}

pub fn write_snapshot_csv(path: &Path, scheme: &Scheme, state: &State, troubled: &[usize]) -> Result<()> {
    std::fs::write(path, snapshot_csv(scheme, state, troubled)).map_err(io_err(path))
}

/// Parse a snapshot written by [`snapshot_csv`] into its header and rows.
pub fn parse_snapshot_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>), String> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or("empty snapshot")?
        .split(',')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, l) in lines.enumerate() {
        let row: Result<Vec<f64>, _> = l.split(',').map(str::parse::<f64>).collect();
        let row = row.map_err(|e| format!("row {}: {e}", i + 1))?;
        if row.len() != header.len() {
            return Err(format!(
                "row {} has {} columns, expected {}",
                i + 1,
                row.len(),
                header.len()
            ));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

/// Legacy ASCII VTK unstructured grid with cell averages as cell data.
pub fn snapshot_vtk(scheme: &Scheme, state: &State, troubled: &[usize], t: f64) -> String {
    let sp = &scheme.space;
    let mesh = &sp.mesh;
    let ne = mesh.n_elements();
    let nv = mesh.dim + 1;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# vtk DataFile Version 3.0\nshallow water DG solution t={t}\nASCII\nDATASET UNSTRUCTURED_GRID"
    );
    let _ = writeln!(s, "POINTS {} double", mesh.vertices.len());
    for v in &mesh.vertices {
        let _ = writeln!(s, "{} {} 0", v[0], v[1]);
    }
    let _ = writeln!(s, "CELLS {} {}", ne, ne * (nv + 1));
    for el in &mesh.elements {
        let ids: Vec<String> = el.vertices[..nv].iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{} {}", nv, ids.join(" "));
    }
    let _ = writeln!(s, "CELL_TYPES {ne}");
    let ty = if mesh.dim == 1 { 3 } else { 5 };
    for _ in 0..ne {
        let _ = writeln!(s, "{ty}");
    }
    let _ = writeln!(s, "CELL_DATA {ne}");
    let mut scalar = |name: &str, vals: Vec<f64>| {
        let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for v in vals {
            let _ = writeln!(s, "{v}");
        }
    };
    let h = sp.averages(&state.h, 0);
    let b = sp.averages(&scheme.bottom, 0);
    scalar("h", h.clone());
    scalar("eta", h.iter().zip(&b).map(|(x, y)| x + y).collect());
    for (c, name) in ["u", "v"].iter().enumerate().take(state.u.n_comp) {
        scalar(name, sp.averages(&state.u, c));
    }
    for (c, name) in ["m_x", "m_y"].iter().enumerate().take(state.m.n_comp) {
        scalar(name, sp.averages(&state.m, c));
    }
    scalar("b", b);
    let mut flag = vec![0.0; ne];
    for &k in troubled {
        flag[k] = 1.0;
    }
    scalar("troubled", flag);
    s
}

pub fn write_snapshot_vtk(path: &Path, scheme: &Scheme, state: &State, troubled: &[usize], t: f64) -> Result<()> {
    std::fs::write(path, snapshot_vtk(scheme, state, troubled, t)).map_err(io_err(path))
}

pub const DIAGNOSTICS_HEADER: &str =
    "step,t,dt,retries,entropy,mass,momentum_x,momentum_y,momentum_norm,min_average,troubled,dry,velocity_limited,clamped,boundary_outflow";

pub fn diagnostics_row(r: &StepRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        r.step,
        r.t,
        r.dt,
        r.retries,
        r.entropy,
        r.mass,
        r.momentum[0],
        r.momentum[1],
        r.momentum[0].hypot(r.momentum[1]),
        r.min_average,
        r.info.last.troubled.len(),
        r.info.max_dry,
        r.info.velocity_limited,
        r.info.clamped,
        r.info.boundary_outflow
    )
}

/// Buffered diagnostics CSV, flushed on drop.
pub struct DiagnosticsWriter {
    out: BufWriter<File>,
}

impl DiagnosticsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let f = File::create(path).map_err(io_err(path))?;
        let mut out = BufWriter::new(f);
        writeln!(out, "{DIAGNOSTICS_HEADER}").map_err(io_err(path))?;
        Ok(Self { out })
    }

    pub fn push(&mut self, r: &StepRecord) -> std::io::Result<()> {
        writeln!(self.out, "{}", diagnostics_row(r))
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        self.out.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases::{make_case, Resolution};

    #[test]
    fn csv_round_trip_and_lake_surface() {
        let mut c = make_case("ex4_2s").unwrap();
        c.resolution = Resolution::Cells(8);
        let (scheme, state) = c.setup().unwrap();
        let text = snapshot_csv(&scheme, &state, &[3]);
        let (header, rows) = parse_snapshot_csv(&text).unwrap();
        assert_eq!(header.join(","), snapshot_header(1));
        assert_eq!(rows.len(), 8 * scheme.space.sample_points.len());
        for r in &rows {
            assert!((r[2] - 10.0).abs() < 1e-12);
        }
        assert_eq!(
            rows.iter().filter(|r| r[6] == 1.0).count(),
            scheme.space.sample_points.len()
        );
        // exact round trip of the written values
        let x0 = scheme.space.mesh.elements[0]
            .geometry
            .map(scheme.space.sample_points[0]);
        assert_eq!(rows[0][0], x0[0]);
    }

    #[test]
    fn vtk_cell_count() {
        let mut c = make_case("ex4_8").unwrap();
        c.resolution = Resolution::Grid(4, 2);
        let (scheme, state) = c.setup().unwrap();
        let text = snapshot_vtk(&scheme, &state, &[], 0.0);
        assert!(text.contains("CELLS 16 64"));
        assert!(text.contains("CELL_TYPES 16"));
        assert!(text.contains("CELL_DATA 16"));
    }
}
