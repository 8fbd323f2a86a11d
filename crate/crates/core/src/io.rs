//! CSV and JSON artifacts.
//!
//! CSV tables carry one row per node (and per stored time for space-time
//! data) with coordinate columns named `x`, `y`, `z` up to the grid
//! dimension. Flow files start with a `# grid ...` comment line holding the
//! grid metadata.

use std::io::{BufRead, BufReader, Read, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Boundary, Grid, ScalarField, SpaceTimeField, VectorField};
use crate::kernels::KernelEstimate;
use crate::nse::{FlowField, QField};

/// Version stamped into every JSON artifact.
pub const SCHEMA_VERSION: u32 = 1;

const AXES: [&str; 3] = ["x", "y", "z"];

fn coordinate_header(grid: &Grid) -> Vec<String> {
    AXES[..grid.dim()].iter().map(|s| s.to_string()).collect()
}

fn coordinates(grid: &Grid, i: usize) -> Vec<String> {
    let p = grid.point(i);
    p[..grid.dim()].iter().map(|c| c.to_string()).collect()
}

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(out)
}

/// `x[,y,z],<name>`.
pub fn write_field_csv<W: Write>(out: W, field: &ScalarField, name: &str) -> Result<()> {
    let grid = field.grid();
    let mut w = writer(out);
    let mut header = coordinate_header(grid);
    header.push(name.to_string());
    w.write_record(&header)?;
    for (i, v) in field.values().iter().enumerate() {
        let mut row = coordinates(grid, i);
        row.push(v.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `x[,y,z],t,<name>`, time-major.
pub fn write_space_time_csv<W: Write>(out: W, field: &SpaceTimeField, name: &str) -> Result<()> {
    let grid = field.grid();
    let mut w = writer(out);
    let mut header = coordinate_header(grid);
    header.push("t".into());
    header.push(name.to_string());
    w.write_record(&header)?;
    for (k, s) in field.slices().iter().enumerate() {
        let t = field.time(k).to_string();
        for (i, v) in s.values().iter().enumerate() {
            let mut row = coordinates(grid, i);
            row.push(t.clone());
            row.push(v.to_string());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `x[,y,z],t,level_<j>...`: one value column per upper truncation level.
pub fn write_kernel_csv<W: Write>(out: W, est: &KernelEstimate) -> Result<()> {
    let grid = est.grid();
    let mut w = writer(out);
    let mut header = coordinate_header(grid);
    header.push("t".into());
    header.extend(est.ladder.upper().iter().map(|j| format!("level_{j}")));
    w.write_record(&header)?;
    let top = est.top();
    for k in 0..top.len() {
        let t = top.time(k).to_string();
        for i in 0..grid.len() {
            let mut row = coordinates(grid, i);
            row.push(t.clone());
            row.extend(est.columns.iter().map(|c| c.slices()[k].values()[i].to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `x,y,z,q_form_a,q_form_b,mask` with the mask as 0/1.
pub fn write_q_csv<W: Write>(out: W, q: &QField) -> Result<()> {
    let grid = q.q_form_a.grid();
    let mut w = writer(out);
    let mut header = coordinate_header(grid);
    header.extend(["q_form_a", "q_form_b", "mask"].map(String::from));
    w.write_record(&header)?;
    for i in 0..grid.len() {
        let mut row = coordinates(grid, i);
        row.push(q.q_form_a.values()[i].to_string());
        row.push(q.q_form_b.values()[i].to_string());
        row.push(if q.mask[i] { "1" } else { "0" }.into());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn boundary_name(b: Boundary) -> &'static str {
    match b {
        Boundary::DirichletZero => "dirichlet_zero",
        Boundary::Periodic => "periodic",
    }
}

/// Grid metadata line, then `x,y,z,u1,u2,u3`.
pub fn write_flow_csv<W: Write>(mut out: W, flow: &FlowField) -> Result<()> {
    let grid = flow.grid();
    writeln!(
        out,
        "# grid dim={} half_width={} points={} boundary={}",
        grid.dim(),
        grid.half_width(),
        grid.points(),
        boundary_name(grid.boundary())
    )?;
    let mut w = writer(out);
    w.write_record(["x", "y", "z", "u1", "u2", "u3"])?;
    for i in 0..grid.len() {
        let mut row = coordinates(grid, i);
        row.extend((0..3).map(|a| flow.u.component(a)[i].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_grid_line(line: &str) -> Result<Grid> {
    let body = line
        .trim()
        .strip_prefix("# grid")
        .ok_or_else(|| Error::Config("flow file must start with a '# grid' metadata line".into()))?;
    let (mut dim, mut half, mut points, mut boundary) = (None, None, None, Boundary::Periodic);
    for kv in body.split_whitespace() {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("malformed metadata entry '{kv}'")))?;
        let bad = |_| Error::Config(format!("cannot parse {k} = '{v}'"));
        match k {
            "dim" => dim = Some(v.parse::<usize>().map_err(|e| bad(e.to_string()))?),
            "half_width" => half = Some(v.parse::<f64>().map_err(|e| bad(e.to_string()))?),
            "points" => points = Some(v.parse::<usize>().map_err(|e| bad(e.to_string()))?),
            "boundary" => {
                boundary = match v {
                    "periodic" => Boundary::Periodic,
                    "dirichlet_zero" => Boundary::DirichletZero,
                    other => return Err(Error::Config(format!("unknown boundary '{other}'"))),
                }
            }
            _ => {}
        }
    }
    let missing = |k: &str| Error::Config(format!("grid metadata lacks '{k}'"));
    Grid::new(dim.ok_or_else(|| missing("dim"))?, half.ok_or_else(|| missing("half_width"))?, points.ok_or_else(|| missing("points"))?, boundary)
}

/// Read a flow written by [`write_flow_csv`]. Rows may come in any order;
/// each is placed at the node nearest to its coordinates.
pub fn read_flow_csv<R: Read>(input: R) -> Result<FlowField> {
    let mut reader = BufReader::new(input);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let grid = parse_grid_line(&first)?;
    if grid.dim() != 3 {
        return Err(Error::Dimension { expected: 3, found: grid.dim() });
    }
    let mut components = vec![vec![f64::NAN; grid.len()]; 3];
    let mut rows = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let mut seen = 0usize;
    for record in rows.records() {
        let record = record?;
        if record.len() != 6 {
            return Err(Error::Config(format!("flow row has {} columns, expected 6", record.len())));
        }
        let vals = record
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Config(format!("bad number '{s}': {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        if !grid.contains(&vals[..3]) {
            return Err(Error::OutsideBox(vals[..3].to_vec()));
        }
        let idx = grid.nearest_node(&vals[..3]);
        for a in 0..3 {
            components[a][idx] = vals[3 + a];
        }
        seen += 1;
    }
    if seen != grid.len() || components.iter().any(|c| c.iter().any(|v| v.is_nan())) {
        return Err(Error::Config(format!("flow file covers {seen} rows, grid has {} nodes", grid.len())));
    }
    FlowField::from_velocity(VectorField::new(grid, components)?)
}

#[derive(Serialize)]
struct Versioned<'a, T: Serialize> {
    schema_version: u32,
    #[serde(flatten)]
    body: &'a T,
}

/// Pretty JSON with a `schema_version` field merged into the top-level object.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&Versioned { schema_version: SCHEMA_VERSION, body: value })?;
    s.push('\n');
    Ok(s)
}
