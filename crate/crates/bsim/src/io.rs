//! File formats: OFF/OBJ meshes, the report and marker CSVs, trajectories.
//! Every write goes to a temporary file in the target directory and is
//! renamed into place.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use bsim_core::anatomy::StageId;
use bsim_core::pipeline::Trajectory;
use bsim_core::tmr::MeasurementReport;
use bsim_core::{TriMesh, Vec3};

use crate::CliError;

pub const REPORT_HEADER: [&str; 14] = [
    "stage",
    "area_cm2",
    "volume_cm3",
    "density_g_cm3",
    "base_perim_cm",
    "h_left_cm",
    "h_right_cm",
    "v_bottom_cm",
    "v_top_cm",
    "nipple_x",
    "nipple_y",
    "nipple_z",
    "contact_w_cm",
    "contact_h_cm",
];

pub const TRAJECTORY_HEADER: [&str; 5] = ["label", "stage", "x_cm", "y_cm", "z_cm"];

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    if path.file_name().is_none() {
        return Err(CliError::io(path, std::io::Error::other("not a file path")));
    }
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

fn coord(x: f64) -> String {
    // 13 significant digits; -0 prints as 0 so mirrored runs compare equal
    format!("{:.12e}", if x == 0.0 { 0.0 } else { x })
}

pub fn off_string(mesh: &TriMesh) -> String {
    let mut s = format!("OFF\n{} {} 0\n", mesh.vertex_count(), mesh.facet_count());
    for v in &mesh.vertices {
        let _ = writeln!(s, "{} {} {}", coord(v.x), coord(v.y), coord(v.z));
    }
    for f in &mesh.facets {
        let _ = writeln!(s, "3 {} {} {}", f[0], f[1], f[2]);
    }
    s
}

pub fn obj_string(mesh: &TriMesh) -> String {
    let mut s = String::new();
    for v in &mesh.vertices {
        let _ = writeln!(s, "v {} {} {}", coord(v.x), coord(v.y), coord(v.z));
    }
    for f in &mesh.facets {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    s
}

pub fn export_off(mesh: &TriMesh, path: &Path) -> Result<(), CliError> {
    write_atomic(path, off_string(mesh).as_bytes())
}

pub fn export_obj(mesh: &TriMesh, path: &Path) -> Result<(), CliError> {
    write_atomic(path, obj_string(mesh).as_bytes())
}

fn malformed(line: usize, what: impl std::fmt::Display) -> CliError {
    CliError::Format(format!("line {line}: {what}"))
}

fn parse_num<T: std::str::FromStr>(tok: Option<&str>, line: usize) -> Result<T, CliError> {
    let tok = tok.ok_or_else(|| malformed(line, "missing value"))?;
    tok.parse()
        .map_err(|_| malformed(line, format!("malformed number '{tok}'")))
}

/// Reads an OFF file of triangles. Roles and markers are not stored in the
/// format; every vertex comes back free.
pub fn parse_off(text: &str) -> Result<TriMesh, CliError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    match lines.next() {
        Some((_, "OFF")) => {}
        Some((n, _)) => return Err(malformed(n, "expected 'OFF'")),
        None => return Err(malformed(1, "empty file")),
    }
    let (n, counts) = lines.next().ok_or_else(|| malformed(2, "missing counts"))?;
    let mut t = counts.split_whitespace();
    let nv: usize = parse_num(t.next(), n)?;
    let nf: usize = parse_num(t.next(), n)?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (n, l) = lines.next().ok_or_else(|| malformed(n, "too few vertices"))?;
        let mut t = l.split_whitespace();
        vertices.push(Vec3::new(
            parse_num(t.next(), n)?,
            parse_num(t.next(), n)?,
            parse_num(t.next(), n)?,
        ));
    }
    let mut facets = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (n, l) = lines.next().ok_or_else(|| malformed(n, "too few facets"))?;
        let mut t = l.split_whitespace();
        let k: usize = parse_num(t.next(), n)?;
        if k != 3 {
            return Err(malformed(n, "only triangles are supported"));
        }
        let f = [
            parse_num(t.next(), n)?,
            parse_num(t.next(), n)?,
            parse_num(t.next(), n)?,
        ];
        if f.iter().any(|&i: &usize| i >= nv) {
            return Err(malformed(n, "vertex index out of range"));
        }
        facets.push(f);
    }
    Ok(TriMesh::new(vertices, facets))
}

pub fn read_off(path: &Path) -> Result<TriMesh, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_off(&text)
}

pub fn parse_obj(text: &str) -> Result<TriMesh, CliError> {
    let mut vertices = Vec::new();
    let mut facets = Vec::new();
    for (i, l) in text.lines().enumerate() {
        let n = i + 1;
        let mut t = l.split_whitespace();
        match t.next() {
            Some("v") => vertices.push(Vec3::new(
                parse_num(t.next(), n)?,
                parse_num(t.next(), n)?,
                parse_num(t.next(), n)?,
            )),
            Some("f") => {
                let mut f = [0usize; 3];
                for slot in &mut f {
                    // "i", "i/t" and "i/t/n" all start with the vertex index
                    let idx: usize = parse_num(t.next().map(|s| s.split('/').next().unwrap_or("")), n)?;
                    if idx == 0 {
                        return Err(malformed(n, "OBJ indices start at 1"));
                    }
                    *slot = idx - 1;
                }
                if t.next().is_some() {
                    return Err(malformed(n, "only triangles are supported"));
                }
                facets.push(f);
            }
            _ => {}
        }
    }
    if facets.iter().flatten().any(|&i| i >= vertices.len()) {
        return Err(CliError::Format("vertex index out of range".into()));
    }
    Ok(TriMesh::new(vertices, facets))
}

pub fn read_obj(path: &Path) -> Result<TriMesh, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_obj(&text)
}

fn cell(x: Option<f64>) -> String {
    let Some(v) = x else { return String::new() };
    let s = format!("{v:.6}");
    // values that round to zero print without a sign
    if s == "-0.000000" {
        s[1..].to_string()
    } else {
        s
    }
}

pub fn report_csv(reports: &[MeasurementReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPORT_HEADER).expect("in-memory write");
    for r in reports {
        let arcs = r.semi_arcs.as_ref();
        let contact = r.contact.as_ref();
        let row = [
            r.stage.as_str().to_string(),
            cell(Some(r.area)),
            cell(Some(r.volume)),
            cell(Some(r.density)),
            cell(Some(r.base_perimeter)),
            cell(arcs.map(|a| a.h_left)),
            cell(arcs.map(|a| a.h_right)),
            cell(arcs.map(|a| a.v_bottom)),
            cell(arcs.map(|a| a.v_top)),
            cell(Some(r.nipple.x)),
            cell(Some(r.nipple.y)),
            cell(Some(r.nipple.z)),
            cell(contact.map(|c| c.width)),
            cell(contact.map(|c| c.height)),
        ];
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
}

pub fn write_report(reports: &[MeasurementReport], path: &Path) -> Result<(), CliError> {
    if reports.is_empty() {
        return Err(CliError::Usage("no reports to write".into()));
    }
    write_atomic(path, report_csv(reports).as_bytes())
}

/// One row per marker and stage: advected and predefined positions.
pub fn markers_csv(reports: &[MeasurementReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "label", "stage", "x_cm", "y_cm", "z_cm", "pre_x_cm", "pre_y_cm", "pre_z_cm",
    ])
    .expect("in-memory write");
    for r in reports {
        for m in &r.markers {
            let a = m.advected;
            let p = m.predefined;
            w.write_record([
                m.label.clone(),
                r.stage.as_str().to_string(),
                cell(a.map(|v| v.x)),
                cell(a.map(|v| v.y)),
                cell(a.map(|v| v.z)),
                cell(p.map(|v| v.x)),
                cell(p.map(|v| v.y)),
                cell(p.map(|v| v.z)),
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 labels")
}

pub fn parse_trajectory(text: &str) -> Result<Trajectory, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| malformed(1, e))?;
    if header.iter().ne(TRAJECTORY_HEADER) {
        return Err(malformed(
            1,
            format!("header must be '{}'", TRAJECTORY_HEADER.join(",")),
        ));
    }
    let mut keyframes: BTreeMap<String, Vec<(StageId, Vec3)>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            malformed(line, e)
        })?;
        let n = rec.position().map_or(0, |p| p.line() as usize);
        let stage: StageId = rec[1].parse().map_err(|e: bsim_core::Error| malformed(n, e))?;
        let p = Vec3::new(
            parse_num(rec.get(2), n)?,
            parse_num(rec.get(3), n)?,
            parse_num(rec.get(4), n)?,
        );
        if !p.iter().all(|c| c.is_finite()) {
            return Err(malformed(n, "position must be finite"));
        }
        let frames = keyframes.entry(rec[0].to_string()).or_default();
        if frames.last().is_some_and(|(s, _)| *s >= stage) {
            return Err(malformed(n, format!("stage {stage} out of order for '{}'", &rec[0])));
        }
        frames.push((stage, p));
    }
    Ok(Trajectory { keyframes })
}

pub fn load_trajectory(path: &Path) -> Result<Trajectory, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_trajectory(&text)
}
