//! OFF and OBJ readers (triangles, polygons fan-split) and an exact OFF writer.

use std::fmt::Write as _;
use std::path::Path;

use hkflow::mesh::{ellipsoid, icosphere, Hypersurface, Vec3};

use crate::config::MeshSource;
use crate::error::{CliError, CliResult};

pub fn load(source: &MeshSource) -> CliResult<Hypersurface> {
    match source {
        MeshSource::Icosphere { level, radius } => Ok(icosphere(*level, *radius)?),
        MeshSource::Ellipsoid { a, b, c, level } => Ok(ellipsoid(*a, *b, *c, *level)?),
        MeshSource::File(path) => read_mesh(path),
    }
}

pub fn read_mesh(path: &Path) -> CliResult<Hypersurface> {
    if !path.exists() {
        return Err(CliError::MeshNotFound(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    let is_obj = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("obj"));
    let (vertices, faces) = if is_obj {
        parse_obj(&text)
    } else {
        parse_off(&text)
    }
    .map_err(|(line, message)| CliError::MeshParse {
        path: path.to_path_buf(),
        line,
        message,
    })?;
    Ok(Hypersurface::new(vertices, faces)?)
}

type Parsed = (Vec<Vec3>, Vec<[usize; 3]>);
type ParseError = (usize, String);

fn fan(poly: &[usize], faces: &mut Vec<[usize; 3]>) {
    for w in 1..poly.len() - 1 {
        faces.push([poly[0], poly[w], poly[w + 1]]);
    }
}

fn parse_f64(tok: &str, line: usize) -> Result<f64, ParseError> {
    let v: f64 = tok
        .parse()
        .map_err(|_| (line, format!("bad coordinate {tok:?}")))?;
    if !v.is_finite() {
        return Err((line, format!("non-finite coordinate {tok:?}")));
    }
    Ok(v)
}

pub fn parse_off(text: &str) -> Result<Parsed, ParseError> {
    // tokens of non-comment lines, tagged with 1-based line numbers
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| {
            (
                i + 1,
                l.split('#')
                    .next()
                    .unwrap_or("")
                    .split_whitespace()
                    .collect::<Vec<_>>(),
            )
        })
        .filter(|(_, t)| !t.is_empty());
    let (hl, mut header) = lines.next().ok_or((1, "empty file".to_string()))?;
    if header[0] != "OFF" {
        return Err((hl, format!("expected OFF header, found {:?}", header[0])));
    }
    header.remove(0);
    let (cl, counts) = if header.is_empty() {
        lines.next().ok_or((hl, "missing counts".to_string()))?
    } else {
        (hl, header)
    };
    if counts.len() < 2 {
        return Err((cl, "expected vertex and face counts".into()));
    }
    let count = |t: &str| {
        t.parse::<usize>()
            .map_err(|_| (cl, format!("bad count {t:?}")))
    };
    let (nv, nf) = (count(counts[0])?, count(counts[1])?);
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (l, t) = lines
            .next()
            .ok_or((cl, format!("expected {nv} vertices")))?;
        if t.len() < 3 {
            return Err((l, "vertex needs three coordinates".into()));
        }
        vertices.push(Vec3::new(
            parse_f64(t[0], l)?,
            parse_f64(t[1], l)?,
            parse_f64(t[2], l)?,
        ));
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (l, t) = lines.next().ok_or((cl, format!("expected {nf} faces")))?;
        let m: usize = t[0]
            .parse()
            .map_err(|_| (l, format!("bad face size {:?}", t[0])))?;
        if m < 3 || t.len() < m + 1 {
            return Err((l, format!("face declares {m} vertices")));
        }
        let poly = t[1..=m]
            .iter()
            .map(|s| match s.parse::<usize>() {
                Ok(i) if i < nv => Ok(i),
                _ => Err((l, format!("bad vertex index {s:?}"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        fan(&poly, &mut faces);
    }
    Ok((vertices, faces))
}

pub fn parse_obj(text: &str) -> Result<Parsed, ParseError> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let l = i + 1;
        let t: Vec<&str> = raw
            .split('#')
            .next()
            .unwrap_or("")
            .split_whitespace()
            .collect();
        match t.first() {
            Some(&"v") => {
                if t.len() < 4 {
                    return Err((l, "vertex needs three coordinates".into()));
                }
                vertices.push(Vec3::new(
                    parse_f64(t[1], l)?,
                    parse_f64(t[2], l)?,
                    parse_f64(t[3], l)?,
                ));
            }
            Some(&"f") => {
                if t.len() < 4 {
                    return Err((l, "face needs at least three vertices".into()));
                }
                let nv = vertices.len() as i64;
                let poly = t[1..]
                    .iter()
                    .map(|s| {
                        let idx: i64 = s
                            .split('/')
                            .next()
                            .unwrap_or("")
                            .parse()
                            .map_err(|_| (l, format!("bad index {s:?}")))?;
                        let abs = if idx < 0 { nv + idx } else { idx - 1 };
                        if abs < 0 || abs >= nv {
                            return Err((l, format!("index {idx} out of range")));
                        }
                        Ok(abs as usize)
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                fan(&poly, &mut faces);
            }
            _ => {}
        }
    }
    Ok((vertices, faces))
}

/// Shortest round-trip formatting, so re-reading a written mesh is exact.
pub fn off_string(mesh: &Hypersurface) -> String {
    let mut s = String::new();
    writeln!(s, "OFF\n{} {} 0", mesh.vertex_count(), mesh.faces().len()).unwrap();
    for v in mesh.vertices() {
        writeln!(s, "{} {} {}", v.x, v.y, v.z).unwrap();
    }
    for f in mesh.faces() {
        writeln!(s, "3 {} {} {}", f[0], f[1], f[2]).unwrap();
    }
    s
}

pub fn write_off(mesh: &Hypersurface, path: &Path) -> CliResult<()> {
    std::fs::write(path, off_string(mesh))
        .map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}
