//! ASCII PLY and XYZ point files.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use spacnet_core::{Point3, PointCloud};

use crate::error::{CliError, Result};

pub type Rgb = [u8; 3];

pub const PARTIAL_COLOR: Rgb = [0, 0, 255];
pub const INTERFACE_COLOR: Rgb = [255, 0, 255];
pub const PREDICTION_COLOR: Rgb = [0, 255, 255];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PointFormat {
    #[default]
    Ply,
    Xyz,
}

impl PointFormat {
    pub fn extension(self) -> &'static str {
        match self {
            PointFormat::Ply => "ply",
            PointFormat::Xyz => "xyz",
        }
    }
}

/// Coordinates are written with 9 significant digits.
fn coord(out: &mut String, v: f64) {
    let _ = write!(out, "{v:.8e}");
}

pub fn ply_string(cloud: &PointCloud, colors: Option<&[Rgb]>) -> String {
    let mut out = String::with_capacity(64 * cloud.len() + 200);
    out.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(out, "element vertex {}", cloud.len());
    out.push_str("property double x\nproperty double y\nproperty double z\n");
    if colors.is_some() {
        out.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    out.push_str("end_header\n");
    for (i, p) in cloud.iter().enumerate() {
        coord(&mut out, p.x);
        out.push(' ');
        coord(&mut out, p.y);
        out.push(' ');
        coord(&mut out, p.z);
        if let Some(c) = colors {
            let _ = write!(out, " {} {} {}", c[i][0], c[i][1], c[i][2]);
        }
        out.push('\n');
    }
    out
}

pub fn xyz_string(cloud: &PointCloud) -> String {
    let mut out = String::with_capacity(48 * cloud.len());
    for p in cloud.iter() {
        coord(&mut out, p.x);
        out.push(' ');
        coord(&mut out, p.y);
        out.push(' ');
        coord(&mut out, p.z);
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub line: usize,
    pub msg: String,
}

fn fail<T>(line: usize, msg: impl Into<String>) -> std::result::Result<T, ParseError> {
    Err(ParseError { line, msg: msg.into() })
}

fn number(tok: &str, line: usize) -> std::result::Result<f64, ParseError> {
    match tok.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => fail(line, format!("non-finite value '{tok}'")),
        Err(_) => fail(line, format!("expected a number, found '{tok}'")),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedCloud {
    pub cloud: PointCloud,
    pub colors: Option<Vec<Rgb>>,
}

/// Parses the vertex element of an ASCII PLY file. Later elements are ignored.
pub fn parse_ply(text: &str) -> std::result::Result<ParsedCloud, ParseError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        Some((n, _)) => return fail(n, "missing 'ply' magic"),
        None => return fail(1, "empty file"),
    }
    let mut vertex_count = None;
    let mut props: Vec<String> = Vec::new();
    let mut in_vertex = false;
    let mut header_end = 0;
    for (n, line) in lines.by_ref() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["end_header"] => {
                header_end = n;
                break;
            }
            ["format", "ascii", _] => {}
            ["format", other, ..] => return fail(n, format!("unsupported format '{other}'")),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => {
                if vertex_count.is_some() && in_vertex {
                    in_vertex = false;
                }
                if *name == "vertex" {
                    let c = count.parse::<usize>().or_else(|_| fail(n, format!("bad vertex count '{count}'")))?;
                    vertex_count = Some(c);
                    in_vertex = true;
                } else if vertex_count.is_none() {
                    return fail(n, "vertex element must come first");
                }
            }
            ["property", "list", ..] if in_vertex => return fail(n, "list properties on vertices are not supported"),
            ["property", _, name] if in_vertex => props.push(name.to_string()),
            ["property", ..] => {}
            _ => return fail(n, format!("unexpected header line '{line}'")),
        }
    }
    if header_end == 0 {
        return fail(text.lines().count().max(1), "missing end_header");
    }
    let Some(count) = vertex_count else {
        return fail(header_end, "no vertex element");
    };
    let find = |name: &str| props.iter().position(|p| p == name);
    let (Some(xi), Some(yi), Some(zi)) = (find("x"), find("y"), find("z")) else {
        return fail(header_end, "vertex element lacks x, y or z");
    };
    let rgb = match (find("red"), find("green"), find("blue")) {
        (Some(r), Some(g), Some(b)) => Some([r, g, b]),
        _ => None,
    };
    let mut points = Vec::with_capacity(count);
    let mut colors = rgb.map(|_| Vec::with_capacity(count));
    let mut last = header_end;
    for _ in 0..count {
        let Some((n, line)) = lines.next() else {
            return fail(last + 1, format!("expected {count} vertices, found {}", points.len()));
        };
        last = n;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != props.len() {
            return fail(n, format!("expected {} values, found {}", props.len(), toks.len()));
        }
        points.push(Point3::new(number(toks[xi], n)?, number(toks[yi], n)?, number(toks[zi], n)?));
        if let (Some(idx), Some(out)) = (rgb, colors.as_mut()) {
            let mut c = [0u8; 3];
            for (slot, &j) in c.iter_mut().zip(idx.iter()) {
                *slot = toks[j].parse().or_else(|_| fail(n, format!("bad color value '{}'", toks[j])))?;
            }
            out.push(c);
        }
    }
    let cloud = PointCloud::new(points).or_else(|e| fail(header_end, e.to_string()))?;
    Ok(ParsedCloud { cloud, colors })
}

/// Whitespace-separated `x y z` lines; extra columns are ignored, `#` starts a comment.
pub fn parse_xyz(text: &str) -> std::result::Result<PointCloud, ParseError> {
    let mut points = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()).collect();
        if toks.len() < 3 {
            return fail(n, format!("expected 3 coordinates, found {}", toks.len()));
        }
        points.push(Point3::new(number(toks[0], n)?, number(toks[1], n)?, number(toks[2], n)?));
    }
    PointCloud::new(points).or_else(|e| fail(1, e.to_string()))
}

/// Reads a PLY (detected by its magic line) or XYZ file; empty clouds are parse errors.
pub fn read_points(path: &Path) -> Result<PointCloud> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let parsed = if text.trim_start().starts_with("ply") { parse_ply(&text).map(|p| p.cloud) } else { parse_xyz(&text) };
    let to_err = |e: ParseError| CliError::Parse { path: path.to_path_buf(), line: e.line, msg: e.msg };
    let cloud = parsed.map_err(to_err)?;
    if cloud.is_empty() {
        return Err(to_err(ParseError { line: 1, msg: "file contains no points".into() }));
    }
    Ok(cloud)
}

pub fn write_points(path: &Path, cloud: &PointCloud, colors: Option<&[Rgb]>, format: PointFormat) -> Result<()> {
    let text = match format {
        PointFormat::Ply => ply_string(cloud, colors),
        PointFormat::Xyz => xyz_string(cloud),
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}
