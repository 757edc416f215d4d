use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::GeometryError;

pub type Point = [f64; 3];
pub type Face = [usize; 3];

/// Vertex positions with optional triangle connectivity.
#[derive(Debug, Clone, PartialEq)]
pub struct Shape {
    vertices: Vec<Point>,
    faces: Option<Vec<Face>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeFormat {
    Off,
    Obj,
    Xyz,
}

impl ShapeFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "off" => Some(ShapeFormat::Off),
            "obj" => Some(ShapeFormat::Obj),
            "xyz" | "txt" | "pts" => Some(ShapeFormat::Xyz),
            _ => None,
        }
    }
}

impl Shape {
    pub fn new(vertices: Vec<Point>, faces: Option<Vec<Face>>) -> Result<Self, GeometryError> {
        if vertices.is_empty() {
            return Err(GeometryError::EmptyVertexSet);
        }
        if let Some(p) = vertices.iter().position(|v| v.iter().any(|c| !c.is_finite())) {
            return Err(GeometryError::Precondition(format!("vertex {p} is not finite")));
        }
        if let Some(fs) = &faces {
            let n = vertices.len();
            for (fi, f) in fs.iter().enumerate() {
                if let Some(&bad) = f.iter().find(|&&i| i >= n) {
                    return Err(GeometryError::Index(format!("face {fi} references vertex {bad} of {n}")));
                }
                if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                    return Err(GeometryError::DegenerateFace(fi));
                }
            }
        }
        Ok(Shape { vertices, faces })
    }

    pub fn point_cloud(vertices: Vec<Point>) -> Result<Self, GeometryError> {
        Shape::new(vertices, None)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn faces(&self) -> Option<&[Face]> {
        self.faces.as_deref()
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn with_vertices(&self, vertices: Vec<Point>) -> Result<Self, GeometryError> {
        if vertices.len() != self.vertices.len() {
            return Err(GeometryError::Precondition(format!(
                "{} vertices replace {}",
                vertices.len(),
                self.vertices.len()
            )));
        }
        Shape::new(vertices, self.faces.clone())
    }

    pub fn bbox_diagonal(&self) -> f64 {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &self.vertices {
            for a in 0..3 {
                lo[a] = lo[a].min(v[a]);
                hi[a] = hi[a].max(v[a]);
            }
        }
        distance(&lo, &hi)
    }

    /// Σ over triangles of ½‖(b−a)×(c−a)‖.
    pub fn surface_area(&self) -> Result<f64, GeometryError> {
        let faces = self
            .faces
            .as_ref()
            .ok_or_else(|| GeometryError::Precondition("surface area needs faces".into()))?;
        Ok(faces
            .iter()
            .map(|f| {
                let [a, b, c] = f.map(|i| self.vertices[i]);
                0.5 * norm(&cross(&sub(&b, &a), &sub(&c, &a)))
            })
            .sum())
    }

    pub fn load(path: &Path, format: ShapeFormat) -> Result<Self, GeometryError> {
        let text = fs::read_to_string(path).map_err(|e| GeometryError::Io(format!("{}: {e}", path.display())))?;
        Shape::parse(&text, format)
    }

    pub fn parse(text: &str, format: ShapeFormat) -> Result<Self, GeometryError> {
        match format {
            ShapeFormat::Off => parse_off(text),
            ShapeFormat::Obj => parse_obj(text),
            ShapeFormat::Xyz => parse_xyz(text),
        }
    }

    /// OFF text; values use the shortest representation that round-trips exactly.
    pub fn to_off(&self) -> String {
        let faces = self.faces.as_deref().unwrap_or(&[]);
        let mut out = String::new();
        let _ = writeln!(out, "OFF");
        let _ = writeln!(out, "{} {} 0", self.vertices.len(), faces.len());
        for v in &self.vertices {
            let _ = writeln!(out, "{:?} {:?} {:?}", v[0], v[1], v[2]);
        }
        for f in faces {
            let _ = writeln!(out, "3 {} {} {}", f[0], f[1], f[2]);
        }
        out
    }

    pub fn save_off(&self, path: &Path) -> Result<(), GeometryError> {
        fs::write(path, self.to_off()).map_err(|e| GeometryError::Io(format!("{}: {e}", path.display())))
    }
}

/// Non-empty, comment-stripped lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    })
}

fn parse_err(line: usize, msg: impl Into<String>) -> GeometryError {
    GeometryError::Parse { line, msg: msg.into() }
}

fn parse_f64(tok: &str, line: usize) -> Result<f64, GeometryError> {
    let v: f64 = tok.parse().map_err(|_| parse_err(line, format!("bad number {tok:?}")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("non-finite number {tok:?}")));
    }
    Ok(v)
}

fn parse_point<'a>(mut toks: impl Iterator<Item = &'a str>, line: usize) -> Result<Point, GeometryError> {
    let mut p = [0.0; 3];
    for c in &mut p {
        let tok = toks.next().ok_or_else(|| parse_err(line, "expected 3 coordinates"))?;
        *c = parse_f64(tok, line)?;
    }
    Ok(p)
}

/// Fan-triangulates a polygon.
fn fan(poly: &[usize], out: &mut Vec<Face>) {
    for w in 1..poly.len().saturating_sub(1) {
        out.push([poly[0], poly[w], poly[w + 1]]);
    }
}

fn finish(vertices: Vec<Point>, faces: Vec<Face>, with_faces: bool, face_lines: &[usize]) -> Result<Shape, GeometryError> {
    Shape::new(vertices, with_faces.then_some(faces)).map_err(|e| match e {
        GeometryError::Index(msg) | GeometryError::Precondition(msg) => GeometryError::Index(msg),
        GeometryError::DegenerateFace(fi) => match face_lines.get(fi) {
            Some(&line) => parse_err(line, "degenerate face (repeated vertex)"),
            None => GeometryError::DegenerateFace(fi),
        },
        other => other,
    })
}

fn parse_off(text: &str) -> Result<Shape, GeometryError> {
    let mut lines = content_lines(text);
    let (hl, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let mut toks: Vec<&str> = header.split_whitespace().collect();
    if toks.first().map(|t| t.eq_ignore_ascii_case("OFF")) != Some(true) {
        return Err(parse_err(hl, "missing OFF header"));
    }
    toks.remove(0);
    let (cl, counts) = if toks.is_empty() {
        let (l, c) = lines.next().ok_or_else(|| parse_err(hl, "missing counts line"))?;
        (l, c.split_whitespace().collect::<Vec<_>>())
    } else {
        (hl, toks)
    };
    if counts.len() < 2 {
        return Err(parse_err(cl, "expected vertex and face counts"));
    }
    let nv: usize = counts[0].parse().map_err(|_| parse_err(cl, "bad vertex count"))?;
    let nf: usize = counts[1].parse().map_err(|_| parse_err(cl, "bad face count"))?;
    if nv == 0 {
        return Err(GeometryError::EmptyVertexSet);
    }
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (l, s) = lines.next().ok_or_else(|| parse_err(cl, format!("expected {nv} vertices")))?;
        vertices.push(parse_point(s.split_whitespace(), l)?);
    }
    let mut faces = Vec::with_capacity(nf);
    let mut face_lines = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (l, s) = lines.next().ok_or_else(|| parse_err(cl, format!("expected {nf} faces")))?;
        let mut it = s.split_whitespace();
        let k: usize = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| parse_err(l, "bad face arity"))?;
        if k < 3 {
            return Err(parse_err(l, format!("face with {k} vertices")));
        }
        let mut poly = Vec::with_capacity(k);
        for _ in 0..k {
            let tok = it.next().ok_or_else(|| parse_err(l, "face truncated"))?;
            let idx: usize = tok.parse().map_err(|_| parse_err(l, format!("bad index {tok:?}")))?;
            if idx >= nv {
                return Err(GeometryError::Index(format!("line {l}: face index {idx} >= {nv} vertices")));
            }
            poly.push(idx);
        }
        let before = faces.len();
        fan(&poly, &mut faces);
        face_lines.extend(std::iter::repeat(l).take(faces.len() - before));
    }
    finish(vertices, faces, nf > 0, &face_lines)
}

fn parse_obj(text: &str) -> Result<Shape, GeometryError> {
    let mut vertices = Vec::new();
    let mut polys: Vec<(usize, Vec<i64>)> = Vec::new();
    for (l, s) in content_lines(text) {
        let mut it = s.split_whitespace();
        match it.next() {
            Some("v") => vertices.push(parse_point(it, l)?),
            Some("f") => {
                let idx = it
                    .map(|t| {
                        let head = t.split('/').next().unwrap_or("");
                        head.parse::<i64>().map_err(|_| parse_err(l, format!("bad face index {t:?}")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                if idx.len() < 3 {
                    return Err(parse_err(l, "face with fewer than 3 vertices"));
                }
                polys.push((l, idx));
            }
            _ => {}
        }
    }
    if vertices.is_empty() {
        return Err(GeometryError::EmptyVertexSet);
    }
    let n = vertices.len() as i64;
    let mut faces = Vec::new();
    let mut face_lines = Vec::new();
    for (l, idx) in &polys {
        let poly = idx
            .iter()
            .map(|&i| {
                let z = if i < 0 { n + i } else { i - 1 };
                if z < 0 || z >= n {
                    Err(GeometryError::Index(format!("line {l}: face index {i} outside 1..={n}")))
                } else {
                    Ok(z as usize)
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        let before = faces.len();
        fan(&poly, &mut faces);
        face_lines.extend(std::iter::repeat(*l).take(faces.len() - before));
    }
    finish(vertices, faces, !polys.is_empty(), &face_lines)
}

fn parse_xyz(text: &str) -> Result<Shape, GeometryError> {
    let vertices = content_lines(text)
        .map(|(l, s)| parse_point(s.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()), l))
        .collect::<Result<Vec<_>, _>>()?;
    if vertices.is_empty() {
        return Err(GeometryError::EmptyVertexSet);
    }
    Shape::point_cloud(vertices)
}

pub fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn cross(a: &Point, b: &Point) -> Point {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub fn norm(a: &Point) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

pub fn distance(a: &Point, b: &Point) -> f64 {
    norm(&sub(a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQUARE_OFF: &str = "OFF\n# unit square\n4 2 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n3 0 1 2\n3 0 2 3\n";

    #[test]
    fn parses_unit_square_off() {
        let s = Shape::parse(SQUARE_OFF, ShapeFormat::Off).unwrap();
        assert_eq!(s.len(), 4);
        assert_eq!(s.faces().unwrap().len(), 2);
        assert!((s.surface_area().unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn off_round_trip_is_exact() {
        let s = Shape::new(
            vec![[0.1, 1.0 / 3.0, -2.5e-7], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            Some(vec![[0, 1, 2], [0, 2, 3]]),
        )
        .unwrap();
        let back = Shape::parse(&s.to_off(), ShapeFormat::Off).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn xyz_has_no_faces() {
        let text: String = (0..10).map(|i| format!("{i} 0 {}\n", i * 2)).collect();
        let s = Shape::parse(&text, ShapeFormat::Xyz).unwrap();
        assert_eq!(s.len(), 10);
        assert!(s.faces().is_none());
        assert!(s.surface_area().is_err());
    }

    #[test]
    fn off_face_index_out_of_range() {
        let text = "OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n3 0 1 99\n";
        assert!(matches!(Shape::parse(text, ShapeFormat::Off), Err(GeometryError::Index(_))));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "OFF\n3 0 0\n0 0 0\n1 x 0\n0 1 0\n";
        match Shape::parse(text, ShapeFormat::Off) {
            Err(GeometryError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(Shape::parse("# nothing\n", ShapeFormat::Xyz), Err(GeometryError::EmptyVertexSet)));
    }

    #[test]
    fn obj_reads_v_and_f_records_only() {
        let text = "# cube corner\nv 0 0 0\nv 1 0 0\nvn 0 0 1\nv 1 1 0\nv 0 1 0\nvt 0 0\nf 1/1/1 2/2/1 3/3/1 4/4/1\n";
        let s = Shape::parse(text, ShapeFormat::Obj).unwrap();
        assert_eq!(s.len(), 4);
        assert_eq!(s.faces().unwrap(), &[[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn degenerate_faces_are_rejected() {
        assert!(matches!(
            Shape::new(vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], Some(vec![[0, 1, 1]])),
            Err(GeometryError::DegenerateFace(0))
        ));
    }

    #[test]
    fn collinear_triangle_has_zero_area_and_scaling_is_quadratic() {
        let s = Shape::new(vec![[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]], Some(vec![[0, 1, 2]])).unwrap();
        assert_eq!(s.surface_area().unwrap(), 0.0);
        let sq = Shape::parse(SQUARE_OFF, ShapeFormat::Off).unwrap();
        let scaled = sq.with_vertices(sq.vertices().iter().map(|v| v.map(|c| c * 3.0)).collect()).unwrap();
        assert!((scaled.surface_area().unwrap() - 9.0).abs() < 1e-12);
    }
}
