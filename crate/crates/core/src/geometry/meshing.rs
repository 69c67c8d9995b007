use std::collections::HashSet;
use std::f64::consts::PI;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use spade::handles::{FixedFaceHandle, InnerTag};
use spade::{ConstrainedDelaunayTriangulation, Point2 as SpadePoint, Triangulation};

use super::mesh::{dist, orient2, MeshedDomain, Point2};
use super::orthotope::{make_orthotope, Orthotope};
use crate::error::{invalid, Error, Result};

/// Minimum separation between polygon vertices.
pub const MIN_VERTEX_SEPARATION: f64 = 1e-9;

/// Maps applied to the unit disk for `mapped_ball` domains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BallMap {
    Identity,
    /// `x -> (a x_1, b x_2)`.
    Ellipse { a: f64, b: f64 },
    /// `x -> matrix x + offset`.
    Affine { matrix: [[f64; 2]; 2], offset: [f64; 2] },
}

impl BallMap {
    pub fn apply(&self, p: Point2) -> Point2 {
        match self {
            BallMap::Identity => p,
            BallMap::Ellipse { a, b } => [a * p[0], b * p[1]],
            BallMap::Affine { matrix: m, offset: o } => [
                m[0][0] * p[0] + m[0][1] * p[1] + o[0],
                m[1][0] * p[0] + m[1][1] * p[1] + o[1],
            ],
        }
    }

    fn jacobian_det(&self) -> f64 {
        match self {
            BallMap::Identity => 1.0,
            BallMap::Ellipse { a, b } => a * b,
            BallMap::Affine { matrix: m, .. } => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        }
    }
}

/// Structured description of a domain, as read from JSON documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DomainSpec {
    Orthotope { mu: Vec<f64> },
    Polygon { vertices: Vec<Point2> },
    MappedBall {
        #[serde(default = "identity_map")]
        map: BallMap,
    },
}

fn identity_map() -> BallMap {
    BallMap::Identity
}

impl DomainSpec {
    pub fn orthotope(&self) -> Option<Result<Orthotope>> {
        match self {
            DomainSpec::Orthotope { mu } => Some(make_orthotope(mu)),
            _ => None,
        }
    }
}

/// Short forms: `orthotope:1,0.84`, `polygon:0,0;1,0;1,1`, `disk`, `ellipse:1,1.3`.
impl FromStr for DomainSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.starts_with('{') {
            return Ok(serde_json::from_str(s)?);
        }
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let numbers = |txt: &str| -> Result<Vec<f64>> {
            txt.split(',')
                .filter(|t| !t.trim().is_empty())
                .map(|t| t.trim().parse::<f64>().map_err(|e| invalid(format!("bad number {t:?}: {e}"))))
                .collect()
        };
        match kind {
            "orthotope" => Ok(DomainSpec::Orthotope { mu: numbers(rest)? }),
            "disk" | "ball" => Ok(DomainSpec::MappedBall { map: BallMap::Identity }),
            "ellipse" => match numbers(rest)?.as_slice() {
                [a, b] => Ok(DomainSpec::MappedBall { map: BallMap::Ellipse { a: *a, b: *b } }),
                _ => Err(invalid("ellipse needs two semi-axes")),
            },
            "polygon" => {
                let vertices = rest
                    .split(';')
                    .map(|pair| match numbers(pair)?.as_slice() {
                        [x, y] => Ok([*x, *y]),
                        _ => Err(invalid(format!("bad polygon vertex {pair:?}"))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(DomainSpec::Polygon { vertices })
            }
            other => Err(invalid(format!("unknown domain kind {other:?}"))),
        }
    }
}

/// Diagonal pattern for structured rectangle meshes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagonalPattern {
    /// Every cell split along the same diagonal.
    Uniform,
    /// Diagonals alternate in a checkerboard, so the mesh shares the
    /// reflection symmetries of the rectangle when cell counts are even.
    Alternating,
}

/// Structured triangulation of `[0, lx] x [0, ly]` with `nx x ny` cells.
pub fn rectangle_mesh(lx: f64, ly: f64, nx: usize, ny: usize, pattern: DiagonalPattern) -> Result<MeshedDomain> {
    if !(lx > 0.0 && ly > 0.0) || nx == 0 || ny == 0 {
        return Err(invalid("rectangle mesh needs positive sides and cell counts"));
    }
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push([lx * i as f64 / nx as f64, ly * j as f64 / ny as f64]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            let slash = match pattern {
                DiagonalPattern::Uniform => true,
                DiagonalPattern::Alternating => (i + j) % 2 == 0,
            };
            if slash {
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            } else {
                triangles.push([a, b, d]);
                triangles.push([b, c, d]);
            }
        }
    }
    MeshedDomain::from_triangles(vertices, triangles)
}

/// Meshes a 2D orthotope with an alternating structured grid of edge length at most `sqrt(2) h`.
pub fn mesh_orthotope(ortho: &Orthotope, h: f64) -> Result<MeshedDomain> {
    if ortho.dim() != 2 {
        return Err(invalid(format!(
            "the finite-element mesher is planar; got a {}-dimensional orthotope",
            ortho.dim()
        )));
    }
    let (lx, ly) = (ortho.side(0), ortho.side(1));
    let cells = |l: f64| {
        let n = (l / h).ceil() as usize;
        n + n % 2
    };
    let (nx, ny) = (cells(lx), cells(ly));
    if nx < 2 || ny < 2 {
        return Err(Error::Resolution(format!("h = {h} leaves no interior vertex")));
    }
    rectangle_mesh(lx, ly, nx, ny, DiagonalPattern::Alternating)
}

/// Triangulates a domain description with target edge length `h`.
///
/// The resulting mesh has every edge no longer than `1.5 h`.
pub fn mesh_domain(spec: &DomainSpec, h: f64) -> Result<MeshedDomain> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(invalid("mesh size h must be positive"));
    }
    match spec {
        DomainSpec::Orthotope { mu } => mesh_orthotope(&make_orthotope(mu)?, h),
        DomainSpec::Polygon { vertices } => mesh_polygon(vertices, h),
        DomainSpec::MappedBall { map } => mesh_mapped_ball(map, h),
    }
}

/// Vertices of the regular `sides`-gon inscribed in the circle of given radius.
pub fn regular_polygon(sides: usize, radius: f64) -> Vec<Point2> {
    (0..sides)
        .map(|k| {
            let th = 2.0 * PI * k as f64 / sides as f64;
            [radius * th.cos(), radius * th.sin()]
        })
        .collect()
}

/// Number of sides used to approximate the unit circle at mesh size `h`.
pub fn disk_sides(h: f64) -> usize {
    ((2.0 * PI / h).ceil() as usize).max(64)
}

pub fn mesh_mapped_ball(map: &BallMap, h: f64) -> Result<MeshedDomain> {
    let det = map.jacobian_det();
    if !(det.abs() > 0.0) {
        return Err(Error::Geometry("ball map is singular".into()));
    }
    let disk = mesh_polygon(&regular_polygon(disk_sides(h), 1.0), h)?;
    if *map == BallMap::Identity {
        return Ok(disk);
    }
    let vertices: Vec<Point2> = disk.vertices.iter().map(|&p| map.apply(p)).collect();
    let triangles = if det > 0.0 {
        disk.triangles
    } else {
        disk.triangles.iter().map(|t| [t[0], t[2], t[1]]).collect()
    };
    MeshedDomain::from_triangles(vertices, triangles)
}

fn segments_intersect(p1: Point2, p2: Point2, q1: Point2, q2: Point2) -> bool {
    let d1 = orient2(q1, q2, p1);
    let d2 = orient2(q1, q2, p2);
    let d3 = orient2(p1, p2, q1);
    let d4 = orient2(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    let on = |a: Point2, b: Point2, c: Point2, d: f64| {
        d == 0.0
            && c[0] >= a[0].min(b[0])
            && c[0] <= a[0].max(b[0])
            && c[1] >= a[1].min(b[1])
            && c[1] <= a[1].max(b[1])
    };
    on(q1, q2, p1, d1) || on(q1, q2, p2, d2) || on(p1, p2, q1, d3) || on(p1, p2, q2, d4)
}

fn point_in_polygon(p: Point2, poly: &[Point2]) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

fn distance_to_segment(p: Point2, a: Point2, b: Point2) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let s = (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0);
    dist(p, [a[0] + s * dx, a[1] + s * dy])
}

/// Normalizes a polygon to counter-clockwise order after checking it is simple.
pub fn validate_polygon(vertices: &[Point2]) -> Result<Vec<Point2>> {
    let n = vertices.len();
    if n < 3 {
        return Err(Error::Geometry("polygon needs at least three vertices".into()));
    }
    if vertices.iter().any(|v| !(v[0].is_finite() && v[1].is_finite())) {
        return Err(Error::Geometry("polygon has non-finite coordinates".into()));
    }
    for i in 0..n {
        for j in i + 1..n {
            if dist(vertices[i], vertices[j]) < MIN_VERTEX_SEPARATION {
                return Err(Error::Geometry(format!("polygon vertices {i} and {j} coincide")));
            }
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            let (p1, p2) = (vertices[i], vertices[(i + 1) % n]);
            let (q1, q2) = (vertices[j], vertices[(j + 1) % n]);
            if segments_intersect(p1, p2, q1, q2) {
                return Err(Error::Geometry(format!("polygon edges {i} and {j} intersect")));
            }
        }
    }
    let signed: f64 = (0..n)
        .map(|i| {
            let (a, b) = (vertices[i], vertices[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum();
    let mut out = vertices.to_vec();
    if signed < 0.0 {
        out.reverse();
    }
    Ok(out)
}

type Cdt = ConstrainedDelaunayTriangulation<SpadePoint<f64>>;

/// Faces reachable from the convex hull without crossing a constraint edge.
fn outer_faces(cdt: &Cdt) -> HashSet<FixedFaceHandle<InnerTag>> {
    let mut outer = HashSet::new();
    let mut todo: Vec<_> = cdt.convex_hull().map(|e| e.rev()).collect();
    while let Some(e) = todo.pop() {
        if e.is_constraint_edge() {
            continue;
        }
        if let Some(face) = e.face().as_inner() {
            if outer.insert(face.fix()) {
                todo.push(e.prev().rev());
                todo.push(e.next().rev());
            }
        }
    }
    outer
}

/// Constrained Delaunay mesh of a simple polygon: boundary edges subdivided to
/// length at most `h`, a triangular lattice of spacing `h` inside, and midpoint
/// insertion until every edge is at most `1.5 h`.
pub fn mesh_polygon(vertices: &[Point2], h: f64) -> Result<MeshedDomain> {
    let poly = validate_polygon(vertices)?;
    let n = poly.len();
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for v in &poly {
        for k in 0..2 {
            lo[k] = lo[k].min(v[k]);
            hi[k] = hi[k].max(v[k]);
        }
    }
    if h >= 0.5 * (hi[0] - lo[0]).min(hi[1] - lo[1]) {
        return Err(Error::Resolution(format!("h = {h} is too coarse for the polygon")));
    }

    let geometry_err = |e: spade::InsertionError| Error::Geometry(format!("triangulation failed: {e:?}"));
    let mut cdt = Cdt::new();
    let mut ring = Vec::new();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        let pieces = (dist(a, b) / h).ceil().max(1.0) as usize;
        for k in 0..pieces {
            let s = k as f64 / pieces as f64;
            let p = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
            ring.push(cdt.insert(SpadePoint::new(p[0], p[1])).map_err(geometry_err)?);
        }
    }
    for i in 0..ring.len() {
        cdt.add_constraint(ring[i], ring[(i + 1) % ring.len()]);
    }

    let dy = h * 3f64.sqrt() / 2.0;
    let rows = ((hi[1] - lo[1]) / dy).ceil() as usize;
    let cols = ((hi[0] - lo[0]) / h).ceil() as usize + 1;
    for j in 1..rows {
        let y = lo[1] + j as f64 * dy;
        let shift = if j % 2 == 1 { 0.5 * h } else { 0.0 };
        for i in 0..=cols {
            let p = [lo[0] + shift + i as f64 * h, y];
            if !point_in_polygon(p, &poly) {
                continue;
            }
            let clearance = (0..n)
                .map(|k| distance_to_segment(p, poly[k], poly[(k + 1) % n]))
                .fold(f64::INFINITY, f64::min);
            if clearance >= 0.5 * h {
                cdt.insert(SpadePoint::new(p[0], p[1])).map_err(geometry_err)?;
            }
        }
    }

    for _round in 0..64 {
        let outer = outer_faces(&cdt);
        let mut splits = Vec::new();
        for face in cdt.inner_faces() {
            if outer.contains(&face.fix()) {
                continue;
            }
            let [a, b, c] = face.vertices().map(|v| v.position());
            for (p, q) in [(a, b), (b, c), (c, a)] {
                if (p.x - q.x).hypot(p.y - q.y) > 1.45 * h {
                    splits.push(SpadePoint::new(0.5 * (p.x + q.x), 0.5 * (p.y + q.y)));
                }
            }
        }
        if splits.is_empty() {
            break;
        }
        for p in splits {
            cdt.insert(p).map_err(geometry_err)?;
        }
    }

    let positions: Vec<Point2> = cdt.vertices().map(|v| [v.position().x, v.position().y]).collect();
    let mut used = vec![usize::MAX; positions.len()];
    let mut vertices_out = Vec::new();
    let mut triangles = Vec::new();
    let outer = outer_faces(&cdt);
    for face in cdt.inner_faces() {
        if outer.contains(&face.fix()) {
            continue;
        }
        let vs = face.vertices();
        let mut tri = [0usize; 3];
        for (k, v) in vs.iter().enumerate() {
            let i = v.fix().index();
            if used[i] == usize::MAX {
                used[i] = vertices_out.len();
                vertices_out.push(positions[i]);
            }
            tri[k] = used[i];
        }
        triangles.push(tri);
    }
    let mesh = MeshedDomain::from_triangles(vertices_out, triangles)?;
    if mesh.num_interior_vertices() == 0 {
        return Err(Error::Resolution(format!("h = {h} leaves no interior vertex")));
    }
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> Vec<Point2> {
        vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]
    }

    #[test]
    fn unit_square_edge_bound() {
        let m = mesh_polygon(&unit_square(), 0.1).unwrap();
        assert!(m.max_edge_length() <= 0.15, "max edge {}", m.max_edge_length());
        assert!((m.area() - 1.0).abs() < 1e-12);
        m.validate().unwrap();
        assert_eq!(m.boundary_loops().unwrap().len(), 1);
    }

    #[test]
    fn clockwise_polygon_is_reoriented() {
        let mut sq = unit_square();
        sq.reverse();
        let m = mesh_polygon(&sq, 0.2).unwrap();
        assert!((m.area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nonconvex_polygon() {
        let l_shape = vec![[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 1.0], [1.0, 2.0], [0.0, 2.0]];
        let m = mesh_polygon(&l_shape, 0.1).unwrap();
        assert!((m.area() - 3.0).abs() < 1e-12);
        assert!(m.max_edge_length() <= 0.15);
        for t in 0..m.triangles.len() {
            let c = m.centroid(t);
            assert!(!(c[0] > 1.0 && c[1] > 1.0));
        }
    }

    #[test]
    fn disk_polygon_area() {
        let m = mesh_polygon(&regular_polygon(64, 1.0), 0.05).unwrap();
        assert!((m.area() - PI).abs() / PI < 5e-3);
        // area formula for the inscribed 64-gon
        let exact = 0.5 * 64.0 * (2.0 * PI / 64.0).sin();
        assert!((m.area() - exact).abs() < 1e-10);
    }

    #[test]
    fn identity_ball_equals_disk() {
        let h = 0.2;
        let a = mesh_domain(&DomainSpec::MappedBall { map: BallMap::Identity }, h).unwrap();
        let b = mesh_polygon(&regular_polygon(disk_sides(h), 1.0), h).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn reflected_ball_keeps_positive_orientation() {
        let map = BallMap::Affine { matrix: [[-1.0, 0.0], [0.0, 1.0]], offset: [0.0, 0.0] };
        let m = mesh_mapped_ball(&map, 0.2).unwrap();
        m.validate().unwrap();
    }

    #[test]
    fn rejects_bad_polygons() {
        let bow_tie = vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(matches!(mesh_polygon(&bow_tie, 0.1), Err(Error::Geometry(_))));
        let close = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1e-10], [0.0, 1.0]];
        assert!(matches!(validate_polygon(&close), Err(Error::Geometry(_))));
        assert!(matches!(mesh_polygon(&unit_square(), 0.8), Err(Error::Resolution(_))));
    }

    #[test]
    fn orthotope_mesh_is_structured() {
        let o = make_orthotope(&[1.0, 1.0]).unwrap();
        let m = mesh_orthotope(&o, 0.3).unwrap();
        assert!(m.max_edge_length() <= 1.5 * 0.3);
        assert!((m.area() - PI * PI).abs() < 1e-10);
        assert!(mesh_orthotope(&make_orthotope(&[1.0]).unwrap(), 0.1).is_err());
    }

    #[test]
    fn parse_short_forms() {
        let d: DomainSpec = "orthotope:1,0.8409".parse().unwrap();
        assert_eq!(d, DomainSpec::Orthotope { mu: vec![1.0, 0.8409] });
        let p: DomainSpec = "polygon:0,0;1,0;0,1".parse().unwrap();
        assert!(matches!(p, DomainSpec::Polygon { ref vertices } if vertices.len() == 3));
        let j: DomainSpec = r#"{"type":"mapped_ball","map":{"kind":"ellipse","a":1.0,"b":1.3}}"#.parse().unwrap();
        assert_eq!(j, DomainSpec::MappedBall { map: BallMap::Ellipse { a: 1.0, b: 1.3 } });
        assert!("cube:1".parse::<DomainSpec>().is_err());
    }
}
