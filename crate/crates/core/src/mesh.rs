//! Interval and conforming triangular meshes with facet connectivity.
//!
//! Every facet stores a `plus` side (the lower element id) and a unit normal
//! pointing out of it. Interior facets also store the `minus` side; periodic
//! boundary pairs are merged into interior facets that carry the translation
//! taking minus-side coordinates to plus-side coordinates.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::MeshError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    Wall,
    Outflow,
    Periodic(u32),
}

impl BoundaryTag {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "wall" | "symmetry" => Some(Self::Wall),
            "outflow" => Some(Self::Outflow),
            _ => s
                .strip_prefix("periodic:")
                .and_then(|id| id.parse().ok())
                .map(Self::Periodic),
        }
    }
}

impl std::fmt::Display for BoundaryTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Wall => write!(f, "wall"),
            Self::Outflow => write!(f, "outflow"),
            Self::Periodic(id) => write!(f, "periodic:{id}"),
        }
    }
}

/// Boundary treatment per side of an interval or rectangle. `Periodic`
/// entries only need a placeholder id; the builders assign the pair ids.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SideTags {
    pub left: BoundaryTag,
    pub right: BoundaryTag,
    pub bottom: BoundaryTag,
    pub top: BoundaryTag,
}

impl SideTags {
    pub fn all(tag: BoundaryTag) -> Self {
        Self {
            left: tag,
            right: tag,
            bottom: tag,
            top: tag,
        }
    }

    pub fn periodic() -> Self {
        Self::all(BoundaryTag::Periodic(0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementGeometry {
    pub origin: [f64; 2],
    /// Columns are the images of the reference axes.
    pub jacobian: [[f64; 2]; 2],
    pub inverse: [[f64; 2]; 2],
    /// `|det J|`; the unweighted mass matrix is `det * I`.
    pub det: f64,
}

impl ElementGeometry {
    #[inline]
    pub fn map(&self, xi: [f64; 2]) -> [f64; 2] {
        let j = &self.jacobian;
        [
            self.origin[0] + j[0][0] * xi[0] + j[0][1] * xi[1],
            self.origin[1] + j[1][0] * xi[0] + j[1][1] * xi[1],
        ]
    }

    #[inline]
    pub fn inverse_map(&self, x: [f64; 2]) -> [f64; 2] {
        let d = [x[0] - self.origin[0], x[1] - self.origin[1]];
        let a = &self.inverse;
        [a[0][0] * d[0] + a[0][1] * d[1], a[1][0] * d[0] + a[1][1] * d[1]]
    }

    /// Physical gradient from a reference gradient: `J^{-T} g`.
    #[inline]
    pub fn physical_grad(&self, g: [f64; 2]) -> [f64; 2] {
        let a = &self.inverse;
        [a[0][0] * g[0] + a[1][0] * g[1], a[0][1] * g[0] + a[1][1] * g[1]]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    /// Vertex ids; 1D elements use the first two.
    pub vertices: [usize; 3],
    pub measure: f64,
    pub perimeter: f64,
    /// Characteristic size: cell length in 1D, `2|K| / |dK|` in 2D.
    pub size: f64,
    /// Facet id of each local facet.
    pub facets: [usize; 3],
    pub geometry: ElementGeometry,
    pub centroid: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FacetSide {
    pub element: usize,
    pub local: usize,
    /// True when the side's local facet parameter runs opposite to the plus side's.
    pub reversed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FacetKind {
    Interior {
        minus: FacetSide,
        /// `x_plus = x_minus + shift`; zero unless the facet is a periodic pair.
        shift: [f64; 2],
        periodic_pair: Option<u32>,
    },
    Boundary(BoundaryTag),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Facet {
    /// Vertex ids as seen from the plus side (equal entries in 1D).
    pub vertices: [usize; 2],
    pub plus: FacetSide,
    pub kind: FacetKind,
    pub normal: [f64; 2],
    pub measure: f64,
}

impl Facet {
    pub fn minus(&self) -> Option<FacetSide> {
        match self.kind {
            FacetKind::Interior { minus, .. } => Some(minus),
            FacetKind::Boundary(_) => None,
        }
    }

    pub fn is_boundary(&self) -> bool {
        matches!(self.kind, FacetKind::Boundary(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub dim: usize,
    pub vertices: Vec<[f64; 2]>,
    pub elements: Vec<Element>,
    pub facets: Vec<Facet>,
}

/// One neighbour of an element across an interior facet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub element: usize,
    pub facet: usize,
    /// Add to the neighbour's coordinates to express them in this element's frame.
    pub shift: [f64; 2],
}

impl Mesh {
    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn n_facets(&self) -> usize {
        self.facets.len()
    }

    pub fn n_local_facets(&self) -> usize {
        self.dim + 1
    }

    pub fn total_measure(&self) -> f64 {
        self.elements.iter().map(|e| e.measure).sum()
    }

    pub fn neighbors(&self, e: usize) -> impl Iterator<Item = Neighbor> + '_ {
        let el = &self.elements[e];
        el.facets[..self.n_local_facets()].iter().filter_map(move |&f| {
            let facet = &self.facets[f];
            match facet.kind {
                FacetKind::Interior { minus, shift, .. } => {
                    if facet.plus.element == e && minus.element != e {
                        Some(Neighbor {
                            element: minus.element,
                            facet: f,
                            shift,
                        })
                    } else if minus.element == e && facet.plus.element != e {
                        Some(Neighbor {
                            element: facet.plus.element,
                            facet: f,
                            shift: [-shift[0], -shift[1]],
                        })
                    } else {
                        None
                    }
                }
                FacetKind::Boundary(_) => None,
            }
        })
    }

    /// Outward unit normal of element `e` on its local facet `local`.
    pub fn outward_normal(&self, e: usize, local: usize) -> [f64; 2] {
        let f = &self.facets[self.elements[e].facets[local]];
        if f.plus.element == e && f.plus.local == local {
            f.normal
        } else {
            [-f.normal[0], -f.normal[1]]
        }
    }

    /// Physical point of facet parameter `t` as seen from `side`.
    pub fn facet_point(&self, facet: usize, side: FacetSide, t: f64) -> [f64; 2] {
        let _ = facet;
        let t = if side.reversed { 1.0 - t } else { t };
        let xi = crate::basis::facet_point(self.dim, side.local, t);
        self.elements[side.element].geometry.map(xi)
    }

    /// Build a mesh from cells. `tags` maps sorted boundary vertex pairs
    /// (`(v, v)` in 1D) to their boundary treatment.
    pub fn from_cells(
        dim: usize,
        vertices: Vec<[f64; 2]>,
        cells: Vec<[usize; 3]>,
        tags: &HashMap<(usize, usize), BoundaryTag>,
    ) -> Result<Self, MeshError> {
        if cells.is_empty() {
            return Err(MeshError::InvalidCellCount);
        }
        let nlf = dim + 1;
        let mut elements = Vec::with_capacity(cells.len());
        for (id, mut cell) in cells.into_iter().enumerate() {
            for &v in &cell[..nlf] {
                if v >= vertices.len() {
                    return Err(MeshError::Parse {
                        line: 0,
                        msg: format!("element {id} references missing vertex {v}"),
                    });
                }
            }
            let geometry = if dim == 1 {
                let (a, b) = (vertices[cell[0]][0], vertices[cell[1]][0]);
                if b < a {
                    cell.swap(0, 1);
                }
                let (a, b) = (vertices[cell[0]][0], vertices[cell[1]][0]);
                let len = b - a;
                if len <= 0.0 {
                    return Err(MeshError::Inverted(id));
                }
                ElementGeometry {
                    origin: [a, 0.0],
                    jacobian: [[len, 0.0], [0.0, 1.0]],
                    inverse: [[1.0 / len, 0.0], [0.0, 1.0]],
                    det: len,
                }
            } else {
                let mut g = triangle_geometry(&vertices, &cell);
                let signed = g.0;
                if signed == 0.0 || !signed.is_finite() {
                    return Err(MeshError::Inverted(id));
                }
                if signed < 0.0 {
                    cell.swap(1, 2);
                    g = triangle_geometry(&vertices, &cell);
                }
                g.1
            };
            let measure = if dim == 1 { geometry.det } else { 0.5 * geometry.det };
            let perimeter = if dim == 1 {
                2.0
            } else {
                (0..3)
                    .map(|f| dist(vertices[cell[f]], vertices[cell[(f + 1) % 3]]))
                    .sum()
            };
            let size = if dim == 1 { measure } else { 2.0 * measure / perimeter };
            let centroid = if dim == 1 {
                [0.5 * (vertices[cell[0]][0] + vertices[cell[1]][0]), 0.0]
            } else {
                let mut c = [0.0; 2];
                for &v in &cell {
                    c[0] += vertices[v][0] / 3.0;
                    c[1] += vertices[v][1] / 3.0;
                }
                c
            };
            elements.push(Element {
                vertices: cell,
                measure,
                perimeter,
                size,
                facets: [usize::MAX; 3],
                geometry,
                centroid,
            });
        }

        // Group local facets by their (sorted) vertex key.
        let mut by_key: BTreeMap<(usize, usize), Vec<(usize, usize)>> = BTreeMap::new();
        for (e, el) in elements.iter().enumerate() {
            for lf in 0..nlf {
                let (a, b) = local_facet_vertices(dim, &el.vertices, lf);
                by_key.entry((a.min(b), a.max(b))).or_default().push((e, lf));
            }
        }

        let mut facets = Vec::new();
        let mut periodic: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (key, sides) in &by_key {
            match sides.as_slice() {
                [(e0, l0)] => {
                    let tag = *tags.get(key).ok_or(MeshError::UntaggedBoundary(key.0, key.1))?;
                    let plus = FacetSide {
                        element: *e0,
                        local: *l0,
                        reversed: false,
                    };
                    let (va, vb) = local_facet_vertices(dim, &elements[*e0].vertices, *l0);
                    let (normal, measure) = facet_normal(dim, &vertices, va, vb, *l0);
                    if let BoundaryTag::Periodic(id) = tag {
                        periodic.entry(id).or_default().push(facets.len());
                    }
                    facets.push(Facet {
                        vertices: [va, vb],
                        plus,
                        kind: FacetKind::Boundary(tag),
                        normal,
                        measure,
                    });
                }
                [(e0, l0), (e1, l1)] => {
                    let (p, m) = if e0 <= e1 {
                        ((*e0, *l0), (*e1, *l1))
                    } else {
                        ((*e1, *l1), (*e0, *l0))
                    };
                    if p.0 == m.0 {
                        return Err(MeshError::NonConforming(key.0, key.1, 1));
                    }
                    let (va, vb) = local_facet_vertices(dim, &elements[p.0].vertices, p.1);
                    let (vc, _) = local_facet_vertices(dim, &elements[m.0].vertices, m.1);
                    let (normal, measure) = facet_normal(dim, &vertices, va, vb, p.1);
                    facets.push(Facet {
                        vertices: [va, vb],
                        plus: FacetSide {
                            element: p.0,
                            local: p.1,
                            reversed: false,
                        },
                        kind: FacetKind::Interior {
                            minus: FacetSide {
                                element: m.0,
                                local: m.1,
                                reversed: dim == 2 && vc != va,
                            },
                            shift: [0.0, 0.0],
                            periodic_pair: None,
                        },
                        normal,
                        measure,
                    });
                }
                other => return Err(MeshError::NonConforming(key.0, key.1, other.len())),
            }
        }
        if let Some(key) = tags.keys().find(|k| !by_key.contains_key(k)) {
            return Err(MeshError::UnknownBoundaryFacet(key.0, key.1));
        }

        let mut mesh = Mesh {
            dim,
            vertices,
            elements,
            facets,
        };
        mesh.merge_periodic(periodic)?;
        for (f, facet) in mesh.facets.iter().enumerate() {
            mesh.elements[facet.plus.element].facets[facet.plus.local] = f;
            if let Some(m) = facet.minus() {
                mesh.elements[m.element].facets[m.local] = f;
            }
        }
        Ok(mesh)
    }

    fn merge_periodic(&mut self, pairs: BTreeMap<u32, Vec<usize>>) -> Result<(), MeshError> {
        let mut remove = Vec::new();
        for (id, list) in pairs {
            let [fa, fb] = list[..] else {
                return Err(MeshError::PeriodicMismatch(
                    id,
                    format!("expected 2 facets, found {}", list.len()),
                ));
            };
            let (a, b) = (&self.facets[fa], &self.facets[fb]);
            if (a.measure - b.measure).abs() > 1e-12 * a.measure.max(1.0) {
                return Err(MeshError::PeriodicMismatch(id, "unequal facet measures".into()));
            }
            if (a.normal[0] + b.normal[0]).abs() > 1e-12 || (a.normal[1] + b.normal[1]).abs() > 1e-12 {
                return Err(MeshError::PeriodicMismatch(id, "normals are not opposite".into()));
            }
            let (plus_f, minus_f) = if a.plus.element <= b.plus.element {
                (fa, fb)
            } else {
                (fb, fa)
            };
            let plus = self.facets[plus_f].clone();
            let minus = self.facets[minus_f].clone();
            if plus.plus.element == minus.plus.element {
                return Err(MeshError::PeriodicMismatch(id, "pair lies on one element".into()));
            }
            let mid = |f: &Facet| {
                let (p, q) = (self.vertices[f.vertices[0]], self.vertices[f.vertices[1]]);
                [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]
            };
            let (mp, mm) = (mid(&plus), mid(&minus));
            let shift = [mp[0] - mm[0], mp[1] - mm[1]];
            let reversed = if self.dim == 1 {
                false
            } else {
                let pa = self.vertices[plus.vertices[0]];
                let ma = self.vertices[minus.vertices[0]];
                let d = dist(pa, [ma[0] + shift[0], ma[1] + shift[1]]);
                d > 1e-9 * plus.measure
            };
            self.facets[plus_f].kind = FacetKind::Interior {
                minus: FacetSide {
                    element: minus.plus.element,
                    local: minus.plus.local,
                    reversed,
                },
                shift,
                periodic_pair: Some(id),
            };
            remove.push(minus_f);
        }
        remove.sort_unstable();
        for f in remove.into_iter().rev() {
            self.facets.remove(f);
        }
        Ok(())
    }

    /// Check the structural invariants; returns a description of the first violation.
    pub fn validate(&self) -> Result<(), String> {
        for (f, facet) in self.facets.iter().enumerate() {
            let n = facet.normal;
            if ((n[0] * n[0] + n[1] * n[1]).sqrt() - 1.0).abs() > 1e-14 {
                return Err(format!("facet {f}: normal is not unit"));
            }
            if let Some(m) = facet.minus() {
                if m.element == facet.plus.element {
                    return Err(format!("facet {f}: both sides are element {}", m.element));
                }
            }
        }
        if self.dim == 2 {
            for (e, el) in self.elements.iter().enumerate() {
                let mut s = [0.0; 2];
                for lf in 0..3 {
                    let n = self.outward_normal(e, lf);
                    let len = self.facets[el.facets[lf]].measure;
                    s[0] += n[0] * len;
                    s[1] += n[1] * len;
                }
                if s[0].abs() > 1e-12 * el.perimeter || s[1].abs() > 1e-12 * el.perimeter {
                    return Err(format!("element {e}: weighted normals do not close"));
                }
            }
        }
        Ok(())
    }

    /// Serialise to the ASCII mesh format.
    pub fn to_ascii(&self) -> String {
        let nlf = self.n_local_facets();
        let mut boundary: Vec<(usize, usize, BoundaryTag)> = Vec::new();
        for facet in &self.facets {
            match facet.kind {
                FacetKind::Boundary(tag) => boundary.push((facet.vertices[0], facet.vertices[1], tag)),
                FacetKind::Interior {
                    minus,
                    periodic_pair: Some(id),
                    ..
                } => {
                    boundary.push((facet.vertices[0], facet.vertices[1], BoundaryTag::Periodic(id)));
                    let (a, b) = local_facet_vertices(self.dim, &self.elements[minus.element].vertices, minus.local);
                    boundary.push((a, b, BoundaryTag::Periodic(id)));
                }
                _ => {}
            }
        }
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} {} {} {}",
            self.dim,
            self.vertices.len(),
            self.elements.len(),
            boundary.len()
        );
        for v in &self.vertices {
            let _ = writeln!(out, "{:e} {:e}", v[0], v[1]);
        }
        for el in &self.elements {
            let ids: Vec<String> = el.vertices[..nlf].iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", ids.join(" "));
        }
        for (a, b, tag) in boundary {
            let _ = writeln!(out, "{a} {b} {tag}");
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), MeshError> {
        std::fs::write(path, self.to_ascii()).map_err(|source| MeshError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn parse(text: &str) -> Result<Self, MeshError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let perr = |line: usize, msg: &str| MeshError::Parse {
            line,
            msg: msg.to_string(),
        };
        let (ln, header) = lines.next().ok_or_else(|| perr(1, "empty mesh file"))?;
        let head: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|e| perr(ln, &format!("bad header: {e}")))?;
        let [dim, nv, ne, nbf] = head[..] else {
            return Err(perr(ln, "header must be `dim nV nE nBF`"));
        };
        if dim != 1 && dim != 2 {
            return Err(perr(ln, "dim must be 1 or 2"));
        }
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (ln, l) = lines.next().ok_or_else(|| perr(0, "missing vertex lines"))?;
            let xs: Vec<f64> = l
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| perr(ln, &format!("bad vertex: {e}")))?;
            match xs[..] {
                [x] => vertices.push([x, 0.0]),
                [x, y] => vertices.push([x, y]),
                _ => return Err(perr(ln, "vertex line must hold 1 or 2 coordinates")),
            }
        }
        let mut cells = Vec::with_capacity(ne);
        for _ in 0..ne {
            let (ln, l) = lines.next().ok_or_else(|| perr(0, "missing element lines"))?;
            let ids: Vec<usize> = l
                .split_whitespace()
                .map(|t| t.parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|e| perr(ln, &format!("bad element: {e}")))?;
            if ids.len() != dim + 1 {
                return Err(perr(ln, "wrong number of element vertices"));
            }
            if ids.iter().any(|&v| v >= nv) {
                return Err(perr(ln, "vertex id out of range"));
            }
            let mut cell = [0usize; 3];
            cell[..ids.len()].copy_from_slice(&ids);
            cells.push(cell);
        }
        let mut tags = HashMap::new();
        for _ in 0..nbf {
            let (ln, l) = lines.next().ok_or_else(|| perr(0, "missing boundary lines"))?;
            let tok: Vec<&str> = l.split_whitespace().collect();
            let [a, b, t] = tok[..] else {
                return Err(perr(ln, "boundary line must be `v0 v1 tag`"));
            };
            let a: usize = a.parse().map_err(|_| perr(ln, "bad vertex id"))?;
            let b: usize = b.parse().map_err(|_| perr(ln, "bad vertex id"))?;
            let tag = BoundaryTag::parse(t).ok_or_else(|| perr(ln, &format!("unknown tag `{t}`")))?;
            tags.insert((a.min(b), a.max(b)), tag);
        }
        Self::from_cells(dim, vertices, cells, &tags)
    }

    pub fn load(path: &Path) -> Result<Self, MeshError> {
        let text = std::fs::read_to_string(path).map_err(|source| MeshError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }
}

/// Uniform interval mesh; `periodic` pairs the two ends, otherwise both are walls.
pub fn build_interval_mesh(a: f64, b: f64, n: usize, periodic: bool) -> Result<Mesh, MeshError> {
    let tag = if periodic {
        BoundaryTag::Periodic(0)
    } else {
        BoundaryTag::Wall
    };
    interval_mesh(a, b, n, [tag, tag])
}

pub fn interval_mesh(a: f64, b: f64, n: usize, ends: [BoundaryTag; 2]) -> Result<Mesh, MeshError> {
    if n == 0 {
        return Err(MeshError::InvalidCellCount);
    }
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(MeshError::DegenerateDomain(format!("[{a}, {b}]")));
    }
    let periodic = matches!(ends[0], BoundaryTag::Periodic(_));
    if periodic != matches!(ends[1], BoundaryTag::Periodic(_)) {
        return Err(MeshError::DegenerateDomain(
            "periodicity must apply to both ends".into(),
        ));
    }
    if periodic && n < 2 {
        return Err(MeshError::InvalidCellCount);
    }
    let hx = (b - a) / n as f64;
    let vertices: Vec<[f64; 2]> = (0..=n)
        .map(|i| [if i == n { b } else { a + i as f64 * hx }, 0.0])
        .collect();
    let cells: Vec<[usize; 3]> = (0..n).map(|i| [i, i + 1, 0]).collect();
    let mut tags = HashMap::new();
    let (l, r) = if periodic {
        (BoundaryTag::Periodic(0), BoundaryTag::Periodic(0))
    } else {
        (ends[0], ends[1])
    };
    tags.insert((0, 0), l);
    tags.insert((n, n), r);
    Mesh::from_cells(1, vertices, cells, &tags)
}

/// `nx * ny` rectangles on `[x0, x1] x [y0, y1]`, each split along the
/// diagonal from its lower-left to upper-right corner.
pub fn build_structured_triangular(nx: usize, ny: usize, domain: [f64; 4], sides: SideTags) -> Result<Mesh, MeshError> {
    let [x0, x1, y0, y1] = domain;
    if nx == 0 || ny == 0 {
        return Err(MeshError::InvalidCellCount);
    }
    if !(x0 < x1 && y0 < y1) {
        return Err(MeshError::DegenerateDomain(format!("{domain:?}")));
    }
    let px = matches!(sides.left, BoundaryTag::Periodic(_));
    let py = matches!(sides.bottom, BoundaryTag::Periodic(_));
    if px != matches!(sides.right, BoundaryTag::Periodic(_)) || py != matches!(sides.top, BoundaryTag::Periodic(_)) {
        return Err(MeshError::DegenerateDomain(
            "periodicity must apply to opposite sides together".into(),
        ));
    }
    let (hx, hy) = ((x1 - x0) / nx as f64, (y1 - y0) / ny as f64);
    let vid = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            let x = if i == nx { x1 } else { x0 + i as f64 * hx };
            let y = if j == ny { y1 } else { y0 + j as f64 * hy };
            vertices.push([x, y]);
        }
    }
    let mut cells = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1));
            cells.push([a, b, c]);
            cells.push([a, c, d]);
        }
    }
    let mut tags = HashMap::new();
    let key = |p: usize, q: usize| (p.min(q), p.max(q));
    for j in 0..ny {
        let (l, r) = if px {
            (BoundaryTag::Periodic(j as u32), BoundaryTag::Periodic(j as u32))
        } else {
            (sides.left, sides.right)
        };
        tags.insert(key(vid(0, j), vid(0, j + 1)), l);
        tags.insert(key(vid(nx, j), vid(nx, j + 1)), r);
    }
    for i in 0..nx {
        let id = (ny + i) as u32;
        let (bt, tp) = if py {
            (BoundaryTag::Periodic(id), BoundaryTag::Periodic(id))
        } else {
            (sides.bottom, sides.top)
        };
        tags.insert(key(vid(i, 0), vid(i + 1, 0)), bt);
        tags.insert(key(vid(i, ny), vid(i + 1, ny)), tp);
    }
    Mesh::from_cells(2, vertices, cells, &tags)
}

fn local_facet_vertices(dim: usize, cell: &[usize; 3], lf: usize) -> (usize, usize) {
    if dim == 1 {
        (cell[lf], cell[lf])
    } else {
        (cell[lf], cell[(lf + 1) % 3])
    }
}

fn facet_normal(dim: usize, vertices: &[[f64; 2]], a: usize, b: usize, lf: usize) -> ([f64; 2], f64) {
    if dim == 1 {
        return (if lf == 0 { [-1.0, 0.0] } else { [1.0, 0.0] }, 1.0);
    }
    let (p, q) = (vertices[a], vertices[b]);
    let d = [q[0] - p[0], q[1] - p[1]];
    let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
    ([d[1] / len, -d[0] / len], len)
}

fn triangle_geometry(vertices: &[[f64; 2]], cell: &[usize; 3]) -> (f64, ElementGeometry) {
    let (p0, p1, p2) = (vertices[cell[0]], vertices[cell[1]], vertices[cell[2]]);
    let j = [[p1[0] - p0[0], p2[0] - p0[0]], [p1[1] - p0[1], p2[1] - p0[1]]];
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let inv = [[j[1][1] / det, -j[0][1] / det], [-j[1][0] / det, j[0][0] / det]];
    (
        det,
        ElementGeometry {
            origin: p0,
            jacobian: j,
            inverse: inv,
            det: det.abs(),
        },
    )
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_counts() {
        let m = build_interval_mesh(0.0, 1.0, 4, false).unwrap();
        assert_eq!(m.n_elements(), 4);
        assert_eq!(m.n_facets(), 5);
        assert!(m.elements.iter().all(|e| (e.measure - 0.25).abs() < 1e-15));
        let p = build_interval_mesh(0.0, 1.0, 4, true).unwrap();
        assert_eq!(p.n_facets(), 4);
        let paired = p
            .facets
            .iter()
            .filter(|f| {
                matches!(
                    f.kind,
                    FacetKind::Interior {
                        periodic_pair: Some(_),
                        ..
                    }
                )
            })
            .count();
        assert_eq!(paired, 1);
        let m = build_interval_mesh(0.0, 2.0, 200, false).unwrap();
        assert!((m.elements[17].measure - 0.01).abs() < 1e-15);
        assert!((m.total_measure() - 2.0).abs() < 2e-12);
    }

    #[test]
    fn interval_errors() {
        assert!(matches!(
            build_interval_mesh(0.0, 1.0, 0, false),
            Err(MeshError::InvalidCellCount)
        ));
        assert!(matches!(
            build_interval_mesh(1.0, 1.0, 3, false),
            Err(MeshError::DegenerateDomain(_))
        ));
    }

    #[test]
    fn structured_counts_and_invariants() {
        let m = build_structured_triangular(1, 1, [0.0, 1.0, 0.0, 1.0], SideTags::all(BoundaryTag::Wall)).unwrap();
        assert_eq!(m.n_elements(), 2);
        assert!(m.elements.iter().all(|e| (e.measure - 0.5).abs() < 1e-15));
        let m = build_structured_triangular(25, 25, [0.0, 1.0, 0.0, 1.0], SideTags::periodic()).unwrap();
        assert_eq!(m.n_elements(), 1250);
        m.validate().unwrap();
        assert!((m.total_measure() - 1.0).abs() < 1e-12);
        // Euler characteristic of the open complex: V - E + F = 1.
        let m = build_structured_triangular(2, 2, [0.0, 1.0, 0.0, 1.0], SideTags::all(BoundaryTag::Outflow)).unwrap();
        assert_eq!(m.vertices.len(), 9);
        assert_eq!(m.n_facets(), 16);
        assert_eq!(m.n_elements(), 8);
    }

    #[test]
    fn degenerate_rectangle_is_rejected() {
        assert!(build_structured_triangular(2, 2, [0.0, 0.0, 0.0, 1.0], SideTags::periodic()).is_err());
        assert!(build_structured_triangular(0, 2, [0.0, 1.0, 0.0, 1.0], SideTags::periodic()).is_err());
    }

    #[test]
    fn periodic_pairs_have_opposite_normals() {
        let m = build_structured_triangular(3, 2, [0.0, 2.0, 0.0, 1.0], SideTags::periodic()).unwrap();
        let mut n = 0;
        for f in &m.facets {
            if let FacetKind::Interior {
                minus,
                periodic_pair: Some(_),
                shift,
            } = f.kind
            {
                n += 1;
                let other = m.outward_normal(minus.element, minus.local);
                assert!((other[0] + f.normal[0]).abs() < 1e-14);
                assert!((other[1] + f.normal[1]).abs() < 1e-14);
                assert!(shift[0].abs() == 2.0 || shift[1].abs() == 1.0);
            }
        }
        assert_eq!(n, 3 + 2);
        assert!(m.facets.iter().all(|f| !f.is_boundary()));
    }

    #[test]
    fn facet_points_agree_from_both_sides() {
        let m = build_structured_triangular(3, 3, [0.0, 1.0, 0.0, 1.0], SideTags::periodic()).unwrap();
        for (fi, f) in m.facets.iter().enumerate() {
            let minus = f.minus().unwrap();
            let shift = match f.kind {
                FacetKind::Interior { shift, .. } => shift,
                _ => unreachable!(),
            };
            for t in [0.1, 0.5, 0.8] {
                let p = m.facet_point(fi, f.plus, t);
                let q = m.facet_point(fi, minus, t);
                assert!((p[0] - q[0] - shift[0]).abs() < 1e-12);
                assert!((p[1] - q[1] - shift[1]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_triangle_file() {
        let text = "2 3 1 3\n0 0\n1 0\n0 1\n0 1 2\n0 1 wall\n1 2 outflow\n2 0 wall\n";
        let m = Mesh::parse(text).unwrap();
        assert_eq!(m.n_elements(), 1);
        assert_eq!(m.n_facets(), 3);
        assert!(m.facets.iter().all(|f| f.is_boundary()));
    }

    #[test]
    fn clockwise_triangle_is_repaired() {
        let text = "2 3 1 3\n0 0\n0 2\n2 0\n0 1 2\n0 1 wall\n1 2 wall\n2 0 wall\n";
        let m = Mesh::parse(text).unwrap();
        // Signed area of the listed order is -2; repaired area is +2.
        assert!((m.elements[0].measure - 2.0).abs() < 1e-15);
        m.validate().unwrap();
    }

    #[test]
    fn file_errors() {
        assert!(matches!(
            Mesh::parse("2 3 1 0\n0 0\n1 0\n0 1\n0 1 2\n"),
            Err(MeshError::UntaggedBoundary(..))
        ));
        assert!(matches!(
            Mesh::parse("2 3 1 0\n0 0\n1 0\n2 0\n0 1 2\n"),
            Err(MeshError::Inverted(0))
        ));
        assert!(matches!(Mesh::parse("2 x\n"), Err(MeshError::Parse { .. })));
        // Edge (0,1) shared by three triangles.
        let text = "2 5 3 0\n0 0\n1 0\n0 1\n0 -1\n1 1\n0 1 2\n1 0 3\n0 1 4\n";
        assert!(matches!(Mesh::parse(text), Err(MeshError::NonConforming(..))));
    }

    #[test]
    fn round_trip_preserves_connectivity() {
        for sides in [SideTags::periodic(), SideTags::all(BoundaryTag::Wall)] {
            let m = build_structured_triangular(2, 2, [0.0, 1.0, 0.0, 1.0], sides).unwrap();
            let back = Mesh::parse(&m.to_ascii()).unwrap();
            assert_eq!(back.n_elements(), m.n_elements());
            assert_eq!(back.n_facets(), m.n_facets());
            for (a, b) in m.elements.iter().zip(&back.elements) {
                assert_eq!(a.vertices, b.vertices);
                assert!((a.measure - b.measure).abs() < 1e-14);
            }
            for (a, b) in m.facets.iter().zip(&back.facets) {
                assert_eq!(a.plus, b.plus);
                assert_eq!(a.minus(), b.minus());
                assert!((a.measure - b.measure).abs() < 1e-14);
            }
        }
        let m = build_interval_mesh(0.0, 1.0, 5, true).unwrap();
        let back = Mesh::parse(&m.to_ascii()).unwrap();
        assert_eq!(back, m);
    }
}
