//! Triangulated unit disk with boundary electrode groups.
//!
//! The mesh is a structured polar-ring triangulation: a center node, interior
//! rings of about `6i` equispaced nodes at radius `i/N`, and a boundary ring whose
//! nodes are placed so that every electrode arc starts and ends on a node.
//! Consecutive rings are stitched by an angular merge, which yields
//! `n_inner + n_outer` counterclockwise triangles per annulus.

use std::f64::consts::PI;
use std::io::Write;

use crate::error::{EitError, Result};

/// Geometric tolerance used for "inside the unit disk" tests.
pub const EPS_GEOM: f64 = 1e-9;

/// Barycentric weights down to this value are accepted as inside a triangle.
pub const BARY_TOL: f64 = 1e-12;

/// Refinement level used for dataset generation (7872 triangles).
pub const REFERENCE_LEVEL: u32 = 3;

pub const DEFAULT_ELECTRODES: usize = 16;
pub const DEFAULT_COVERAGE: f64 = 0.5;

pub type Point = [f64; 2];

/// Angular extent of one electrode, in radians. `start < end`, with `start`
/// possibly negative for electrode 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElectrodeArc {
    pub center: f64,
    pub start: f64,
    pub end: f64,
}

impl ElectrodeArc {
    pub fn width(&self) -> f64 {
        self.end - self.start
    }

    /// True if `theta` (any branch) falls on this arc.
    pub fn contains(&self, theta: f64) -> bool {
        let d = wrap_angle(theta - self.center);
        d.abs() <= 0.5 * self.width() + 1e-12
    }
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta % (2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    } else if t <= -PI {
        t += 2.0 * PI;
    }
    t
}

/// Equispaced electrode arcs, electrode `k` (zero-based) centered at `2πk/n`.
pub fn electrode_arcs(n_electrodes: usize, coverage_fraction: f64) -> Result<Vec<ElectrodeArc>> {
    if n_electrodes == 0 {
        return Err(EitError::InvalidConfig("electrode count must be positive".into()));
    }
    if !(coverage_fraction > 0.0 && coverage_fraction < 1.0) {
        return Err(EitError::InvalidConfig(format!(
            "electrode coverage fraction {coverage_fraction} must lie in (0, 1)"
        )));
    }
    let pitch = 2.0 * PI / n_electrodes as f64;
    let half = 0.5 * coverage_fraction * pitch;
    Ok((0..n_electrodes)
        .map(|k| {
            let center = pitch * k as f64;
            ElectrodeArc {
                center,
                start: center - half,
                end: center + half,
            }
        })
        .collect())
}

/// Where a query point landed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PointLocation {
    /// `p` lies inside (or on) `element`; `weights` reconstruct `p`.
    Inside { element: usize, weights: [f64; 3] },
    /// `p` lies in the disk but in the thin sliver between the polygonal mesh
    /// boundary and the unit circle. It was projected onto the nearest
    /// boundary edge of `element`; `weights` reconstruct the projection.
    Snapped { element: usize, weights: [f64; 3] },
    /// `‖p‖ > 1 + EPS_GEOM`.
    Outside,
}

impl PointLocation {
    pub fn element(&self) -> Option<(usize, [f64; 3])> {
        match *self {
            PointLocation::Inside { element, weights } | PointLocation::Snapped { element, weights } => {
                Some((element, weights))
            }
            PointLocation::Outside => None,
        }
    }
}

const BUCKETS: usize = 64;

#[derive(Debug, Clone)]
struct BucketIndex {
    cells: Vec<Vec<u32>>,
}

impl BucketIndex {
    fn cell_of(x: f64) -> usize {
        let c = ((x + 1.0) * 0.5 * BUCKETS as f64).floor();
        c.clamp(0.0, (BUCKETS - 1) as f64) as usize
    }
}

/// Triangulated unit disk.
#[derive(Debug, Clone)]
pub struct TriMesh {
    pub nodes: Vec<Point>,
    /// Counterclockwise node triples.
    pub elements: Vec<[usize; 3]>,
    /// Boundary nodes in counterclockwise order.
    pub boundary_nodes: Vec<usize>,
    /// Boundary nodes of each electrode arc, counterclockwise.
    pub electrode_groups: Vec<Vec<usize>>,
    /// Arc-length weight of each node in `electrode_groups` (same layout).
    pub electrode_weights: Vec<Vec<f64>>,
    pub arcs: Vec<ElectrodeArc>,
    /// Number of rings (inverse of the radial spacing).
    pub rings: usize,
    /// `(a, b, element)` for every boundary edge, `b` following `a`.
    boundary_edges: Vec<(usize, usize, usize)>,
    buckets: BucketIndex,
}

/// Builds the reference disk mesh family with 16 electrodes at 50% coverage.
///
/// Level `L` uses `9·2^(L-1)` rings, so element counts grow about 4x per level.
/// Every ring carries a multiple of the electrode count of nodes, so the mesh
/// maps onto itself under rotation by one electrode pitch.
pub fn build_disk_mesh(refinement_level: u32) -> TriMesh {
    let arcs = electrode_arcs(DEFAULT_ELECTRODES, DEFAULT_COVERAGE).expect("default electrode layout");
    build_disk_mesh_with(refinement_level, &arcs)
}

pub fn build_disk_mesh_with(refinement_level: u32, arcs: &[ElectrodeArc]) -> TriMesh {
    assert!(refinement_level >= 1, "refinement level must be at least 1");
    let rings = 9usize << (refinement_level - 1);
    let mut nodes: Vec<Point> = vec![[0.0, 0.0]];
    // Angles of each ring, stored unwrapped and increasing.
    let mut ring_angles: Vec<Vec<f64>> = Vec::with_capacity(rings);
    let mut ring_offsets: Vec<usize> = Vec::with_capacity(rings);

    let sectors = arcs.len().max(1);
    for i in 1..rings {
        // Nearest multiple of `sectors` to 6i.
        let n = sectors * ((6 * i + sectors / 2) / sectors).max(1);
        let r = i as f64 / rings as f64;
        ring_offsets.push(nodes.len());
        let angles: Vec<f64> = (0..n).map(|j| 2.0 * PI * j as f64 / n as f64).collect();
        nodes.extend(angles.iter().map(|&t| [r * t.cos(), r * t.sin()]));
        ring_angles.push(angles);
    }

    // Boundary ring: subdivide each electrode arc and each gap uniformly.
    let target = 2.0 * PI / (6 * rings) as f64;
    let mut boundary_angles = Vec::new();
    let mut electrode_node_pos: Vec<Vec<usize>> = Vec::with_capacity(arcs.len());
    for (k, arc) in arcs.iter().enumerate() {
        let next_start = if k + 1 < arcs.len() {
            arcs[k + 1].start
        } else {
            arcs[0].start + 2.0 * PI
        };
        let pieces = ((arc.width() / target) - 1e-9).ceil().max(1.0) as usize;
        let mut group = Vec::with_capacity(pieces + 1);
        for p in 0..pieces {
            group.push(boundary_angles.len());
            boundary_angles.push(arc.start + arc.width() * p as f64 / pieces as f64);
        }
        // The arc end is the first node of the following gap.
        group.push(boundary_angles.len());
        electrode_node_pos.push(group);
        let gap = next_start - arc.end;
        let gap_pieces = ((gap / target) - 1e-9).ceil().max(1.0) as usize;
        for p in 0..gap_pieces {
            boundary_angles.push(arc.end + gap * p as f64 / gap_pieces as f64);
        }
    }
    let boundary_offset = nodes.len();
    nodes.extend(boundary_angles.iter().map(|&t| [t.cos(), t.sin()]));
    ring_offsets.push(boundary_offset);
    ring_angles.push(boundary_angles.clone());

    let mut elements = Vec::new();
    // Fan around the center.
    let first = &ring_angles[0];
    let n1 = first.len();
    for j in 0..n1 {
        elements.push([0, ring_offsets[0] + j, ring_offsets[0] + (j + 1) % n1]);
    }
    for r in 1..ring_angles.len() {
        stitch_rings(
            &ring_angles[r - 1],
            ring_offsets[r - 1],
            &ring_angles[r],
            ring_offsets[r],
            &mut elements,
        );
    }

    let nb = boundary_angles.len();
    let boundary_nodes: Vec<usize> = (0..nb).map(|j| boundary_offset + j).collect();
    let electrode_groups: Vec<Vec<usize>> = electrode_node_pos
        .iter()
        .map(|g| g.iter().map(|&p| boundary_offset + p % nb).collect())
        .collect();
    let electrode_weights = electrode_groups
        .iter()
        .map(|g| {
            let mut w = vec![0.0; g.len()];
            for e in 0..g.len() - 1 {
                let len = dist(nodes[g[e]], nodes[g[e + 1]]);
                w[e] += 0.5 * len;
                w[e + 1] += 0.5 * len;
            }
            w
        })
        .collect();

    let mut mesh = TriMesh {
        nodes,
        elements,
        boundary_nodes,
        electrode_groups,
        electrode_weights,
        arcs: arcs.to_vec(),
        rings,
        boundary_edges: Vec::new(),
        buckets: BucketIndex { cells: Vec::new() },
    };
    mesh.boundary_edges = mesh.find_boundary_edges();
    mesh.buckets = mesh.build_buckets();
    mesh
}

/// Angles closer than this are treated as equal while stitching, so that
/// rounding cannot break the rotational pattern.
const ANGLE_TIE: f64 = 1e-9;

/// Stitches consecutive rings by merging their angular orderings. Equal
/// angles advance the inner ring.
fn stitch_rings(inner: &[f64], inner_off: usize, outer: &[f64], outer_off: usize, out: &mut Vec<[usize; 3]>) {
    let na = inner.len();
    let nb = outer.len();
    let norm = |t: f64| (t + ANGLE_TIE).rem_euclid(2.0 * PI) - ANGLE_TIE;
    // Outer ring rotated to start at the first node with angle >= inner[0].
    let base = inner[0];
    let s = (0..nb)
        .min_by(|&a, &b| {
            let da = norm(outer[a] - base);
            let db = norm(outer[b] - base);
            da.partial_cmp(&db).unwrap()
        })
        .unwrap();
    let inner_at = |i: usize| inner[i % na] + 2.0 * PI * (i / na) as f64;
    let outer_at = |j: usize| base + norm(outer[(s + j) % nb] - base) + 2.0 * PI * (j / nb) as f64;
    let (mut i, mut j) = (0usize, 0usize);
    while i < na || j < nb {
        let advance_outer = if i == na {
            true
        } else if j == nb {
            false
        } else {
            outer_at(j + 1) < inner_at(i + 1) - ANGLE_TIE
        };
        let a = inner_off + i % na;
        let b = outer_off + (s + j) % nb;
        if advance_outer {
            let b2 = outer_off + (s + j + 1) % nb;
            out.push([a, b, b2]);
            j += 1;
        } else {
            let a2 = inner_off + (i + 1) % na;
            out.push([a, b, a2]);
            i += 1;
        }
    }
}

fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

impl TriMesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn n_electrodes(&self) -> usize {
        self.electrode_groups.len()
    }

    pub fn vertices(&self, e: usize) -> [Point; 3] {
        let [a, b, c] = self.elements[e];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    /// Signed area (positive for counterclockwise elements).
    pub fn signed_area(&self, e: usize) -> f64 {
        let [a, b, c] = self.vertices(e);
        0.5 * cross(a, b, c)
    }

    pub fn centroid(&self, e: usize) -> Point {
        let [a, b, c] = self.vertices(e);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Unique undirected edges.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<(usize, usize)> = self
            .elements
            .iter()
            .flat_map(|&[a, b, c]| [(a, b), (b, c), (c, a)])
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// Boundary edges `(a, b)` in counterclockwise order.
    pub fn boundary_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.boundary_edges.iter().map(|&(a, b, _)| (a, b))
    }

    /// Total arc length (polygonal) of electrode `k`.
    pub fn electrode_length(&self, k: usize) -> f64 {
        self.electrode_weights[k].iter().sum()
    }

    fn find_boundary_edges(&self) -> Vec<(usize, usize, usize)> {
        let nb = self.boundary_nodes.len();
        let mut owner = std::collections::HashMap::new();
        for (e, &[a, b, c]) in self.elements.iter().enumerate() {
            for (p, q) in [(a, b), (b, c), (c, a)] {
                owner.insert((p, q), e);
            }
        }
        (0..nb)
            .map(|j| {
                let a = self.boundary_nodes[j];
                let b = self.boundary_nodes[(j + 1) % nb];
                let e = *owner.get(&(a, b)).expect("boundary edge must belong to an element");
                (a, b, e)
            })
            .collect()
    }

    fn build_buckets(&self) -> BucketIndex {
        let mut cells = vec![Vec::new(); BUCKETS * BUCKETS];
        for e in 0..self.elements.len() {
            let v = self.vertices(e);
            let xs = v.iter().map(|p| p[0]);
            let ys = v.iter().map(|p| p[1]);
            let (x0, x1) = xs.fold((f64::MAX, f64::MIN), |(lo, hi), x| (lo.min(x), hi.max(x)));
            let (y0, y1) = ys.fold((f64::MAX, f64::MIN), |(lo, hi), y| (lo.min(y), hi.max(y)));
            for cy in BucketIndex::cell_of(y0 - 1e-9)..=BucketIndex::cell_of(y1 + 1e-9) {
                for cx in BucketIndex::cell_of(x0 - 1e-9)..=BucketIndex::cell_of(x1 + 1e-9) {
                    cells[cy * BUCKETS + cx].push(e as u32);
                }
            }
        }
        BucketIndex { cells }
    }

    /// Barycentric coordinates of `p` with respect to element `e`.
    pub fn barycentric(&self, e: usize, p: Point) -> [f64; 3] {
        let [a, b, c] = self.vertices(e);
        let det = cross(a, b, c);
        let wb = cross(a, p, c) / det;
        let wc = cross(a, b, p) / det;
        [1.0 - wb - wc, wb, wc]
    }

    /// Finds the element containing `p`.
    pub fn locate_point(&self, p: Point) -> PointLocation {
        let r2 = p[0] * p[0] + p[1] * p[1];
        if r2.sqrt() > 1.0 + EPS_GEOM {
            return PointLocation::Outside;
        }
        let cell = BucketIndex::cell_of(p[1]) * BUCKETS + BucketIndex::cell_of(p[0]);
        for &e in &self.buckets.cells[cell] {
            let w = self.barycentric(e as usize, p);
            if w.iter().all(|&x| x >= -BARY_TOL) {
                return PointLocation::Inside {
                    element: e as usize,
                    weights: w,
                };
            }
        }
        // Sliver between the polygon and the circle: project onto the nearest
        // boundary edge.
        let mut best = (f64::MAX, 0usize, [0.0, 0.0]);
        for &(a, b, e) in &self.boundary_edges {
            let (pa, pb) = (self.nodes[a], self.nodes[b]);
            let d = [pb[0] - pa[0], pb[1] - pa[1]];
            let t = (((p[0] - pa[0]) * d[0] + (p[1] - pa[1]) * d[1]) / (d[0] * d[0] + d[1] * d[1])).clamp(0.0, 1.0);
            let q = [pa[0] + t * d[0], pa[1] + t * d[1]];
            let dq = dist(p, q);
            if dq < best.0 {
                best = (dq, e, q);
            }
        }
        let (_, element, q) = best;
        let mut w = self.barycentric(element, q);
        for x in w.iter_mut() {
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= s);
        PointLocation::Snapped { element, weights: w }
    }

    /// Writes `x y` per node.
    pub fn write_nodes<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for p in &self.nodes {
            writeln!(w, "{:?} {:?}", p[0], p[1])?;
        }
        Ok(())
    }

    /// Writes `i j k` (zero-based) per element.
    pub fn write_elements<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for &[a, b, c] in &self.elements {
            writeln!(w, "{a} {b} {c}")?;
        }
        Ok(())
    }

    /// Checks the structural invariants, returning a description of the
    /// first violation.
    pub fn validate(&self) -> std::result::Result<(), String> {
        for (i, p) in self.nodes.iter().enumerate() {
            if p[0] * p[0] + p[1] * p[1] > 1.0 + EPS_GEOM {
                return Err(format!("node {i} outside the unit disk"));
            }
        }
        for e in 0..self.elements.len() {
            if self.signed_area(e) <= 0.0 {
                return Err(format!("element {e} is not counterclockwise"));
            }
        }
        let v = self.nodes.len() as i64;
        let ed = self.edges().len() as i64;
        let f = self.elements.len() as i64;
        if v - ed + f != 1 {
            return Err(format!("Euler relation fails: V - E + F = {}", v - ed + f));
        }
        let mut seen = std::collections::HashSet::new();
        for (k, g) in self.electrode_groups.iter().enumerate() {
            if g.is_empty() {
                return Err(format!("electrode {k} has no nodes"));
            }
            for &n in g {
                if !seen.insert(n) {
                    return Err(format!("node {n} belongs to two electrodes"));
                }
            }
        }
        Ok(())
    }
}
