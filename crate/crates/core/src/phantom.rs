//! Piecewise-constant conductivity scenes.
//!
//! A phantom is a background conductivity plus shaped inclusions. No
//! smoothing is ever applied: every sample of a phantom is either the
//! background value or one of the inclusion values.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EitError, Result};
use crate::gridfield::{GridField, GridSource, GridSpec, SigmaGrid};
use crate::mesh::{Point, TriMesh};

/// Inclusions stay inside this radius so that the boundary conductivity
/// equals the background.
pub const CONTAINMENT_RADIUS: f64 = 0.85;
pub const CIRCLE_RADIUS_RANGE: (f64, f64) = (0.1, 0.28);
pub const TRIANGLE_SIDE_RANGE: (f64, f64) = (0.5, 0.65);
pub const SQUARE_SIDE_RANGE: (f64, f64) = (0.4, 0.5);
pub const SIGMA_RANGE: (f64, f64) = (0.05, 36.0);
pub const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    Circle { center: Point, radius: f64 },
    /// `center` is the centroid; `rotation` is the angle of the first vertex.
    EquilateralTriangle { center: Point, side: f64, rotation: f64 },
    /// `rotation` is the angle of the first corner's direction minus π/4.
    Square { center: Point, side: f64, rotation: f64 },
}

impl Shape {
    /// Corner points for polygonal shapes, counterclockwise.
    pub fn polygon(&self) -> Option<Vec<Point>> {
        match *self {
            Shape::Circle { .. } => None,
            Shape::EquilateralTriangle { center, side, rotation } => {
                let r = side / 3f64.sqrt();
                Some(
                    (0..3)
                        .map(|k| {
                            let t = rotation + 2.0 * PI * k as f64 / 3.0;
                            [center[0] + r * t.cos(), center[1] + r * t.sin()]
                        })
                        .collect(),
                )
            }
            Shape::Square { center, side, rotation } => {
                let r = side / 2f64.sqrt();
                Some(
                    (0..4)
                        .map(|k| {
                            let t = rotation + PI / 4.0 + PI / 2.0 * k as f64;
                            [center[0] + r * t.cos(), center[1] + r * t.sin()]
                        })
                        .collect(),
                )
            }
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        match *self {
            Shape::Circle { center, radius } => {
                let (dx, dy) = (p[0] - center[0], p[1] - center[1]);
                dx * dx + dy * dy <= radius * radius
            }
            _ => {
                let poly = self.polygon().unwrap();
                polygon_contains(&poly, p)
            }
        }
    }

    /// Largest distance from the origin over the shape.
    pub fn max_radius(&self) -> f64 {
        match *self {
            Shape::Circle { center, radius } => norm(center) + radius,
            _ => self.polygon().unwrap().into_iter().map(norm).fold(0.0, f64::max),
        }
    }

    pub fn area(&self) -> f64 {
        match *self {
            Shape::Circle { radius, .. } => PI * radius * radius,
            Shape::EquilateralTriangle { side, .. } => 3f64.sqrt() / 4.0 * side * side,
            Shape::Square { side, .. } => side * side,
        }
    }

    /// Exact intersection test for circles and convex polygons.
    pub fn overlaps(&self, other: &Shape) -> bool {
        match (self, other) {
            (Shape::Circle { center: a, radius: ra }, Shape::Circle { center: b, radius: rb }) => {
                norm([a[0] - b[0], a[1] - b[1]]) <= ra + rb
            }
            (Shape::Circle { center, radius }, poly) | (poly, Shape::Circle { center, radius }) => {
                let pts = poly.polygon().unwrap();
                polygon_contains(&pts, *center)
                    || (0..pts.len()).any(|k| segment_distance(*center, pts[k], pts[(k + 1) % pts.len()]) <= *radius)
            }
            (a, b) => convex_overlap(&a.polygon().unwrap(), &b.polygon().unwrap()),
        }
    }
}

fn norm(p: Point) -> f64 {
    (p[0] * p[0] + p[1] * p[1]).sqrt()
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn polygon_contains(poly: &[Point], p: Point) -> bool {
    (0..poly.len()).all(|k| cross(poly[k], poly[(k + 1) % poly.len()], p) >= 0.0)
}

fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let t = (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / (d[0] * d[0] + d[1] * d[1])).clamp(0.0, 1.0);
    norm([p[0] - a[0] - t * d[0], p[1] - a[1] - t * d[1]])
}

/// Separating-axis test for two convex counterclockwise polygons.
fn convex_overlap(a: &[Point], b: &[Point]) -> bool {
    let separated = |p: &[Point], q: &[Point]| {
        (0..p.len()).any(|k| {
            let (s, e) = (p[k], p[(k + 1) % p.len()]);
            q.iter().all(|&v| cross(s, e, v) < 0.0)
        })
    };
    !(separated(a, b) || separated(b, a))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inclusion {
    pub shape: Shape,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phantom {
    pub background_sigma: f64,
    pub inclusions: Vec<Inclusion>,
}

impl Default for Phantom {
    fn default() -> Self {
        Phantom::homogeneous(1.0)
    }
}

/// The five dataset categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Category {
    #[serde(rename = "1C")]
    OneCircle,
    #[serde(rename = "2C")]
    TwoCircles,
    #[serde(rename = "1T1C")]
    TriangleCircle,
    #[serde(rename = "1T2C")]
    TriangleTwoCircles,
    #[serde(rename = "1T1C1S")]
    TriangleCircleSquare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ShapeKind {
    Circle,
    Triangle,
    Square,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::OneCircle,
        Category::TwoCircles,
        Category::TriangleCircle,
        Category::TriangleTwoCircles,
        Category::TriangleCircleSquare,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Category::OneCircle => "1C",
            Category::TwoCircles => "2C",
            Category::TriangleCircle => "1T1C",
            Category::TriangleTwoCircles => "1T2C",
            Category::TriangleCircleSquare => "1T1C1S",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.code() == code)
    }

    fn kinds(self) -> &'static [ShapeKind] {
        use ShapeKind::*;
        match self {
            Category::OneCircle => &[Circle],
            Category::TwoCircles => &[Circle, Circle],
            Category::TriangleCircle => &[Triangle, Circle],
            Category::TriangleTwoCircles => &[Triangle, Circle, Circle],
            Category::TriangleCircleSquare => &[Triangle, Circle, Square],
        }
    }
}

impl Phantom {
    pub fn homogeneous(background_sigma: f64) -> Self {
        Phantom {
            background_sigma,
            inclusions: Vec::new(),
        }
    }

    /// Conductivity at `p`; later inclusions paint over earlier ones.
    pub fn sigma_at(&self, p: Point) -> f64 {
        self.inclusions
            .iter()
            .rev()
            .find(|inc| inc.shape.contains(p))
            .map_or(self.background_sigma, |inc| inc.sigma)
    }

    /// The distinct conductivity values this phantom can produce.
    pub fn value_set(&self) -> Vec<f64> {
        let mut v: Vec<f64> = std::iter::once(self.background_sigma)
            .chain(self.inclusions.iter().map(|i| i.sigma))
            .collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v.dedup();
        v
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.background_sigma > 0.0) {
            return Err(EitError::InvalidConfig("background conductivity must be positive".into()));
        }
        for (k, inc) in self.inclusions.iter().enumerate() {
            if !(inc.sigma > 0.0) {
                return Err(EitError::InvalidConfig(format!("inclusion {k} conductivity must be positive")));
            }
            if inc.shape.max_radius() > CONTAINMENT_RADIUS + 1e-12 {
                return Err(EitError::InvalidConfig(format!(
                    "inclusion {k} extends beyond radius {CONTAINMENT_RADIUS}"
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("phantom serializes")
    }

    pub fn from_json(s: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Conductivity drawn log-uniformly over [`SIGMA_RANGE`].
fn sample_sigma(rng: &mut ChaCha8Rng) -> f64 {
    let (lo, hi) = SIGMA_RANGE;
    (rng.random_range(lo.ln()..=hi.ln())).exp().clamp(lo, hi)
}

fn sample_shape(rng: &mut ChaCha8Rng, kind: ShapeKind) -> Shape {
    let (extent, make): (f64, Box<dyn Fn(Point, &mut ChaCha8Rng) -> Shape>) = match kind {
        ShapeKind::Circle => {
            let r = rng.random_range(CIRCLE_RADIUS_RANGE.0..=CIRCLE_RADIUS_RANGE.1);
            (r, Box::new(move |c, _| Shape::Circle { center: c, radius: r }))
        }
        ShapeKind::Triangle => {
            let s = rng.random_range(TRIANGLE_SIDE_RANGE.0..=TRIANGLE_SIDE_RANGE.1);
            (
                s / 3f64.sqrt(),
                Box::new(move |c, rng| Shape::EquilateralTriangle {
                    center: c,
                    side: s,
                    rotation: rng.random_range(0.0..2.0 * PI),
                }),
            )
        }
        ShapeKind::Square => {
            let s = rng.random_range(SQUARE_SIDE_RANGE.0..=SQUARE_SIDE_RANGE.1);
            (
                s / 2f64.sqrt(),
                Box::new(move |c, rng| Shape::Square {
                    center: c,
                    side: s,
                    rotation: rng.random_range(0.0..2.0 * PI),
                }),
            )
        }
    };
    // Uniform in the disk that keeps the bounding circle inside the margin.
    let rmax = (CONTAINMENT_RADIUS - extent).max(0.0);
    let rho = rmax * rng.random::<f64>().sqrt();
    let t = rng.random_range(0.0..2.0 * PI);
    make([rho * t.cos(), rho * t.sin()], rng)
}

/// Draws a random phantom of the given category, deterministic in `seed`.
pub fn sample_phantom(seed: u64, category: Category) -> Result<Phantom> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kinds = category.kinds();
    for _ in 0..MAX_PLACEMENT_ATTEMPTS {
        let mut inclusions: Vec<Inclusion> = Vec::with_capacity(kinds.len());
        let mut ok = true;
        for &kind in kinds {
            let shape = sample_shape(&mut rng, kind);
            if shape.max_radius() > CONTAINMENT_RADIUS || inclusions.iter().any(|i| i.shape.overlaps(&shape)) {
                ok = false;
                break;
            }
            inclusions.push(Inclusion {
                shape,
                sigma: sample_sigma(&mut rng),
            });
        }
        if ok {
            return Ok(Phantom {
                background_sigma: 1.0,
                inclusions,
            });
        }
    }
    Err(EitError::PlacementFailure {
        attempts: MAX_PLACEMENT_ATTEMPTS,
    })
}

/// Rasterizes the phantom at pixel centers.
pub fn rasterize_sigma(phantom: &Phantom, grid: &GridSpec) -> SigmaGrid {
    GridField::from_fn(grid, GridSource::Truth, 0, |p| phantom.sigma_at(p))
}

/// Conductivity at each element centroid.
pub fn element_sigma(phantom: &Phantom, mesh: &TriMesh) -> Vec<f64> {
    (0..mesh.n_elements()).map(|e| phantom.sigma_at(mesh.centroid(e))).collect()
}

/// Named fixed scenes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Single centered circle, σ = 4: the inverse benchmark.
    Case1,
    /// Two circles, one conductive and one resistive.
    Case2,
    /// Triangle plus circle.
    Case3,
    /// Triangle plus two circles.
    Case4,
    /// Triangle, circle and square.
    Case5,
    /// Triangle and circle at the extreme contrast σ = 36.
    Case6,
    /// Two resistive lung-like regions and a conductive heart-like region.
    Medical,
}

impl Preset {
    pub const ALL: [Preset; 7] = [
        Preset::Case1,
        Preset::Case2,
        Preset::Case3,
        Preset::Case4,
        Preset::Case5,
        Preset::Case6,
        Preset::Medical,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Case1 => "case1",
            Preset::Case2 => "case2",
            Preset::Case3 => "case3",
            Preset::Case4 => "case4",
            Preset::Case5 => "case5",
            Preset::Case6 => "case6",
            Preset::Medical => "medical",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn phantom(self) -> Phantom {
        let circle = |x: f64, y: f64, r: f64, sigma: f64| Inclusion {
            shape: Shape::Circle { center: [x, y], radius: r },
            sigma,
        };
        let tri = |x: f64, y: f64, s: f64, rot: f64, sigma: f64| Inclusion {
            shape: Shape::EquilateralTriangle {
                center: [x, y],
                side: s,
                rotation: rot,
            },
            sigma,
        };
        let square = |x: f64, y: f64, s: f64, rot: f64, sigma: f64| Inclusion {
            shape: Shape::Square {
                center: [x, y],
                side: s,
                rotation: rot,
            },
            sigma,
        };
        let inclusions = match self {
            Preset::Case1 => vec![circle(0.0, 0.0, 0.3, 4.0)],
            Preset::Case2 => vec![circle(-0.35, 0.25, 0.25, 4.0), circle(0.35, -0.2, 0.22, 0.2)],
            Preset::Case3 => vec![tri(-0.2, 0.15, 0.6, PI / 2.0, 4.0), circle(0.4, -0.3, 0.2, 0.25)],
            Preset::Case4 => vec![
                tri(0.0, 0.3, 0.55, PI / 2.0, 3.0),
                circle(-0.4, -0.3, 0.2, 0.2),
                circle(0.4, -0.3, 0.18, 5.0),
            ],
            Preset::Case5 => vec![
                tri(-0.3, 0.3, 0.55, PI / 2.0, 4.0),
                circle(0.4, 0.3, 0.2, 0.2),
                square(0.0, -0.4, 0.42, 0.3, 6.0),
            ],
            Preset::Case6 => vec![tri(-0.25, 0.0, 0.6, 0.0, 36.0), circle(0.45, 0.1, 0.22, 36.0)],
            Preset::Medical => vec![
                circle(-0.42, 0.08, 0.28, 0.3),
                circle(0.42, 0.08, 0.28, 0.3),
                circle(0.0, -0.38, 0.18, 2.5),
            ],
        };
        Phantom {
            background_sigma: 1.0,
            inclusions,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_disk_mesh;

    #[test]
    fn categories_have_expected_shapes() {
        let p = sample_phantom(7, Category::OneCircle).unwrap();
        assert_eq!(p.inclusions.len(), 1);
        match p.inclusions[0].shape {
            Shape::Circle { radius, .. } => assert!((0.1..=0.28).contains(&radius)),
            ref s => panic!("{s:?}"),
        }
        let p = sample_phantom(7, Category::TriangleCircleSquare).unwrap();
        let kinds: Vec<&str> = p
            .inclusions
            .iter()
            .map(|i| match i.shape {
                Shape::Circle { .. } => "c",
                Shape::EquilateralTriangle { .. } => "t",
                Shape::Square { .. } => "s",
            })
            .collect();
        assert_eq!(kinds, ["t", "c", "s"]);
    }

    #[test]
    fn sampling_is_deterministic() {
        for c in Category::ALL {
            assert_eq!(sample_phantom(42, c).unwrap(), sample_phantom(42, c).unwrap());
        }
        assert_ne!(
            sample_phantom(1, Category::TwoCircles).unwrap(),
            sample_phantom(2, Category::TwoCircles).unwrap()
        );
    }

    #[test]
    fn sigma_at_containment() {
        assert_eq!(Phantom::default().sigma_at([0.3, 0.4]), 1.0);
        let p = Phantom {
            background_sigma: 1.0,
            inclusions: vec![Inclusion {
                shape: Shape::Circle {
                    center: [0.0, 0.0],
                    radius: 0.2,
                },
                sigma: 36.0,
            }],
        };
        assert_eq!(p.sigma_at([0.1, 0.0]), 36.0);
        assert_eq!(p.sigma_at([0.5, 0.0]), 1.0);
    }

    #[test]
    fn later_inclusions_paint_over() {
        let c = |s| Inclusion {
            shape: Shape::Circle {
                center: [0.0, 0.0],
                radius: 0.3,
            },
            sigma: s,
        };
        let p = Phantom {
            background_sigma: 1.0,
            inclusions: vec![c(2.0), c(3.0)],
        };
        assert_eq!(p.sigma_at([0.0, 0.0]), 3.0);
    }

    #[test]
    fn rasterized_circle_area() {
        let spec = GridSpec::canonical();
        let r = 0.25;
        let p = Phantom {
            background_sigma: 1.0,
            inclusions: vec![Inclusion {
                shape: Shape::Circle {
                    center: [0.1, -0.2],
                    radius: r,
                },
                sigma: 4.0,
            }],
        };
        let g = rasterize_sigma(&p, &spec);
        let count = g.masked_values().filter(|&v| v == 4.0).count() as f64;
        // each pixel covers h² of area; πr²/h² = πr²·127²/4
        let expected = PI * r * r / (spec.h() * spec.h());
        assert!((count / expected - 1.0).abs() < 0.05, "{count} vs {expected}");
        let empty = rasterize_sigma(&Phantom::default(), &spec);
        assert!(empty.masked_values().all(|v| v == 1.0));
    }

    #[test]
    fn element_sigma_uses_centroids() {
        let m = build_disk_mesh(2);
        let p = Phantom {
            background_sigma: 1.0,
            inclusions: vec![Inclusion {
                shape: Shape::Circle {
                    center: m.centroid(100),
                    radius: 0.01,
                },
                sigma: 36.0,
            }],
        };
        let s = element_sigma(&p, &m);
        assert_eq!(s.len(), m.n_elements());
        assert_eq!(s[100], 36.0);
        assert!(element_sigma(&Phantom::default(), &m).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn overlap_tests() {
        let c = Shape::Circle {
            center: [0.0, 0.0],
            radius: 0.2,
        };
        let sq = Shape::Square {
            center: [0.35, 0.0],
            side: 0.2,
            rotation: 0.0,
        };
        assert!(!c.overlaps(&sq));
        let sq2 = Shape::Square {
            center: [0.25, 0.0],
            side: 0.2,
            rotation: 0.0,
        };
        assert!(c.overlaps(&sq2));
        let t = Shape::EquilateralTriangle {
            center: [0.3, 0.0],
            side: 0.3,
            rotation: 0.0,
        };
        assert!(t.overlaps(&sq2));
    }

    #[test]
    fn presets_are_valid() {
        for p in Preset::ALL {
            let ph = p.phantom();
            ph.validate().unwrap();
            for (i, a) in ph.inclusions.iter().enumerate() {
                for b in &ph.inclusions[i + 1..] {
                    assert!(!a.shape.overlaps(&b.shape), "{p:?}");
                }
            }
        }
        let med = Preset::Medical.phantom();
        assert!(med.inclusions[0].sigma < 1.0 && med.inclusions[1].sigma < 1.0);
        assert!(med.inclusions[2].sigma > 1.0);
    }
}
