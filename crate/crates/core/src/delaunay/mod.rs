//! 3D Delaunay tetrahedralization and point location.
//!
//! Construction is incremental (Bowyer-Watson) in input order, with exact
//! orientation and in-sphere signs and a deterministic tie-break for
//! cospherical points. The result covers the convex hull of the input with
//! positively oriented tetrahedra and uses no extra vertices.

mod build;
mod predicates;

pub use predicates::{in_sphere, orient, signed_volume};

use std::collections::BTreeSet;
use std::fmt::Write;

use build::{Builder, FACES};

use crate::Point3;

/// Barycentric tolerance used by [`Locator::locate`].
pub const BARYCENTRIC_EPS: f64 = 1e-9;
/// Minimum tetrahedron volume relative to the cubed bounding-box diagonal.
pub const VOLUME_EPS: f64 = 1e-12;
/// Points closer than this (meters) count as duplicates.
pub const DUPLICATE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DelaunayError {
    #[error("at least 4 points are required, got {0}")]
    TooFewPoints(usize),
    #[error("point {index} has a non-finite coordinate")]
    NonFinite { index: usize },
    #[error("points {first} and {second} coincide")]
    Duplicate { first: usize, second: usize },
    #[error("all points are coplanar or collinear")]
    Degenerate,
    #[error("tetrahedron {tetrahedron} with vertices {vertices:?} has volume {volume:e} below threshold")]
    Sliver {
        tetrahedron: usize,
        vertices: [usize; 4],
        volume: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tetrahedralization {
    vertices: Vec<Point3>,
    tetrahedra: Vec<[usize; 4]>,
    neighbors: Vec<[Option<usize>; 4]>,
}

fn find_duplicate(points: &[Point3]) -> Option<(usize, usize)> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].x.total_cmp(&points[b].x).then(a.cmp(&b)));
    let mut best: Option<(usize, usize)> = None;
    for (k, &i) in order.iter().enumerate() {
        for &j in &order[k + 1..] {
            if points[j].x - points[i].x > DUPLICATE_EPS {
                break;
            }
            if (points[j] - points[i]).norm() <= DUPLICATE_EPS {
                let pair = (i.min(j), i.max(j));
                if best.is_none_or(|b| (pair.1, pair.0) < (b.1, b.0)) {
                    best = Some(pair);
                }
            }
        }
    }
    best
}

/// Delaunay tetrahedralization of `points`. Vertex `i` of the result is
/// `points[i]`. Tetrahedra with volume at or below
/// `VOLUME_EPS * diagonal^3` are rejected as slivers.
pub fn tetrahedralize(points: &[Point3]) -> Result<Tetrahedralization, DelaunayError> {
    tetrahedralize_with(points, VOLUME_EPS)
}

/// [`tetrahedralize`] with a custom relative sliver threshold. `0.0` only
/// rejects tetrahedra whose computed volume is not positive.
pub fn tetrahedralize_with(points: &[Point3], volume_eps: f64) -> Result<Tetrahedralization, DelaunayError> {
    if let Some(index) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
        return Err(DelaunayError::NonFinite { index });
    }
    if points.len() < 4 {
        return Err(DelaunayError::TooFewPoints(points.len()));
    }
    if let Some((first, second)) = find_duplicate(points) {
        return Err(DelaunayError::Duplicate { first, second });
    }
    let simplex = build::initial_simplex(points).ok_or(DelaunayError::Degenerate)?;
    let mut builder = Builder::new(points, simplex);
    for i in (0..points.len()).filter(|i| !simplex.contains(i)) {
        builder.insert(i as u32);
    }
    let (tetrahedra, neighbors) = builder.finish();
    let tet = Tetrahedralization {
        vertices: points.to_vec(),
        tetrahedra,
        neighbors,
    };
    let min_volume = volume_eps * tet.bbox_diagonal().powi(3);
    for (j, t) in tet.tetrahedra.iter().enumerate() {
        let volume = tet.volume(j);
        if volume <= min_volume {
            return Err(DelaunayError::Sliver {
                tetrahedron: j,
                vertices: *t,
                volume,
            });
        }
    }
    Ok(tet)
}

impl Tetrahedralization {
    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn tetrahedra(&self) -> &[[usize; 4]] {
        &self.tetrahedra
    }

    /// `neighbors()[j][i]` is the tetrahedron across the face opposite vertex
    /// `i` of tetrahedron `j`, or `None` on the hull.
    pub fn neighbors(&self) -> &[[Option<usize>; 4]] {
        &self.neighbors
    }

    pub fn len(&self) -> usize {
        self.tetrahedra.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tetrahedra.is_empty()
    }

    pub fn corners(&self, j: usize) -> [Point3; 4] {
        self.tetrahedra[j].map(|v| self.vertices[v])
    }

    pub fn volume(&self, j: usize) -> f64 {
        let [a, b, c, d] = self.corners(j);
        signed_volume(&a, &b, &c, &d)
    }

    pub fn bbox_diagonal(&self) -> f64 {
        let mut lo = self.vertices[0];
        let mut hi = self.vertices[0];
        for p in &self.vertices {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (hi - lo).norm()
    }

    /// Barycentric coordinates of `q` with respect to tetrahedron `j`.
    pub fn barycentric(&self, j: usize, q: &Point3) -> [f64; 4] {
        let c = self.corners(j);
        let total = signed_volume(&c[0], &c[1], &c[2], &c[3]);
        std::array::from_fn(|i| {
            let mut w = c;
            w[i] = *q;
            signed_volume(&w[0], &w[1], &w[2], &w[3]) / total
        })
    }

    /// Exact orientation of `q` against face `i` of tetrahedron `j`: positive
    /// on the side of the opposite vertex.
    fn side(&self, j: usize, i: usize, q: &Point3) -> f64 {
        let t = self.tetrahedra[j];
        let [a, b, c] = FACES[i].map(|k| &self.vertices[t[k]]);
        orient(a, b, c, q)
    }

    fn contains_exact(&self, j: usize, q: &Point3) -> bool {
        (0..4).all(|i| self.side(j, i, q) >= 0.0)
    }

    /// Tetrahedron containing `q`, or `None` outside the hull. See
    /// [`Locator`] for repeated queries.
    pub fn locate(&self, q: &Point3) -> Option<usize> {
        self.locator().locate(q)
    }

    pub fn locator(&self) -> Locator<'_> {
        Locator {
            tet: self,
            last: 0,
            rng: 0x2545_f491,
        }
    }

    /// All faces, deduplicated, as sorted vertex triples.
    pub fn faces(&self) -> BTreeSet<[usize; 3]> {
        let mut out = BTreeSet::new();
        for t in &self.tetrahedra {
            for f in FACES {
                let mut k = f.map(|i| t[i]);
                k.sort_unstable();
                out.insert(k);
            }
        }
        out
    }

    /// Faces on the hull, oriented outward.
    pub fn hull_faces(&self) -> Vec<[usize; 3]> {
        let mut out = Vec::new();
        for (j, t) in self.tetrahedra.iter().enumerate() {
            for i in 0..4 {
                if self.neighbors[j][i].is_none() {
                    let [a, b, c] = FACES[i].map(|k| t[k]);
                    out.push([a, c, b]);
                }
            }
        }
        out
    }

    /// OFF-style text mesh (vertices and every triangular face).
    pub fn to_off(&self) -> String {
        let faces = self.faces();
        let mut out = format!("OFF\n{} {} 0\n", self.vertices.len(), faces.len());
        for p in &self.vertices {
            let _ = writeln!(out, "{} {} {}", p.x, p.y, p.z);
        }
        for f in faces {
            let _ = writeln!(out, "3 {} {} {}", f[0], f[1], f[2]);
        }
        out
    }
}

/// Remembering walk over a [`Tetrahedralization`].
///
/// Each query starts where the previous one ended, so spatially coherent
/// queries (trajectories, scan-ordered clouds) resolve in a few steps. One
/// locator per thread.
#[derive(Debug, Clone)]
pub struct Locator<'a> {
    tet: &'a Tetrahedralization,
    last: usize,
    rng: u32,
}

impl Locator<'_> {
    fn next_rand(&mut self) -> usize {
        let mut x = self.rng;
        x ^= x << 13;
        x ^= x >> 17;
        x ^= x << 5;
        self.rng = x;
        (x >> 8) as usize
    }

    /// Index of a tetrahedron whose barycentric coordinates of `q` are all
    /// at least `-BARYCENTRIC_EPS`. When `q` lies on shared faces, edges or
    /// vertices the lowest incident index is returned. `None` when `q` is
    /// outside the hull beyond tolerance.
    pub fn locate(&mut self, q: &Point3) -> Option<usize> {
        let t = self.tet;
        if t.is_empty() {
            return None;
        }
        let mut c = self.last.min(t.len() - 1);
        let mut steps = 0usize;
        'walk: loop {
            steps += 1;
            if steps > 4 * t.len() + 64 {
                return self.scan(q);
            }
            let start = self.next_rand() % 4;
            for k in 0..4 {
                let i = (start + k) % 4;
                if t.side(c, i, q) < 0.0 {
                    match t.neighbors[c][i] {
                        Some(nb) => {
                            c = nb;
                            continue 'walk;
                        }
                        None => {
                            self.last = c;
                            let b = t.barycentric(c, q);
                            return b.iter().all(|&x| x >= -BARYCENTRIC_EPS).then_some(c);
                        }
                    }
                }
            }
            break;
        }
        self.last = c;
        Some(self.lowest_incident(c, q))
    }

    /// Smallest index among tetrahedra containing `q` (closed), searched
    /// across the faces `q` lies on.
    fn lowest_incident(&self, start: usize, q: &Point3) -> usize {
        let t = self.tet;
        let mut best = start;
        let mut seen = vec![start];
        let mut stack = vec![start];
        while let Some(c) = stack.pop() {
            for i in 0..4 {
                if t.side(c, i, q) != 0.0 {
                    continue;
                }
                if let Some(nb) = t.neighbors[c][i] {
                    if !seen.contains(&nb) && t.contains_exact(nb, q) {
                        seen.push(nb);
                        stack.push(nb);
                        best = best.min(nb);
                    }
                }
            }
        }
        best
    }

    fn scan(&self, q: &Point3) -> Option<usize> {
        let t = self.tet;
        (0..t.len())
            .find(|&j| t.contains_exact(j, q))
            .or_else(|| (0..t.len()).find(|&j| t.barycentric(j, q).iter().all(|&x| x >= -BARYCENTRIC_EPS)))
    }
}
