//! Incremental Bowyer-Watson construction.
//!
//! The hull is closed with a symbolic vertex at infinity: every hull face
//! carries an "infinite" cell whose fourth vertex is [`INF`]. A point outside
//! the current hull is then inserted exactly like an interior point. An
//! infinite cell is in conflict with `p` when `p` is strictly beyond its hull
//! face; when `p` is coplanar with that face the finite cell on the other
//! side decides.
//!
//! Cospherical configurations are broken by symbolic perturbation ordered on
//! vertex index, so every tie has a deterministic answer and no flat
//! tetrahedra are produced.

use std::collections::HashMap;

use super::predicates::{collinear, in_sphere, orient};
use crate::Point3;

pub(super) const INF: u32 = u32::MAX;
const NONE: u32 = u32::MAX;

/// `FACES[i]` lists the local vertices of the face opposite vertex `i`,
/// ordered so that vertex `i` lies on the positive side.
pub(super) const FACES: [[usize; 3]; 4] = [[1, 3, 2], [0, 2, 3], [0, 3, 1], [0, 1, 2]];

#[derive(Debug, Clone)]
struct Cell {
    v: [u32; 4],
    n: [u32; 4],
    alive: bool,
}

impl Cell {
    fn infinite_slot(&self) -> Option<usize> {
        self.v.iter().position(|&v| v == INF)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mark {
    Unknown,
    Conflict,
    Clear,
}

pub(super) struct Builder<'a> {
    pts: &'a [Point3],
    cells: Vec<Cell>,
    marks: Vec<Mark>,
    hint: usize,
    rng: u32,
}

/// Finds the first four affinely independent points in input order.
pub(super) fn initial_simplex(pts: &[Point3]) -> Option<[usize; 4]> {
    let i0 = 0;
    let i1 = (1..pts.len()).find(|&j| pts[j] != pts[i0])?;
    let i2 = (i1 + 1..pts.len()).find(|&j| !collinear(&pts[i0], &pts[i1], &pts[j]))?;
    let i3 = (i2 + 1..pts.len()).find(|&j| orient(&pts[i0], &pts[i1], &pts[i2], &pts[j]) != 0.0)?;
    Some([i0, i1, i2, i3])
}

fn sorted3(mut k: [u32; 3]) -> [u32; 3] {
    k.sort_unstable();
    k
}

impl<'a> Builder<'a> {
    pub(super) fn new(pts: &'a [Point3], simplex: [usize; 4]) -> Self {
        let [a, b, mut c, mut d] = simplex.map(|i| i as u32);
        let p = |i: u32| &pts[i as usize];
        if orient(p(a), p(b), p(c), p(d)) < 0.0 {
            std::mem::swap(&mut c, &mut d);
        }
        let mut b_ = Self {
            pts,
            cells: Vec::new(),
            marks: Vec::new(),
            hint: 0,
            rng: 0x9e37_79b9,
        };
        let v = [a, b, c, d];
        b_.push(v);
        for f in FACES {
            b_.push([INF, v[f[0]], v[f[1]], v[f[2]]]);
        }
        b_.link((0..5).collect::<Vec<_>>().as_slice());
        b_
    }

    fn push(&mut self, v: [u32; 4]) -> usize {
        self.cells.push(Cell {
            v,
            n: [NONE; 4],
            alive: true,
        });
        self.marks.push(Mark::Unknown);
        self.cells.len() - 1
    }

    /// Pairs up unlinked faces among `ids` by their vertex sets.
    fn link(&mut self, ids: &[usize]) {
        let mut open: HashMap<[u32; 3], (usize, usize)> = HashMap::new();
        for &c in ids {
            for i in 0..4 {
                if self.cells[c].n[i] != NONE {
                    continue;
                }
                let v = self.cells[c].v;
                let key = sorted3(FACES[i].map(|k| v[k]));
                if let Some((oc, oi)) = open.remove(&key) {
                    self.cells[c].n[i] = oc as u32;
                    self.cells[oc].n[oi] = c as u32;
                } else {
                    open.insert(key, (c, i));
                }
            }
        }
        debug_assert!(open.is_empty(), "unmatched faces after linking");
    }

    fn point(&self, v: u32) -> &Point3 {
        &self.pts[v as usize]
    }

    /// Orientation of face `i` of cell `c` against `q`; the face must be finite.
    fn orient_face(&self, c: usize, i: usize, q: &Point3) -> f64 {
        let v = self.cells[c].v;
        let [a, b, d] = FACES[i].map(|k| self.point(v[k]));
        orient(a, b, d, q)
    }

    fn face_is_finite(&self, c: usize, i: usize) -> bool {
        let v = self.cells[c].v;
        FACES[i].iter().all(|&k| v[k] != INF)
    }

    fn next_rand(&mut self) -> usize {
        // xorshift32, deterministic face order for the walk
        let mut x = self.rng;
        x ^= x << 13;
        x ^= x >> 17;
        x ^= x << 5;
        self.rng = x;
        (x >> 8) as usize
    }

    /// Walks from the hint to a finite cell containing `q`, or to the
    /// infinite cell whose hull face `q` lies strictly beyond.
    fn locate(&mut self, q: &Point3) -> usize {
        let mut c = self.hint;
        let mut steps = 0usize;
        'walk: loop {
            steps += 1;
            if steps > 4 * self.cells.len() + 64 {
                // cannot happen on a Delaunay triangulation; scan as a fallback
                return self.scan_locate(q);
            }
            let start = self.next_rand() % 4;
            for k in 0..4 {
                let i = (start + k) % 4;
                if self.orient_face(c, i, q) < 0.0 {
                    c = self.cells[c].n[i] as usize;
                    if self.cells[c].infinite_slot().is_some() {
                        return c;
                    }
                    continue 'walk;
                }
            }
            return c;
        }
    }

    fn scan_locate(&self, q: &Point3) -> usize {
        let mut fallback = None;
        for (c, cell) in self.cells.iter().enumerate() {
            if !cell.alive {
                continue;
            }
            match cell.infinite_slot() {
                None => {
                    if (0..4).all(|i| self.orient_face(c, i, q) >= 0.0) {
                        return c;
                    }
                }
                Some(j) => {
                    if fallback.is_none() && self.orient_face(c, j, q) > 0.0 {
                        fallback = Some(c);
                    }
                }
            }
        }
        fallback.expect("point neither inside nor outside the hull")
    }

    fn conflicts(&self, c: usize, p: u32) -> bool {
        let cell = &self.cells[c];
        match cell.infinite_slot() {
            None => self.conflicts_finite(c, p),
            Some(j) => {
                let o = self.orient_face(c, j, self.point(p));
                if o > 0.0 {
                    true
                } else if o < 0.0 {
                    false
                } else {
                    self.conflicts_finite(cell.n[j] as usize, p)
                }
            }
        }
    }

    /// Perturbed in-sphere test of `p` against finite cell `c`.
    fn conflicts_finite(&self, c: usize, p: u32) -> bool {
        let v = self.cells[c].v;
        let [a, b, cc, d] = v.map(|i| self.point(i));
        let q = self.point(p);
        let s = in_sphere(a, b, cc, d, q);
        if s != 0.0 {
            return s > 0.0;
        }
        let mut order = [v[0], v[1], v[2], v[3], p];
        order.sort_unstable_by(|x, y| y.cmp(x));
        for top in order {
            if top == p {
                return false;
            }
            let k = v.iter().position(|&x| x == top).unwrap();
            let mut w = v;
            w[k] = p;
            let o = orient(self.point(w[0]), self.point(w[1]), self.point(w[2]), self.point(w[3]));
            if o != 0.0 {
                return o > 0.0;
            }
        }
        false
    }

    pub(super) fn insert(&mut self, p: u32) {
        let q = self.pts[p as usize];
        let seed = self.locate(&q);
        let mut cavity = vec![seed];
        let mut touched = vec![seed];
        self.marks[seed] = Mark::Conflict;
        let mut stack = vec![seed];
        let mut boundary: Vec<(usize, usize)> = Vec::new();
        loop {
            while let Some(c) = stack.pop() {
                for i in 0..4 {
                    let nb = self.cells[c].n[i] as usize;
                    if self.marks[nb] != Mark::Unknown {
                        continue;
                    }
                    touched.push(nb);
                    if self.conflicts(nb, p) {
                        self.marks[nb] = Mark::Conflict;
                        cavity.push(nb);
                        stack.push(nb);
                    } else {
                        self.marks[nb] = Mark::Clear;
                    }
                }
            }
            // every finite new cell must have positive volume; a face that
            // `p` is coplanar with pulls its outer cell into the cavity
            boundary.clear();
            let mut grow = None;
            for &c in &cavity {
                for i in 0..4 {
                    let nb = self.cells[c].n[i] as usize;
                    if self.marks[nb] == Mark::Conflict {
                        continue;
                    }
                    if grow.is_none() && self.face_is_finite(c, i) && self.orient_face(c, i, &q) <= 0.0 {
                        grow = Some(nb);
                    }
                    boundary.push((c, i));
                }
            }
            match grow {
                Some(nb) => {
                    log::debug!("growing cavity of vertex {p} across a coplanar face");
                    self.marks[nb] = Mark::Conflict;
                    cavity.push(nb);
                    stack.push(nb);
                }
                None => break,
            }
        }

        let mut open: HashMap<[u32; 3], (usize, usize)> = HashMap::with_capacity(boundary.len() * 2);
        let mut first_finite = None;
        for &(c, i) in &boundary {
            let mut v = self.cells[c].v;
            v[i] = p;
            let outside = self.cells[c].n[i] as usize;
            let nc = self.push(v);
            self.cells[nc].n[i] = outside as u32;
            let back = self.cells[outside].n.iter().position(|&x| x as usize == c).unwrap();
            self.cells[outside].n[back] = nc as u32;
            if first_finite.is_none() && !v.contains(&INF) {
                first_finite = Some(nc);
            }
            for j in (0..4).filter(|&j| j != i) {
                let key = sorted3(FACES[j].map(|k| v[k]));
                if let Some((oc, oj)) = open.remove(&key) {
                    self.cells[nc].n[j] = oc as u32;
                    self.cells[oc].n[oj] = nc as u32;
                } else {
                    open.insert(key, (nc, j));
                }
            }
        }
        debug_assert!(open.is_empty(), "cavity boundary is not a closed surface");
        for &c in &cavity {
            self.cells[c].alive = false;
        }
        for c in touched {
            self.marks[c] = Mark::Unknown;
        }
        self.hint = first_finite.expect("insertion creates at least one finite cell");
    }

    /// Live finite cells in creation order, with neighbors renumbered and
    /// hull faces mapped to `None`.
    pub(super) fn finish(self) -> (Vec<[usize; 4]>, Vec<[Option<usize>; 4]>) {
        let mut index = vec![usize::MAX; self.cells.len()];
        let mut tets = Vec::new();
        for (c, cell) in self.cells.iter().enumerate() {
            if cell.alive && cell.infinite_slot().is_none() {
                index[c] = tets.len();
                tets.push(cell.v.map(|v| v as usize));
            }
        }
        let neighbors = self
            .cells
            .iter()
            .filter(|cell| cell.alive && cell.infinite_slot().is_none())
            .map(|cell| cell.n.map(|nb| Some(index[nb as usize]).filter(|&i| i != usize::MAX)))
            .collect();
        (tets, neighbors)
    }
}
