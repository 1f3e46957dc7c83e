//! Incremental 3D convex hull with a point-inclusion test.

use std::collections::HashSet;

use nalgebra::Vector3;

#[derive(Clone, Debug)]
struct Face {
    v: [usize; 3],
    normal: Vector3<f64>,
    offset: f64,
}

/// Convex hull of a 3D point set as outward-oriented triangular faces.
#[derive(Clone, Debug)]
pub struct ConvexHull {
    points: Vec<Vector3<f64>>,
    faces: Vec<Face>,
    eps: f64,
}

impl ConvexHull {
    /// `None` when the points do not span a volume (fewer than four
    /// points, or all coplanar).
    pub fn build(points: &[Vector3<f64>]) -> Option<ConvexHull> {
        if points.len() < 4 {
            return None;
        }
        let (lo, hi) = points.iter().fold(
            (Vector3::repeat(f64::INFINITY), Vector3::repeat(f64::NEG_INFINITY)),
            |(lo, hi), p| (lo.inf(p), hi.sup(p)),
        );
        let scale = (hi - lo).norm();
        if !(scale > 0.0) {
            return None;
        }
        let eps = 1e-10 * scale;

        // Initial tetrahedron from extreme points.
        let a = (0..points.len()).min_by(|&i, &j| points[i].x.total_cmp(&points[j].x))?;
        let b = farthest(points, |p| (p - points[a]).norm())?;
        let ab = (points[b] - points[a]).normalize();
        let c = farthest(points, |p| {
            let d = p - points[a];
            (d - ab * d.dot(&ab)).norm()
        })?;
        let n = (points[b] - points[a]).cross(&(points[c] - points[a]));
        if n.norm() <= eps * scale {
            return None;
        }
        let n = n.normalize();
        let d = farthest(points, |p| (p - points[a]).dot(&n).abs())?;
        if (points[d] - points[a]).dot(&n).abs() <= eps {
            return None;
        }
        let interior = (points[a] + points[b] + points[c] + points[d]) / 4.0;

        let mut hull = ConvexHull {
            points: points.to_vec(),
            faces: Vec::new(),
            eps,
        };
        for tri in [[a, b, c], [a, b, d], [a, c, d], [b, c, d]] {
            hull.push_face(tri, &interior);
        }
        for i in 0..points.len() {
            if [a, b, c, d].contains(&i) {
                continue;
            }
            hull.add_point(i, &interior);
        }
        Some(hull)
    }

    fn push_face(&mut self, v: [usize; 3], interior: &Vector3<f64>) {
        let p = &self.points;
        let mut v = v;
        let mut normal = (p[v[1]] - p[v[0]]).cross(&(p[v[2]] - p[v[0]]));
        if normal.dot(&(interior - p[v[0]])) > 0.0 {
            v.swap(1, 2);
            normal = -normal;
        }
        let normal = normal.normalize();
        let offset = normal.dot(&p[v[0]]);
        self.faces.push(Face { v, normal, offset });
    }

    fn add_point(&mut self, i: usize, interior: &Vector3<f64>) {
        let p = self.points[i];
        let visible: Vec<bool> = self
            .faces
            .iter()
            .map(|f| f.normal.dot(&p) - f.offset > self.eps)
            .collect();
        if !visible.iter().any(|&v| v) {
            return;
        }
        let mut edges: HashSet<(usize, usize)> = HashSet::new();
        for (f, _) in self.faces.iter().zip(&visible).filter(|(_, &v)| v) {
            for k in 0..3 {
                edges.insert((f.v[k], f.v[(k + 1) % 3]));
            }
        }
        // Horizon: directed edges of visible faces whose twin is not visible.
        let mut horizon: Vec<(usize, usize)> = edges
            .iter()
            .copied()
            .filter(|&(u, w)| !edges.contains(&(w, u)))
            .collect();
        horizon.sort_unstable();
        let mut keep = visible.iter();
        self.faces.retain(|_| !*keep.next().unwrap());
        for (u, w) in horizon {
            self.push_face([u, w, i], interior);
        }
    }

    /// True if `q` lies inside or on the hull (within a relative tolerance).
    pub fn contains(&self, q: &Vector3<f64>) -> bool {
        self.faces.iter().all(|f| f.normal.dot(q) - f.offset <= self.eps)
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    /// Indices of points that are hull vertices.
    pub fn vertices(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.faces.iter().flat_map(|f| f.v).collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

fn farthest(points: &[Vector3<f64>], key: impl Fn(&Vector3<f64>) -> f64) -> Option<usize> {
    (0..points.len()).max_by(|&i, &j| key(&points[i]).total_cmp(&key(&points[j])))
}
