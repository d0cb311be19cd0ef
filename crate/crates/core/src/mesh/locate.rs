use super::Mesh;

/// Bucket grid over the mesh extent for point location.
#[derive(Clone, Debug)]
pub struct PointLocator {
    nx: usize,
    ny: usize,
    x0: f64,
    y0: f64,
    hx: f64,
    hy: f64,
    buckets: Vec<Vec<usize>>,
}

const TOL: f64 = 1e-9;

impl PointLocator {
    pub fn new(mesh: &Mesh) -> Self {
        let ext = mesh.extent();
        let n = ((mesh.num_triangles() as f64 / 2.0).sqrt().ceil() as usize).max(1);
        let aspect = ext.height() / ext.width();
        let nx = n.max(1);
        let ny = ((n as f64 * aspect).ceil() as usize).max(1);
        let hx = ext.width() / nx as f64;
        let hy = ext.height() / ny as f64;
        let mut loc = PointLocator { nx, ny, x0: ext.x0, y0: ext.y0, hx, hy, buckets: vec![Vec::new(); nx * ny] };
        for t in 0..mesh.num_triangles() {
            let p = mesh.triangle_points(t);
            let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
            for q in p {
                xmin = xmin.min(q[0]);
                xmax = xmax.max(q[0]);
                ymin = ymin.min(q[1]);
                ymax = ymax.max(q[1]);
            }
            let (i0, j0) = loc.cell([xmin - TOL * hx, ymin - TOL * hy]);
            let (i1, j1) = loc.cell([xmax + TOL * hx, ymax + TOL * hy]);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    loc.buckets[j * nx + i].push(t);
                }
            }
        }
        loc
    }

    fn cell(&self, p: [f64; 2]) -> (usize, usize) {
        let fi = ((p[0] - self.x0) / self.hx).floor();
        let fj = ((p[1] - self.y0) / self.hy).floor();
        let i = fi.clamp(0.0, (self.nx - 1) as f64) as usize;
        let j = fj.clamp(0.0, (self.ny - 1) as f64) as usize;
        (i, j)
    }

    /// Triangle containing `p` and the barycentric coordinates of `p` in it.
    /// Points on shared edges resolve to the candidate with the largest
    /// minimum barycentric coordinate.
    pub fn locate(&self, mesh: &Mesh, p: [f64; 2]) -> Option<(usize, [f64; 3])> {
        let (i, j) = self.cell(p);
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &t in &self.buckets[j * self.nx + i] {
            let l = barycentric(mesh, t, p);
            let m = l[0].min(l[1]).min(l[2]);
            if best.as_ref().is_none_or(|b| m > b.2) {
                best = Some((t, l, m));
            }
        }
        best.filter(|b| b.2 >= -TOL).map(|(t, l, _)| (t, l))
    }
}

pub(crate) fn barycentric(mesh: &Mesh, t: usize, p: [f64; 2]) -> [f64; 3] {
    let [a, b, c] = mesh.triangle_points(t);
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    let l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / det;
    let l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / det;
    [1.0 - l1 - l2, l1, l2]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{bisect, build_rect_mesh, Rect};

    #[test]
    fn locates_vertices_and_centroids() {
        let mut m = build_rect_mesh(3, 4, Rect::new(0.0, 0.0, 1.0, 1.5)).unwrap();
        m = bisect(&m, &[0, 5, 7]).unwrap();
        let loc = PointLocator::new(&m);
        for t in 0..m.num_triangles() {
            let c = m.centroid(t);
            let (found, l) = loc.locate(&m, c).unwrap();
            assert_eq!(found, t);
            assert!(l.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-12));
        }
        for &v in m.vertices() {
            let (t, l) = loc.locate(&m, v).unwrap();
            let q = m.map_point(t, l);
            assert!((q[0] - v[0]).abs() < 1e-12 && (q[1] - v[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn outside_point_not_found() {
        let m = build_rect_mesh(2, 2, Rect::unit()).unwrap();
        let loc = PointLocator::new(&m);
        assert!(loc.locate(&m, [1.5, 0.5]).is_none());
    }
}
