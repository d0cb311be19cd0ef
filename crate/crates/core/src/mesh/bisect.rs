use super::Mesh;
use crate::error::{Error, Result};

/// Newest-vertex bisection of the marked triangles plus the closure needed
/// to keep the result conforming.
///
/// Every marked triangle is bisected at least once. The parent of a child is
/// its triangle index in `mesh`.
pub fn bisect(mesh: &Mesh, marked: &[usize]) -> Result<Mesh> {
    let nt = mesh.num_triangles();
    if let Some(&bad) = marked.iter().find(|&&t| t >= nt) {
        return Err(Error::InvalidArgument(format!("marked triangle {bad} out of range (mesh has {nt})")));
    }
    if marked.is_empty() {
        return Ok(mesh.clone());
    }

    let tri_edges = mesh.triangle_edges();
    let edges = mesh.edges();
    let mut edge_marked = vec![false; mesh.num_edges()];
    let mut work: Vec<usize> = Vec::new();
    let mark = |e: usize, flags: &mut Vec<bool>, work: &mut Vec<usize>| {
        if !flags[e] {
            flags[e] = true;
            work.push(edges[e].triangles.0);
            if let Some(t) = edges[e].triangles.1 {
                work.push(t);
            }
        }
    };
    for &t in marked {
        mark(tri_edges[t][2], &mut edge_marked, &mut work);
    }
    while let Some(t) = work.pop() {
        let te = tri_edges[t];
        if te.iter().any(|&e| edge_marked[e]) {
            mark(te[2], &mut edge_marked, &mut work);
        }
    }

    let mut vertices = mesh.vertices().to_vec();
    let mut midpoint = vec![usize::MAX; mesh.num_edges()];
    for e in 0..mesh.num_edges() {
        if edge_marked[e] {
            midpoint[e] = vertices.len();
            vertices.push(mesh.edge_midpoint(e));
        }
    }

    let mut triangles = Vec::with_capacity(nt + 4 * marked.len());
    let mut parents = Vec::with_capacity(triangles.capacity());
    for (t, &tri) in mesh.triangles().iter().enumerate() {
        let te = tri_edges[t];
        let refine = |e: usize| -> Option<usize> { edge_marked[e].then(|| midpoint[e]) };
        match refine(te[2]) {
            None => {
                triangles.push(tri);
                parents.push(t);
            }
            Some(m) => {
                let [t0, t1, t2] = tri;
                // Child [t2, t0, m] has refinement edge (t2, t0) = local edge 1.
                // Child [t1, t2, m] has refinement edge (t1, t2) = local edge 0.
                for (child, edge) in [([t2, t0, m], te[1]), ([t1, t2, m], te[0])] {
                    match refine(edge) {
                        None => {
                            triangles.push(child);
                            parents.push(t);
                        }
                        Some(mm) => {
                            let [c0, c1, c2] = child;
                            triangles.push([c2, c0, mm]);
                            triangles.push([c1, c2, mm]);
                            parents.extend([t, t]);
                        }
                    }
                }
            }
        }
    }

    Ok(Mesh::from_parts(mesh.extent(), vertices, triangles, parents, mesh.generation() + 1))
}
