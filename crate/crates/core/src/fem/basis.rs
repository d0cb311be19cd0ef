use crate::mesh::{Mesh, QuadratureRule};

/// Quadratic Lagrange basis in barycentrics: vertex functions, then edge
/// functions (edge `i` opposite vertex `i`).
#[inline]
pub fn p2_values(l: [f64; 3]) -> [f64; 6] {
    [
        l[0] * (2.0 * l[0] - 1.0),
        l[1] * (2.0 * l[1] - 1.0),
        l[2] * (2.0 * l[2] - 1.0),
        4.0 * l[1] * l[2],
        4.0 * l[2] * l[0],
        4.0 * l[0] * l[1],
    ]
}

#[inline]
pub fn p2_gradients(l: [f64; 3], g: &[[f64; 2]; 3]) -> [[f64; 2]; 6] {
    let mut out = [[0.0; 2]; 6];
    for i in 0..3 {
        let s = 4.0 * l[i] - 1.0;
        out[i] = [s * g[i][0], s * g[i][1]];
        let j = (i + 1) % 3;
        let k = (i + 2) % 3;
        out[3 + i] = [4.0 * (l[j] * g[k][0] + l[k] * g[j][0]), 4.0 * (l[j] * g[k][1] + l[k] * g[j][1])];
    }
    out
}

/// Per-triangle geometric data evaluated at the points of a quadrature rule.
pub struct ElementQuad {
    /// `2 |T| w_q`, so that `sum_q jw[q] f(x_q)` approximates the integral.
    pub jw: Vec<f64>,
    pub l: Vec<[f64; 3]>,
    pub n2: Vec<[f64; 6]>,
    pub dn2: Vec<[[f64; 2]; 6]>,
    /// Constant P1 gradients.
    pub dl: [[f64; 2]; 3],
    pub area: f64,
}

impl ElementQuad {
    pub fn new(rule: &QuadratureRule) -> Self {
        let nq = rule.len();
        ElementQuad {
            jw: vec![0.0; nq],
            l: rule.points.clone(),
            n2: rule.points.iter().map(|&l| p2_values(l)).collect(),
            dn2: vec![[[0.0; 2]; 6]; nq],
            dl: [[0.0; 2]; 3],
            area: 0.0,
        }
    }

    /// Refreshes the triangle-dependent data for triangle `t`.
    pub fn reinit(&mut self, mesh: &Mesh, t: usize, rule: &QuadratureRule) {
        self.area = mesh.area(t);
        self.dl = mesh.barycentric_gradients(t);
        for q in 0..rule.len() {
            self.jw[q] = 2.0 * self.area * rule.weights[q];
            self.dn2[q] = p2_gradients(self.l[q], &self.dl);
        }
    }

    pub fn len(&self) -> usize {
        self.jw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jw.is_empty()
    }
}

#[inline]
pub fn p1_at(v: &[f64], tri: &[usize; 3], l: [f64; 3]) -> f64 {
    l[0] * v[tri[0]] + l[1] * v[tri[1]] + l[2] * v[tri[2]]
}

#[inline]
pub fn p1_grad(v: &[f64], tri: &[usize; 3], dl: &[[f64; 2]; 3]) -> [f64; 2] {
    [
        v[tri[0]] * dl[0][0] + v[tri[1]] * dl[1][0] + v[tri[2]] * dl[2][0],
        v[tri[0]] * dl[0][1] + v[tri[1]] * dl[1][1] + v[tri[2]] * dl[2][1],
    ]
}

/// Value of a component-major P2 vector field at a quadrature point.
#[inline]
pub fn p2_vec_at(v: &[f64], n2: usize, dofs: &[usize; 6], n: &[f64; 6]) -> [f64; 2] {
    let mut out = [0.0; 2];
    for k in 0..6 {
        out[0] += n[k] * v[dofs[k]];
        out[1] += n[k] * v[n2 + dofs[k]];
    }
    out
}

/// Gradient `[[d_x v_x, d_y v_x], [d_x v_y, d_y v_y]]` of a P2 vector field.
#[inline]
pub fn p2_vec_grad(v: &[f64], n2: usize, dofs: &[usize; 6], dn: &[[f64; 2]; 6]) -> [[f64; 2]; 2] {
    let mut g = [[0.0; 2]; 2];
    for k in 0..6 {
        let (a, b) = (v[dofs[k]], v[n2 + dofs[k]]);
        g[0][0] += a * dn[k][0];
        g[0][1] += a * dn[k][1];
        g[1][0] += b * dn[k][0];
        g[1][1] += b * dn[k][1];
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p2_partition_of_unity_and_nodality() {
        let nodes =
            [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]];
        for (i, &l) in nodes.iter().enumerate() {
            let n = p2_values(l);
            for (j, &v) in n.iter().enumerate() {
                assert!((v - (i == j) as i32 as f64).abs() < 1e-15);
            }
        }
        let n = p2_values([0.2, 0.3, 0.5]);
        assert!((n.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn p2_gradients_sum_to_zero() {
        let g = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
        let dn = p2_gradients([0.2, 0.3, 0.5], &g);
        let s: [f64; 2] = dn.iter().fold([0.0, 0.0], |a, d| [a[0] + d[0], a[1] + d[1]]);
        assert!(s[0].abs() < 1e-14 && s[1].abs() < 1e-14);
    }
}
