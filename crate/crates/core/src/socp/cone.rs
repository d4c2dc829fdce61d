//! Jordan algebra and Nesterov-Todd scaling for products of nonnegative
//! orthants and second-order cones.

use nalgebra::DVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Block {
    NonNeg { start: usize, len: usize },
    Soc { start: usize, len: usize },
}

/// Cone layout of the inequality rows (zero cones removed).
#[derive(Debug, Clone)]
pub(crate) struct ConeLayout {
    pub blocks: Vec<Block>,
    pub dim: usize,
    /// Barrier degree: one per orthant coordinate, one per second-order cone.
    pub degree: usize,
}

impl ConeLayout {
    pub fn new(blocks: Vec<Block>) -> Self {
        let mut dim = 0;
        let mut degree = 0;
        for b in &blocks {
            match *b {
                Block::NonNeg { len, .. } => {
                    dim += len;
                    degree += len;
                }
                Block::Soc { len, .. } => {
                    dim += len;
                    degree += 1;
                }
            }
        }
        Self { blocks, dim, degree }
    }

    /// Identity element `e`.
    pub fn identity(&self) -> DVector<f64> {
        let mut e = DVector::zeros(self.dim);
        for b in &self.blocks {
            match *b {
                Block::NonNeg { start, len } => e.rows_mut(start, len).fill(1.0),
                Block::Soc { start, .. } => e[start] = 1.0,
            }
        }
        e
    }

    /// Smallest eigenvalue of `u` over all blocks; `u` is interior iff positive.
    pub fn min_eig(&self, u: &DVector<f64>) -> f64 {
        let mut m = f64::INFINITY;
        for b in &self.blocks {
            match *b {
                Block::NonNeg { start, len } => {
                    for i in start..start + len {
                        m = m.min(u[i]);
                    }
                }
                Block::Soc { start, len } => {
                    let tail = u.rows(start + 1, len - 1).norm();
                    m = m.min(u[start] - tail);
                }
            }
        }
        m
    }

    /// Jordan product `u o v`.
    pub fn jprod(&self, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        for b in &self.blocks {
            match *b {
                Block::NonNeg { start, len } => {
                    for i in start..start + len {
                        out[i] = u[i] * v[i];
                    }
                }
                Block::Soc { start, len } => {
                    let u1 = u.rows(start + 1, len - 1);
                    let v1 = v.rows(start + 1, len - 1);
                    out[start] = u[start] * v[start] + u1.dot(&v1);
                    for i in 1..len {
                        out[start + i] = u[start] * v[start + i] + v[start] * u[start + i];
                    }
                }
            }
        }
        out
    }

    /// `x` with `lambda o x = d`.
    pub fn jdiv(&self, lambda: &DVector<f64>, d: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        for b in &self.blocks {
            match *b {
                Block::NonNeg { start, len } => {
                    for i in start..start + len {
                        out[i] = d[i] / lambda[i];
                    }
                }
                Block::Soc { start, len } => {
                    let l0 = lambda[start];
                    let l1 = lambda.rows(start + 1, len - 1);
                    let d1 = d.rows(start + 1, len - 1);
                    let det = soc_det(l0, l1.norm());
                    let x0 = (l0 * d[start] - l1.dot(&d1)) / det;
                    out[start] = x0;
                    for i in 1..len {
                        out[start + i] = (d[start + i] - x0 * lambda[start + i]) / l0;
                    }
                }
            }
        }
        out
    }

    /// Largest `alpha` (capped at `cap`) with `u + alpha du` in the cone.
    pub fn max_step(&self, u: &DVector<f64>, du: &DVector<f64>, cap: f64) -> f64 {
        let mut alpha = cap;
        for b in &self.blocks {
            match *b {
                Block::NonNeg { start, len } => {
                    for i in start..start + len {
                        if du[i] < 0.0 {
                            alpha = alpha.min(-u[i] / du[i]);
                        }
                    }
                }
                Block::Soc { start, len } => {
                    alpha = alpha.min(soc_max_step(
                        u[start],
                        u.rows(start + 1, len - 1).as_slice(),
                        du[start],
                        du.rows(start + 1, len - 1).as_slice(),
                    ));
                }
            }
        }
        alpha.max(0.0)
    }
}

/// `x0^2 - ||x1||^2` without the cancellation of the naive form.
fn soc_det(x0: f64, tail_norm: f64) -> f64 {
    (x0 - tail_norm) * (x0 + tail_norm)
}

/// Exit point of the ray `u + alpha du` from a second-order cone.
fn soc_max_step(u0: f64, u1: &[f64], d0: f64, d1: &[f64]) -> f64 {
    let un = u1.iter().map(|v| v * v).sum::<f64>().sqrt();
    let dn = d1.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ud: f64 = u1.iter().zip(d1).map(|(a, b)| a * b).sum();
    // f(alpha) = qa alpha^2 + 2 qb alpha + qc, qc > 0 at an interior point.
    let qa = soc_det(d0, dn);
    let qb = u0 * d0 - ud;
    let qc = soc_det(u0, un).max(0.0);
    let mut best = f64::INFINITY;
    if qa.abs() <= 1e-300 {
        if qb < 0.0 {
            best = -qc / (2.0 * qb);
        }
    } else {
        let disc = qb * qb - qa * qc;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            // stable root pair
            let q = -(qb + qb.signum() * sq);
            let r1 = if q != 0.0 { qc / q } else { f64::INFINITY };
            let r2 = q / qa;
            for r in [r1, r2] {
                if r > 0.0 && r < best {
                    best = r;
                }
            }
        }
    }
    if d0 < 0.0 {
        best = best.min(-u0 / d0);
    }
    best
}

/// Nesterov-Todd scaling point for one block.
#[derive(Debug, Clone)]
enum BlockScaling {
    /// `W = diag(d)`, `d = sqrt(s / z)`.
    NonNeg { start: usize, d: Vec<f64> },
    /// `W = eta [[w0, w1^T], [w1, I + w1 w1^T / (1 + w0)]]`, `w0^2 - ||w1||^2 = 1`.
    Soc {
        start: usize,
        eta: f64,
        w: Vec<f64>,
    },
}

/// Symmetric scaling `W` with `W z = W^{-1} s = lambda`.
#[derive(Debug, Clone)]
pub(crate) struct Scaling {
    blocks: Vec<BlockScaling>,
    pub lambda: DVector<f64>,
    dim: usize,
}

impl Scaling {
    pub fn new(layout: &ConeLayout, s: &DVector<f64>, z: &DVector<f64>) -> Self {
        let mut blocks = Vec::with_capacity(layout.blocks.len());
        for b in &layout.blocks {
            match *b {
                Block::NonNeg { start, len } => {
                    let d = (start..start + len).map(|i| (s[i] / z[i]).sqrt()).collect();
                    blocks.push(BlockScaling::NonNeg { start, d });
                }
                Block::Soc { start, len } => {
                    let sv = s.rows(start, len);
                    let zv = z.rows(start, len);
                    let sn = soc_det(sv[0], sv.rows(1, len - 1).norm()).sqrt();
                    let zn = soc_det(zv[0], zv.rows(1, len - 1).norm()).sqrt();
                    let sb: Vec<f64> = sv.iter().map(|v| v / sn).collect();
                    let zb: Vec<f64> = zv.iter().map(|v| v / zn).collect();
                    let dot: f64 = sb.iter().zip(&zb).map(|(a, b)| a * b).sum();
                    let gamma = ((1.0 + dot) / 2.0).sqrt();
                    let mut w = Vec::with_capacity(len);
                    w.push((sb[0] + zb[0]) / (2.0 * gamma));
                    for i in 1..len {
                        w.push((sb[i] - zb[i]) / (2.0 * gamma));
                    }
                    // restore w0 from the tail so that w^T J w = 1 exactly
                    let tail: f64 = w[1..].iter().map(|v| v * v).sum();
                    w[0] = (1.0 + tail).sqrt();
                    blocks.push(BlockScaling::Soc {
                        start,
                        eta: (sn / zn).sqrt(),
                        w,
                    });
                }
            }
        }
        let mut sc = Self {
            blocks,
            lambda: DVector::zeros(layout.dim),
            dim: layout.dim,
        };
        sc.lambda = sc.apply(z, false);
        sc
    }

    /// `W v` (or `W^{-1} v` when `inverse`).
    pub fn apply(&self, v: &DVector<f64>, inverse: bool) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        for b in &self.blocks {
            match b {
                BlockScaling::NonNeg { start, d } => {
                    for (i, di) in d.iter().enumerate() {
                        out[start + i] = if inverse { v[start + i] / di } else { v[start + i] * di };
                    }
                }
                BlockScaling::Soc { start, eta, w } => {
                    let len = w.len();
                    let v0 = v[*start];
                    let w1v1: f64 = (1..len).map(|i| w[i] * v[start + i]).sum();
                    let (scale, sign) = if inverse { (1.0 / eta, -1.0) } else { (*eta, 1.0) };
                    out[*start] = scale * (w[0] * v0 + sign * w1v1);
                    let coef = sign * v0 + w1v1 / (1.0 + w[0]);
                    for i in 1..len {
                        out[start + i] = scale * (v[start + i] + coef * w[i]);
                    }
                }
            }
        }
        out
    }

}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> ConeLayout {
        ConeLayout::new(vec![
            Block::NonNeg { start: 0, len: 2 },
            Block::Soc { start: 2, len: 4 },
            Block::Soc { start: 6, len: 3 },
        ])
    }

    fn interior(seed: f64) -> DVector<f64> {
        DVector::from_vec(vec![
            0.5 + seed,
            2.0,
            3.0 + seed,
            1.0,
            -0.5 * seed,
            0.7,
            1.5,
            -0.3,
            0.2 + 0.1 * seed,
        ])
    }

    #[test]
    fn nt_scaling_maps_z_and_s_to_the_same_point() {
        let l = layout();
        let s = interior(0.3);
        let z = interior(1.7);
        let sc = Scaling::new(&l, &s, &z);
        let wz = sc.apply(&z, false);
        let winv_s = sc.apply(&s, true);
        assert!((wz - winv_s).norm() < 1e-12);
    }

    #[test]
    fn inverse_scaling_round_trips() {
        let l = layout();
        let sc = Scaling::new(&l, &interior(0.1), &interior(2.0));
        let v = DVector::from_fn(9, |i, _| (i as f64).sin());
        let back = sc.apply(&sc.apply(&v, false), true);
        assert!((back - v).norm() < 1e-12);
    }

    #[test]
    fn jordan_division_inverts_product() {
        let l = layout();
        let lam = interior(0.5);
        let x = DVector::from_fn(9, |i, _| (i as f64 * 1.3).sin());
        let d = l.jprod(&lam, &x);
        assert!((l.jdiv(&lam, &d) - x).norm() < 1e-12);
    }

    #[test]
    fn step_to_boundary() {
        let l = ConeLayout::new(vec![Block::Soc { start: 0, len: 2 }]);
        let u = DVector::from_vec(vec![2.0, 0.0]);
        let du = DVector::from_vec(vec![0.0, 1.0]);
        assert!((l.max_step(&u, &du, f64::INFINITY) - 2.0).abs() < 1e-14);
        let du = DVector::from_vec(vec![1.0, 0.0]);
        assert_eq!(l.max_step(&u, &du, 1.0), 1.0);
        let l = ConeLayout::new(vec![Block::NonNeg { start: 0, len: 2 }]);
        let u = DVector::from_vec(vec![1.0, 4.0]);
        let du = DVector::from_vec(vec![-2.0, -1.0]);
        assert_eq!(l.max_step(&u, &du, 10.0), 0.5);
    }

    #[test]
    fn min_eig_detects_interior() {
        let l = layout();
        assert!(l.min_eig(&interior(0.0)) > 0.0);
        assert!(l.min_eig(&l.identity()) == 1.0);
        let mut u = interior(0.0);
        u[2] = 0.1;
        assert!(l.min_eig(&u) < 0.0);
    }
}
