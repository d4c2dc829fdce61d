//! Primal-dual interior-point method on the homogeneous self-dual embedding
//! with Nesterov-Todd scaling and Mehrotra predictor-corrector steps.

use nalgebra::{DMatrix, DVector};

use super::cone::{Block, ConeLayout, Scaling};
use super::{Cone, ConeProgram, Residuals, SolveReport, SolveStatus, SolverOptions};
use crate::error::Result;

const STATIC_REG: f64 = 1e-11;
const REFINE_STEPS: usize = 3;

/// Program with zero-cone rows split off: `A x = b`, `G x + s = h`, `s in K`.
struct Split {
    c: DVector<f64>,
    a: DMatrix<f64>,
    b: DVector<f64>,
    g: DMatrix<f64>,
    h: DVector<f64>,
    layout: ConeLayout,
    eq_rows: Vec<usize>,
    cone_rows: Vec<usize>,
}

impl Split {
    fn new(prog: &ConeProgram) -> Self {
        let mut eq_rows = Vec::new();
        let mut cone_rows = Vec::new();
        let mut blocks = Vec::new();
        let mut row = 0;
        for cone in &prog.cones {
            let n = cone.dim();
            match *cone {
                Cone::Zero(_) => eq_rows.extend(row..row + n),
                Cone::NonNeg(_) | Cone::SecondOrder(1) => {
                    if n > 0 {
                        blocks.push(Block::NonNeg {
                            start: cone_rows.len(),
                            len: n,
                        });
                    }
                    cone_rows.extend(row..row + n);
                }
                Cone::SecondOrder(_) => {
                    if n > 0 {
                        blocks.push(Block::Soc {
                            start: cone_rows.len(),
                            len: n,
                        });
                    }
                    cone_rows.extend(row..row + n);
                }
            }
            row += n;
        }
        let nv = prog.num_vars();
        let a = DMatrix::from_fn(eq_rows.len(), nv, |i, j| prog.a[(eq_rows[i], j)]);
        let b = DVector::from_fn(eq_rows.len(), |i, _| prog.b[eq_rows[i]]);
        let g = DMatrix::from_fn(cone_rows.len(), nv, |i, j| prog.a[(cone_rows[i], j)]);
        let h = DVector::from_fn(cone_rows.len(), |i, _| prog.b[cone_rows[i]]);
        Self {
            c: prog.c.clone(),
            a,
            b,
            g,
            h,
            layout: ConeLayout::new(blocks),
            eq_rows,
            cone_rows,
        }
    }

    fn n(&self) -> usize {
        self.c.len()
    }

    fn p(&self) -> usize {
        self.b.len()
    }

    fn m(&self) -> usize {
        self.h.len()
    }

    /// Scatters `(eq, cone)` parts back into full row order.
    fn merge(&self, eq: &DVector<f64>, cone: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.p() + self.m());
        for (i, &r) in self.eq_rows.iter().enumerate() {
            out[r] = eq[i];
        }
        for (i, &r) in self.cone_rows.iter().enumerate() {
            out[r] = cone[i];
        }
        out
    }
}

/// KKT operator `[[0, A^T, G^T], [A, 0, 0], [G, 0, -W^2]]`, factored in the
/// symmetrically scaled form `[[0, A^T, (W^-1 G)^T], [A, 0, 0], [W^-1 G, 0, -I]]`
/// with `W dz` as the third unknown.
struct Kkt<'a> {
    sp: &'a Split,
}

struct Factored<'a> {
    exact: DMatrix<f64>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    scaling: Option<&'a Scaling>,
    sp: &'a Split,
}

impl<'a> Kkt<'a> {
    fn new(sp: &'a Split) -> Self {
        Self { sp }
    }

    fn factor<'s>(&self, scaling: Option<&'s Scaling>) -> Factored<'s>
    where
        'a: 's,
    {
        let sp = self.sp;
        let (n, p, m) = (sp.n(), sp.p(), sp.m());
        let dim = n + p + m;
        let mut g = sp.g.clone();
        if let Some(sc) = scaling {
            for j in 0..n {
                let col = sc.apply(&sp.g.column(j).into_owned(), true);
                g.set_column(j, &col);
            }
        }
        let mut exact = DMatrix::zeros(dim, dim);
        exact.view_mut((n, 0), (p, n)).copy_from(&sp.a);
        exact.view_mut((0, n), (n, p)).copy_from(&sp.a.transpose());
        exact.view_mut((n + p, 0), (m, n)).copy_from(&g);
        exact.view_mut((0, n + p), (n, m)).copy_from(&g.transpose());
        for i in 0..m {
            exact[(n + p + i, n + p + i)] = -1.0;
        }
        let mut reg = exact.clone();
        let delta = STATIC_REG;
        for i in 0..n {
            reg[(i, i)] += delta;
        }
        for i in n..n + p {
            reg[(i, i)] -= delta;
        }
        Factored {
            exact,
            lu: reg.lu(),
            scaling,
            sp,
        }
    }
}

impl Factored<'_> {
    fn solve(&self, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        let mut x = self.lu.solve(rhs)?;
        for _ in 0..REFINE_STEPS {
            let r = rhs - &self.exact * &x;
            let dx = self.lu.solve(&r)?;
            x += dx;
        }
        if x.iter().all(|v| v.is_finite()) {
            Some(x)
        } else {
            None
        }
    }

    fn solve_parts(
        &self,
        rx: &DVector<f64>,
        ry: &DVector<f64>,
        rz: &DVector<f64>,
    ) -> Option<Parts> {
        let (n, p, m) = (self.sp.n(), self.sp.p(), self.sp.m());
        let mut rhs = DVector::zeros(n + p + m);
        rhs.rows_mut(0, n).copy_from(rx);
        rhs.rows_mut(n, p).copy_from(ry);
        match self.scaling {
            Some(sc) => rhs.rows_mut(n + p, m).copy_from(&sc.apply(rz, true)),
            None => rhs.rows_mut(n + p, m).copy_from(rz),
        }
        let sol = self.solve(&rhs)?;
        let v = sol.rows(n + p, m).into_owned();
        let z = match self.scaling {
            Some(sc) => sc.apply(&v, true),
            None => v,
        };
        Some(Parts {
            x: sol.rows(0, n).into_owned(),
            y: sol.rows(n, p).into_owned(),
            z,
        })
    }
}

struct Parts {
    x: DVector<f64>,
    y: DVector<f64>,
    z: DVector<f64>,
}

#[derive(Clone)]
struct Iterate {
    x: DVector<f64>,
    y: DVector<f64>,
    z: DVector<f64>,
    s: DVector<f64>,
    tau: f64,
    kappa: f64,
}

struct Candidate {
    it: Iterate,
    res: Residuals,
    iterations: usize,
}

fn residuals(sp: &Split, it: &Iterate) -> Residuals {
    let x = &it.x / it.tau;
    let y = &it.y / it.tau;
    let z = &it.z / it.tau;
    let s = &it.s / it.tau;
    let rp_eq = &sp.a * &x - &sp.b;
    let rp_cone = &sp.g * &x + &s - &sp.h;
    let bnorm = (sp.b.norm_squared() + sp.h.norm_squared()).sqrt();
    let primal = (rp_eq.norm_squared() + rp_cone.norm_squared()).sqrt() / bnorm.max(1.0);
    let rd = sp.a.transpose() * &y + sp.g.transpose() * &z + &sp.c;
    let dual = rd.norm() / sp.c.norm().max(1.0);
    let pcost = sp.c.dot(&x);
    let dcost = -sp.b.dot(&y) - sp.h.dot(&z);
    let gap = (pcost - dcost).abs().max(s.dot(&z).abs()) / pcost.abs().max(1.0);
    Residuals { primal, dual, gap }
}

fn initial_point(sp: &Split, kkt: &Kkt) -> Option<Iterate> {
    let (n, p, m) = (sp.n(), sp.p(), sp.m());
    let f = kkt.factor(None);
    let primal = f.solve_parts(&DVector::zeros(n), &sp.b, &sp.h)?;
    let dual = f.solve_parts(&(-&sp.c), &DVector::zeros(p), &DVector::zeros(m))?;
    let (x, zp) = (primal.x, primal.z);
    let (y, z) = (dual.y, dual.z);
    let e = sp.layout.identity();
    let mut s = -zp;
    let mut z = z;
    if m > 0 {
        let ap = -sp.layout.min_eig(&s);
        if ap >= -1e-8 * s.norm().max(1.0) {
            s += &e * (1.0 + ap.max(0.0));
        }
        let ad = -sp.layout.min_eig(&z);
        if ad >= -1e-8 * z.norm().max(1.0) {
            z += &e * (1.0 + ad.max(0.0));
        }
    }
    Some(Iterate {
        x,
        y,
        z,
        s,
        tau: 1.0,
        kappa: 1.0,
    })
}

struct Direction {
    x: DVector<f64>,
    y: DVector<f64>,
    z: DVector<f64>,
    s: DVector<f64>,
    tau: f64,
    kappa: f64,
}

struct Hsde<'a> {
    sp: &'a Split,
    r1: DVector<f64>,
    r2: DVector<f64>,
    r3: DVector<f64>,
    r4: f64,
}

impl<'a> Hsde<'a> {
    fn new(sp: &'a Split, it: &Iterate) -> Self {
        let r1 = sp.a.transpose() * &it.y + sp.g.transpose() * &it.z + &sp.c * it.tau;
        let r2 = &sp.a * &it.x - &sp.b * it.tau;
        let r3 = &sp.g * &it.x + &it.s - &sp.h * it.tau;
        let r4 = sp.c.dot(&it.x) + sp.b.dot(&it.y) + sp.h.dot(&it.z) + it.kappa;
        Self { sp, r1, r2, r3, r4 }
    }

    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        f: &Factored,
        sc: &Scaling,
        u1: &Parts,
        it: &Iterate,
        eta: f64,
        dc: &DVector<f64>,
        dk: f64,
    ) -> Option<Direction> {
        let sp = self.sp;
        let ldc = sp.layout.jdiv(&sc.lambda, dc);
        let rx = &self.r1 * -eta;
        let ry = &self.r2 * -eta;
        let rz = &self.r3 * -eta - sc.apply(&ldc, false);
        let u2 = f.solve_parts(&rx, &ry, &rz)?;
        let q_u1 = sp.c.dot(&u1.x) + sp.b.dot(&u1.y) + sp.h.dot(&u1.z);
        let q_u2 = sp.c.dot(&u2.x) + sp.b.dot(&u2.y) + sp.h.dot(&u2.z);
        let denom = q_u1 - it.kappa / it.tau;
        let dtau = (-eta * self.r4 - dk / it.tau - q_u2) / denom;
        if !dtau.is_finite() {
            return None;
        }
        let dx = u2.x + &u1.x * dtau;
        let dy = u2.y + &u1.y * dtau;
        let dz = u2.z + &u1.z * dtau;
        // from the linearized primal equation rather than `W (ldc - W dz)`:
        // the latter amplifies solve error by the condition number of W
        let ds = &sp.h * dtau - &self.r3 * eta - &sp.g * &dx;
        let dkappa = (dk - it.kappa * dtau) / it.tau;
        Some(Direction {
            x: dx,
            y: dy,
            z: dz,
            s: ds,
            tau: dtau,
            kappa: dkappa,
        })
    }
}

fn max_step(sp: &Split, it: &Iterate, d: &Direction) -> f64 {
    let mut a = sp.layout.max_step(&it.s, &d.s, f64::INFINITY);
    a = a.min(sp.layout.max_step(&it.z, &d.z, f64::INFINITY));
    if d.tau < 0.0 {
        a = a.min(-it.tau / d.tau);
    }
    if d.kappa < 0.0 {
        a = a.min(-it.kappa / d.kappa);
    }
    a
}

/// Solves `prog` to the tolerances in `opts`.
pub fn solve(prog: &ConeProgram, opts: &SolverOptions) -> Result<SolveReport> {
    prog.validate()?;
    let sp = Split::new(prog);
    let kkt = Kkt::new(&sp);
    let degree = sp.layout.degree as f64;

    let fail = |best: Option<Candidate>, sp: &Split| -> SolveReport {
        match best {
            Some(c) => report(sp, &c.it, c.res, SolveStatus::MaxIterations, c.iterations),
            None => SolveReport {
                status: SolveStatus::MaxIterations,
                x: DVector::zeros(sp.n()),
                s: DVector::zeros(sp.p() + sp.m()),
                y: DVector::zeros(sp.p() + sp.m()),
                objective: f64::NAN,
                iterations: 0,
                residuals: Residuals {
                    primal: f64::INFINITY,
                    dual: f64::INFINITY,
                    gap: f64::INFINITY,
                },
            },
        }
    };

    let Some(mut it) = initial_point(&sp, &kkt) else {
        return Ok(fail(None, &sp));
    };
    let mut best: Option<Candidate> = None;

    for iter in 0..=opts.max_iter {
        let res = residuals(&sp, &it);
        if res.primal <= opts.feas_tol && res.dual <= opts.feas_tol && res.gap <= opts.gap_tol {
            return Ok(report(&sp, &it, res, SolveStatus::Optimal, iter));
        }
        if res.max().is_finite() && best.as_ref().is_none_or(|b| res.max() < b.res.max()) {
            best = Some(Candidate {
                it: it.clone(),
                res,
                iterations: iter,
            });
        }
        if let Some(status) = certificate(&sp, &it, opts) {
            return Ok(certificate_report(&sp, &it, status, iter));
        }
        if iter == opts.max_iter {
            break;
        }

        let sc = Scaling::new(&sp.layout, &it.s, &it.z);
        let f = kkt.factor(Some(&sc));
        let Some(u1) = f.solve_parts(&(-&sp.c), &sp.b, &sp.h) else {
            break;
        };
        let hsde = Hsde::new(&sp, &it);
        let mu = (it.s.dot(&it.z) + it.tau * it.kappa) / (degree + 1.0);

        let lam_sq = sp.layout.jprod(&sc.lambda, &sc.lambda);
        let dc_aff = -&lam_sq;
        let dk_aff = -it.tau * it.kappa;
        let Some(aff) = hsde.direction(&f, &sc, &u1, &it, 1.0, &dc_aff, dk_aff) else {
            break;
        };
        let a_aff = max_step(&sp, &it, &aff).min(1.0);
        let sigma = (1.0 - a_aff).powi(3);

        let corr = sp
            .layout
            .jprod(&sc.apply(&aff.s, true), &sc.apply(&aff.z, false));
        let dc = -lam_sq + sp.layout.identity() * (sigma * mu) - corr;
        let dk = -it.tau * it.kappa + sigma * mu - aff.tau * aff.kappa;
        let Some(d) = hsde.direction(&f, &sc, &u1, &it, 1.0 - sigma, &dc, dk) else {
            break;
        };
        let mut alpha = (opts.step_fraction * max_step(&sp, &it, &d)).min(1.0);
        // rounding can still leave the cone right at the boundary
        let mut next = None;
        while alpha > 1e-14 {
            let cand = Iterate {
                x: &it.x + &d.x * alpha,
                y: &it.y + &d.y * alpha,
                z: &it.z + &d.z * alpha,
                s: &it.s + &d.s * alpha,
                tau: it.tau + d.tau * alpha,
                kappa: it.kappa + d.kappa * alpha,
            };
            if sp.layout.min_eig(&cand.s) > 0.0 && sp.layout.min_eig(&cand.z) > 0.0 && cand.tau > 0.0 && cand.kappa > 0.0 {
                next = Some(cand);
                break;
            }
            alpha *= 0.5;
        }
        let Some(next) = next else {
            break;
        };
        it = next;
        // keep the embedding away from overflow
        let scale = it.tau.max(it.kappa);
        if !(1e-12..=1e12).contains(&scale) {
            let k = 1.0 / scale;
            it.x *= k;
            it.y *= k;
            it.z *= k;
            it.s *= k;
            it.tau *= k;
            it.kappa *= k;
        }
    }
    Ok(fail(best, &sp))
}

fn certificate(sp: &Split, it: &Iterate, opts: &SolverOptions) -> Option<SolveStatus> {
    let bnorm = (sp.b.norm_squared() + sp.h.norm_squared()).sqrt().max(1.0);
    let cnorm = sp.c.norm().max(1.0);
    let by = sp.b.dot(&it.y) + sp.h.dot(&it.z);
    if by < 0.0 {
        let k = -1.0 / by;
        let r = (sp.a.transpose() * &it.y + sp.g.transpose() * &it.z) * k;
        if r.norm() / cnorm <= opts.feas_tol && it.tau < it.kappa {
            return Some(SolveStatus::Infeasible);
        }
    }
    let cx = sp.c.dot(&it.x);
    if cx < 0.0 {
        let k = -1.0 / cx;
        let r_eq = &sp.a * &it.x * k;
        let r_cone = (&sp.g * &it.x + &it.s) * k;
        let r = (r_eq.norm_squared() + r_cone.norm_squared()).sqrt();
        if r / bnorm <= opts.feas_tol && it.tau < it.kappa {
            return Some(SolveStatus::Unbounded);
        }
    }
    None
}

fn certificate_report(sp: &Split, it: &Iterate, status: SolveStatus, iterations: usize) -> SolveReport {
    let nan = Residuals {
        primal: f64::NAN,
        dual: f64::NAN,
        gap: f64::NAN,
    };
    match status {
        SolveStatus::Infeasible => {
            let k = -1.0 / (sp.b.dot(&it.y) + sp.h.dot(&it.z));
            SolveReport {
                status,
                x: DVector::zeros(sp.n()),
                s: DVector::zeros(sp.p() + sp.m()),
                y: sp.merge(&(&it.y * k), &(&it.z * k)),
                objective: f64::INFINITY,
                iterations,
                residuals: nan,
            }
        }
        _ => {
            let k = -1.0 / sp.c.dot(&it.x);
            SolveReport {
                status,
                x: &it.x * k,
                s: sp.merge(&DVector::zeros(sp.p()), &(&it.s * k)),
                y: DVector::zeros(sp.p() + sp.m()),
                objective: f64::NEG_INFINITY,
                iterations,
                residuals: nan,
            }
        }
    }
}

fn report(sp: &Split, it: &Iterate, res: Residuals, status: SolveStatus, iterations: usize) -> SolveReport {
    let x = &it.x / it.tau;
    SolveReport {
        status,
        objective: sp.c.dot(&x),
        x,
        s: sp.merge(&DVector::zeros(sp.p()), &(&it.s / it.tau)),
        y: sp.merge(&(&it.y / it.tau), &(&it.z / it.tau)),
        iterations,
        residuals: res,
    }
}

/// Euclidean distance from `v` to the cone.
fn cone_distance(cone: Cone, v: &[f64]) -> f64 {
    match cone {
        Cone::Zero(_) => v.iter().map(|a| a * a).sum::<f64>().sqrt(),
        Cone::NonNeg(_) => v.iter().map(|a| a.min(0.0).powi(2)).sum::<f64>().sqrt(),
        Cone::SecondOrder(n) => {
            if n == 0 {
                return 0.0;
            }
            let t = v[0];
            let r = v[1..].iter().map(|a| a * a).sum::<f64>().sqrt();
            if r <= t {
                0.0
            } else if r <= -t {
                (t * t + r * r).sqrt()
            } else {
                // projection onto the cone: ((t + r)/2) (1, u/r)
                let a = 0.5 * (t + r);
                ((t - a).powi(2) + (r - a).powi(2)).sqrt()
            }
        }
    }
}

/// Dual cone of a block: zero cones are free in the dual.
fn dual_cone_distance(cone: Cone, v: &[f64]) -> f64 {
    match cone {
        Cone::Zero(_) => 0.0,
        other => cone_distance(other, v),
    }
}

/// Relative KKT residuals recomputed from the original data, with the
/// primal slack taken as `b - A x`.
pub fn kkt_residuals(prog: &ConeProgram, x: &DVector<f64>, y: &DVector<f64>) -> Residuals {
    let s = &prog.b - &prog.a * x;
    let mut pdist = 0.0;
    let mut ddist = 0.0;
    let mut row = 0;
    for &cone in &prog.cones {
        let n = cone.dim();
        pdist += cone_distance(cone, &s.as_slice()[row..row + n]).powi(2);
        ddist += dual_cone_distance(cone, &y.as_slice()[row..row + n]).powi(2);
        row += n;
    }
    let primal = pdist.sqrt() / prog.b.norm().max(1.0);
    let rd = prog.a.transpose() * y + &prog.c;
    let dual = (rd.norm() + ddist.sqrt()) / prog.c.norm().max(1.0);
    let pcost = prog.c.dot(x);
    let dcost = -prog.b.dot(y);
    let gap = (pcost - dcost).abs() / pcost.abs().max(1.0);
    Residuals { primal, dual, gap }
}
