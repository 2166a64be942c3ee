#![allow(dead_code)]

use rand::Rng;
use remmpc_core::analysis::{random_matrix, random_pd};
use remmpc_core::matops::{Mat, Vector};
use remmpc_core::qp::QpProblem;

pub fn column(m: Mat) -> Vector {
    m.column(0).into_owned()
}

/// A random QP that is feasible by construction, together with a feasible
/// point: `n ≤ 6` unknowns, at most two equalities, `1..=8` inequalities.
pub fn random_feasible_qp<R: Rng>(rng: &mut R) -> (QpProblem, Vector) {
    let n = rng.gen_range(1..=6);
    let n_eq = rng.gen_range(0..=(n - 1).min(2));
    let n_ineq = rng.gen_range(1..=8);
    let z0 = column(random_matrix(rng, n, 1));
    let aeq = random_matrix(rng, n_eq, n);
    let beq = &aeq * &z0;
    let f = random_matrix(rng, n_ineq, n);
    let slack = Vector::from_fn(n_ineq, |_, _| {
        if rng.gen_bool(0.2) {
            0.0
        } else {
            rng.gen_range(0.0..1.0)
        }
    });
    let g = &f * &z0 + slack;
    let c = column(random_matrix(rng, n, 1)) * 4.0;
    let p = QpProblem::new(random_pd(rng, n), aeq, beq, f, g)
        .unwrap()
        .with_linear(c)
        .unwrap();
    (p, z0)
}

/// Best KKT point over every subset of inequality rows treated as equalities.
/// Returns `None` if no subset yields a primal- and dual-feasible point.
pub fn enumerate_active_sets(p: &QpProblem) -> Option<(Vector, f64)> {
    let n = p.dim();
    let m = p.num_ineq();
    let mut best: Option<(Vector, f64)> = None;
    for mask in 0u32..(1 << m) {
        let rows: Vec<usize> = (0..m).filter(|i| mask >> i & 1 == 1).collect();
        let k = p.num_eq() + rows.len();
        if k > n {
            continue;
        }
        let mut c = Mat::zeros(k, n);
        let mut d = Vector::zeros(k);
        for i in 0..p.num_eq() {
            c.row_mut(i).copy_from(&p.aeq.row(i));
            d[i] = p.beq[i];
        }
        for (j, &r) in rows.iter().enumerate() {
            c.row_mut(p.num_eq() + j).copy_from(&p.fineq.row(r));
            d[p.num_eq() + j] = p.gineq[r];
        }
        let mut kkt = Mat::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&(&p.h * 2.0));
        kkt.view_mut((0, n), (n, k)).copy_from(&c.transpose());
        kkt.view_mut((n, 0), (k, n)).copy_from(&c);
        let mut rhs = Vector::zeros(n + k);
        rhs.rows_mut(0, n).copy_from(&(-&p.c));
        rhs.rows_mut(n, k).copy_from(&d);
        let lu = kkt.full_piv_lu();
        if !lu.is_invertible() {
            continue;
        }
        let Some(sol) = lu.solve(&rhs) else { continue };
        let z = sol.rows(0, n).into_owned();
        let lambda = sol.rows(n + p.num_eq(), rows.len()).into_owned();
        let feasible = m == 0 || (&p.fineq * &z - &p.gineq).max() <= 1e-9;
        let dual_ok = lambda.iter().all(|&l| l >= -1e-9);
        if feasible && dual_ok {
            let obj = p.objective(&z);
            if best.as_ref().is_none_or(|(_, b)| obj < *b) {
                best = Some((z, obj));
            }
        }
    }
    best
}
