//! Projection of multiplier vectors onto a polyhedral feasible set.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Dimension of the multiplier vectors handled here.
pub const DUAL_DIM: usize = 5;

pub type DualVector = [f64; DUAL_DIM];

/// Linear description of an admissible multiplier set:
/// `a . x = b` for every equality, `a . x <= b` for every half-space, and `x >= 0`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DualConstraints {
    pub equalities: Vec<(DualVector, f64)>,
    pub halfspaces: Vec<(DualVector, f64)>,
}

fn dot(a: &DualVector, b: &DualVector) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl DualConstraints {
    /// Largest violation of any equality, half-space or sign restriction.
    pub fn violation(&self, x: &DualVector) -> f64 {
        let mut worst: f64 = x.iter().fold(0.0, |w, &v| w.max(-v));
        for (a, b) in &self.equalities {
            worst = worst.max((dot(a, x) - b).abs());
        }
        for (a, b) in &self.halfspaces {
            worst = worst.max(dot(a, x) - b);
        }
        worst
    }

    fn within_inequalities(&self, x: &DualVector) -> bool {
        x.iter().all(|&v| v >= 0.0)
            && self.halfspaces.iter().all(|(a, b)| dot(a, x) - b <= 1e-12 * b.abs().max(1.0))
    }
}

/// Euclidean projection of `x` onto `{ y : a_i . y = b_i }`.
fn affine_projection(x: &DualVector, planes: &[(DualVector, f64)]) -> Result<DualVector> {
    if planes.is_empty() {
        return Ok(*x);
    }
    let k = planes.len();
    let a = DMatrix::from_fn(k, DUAL_DIM, |i, j| planes[i].0[j]);
    let r = DVector::from_fn(k, |i, _| dot(&planes[i].0, x) - planes[i].1);
    let gram = &a * a.transpose();
    let mult = gram
        .lu()
        .solve(&r)
        .ok_or_else(|| Error::Config("dual hyperplanes are linearly dependent".into()))?;
    let shift = a.transpose() * mult;
    let mut out = *x;
    for j in 0..DUAL_DIM {
        out[j] -= shift[j];
    }
    Ok(out)
}

/// Projects `lam_hat` onto the admissible set using `anchor` as a known feasible point.
///
/// `lam_hat` is first moved orthogonally onto the equality hyperplanes (and
/// onto the boundary of any half-space it violates). If that point is not
/// yet nonnegative, bisection along the segment towards `anchor`, to a
/// segment tolerance of `1e-10`, picks the admissible point nearest to it.
/// The whole segment lies on the hyperplanes, so the result satisfies them
/// to rounding error.
pub fn project_duals(lam_hat: &DualVector, anchor: &DualVector, cons: &DualConstraints) -> Result<DualVector> {
    let anchor_violation = cons.violation(anchor);
    if !(anchor_violation <= 1e-9) {
        return Err(Error::Config(format!(
            "projection anchor is not admissible (violation {anchor_violation:.3e})"
        )));
    }
    if lam_hat.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("multiplier iterate is not finite".into()));
    }
    let mut planes = cons.equalities.clone();
    let mut p = affine_projection(lam_hat, &planes)?;
    for (a, b) in &cons.halfspaces {
        if dot(a, &p) > *b {
            planes.push((*a, *b));
            p = affine_projection(lam_hat, &planes)?;
        }
    }
    if cons.within_inequalities(&p) {
        return Ok(p);
    }
    let at = |theta: f64| -> DualVector {
        let mut q = p;
        for j in 0..DUAL_DIM {
            q[j] = p[j] + theta * (anchor[j] - p[j]);
        }
        q
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if cons.within_inequalities(&at(mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mut q = at(hi);
    // Components that only missed zero by rounding are snapped onto it.
    for v in q.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simplex_constraints() -> DualConstraints {
        DualConstraints {
            equalities: vec![([0.0, 0.0, 1.0, 1.0, 1.0], 1.0), ([-1.0, 0.5, 0.2, 0.0, 0.0], 0.0)],
            halfspaces: vec![],
        }
    }

    fn anchor() -> DualVector {
        // lambda3..5 = 1/3 and lambda1 = 0.5 lambda2 + 0.2 / 3 with lambda2 = 0.4.
        [0.5 * 0.4 + 0.2 / 3.0, 0.4, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]
    }

    #[test]
    fn feasible_point_is_unchanged() {
        let c = simplex_constraints();
        let x = [0.45, 0.7, 0.5, 0.25, 0.25];
        assert!(c.violation(&x) < 1e-15);
        let y = project_duals(&x, &anchor(), &c).unwrap();
        for j in 0..DUAL_DIM {
            assert!((x[j] - y[j]).abs() < 1e-15);
        }
    }

    #[test]
    fn negative_component_is_repaired() {
        let c = simplex_constraints();
        let x = [0.3, 0.2, 1.4, -0.3, -0.1];
        let y = project_duals(&x, &anchor(), &c).unwrap();
        assert!(y.iter().all(|&v| v >= 0.0));
        assert!(c.violation(&y) < 1e-9);
    }

    #[test]
    fn bad_anchor_is_rejected() {
        let c = simplex_constraints();
        let bad = [0.0, 0.0, 0.5, 0.5, 0.5];
        assert!(matches!(project_duals(&bad, &bad, &c), Err(Error::Config(_))));
    }

    #[test]
    fn halfspace_boundary_is_enforced() {
        let c = DualConstraints {
            equalities: vec![([0.0, 0.0, 1.0, 1.0, 1.0], 1.0)],
            halfspaces: vec![([-1.0, 0.5, 0.2, 0.0, 0.0], 0.0)],
        };
        let x = [0.0, 1.0, 0.4, 0.3, 0.3];
        let y = project_duals(&x, &anchor(), &c).unwrap();
        assert!(c.violation(&y) < 1e-9);
        assert!((-y[0] + 0.5 * y[1] + 0.2 * y[2]).abs() < 1e-9);
    }
}
