//! Perron eigenpairs of nonnegative irreducible matrices, and the gradient
//! of `log2 lambda` along a symbol tilt.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graphs::{strongly_connected, LabeledGraph, WeightSpec};

/// Eigen-residual stopping threshold, relative to the matrix row-sum norm.
const RESIDUAL_TOL: f64 = 1e-13;
const MAX_ITERATIONS: usize = 100_000;
const NEWTON_STEPS: usize = 30;

/// Dominant eigenvalue with its positive eigenvectors.
///
/// `right` sums to one and `left` is scaled so that `left . right = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralResult {
    pub lambda: f64,
    pub right: DVector<f64>,
    pub left: DVector<f64>,
    pub residual: f64,
}

/// Max row-sum norm.
pub fn inf_norm(a: &DMatrix<f64>) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn is_irreducible(a: &DMatrix<f64>) -> bool {
    let n = a.nrows();
    let arcs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| a[(i, j)] > 0.0)
        .collect();
    strongly_connected(n, arcs.into_iter())
}

/// Perron eigenvalue and eigenvectors of a nonnegative irreducible matrix.
pub fn perron(a: &DMatrix<f64>) -> Result<SpectralResult> {
    if !a.is_square() || a.nrows() == 0 {
        return Err(Error::InvalidParameter(format!(
            "expected a nonempty square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if let Some(x) = a.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(Error::InvalidParameter(format!(
            "matrix entry {x} is negative or not finite"
        )));
    }
    if a.iter().all(|&x| x == 0.0) {
        return Err(Error::ZeroMatrix);
    }
    if !is_irreducible(a) {
        return Err(Error::Reducible);
    }
    let norm = inf_norm(a);
    let (lambda, right, r_res) = dominant_pair(a, norm)?;
    let (lambda_t, mut left, l_res) = dominant_pair(&a.transpose(), norm)?;
    if (lambda - lambda_t).abs() > 1e-10 * norm {
        return Err(Error::Inconsistent(format!(
            "left and right Perron eigenvalues disagree: {lambda} vs {lambda_t}"
        )));
    }
    let scale = left.dot(&right);
    left /= scale;
    Ok(SpectralResult {
        lambda,
        right,
        left,
        residual: r_res.max(l_res),
    })
}

/// Power iteration on `A + sigma I` to land near the Perron pair, then
/// Newton on the bordered eigen-system for the last digits. Returns
/// `(lambda, x)` with `x` positive and summing to one.
fn dominant_pair(a: &DMatrix<f64>, norm: f64) -> Result<(f64, DVector<f64>, f64)> {
    let n = a.nrows();
    let shift = 0.5 * norm;
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let tol = RESIDUAL_TOL * norm;
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    while iterations < MAX_ITERATIONS {
        // Restart block: a run of power steps, then try to polish.
        for _ in 0..50 {
            let mut y = a * &x + &x * shift;
            let s = y.sum();
            y /= s;
            x = y;
            iterations += 1;
        }
        let lambda = rayleigh(a, &x);
        if let Some((l, v, r)) = newton_polish(a, lambda, &x, tol) {
            return Ok((l, v, r));
        }
        residual = eigen_residual(a, lambda, &x);
    }
    Err(Error::NotConverged {
        method: "perron power iteration",
        iterations,
        residual,
    })
}

fn rayleigh(a: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    (a * x).sum() / x.sum()
}

fn eigen_residual(a: &DMatrix<f64>, lambda: f64, x: &DVector<f64>) -> f64 {
    (a * x - x * lambda).amax() / x.amax()
}

fn newton_polish(
    a: &DMatrix<f64>,
    lambda0: f64,
    x0: &DVector<f64>,
    tol: f64,
) -> Option<(f64, DVector<f64>, f64)> {
    let n = a.nrows();
    let mut lambda = lambda0;
    let mut x = x0.clone();
    let mut best = None;
    for _ in 0..NEWTON_STEPS {
        let r = eigen_residual(a, lambda, &x);
        if r < tol {
            best = Some((lambda, x.clone(), r));
            break;
        }
        let mut j = DMatrix::zeros(n + 1, n + 1);
        j.view_mut((0, 0), (n, n)).copy_from(a);
        for i in 0..n {
            j[(i, i)] -= lambda;
            j[(i, n)] = -x[i];
            j[(n, i)] = 1.0;
        }
        let mut rhs = DVector::zeros(n + 1);
        let ax = a * &x - &x * lambda;
        for i in 0..n {
            rhs[i] = -ax[i];
        }
        rhs[n] = 1.0 - x.sum();
        let step = j.lu().solve(&rhs)?;
        for i in 0..n {
            x[i] += step[i];
        }
        lambda += step[n];
        if !lambda.is_finite() {
            return None;
        }
    }
    let (lambda, x, r) = best?;
    // A positive eigenvector certifies the Perron root.
    if x.iter().all(|&v| v > 0.0) {
        Some((lambda, x, r))
    } else {
        None
    }
}

/// `log2 lambda(A(xi))` for the tilted weight matrix.
pub fn log2_perron(g: &LabeledGraph, spec: &WeightSpec) -> Result<f64> {
    Ok(perron(&g.weight_matrix(spec))?.lambda.log2())
}

/// Gradient of `log2 lambda(A(xi))` with respect to each tracked `xi_s`,
/// from first-order eigenvalue perturbation. Dropped symbols get zero.
pub fn grad_log_perron(g: &LabeledGraph, spec: &WeightSpec) -> Result<Vec<f64>> {
    let sp = perron(&g.weight_matrix(spec))?;
    Ok(grad_from_spectrum(g, spec, &sp))
}

pub(crate) fn grad_from_spectrum(
    g: &LabeledGraph,
    spec: &WeightSpec,
    sp: &SpectralResult,
) -> Vec<f64> {
    let mut grad = vec![0.0; spec.tracked.len()];
    for e in g.edges() {
        if let Some(k) = spec.tracked.iter().position(|&s| s == e.label) {
            grad[k] -= sp.left[e.src] * spec.edge_weight(e.label) * sp.right[e.dst];
        }
    }
    // left . right = 1 by normalization.
    for d in &mut grad {
        *d /= sp.lambda;
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closedform::{solve_cubic_real, CubicPoly};
    use crate::graphs::{build_ici_graph, Symbol};

    fn charpoly3(a: &DMatrix<f64>) -> CubicPoly {
        let tr = a.trace();
        let minors = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)] + a[(0, 0)] * a[(2, 2)]
            - a[(0, 2)] * a[(2, 0)]
            + a[(1, 1)] * a[(2, 2)]
            - a[(1, 2)] * a[(2, 1)];
        CubicPoly::new(1.0, -tr, minors, -a.determinant())
    }

    #[test]
    fn identity_is_reducible() {
        assert_eq!(perron(&DMatrix::identity(3, 3)), Err(Error::Reducible));
        assert_eq!(perron(&DMatrix::zeros(2, 2)), Err(Error::ZeroMatrix));
    }

    #[test]
    fn periodic_two_by_two() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 2.0, 0.0]);
        let sp = perron(&a).unwrap();
        assert!((sp.lambda - 2.0).abs() < 1e-14);
        assert!((sp.right[0] - 0.5).abs() < 1e-14 && (sp.right[1] - 0.5).abs() < 1e-14);
        assert!((sp.left.dot(&sp.right) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn ici_adjacency_matches_cubic() {
        let g = build_ici_graph(3, 1, 1).unwrap();
        let sp = perron(&g.adjacency_matrix()).unwrap();
        let roots = solve_cubic_real(&CubicPoly::new(1.0, -3.0, 1.0, -2.0)).unwrap();
        let largest = roots.last().unwrap().value;
        assert!((sp.lambda - largest).abs() < 1e-12);
        assert!(sp.residual <= 1e-12 * inf_norm(&g.adjacency_matrix()));
    }

    #[test]
    fn residual_and_normalization_on_tilts() {
        let g = build_ici_graph(4, 1, 2).unwrap();
        let tracked: Vec<Symbol> = g.alphabet().symbols().take(3).collect();
        let spec = WeightSpec::new(tracked, vec![0.4, -1.2, 2.0]).unwrap();
        let a = g.weight_matrix(&spec);
        let sp = perron(&a).unwrap();
        let norm = inf_norm(&a);
        assert!((&a * &sp.right - &sp.right * sp.lambda).amax() <= 1e-12 * norm);
        assert!(
            (a.tr_mul(&sp.left) - &sp.left * sp.lambda).amax() <= 1e-12 * norm * sp.left.amax()
        );
        assert!((sp.right.sum() - 1.0).abs() < 1e-14);
        assert!((sp.left.dot(&sp.right) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn three_by_three_agrees_with_charpoly() {
        let mut state = 12345u64;
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..200 {
            let a = DMatrix::from_fn(3, 3, |_, _| 3.0 * next() + 1e-3);
            let sp = perron(&a).unwrap();
            let roots = solve_cubic_real(&charpoly3(&a)).unwrap();
            let largest = roots.last().unwrap().value;
            assert!(
                (sp.lambda - largest).abs() < 1e-12 * largest.max(1.0),
                "{} vs {}",
                sp.lambda,
                largest
            );
        }
    }

    #[test]
    fn gradient_negative_at_zero_tilt() {
        let g = build_ici_graph(3, 1, 1).unwrap();
        let spec = WeightSpec::zero(vec![Symbol(1), Symbol(2)]);
        let grad = grad_log_perron(&g, &spec).unwrap();
        assert!(grad.iter().all(|&d| d < 0.0));
    }

    #[test]
    fn large_high_tilt_with_unit_intermediate_weight_tends_to_two() {
        // Without I the remaining L/H cycle structure has lambda(A(0, z)) -> 1
        // as z -> 0; with I present at y = 1, lambda(A(1, z)) -> y + 1 = 2.
        let g = build_ici_graph(3, 1, 1).unwrap();
        let mut prev = f64::INFINITY;
        for xi_h in [0.0, 5.0, 10.0, 20.0, 40.0] {
            let spec = WeightSpec::new(vec![Symbol(1), Symbol(2)], vec![0.0, xi_h]).unwrap();
            let lambda = perron(&g.weight_matrix(&spec)).unwrap().lambda;
            assert!(lambda > 2.0 && lambda < prev);
            prev = lambda;
        }
        assert!(prev - 2.0 < 1e-6);
    }
}
