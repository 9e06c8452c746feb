//! Analytic capacity of the ICI-free system.
//!
//! For the ternary class-level system the dual problem is rewritten in the
//! coordinates `y = 2^(-xi_I)` and `lambda` (the Perron eigenvalue), where
//! the tilt on `H` is recovered as
//!
//! ```text
//! z(y, lambda) = lambda^2 (lambda - y - 1) / (lambda^2 - lambda + y + 1)
//! ```
//!
//! and the capacity is `log2 g(y, lambda)` at the stationary point of
//!
//! ```text
//! g(y, lambda) = lambda / y^rho_I * ((lambda^2 - lambda + y + 1) / (lambda^2 (lambda - y - 1)))^rho_H.
//! ```
//!
//! The stationary point has `lambda = 2` when `rho_L = 1/2`, and is
//! otherwise a root of the cubic [`capacity_cubic`]. General `(q, a, b)` reduce
//! to the class masses by adding `h(p) - h(rho)`.

use nalgebra::Matrix3;

use crate::dual::{CapacityResult, Route};
use crate::error::{Error, Result};
use crate::graphs::{build_ici_graph, validate_qab, Symbol, WeightSpec};
use crate::markov::{chain_from_dual, lift_chain, ClassMasses, CompositionVector};

/// `|rho_L - 1/2|` below this uses the `lambda = 2` branches.
pub const HALF_TOL: f64 = 1e-9;
/// `rho_I` below this is treated as exactly zero.
pub const ZERO_MID_TOL: f64 = 1e-12;
/// Internal consistency threshold on the stationarity residuals.
const RESIDUAL_CHECK: f64 = 1e-9;

/// Cubic `c3 x^3 + c2 x^2 + c1 x + c0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicPoly {
    pub c3: f64,
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

impl CubicPoly {
    pub fn new(c3: f64, c2: f64, c1: f64, c0: f64) -> Self {
        Self { c3, c2, c1, c0 }
    }

    pub fn eval(&self, x: f64) -> f64 {
        ((self.c3 * x + self.c2) * x + self.c1) * x + self.c0
    }

    pub fn derivative(&self, x: f64) -> f64 {
        (3.0 * self.c3 * x + 2.0 * self.c2) * x + self.c1
    }

    fn second_derivative(&self, x: f64) -> f64 {
        6.0 * self.c3 * x + 2.0 * self.c2
    }

    /// Magnitude scale of the terms at `x`, for relative residuals.
    pub fn scale_at(&self, x: f64) -> f64 {
        let ax = x.abs();
        ((self.c3.abs() * ax + self.c2.abs()) * ax + self.c1.abs()) * ax + self.c0.abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealRoot {
    pub value: f64,
    pub multiplicity: usize,
}

/// Real roots of a cubic, ascending, with multiplicities.
///
/// Roots come from the eigenvalues of the companion matrix and are then
/// polished by Newton steps on the original coefficients. Eigenvalues with a
/// small imaginary part are kept as candidates and discarded if polishing
/// does not drive the residual down. Roots closer than `2e-5` (relative) are
/// reported once, as a multiple root refined on the derivative.
pub fn solve_cubic_real(c: &CubicPoly) -> Result<Vec<RealRoot>> {
    if c.c3 == 0.0 || !c.c3.is_finite() {
        return Err(Error::InvalidParameter(
            "cubic needs a nonzero leading coefficient".into(),
        ));
    }
    let (a2, a1, a0) = (c.c2 / c.c3, c.c1 / c.c3, c.c0 / c.c3);
    if ![a2, a1, a0].iter().all(|x| x.is_finite()) {
        return Err(Error::InvalidParameter(
            "cubic coefficients overflow after normalization".into(),
        ));
    }
    let companion = Matrix3::new(-a2, -a1, -a0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0);
    let mut polished: Vec<f64> = companion
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() <= 1e-4 * z.re.abs().max(1.0))
        .map(|z| polish(c, z.re))
        .filter(|&x| c.eval(x).abs() <= 1e-9 * c.scale_at(x))
        .collect();
    polished.sort_by(|x, y| x.total_cmp(y));

    let mut roots: Vec<RealRoot> = Vec::new();
    let mut k = 0;
    while k < polished.len() {
        let mut end = k + 1;
        while end < polished.len()
            && (polished[end] - polished[k]).abs() <= 2e-5 * polished[k].abs().max(1.0)
        {
            end += 1;
        }
        let m = end - k;
        let value = match m {
            1 => polished[k],
            2 => newton(
                |x| c.derivative(x),
                |x| c.second_derivative(x),
                0.5 * (polished[k] + polished[k + 1]),
            ),
            _ => -c.c2 / (3.0 * c.c3),
        };
        roots.push(RealRoot {
            value,
            multiplicity: m,
        });
        k = end;
    }
    Ok(roots)
}

/// Newton on `c`, keeping the best iterate.
fn polish(c: &CubicPoly, x0: f64) -> f64 {
    newton(|x| c.eval(x), |x| c.derivative(x), x0)
}

fn newton(f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64, x0: f64) -> f64 {
    let mut x = x0;
    let mut fx = f(x).abs();
    for step in 0..20 {
        let d = df(x);
        if d == 0.0 || fx == 0.0 {
            break;
        }
        let xn = x - f(x) / d;
        let fn_ = f(xn).abs();
        // Always take the first two steps; afterwards only improvements.
        if fn_ < fx || (step < 2 && fn_.is_finite() && fn_ <= fx * 4.0) {
            let improved = fn_ < fx;
            x = xn;
            fx = fn_;
            if !improved && step >= 2 {
                break;
            }
        } else {
            break;
        }
    }
    x
}

/// `z(y, lambda) = lambda^2 (lambda - y - 1) / (lambda^2 - lambda + y + 1)`.
pub fn z_of(y: f64, lambda: f64) -> f64 {
    lambda * lambda * (lambda - y - 1.0) / (lambda * lambda - lambda + y + 1.0)
}

/// Which closed-form branch produced a witness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WitnessCase {
    /// `rho_L = 1/2`, `rho_I = 0`: `(y, lambda) = (0, 2)`.
    HalfMidZero,
    /// `rho_L = 1/2`, `rho_I > 0`: `lambda = 2`, `y` from a quadratic.
    HalfMidPositive,
    /// `rho_L != 1/2`: `lambda` a root of the cubic `Z`.
    General,
}

/// Stationary point `(y, lambda)` of `g` with its `z` coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Witness311 {
    pub y: f64,
    pub lambda: f64,
    pub z: f64,
    pub case: WitnessCase,
}

fn check_domain(y: f64, lambda: f64, rho: &ClassMasses) -> Result<()> {
    let zero_mid = rho.mid < ZERO_MID_TOL;
    let ok = if zero_mid && y == 0.0 {
        lambda > 1.0
    } else {
        lambda > y + 1.0 && y > 0.0
    };
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "(y, lambda) = ({y}, {lambda}) outside the region lambda > y + 1 > 1"
        )))
    }
}

/// `g(y, lambda)`, with `0^0 = 1` on the `y = 0` boundary when `rho_I = 0`.
pub fn g_value(y: f64, lambda: f64, rho: &ClassMasses) -> Result<f64> {
    check_domain(y, lambda, rho)?;
    let mid = if rho.mid < ZERO_MID_TOL { 0.0 } else { rho.mid };
    let y_pow = if mid == 0.0 { 1.0 } else { y.powf(mid) };
    let ratio = (lambda * lambda - lambda + y + 1.0) / (lambda * lambda * (lambda - y - 1.0));
    Ok(lambda / y_pow * ratio.powf(rho.high))
}

/// Left-hand sides of `dg/dy = 0` and `dg/dlambda = 0` after clearing
/// denominators.
pub fn stationarity_residuals(y: f64, lambda: f64, rho: &ClassMasses) -> (f64, f64) {
    let a = lambda - y - 1.0;
    let b = lambda * lambda - lambda + y + 1.0;
    let ry = rho.mid * a * b - rho.high * lambda * lambda * y;
    let rl = (1.0 - rho.high) * a * b
        - rho.high * (lambda * lambda * y + 2.0 * lambda * (y + 1.0) - (y + 1.0) * (y + 1.0));
    (ry, rl)
}

/// [`stationarity_residuals`] divided by the total magnitude of the terms
/// in each equation. The raw residuals grow like `lambda^3`, so far from the
/// centre of the simplex only the relative form can reach `1e-9` in `f64`.
pub fn relative_stationarity_residuals(y: f64, lambda: f64, rho: &ClassMasses) -> (f64, f64) {
    let (ry, rl) = stationarity_residuals(y, lambda, rho);
    let a = (lambda - y - 1.0).abs();
    let b = lambda * lambda + lambda + y + 1.0;
    let sy = rho.mid * a * b + rho.high * lambda * lambda * y;
    let sl = (1.0 - rho.high) * a * b
        + rho.high * (lambda * lambda * y + 2.0 * lambda * (y + 1.0) + (y + 1.0) * (y + 1.0));
    let rel = |r: f64, s: f64| if s > 0.0 { r / s } else { r };
    (rel(ry, sy), rel(rl, sl))
}

/// The cubic whose roots carry the optimal `lambda` when `rho_L != 1/2`.
pub fn capacity_cubic(rho: &ClassMasses) -> Result<CubicPoly> {
    if (rho.low - 0.5).abs() < HALF_TOL {
        return Err(Error::InvalidParameter(
            "Z degenerates at rho_L = 1/2; use the lambda = 2 branches".into(),
        ));
    }
    let (l, h) = (rho.low, rho.high);
    let eps = 1.0 - 2.0 * l;
    Ok(CubicPoly::new(
        eps * l,
        (l - h) * (l - h) - eps,
        -2.0 * (l - h) * (1.0 - 2.0 * h),
        (1.0 - 2.0 * h) * (1.0 - 2.0 * h),
    ))
}

/// `Z(2 + t)` and its derivative in the factored form
/// `eps (rho_L t - eps)(2 + t)^2 + (d t - eps)^2`, with `eps = 1 - 2 rho_L`
/// and `d = rho_L - rho_H`. Accurate for `lambda` near 2 when `eps` is small.
fn z_shifted(rho: &ClassMasses, t: f64) -> (f64, f64) {
    let eps = 1.0 - 2.0 * rho.low;
    let d = rho.low - rho.high;
    let x = 2.0 + t;
    let u = rho.low * t - eps;
    let w = d * t - eps;
    let value = eps * u * x * x + w * w;
    let deriv = eps * (rho.low * x * x + 2.0 * u * x) + 2.0 * d * w;
    (value, deriv)
}

/// Optimal `(y, lambda)` for class masses `rho`.
pub fn witness_311(rho: &ClassMasses) -> Result<Witness311> {
    let zero_mid = rho.mid < ZERO_MID_TOL;
    let (y, lambda, case) = if (rho.low - 0.5).abs() < HALF_TOL {
        if zero_mid {
            (0.0, 2.0, WitnessCase::HalfMidZero)
        } else {
            // y = -1 - 2 tau + 2 sqrt(1 + tau + tau^2), rationalized.
            let tau = rho.high / rho.mid;
            let y = 3.0 / (2.0 * (1.0 + tau + tau * tau).sqrt() + 1.0 + 2.0 * tau);
            (y, 2.0, WitnessCase::HalfMidPositive)
        }
    } else {
        let z = capacity_cubic(rho)?;
        let t = bracketed_root(rho, &z)?;
        let lambda = 2.0 + t;
        check_root_location(rho, lambda, &z)?;
        let y = if zero_mid {
            0.0
        } else {
            rho.mid * t / (1.0 - 2.0 * rho.low)
        };
        (y, lambda, WitnessCase::General)
    };
    check_domain(y, lambda, rho).map_err(|e| Error::Inconsistent(e.to_string()))?;
    let (ry, rl) = relative_stationarity_residuals(y, lambda, rho);
    if ry.abs() > RESIDUAL_CHECK || rl.abs() > RESIDUAL_CHECK {
        return Err(Error::Inconsistent(format!(
            "relative stationarity residuals ({ry:.3e}, {rl:.3e}) at (y, lambda) = ({y}, {lambda})"
        )));
    }
    Ok(Witness311 {
        y,
        lambda,
        z: z_of(y, lambda),
        case,
    })
}

/// Bisection on the shifted cubic over the interval holding the optimal
/// root: `(1/rho_L, 2)` when `rho_L > 1/2`, `(2, B)` with `B` a Cauchy bound
/// otherwise. `Z(2) = -3 eps^2 < 0`, and the other end is positive in both
/// cases, so the bracket is valid whenever the interval guarantee holds.
fn bracketed_root(rho: &ClassMasses, z: &CubicPoly) -> Result<f64> {
    let (mut neg, mut pos) = if rho.low > 0.5 {
        (0.0, 1.0 / rho.low - 2.0)
    } else {
        let bound = 1.0
            + [z.c2, z.c1, z.c0]
                .iter()
                .map(|c| (c / z.c3).abs())
                .fold(0.0, f64::max);
        (0.0, bound.max(2.0))
    };
    let f = |t: f64| z_shifted(rho, t).0;
    if f(neg) > 0.0 || f(pos) < 0.0 {
        return Err(Error::Inconsistent(format!(
            "Z does not change sign on the root interval for rho = {:?}",
            rho.as_array()
        )));
    }
    if f(neg) == 0.0 {
        pos = neg;
    }
    loop {
        let mid = 0.5 * (neg + pos);
        if mid == neg || mid == pos {
            break;
        }
        let v = f(mid);
        if v == 0.0 {
            return Ok(mid);
        }
        if v < 0.0 {
            neg = mid;
        } else {
            pos = mid;
        }
    }
    Ok(if f(neg).abs() <= f(pos).abs() {
        neg
    } else {
        pos
    })
}

/// The selected root must lie in `(2, inf)` for `rho_L < 1/2` and be the
/// unique root in `(1/rho_L, 2)` for `rho_L > 1/2`. Away from the seam it
/// must also coincide with the root named by the closed form: the largest real
/// root, or the smallest positive one. Close to the seam two roots of `Z`
/// merge near 2 and companion eigenvalues cannot separate them, so only the
/// interval test applies there.
fn check_root_location(rho: &ClassMasses, lambda: f64, z: &CubicPoly) -> Result<()> {
    let fail = |what: String| {
        Err(Error::Inconsistent(format!(
            "root {lambda} for rho = {:?} violates the interval guarantee: {what}",
            rho.as_array()
        )))
    };
    let lo = 1.0 / rho.low;
    if rho.low < 0.5 && lambda <= 2.0 {
        return fail("expected lambda > 2".into());
    }
    if rho.low > 0.5 && !(lambda > lo && lambda < 2.0) {
        return fail("expected 1/rho_L < lambda < 2".into());
    }
    if (rho.low - 0.5).abs() <= 1e-4 {
        return Ok(());
    }
    let roots = solve_cubic_real(z)?;
    let named = if rho.low < 0.5 {
        roots.last().map(|r| r.value)
    } else {
        roots.iter().map(|r| r.value).find(|&v| v > 0.0)
    };
    match named {
        Some(v) if (v - lambda).abs() <= 1e-8 * lambda.max(1.0) => {}
        other => return fail(format!("named root is {other:?}")),
    }
    if rho.low > 0.5 {
        let inside: usize = roots
            .iter()
            .filter(|r| r.value > lo && r.value < 2.0)
            .map(|r| r.multiplicity)
            .sum();
        if inside > 1 {
            return fail("more than one root in (1/rho_L, 2)".into());
        }
    }
    Ok(())
}

/// Composition-constrained capacity of the ternary class-level system.
pub fn cap_311(rho: &ClassMasses) -> Result<CapacityResult> {
    let w = witness_311(rho)?;
    let capacity_bits = g_value(w.y, w.lambda, rho)?.log2();

    let graph = build_ici_graph(3, 1, 1)?;
    let (mid, high) = (Symbol(1), Symbol(2));
    let xi_h = -w.z.log2();
    let spec = if w.y == 0.0 {
        WeightSpec::new(vec![high], vec![xi_h])?.with_drop(vec![mid])
    } else {
        WeightSpec::new(vec![mid, high], vec![-w.y.log2(), xi_h])?
    };
    let chain = chain_from_dual(&graph, &spec)?;
    let got = chain.expected_indicator(&[mid, high]);
    let gradient_norm = (got[0] - rho.mid).abs().max((got[1] - rho.high).abs());
    let xi_star = spec
        .tracked
        .iter()
        .copied()
        .zip(spec.xi.iter().copied())
        .collect();
    Ok(CapacityResult {
        capacity_bits,
        xi_star,
        lambda_star: Some(w.lambda),
        chain,
        gradient_norm,
        route: Route::ClosedForm,
        witness: Some(w),
        iterations: 0,
    })
}

/// `cap(S_{q;a,b}, p) = cap_311(rho) + h(p) - h(rho)`, with the class chain
/// lifted to `G_{q;a,b}` as witness.
pub fn cap_qab(p: &CompositionVector) -> Result<CapacityResult> {
    let rho = p.class_masses();
    let base = cap_311(&rho)?;
    let chain = lift_chain(&base.chain, p)?;
    let alphabet = p.alphabet();
    let rename = |s: Symbol| {
        let class = if s == Symbol(1) {
            crate::graphs::SymbolClass::Intermediate
        } else {
            crate::graphs::SymbolClass::High
        };
        alphabet.members(class).first().copied().unwrap_or(s)
    };
    Ok(CapacityResult {
        capacity_bits: base.capacity_bits + p.entropy() - rho.entropy(),
        xi_star: base.xi_star.iter().map(|&(s, x)| (rename(s), x)).collect(),
        chain,
        ..base
    })
}

/// Convenience wrapper taking `(q, a, b)` and raw probabilities.
pub fn cap_qab_raw(q: usize, a: usize, b: usize, p: &[f64]) -> Result<CapacityResult> {
    cap_qab(&CompositionVector::ici(q, a, b, p.to_vec())?)
}

/// `x^3 - q x^2 + ab x - ab(q - b)`.
pub fn ordinary_cubic(q: usize, a: usize, b: usize) -> CubicPoly {
    let (q, ab, b) = (q as f64, (a * b) as f64, b as f64);
    CubicPoly::new(1.0, -q, ab, -ab * (q - b))
}

/// Unconstrained capacity: log2 of the largest real root of the ordinary cubic.
pub fn ordinary_capacity(q: usize, a: usize, b: usize) -> Result<f64> {
    validate_qab(q, a, b)?;
    let roots = solve_cubic_real(&ordinary_cubic(q, a, b))?;
    let largest = roots
        .last()
        .ok_or_else(|| Error::Inconsistent("cubic with no real root".into()))?;
    Ok(largest.value.log2())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rho(l: f64, i: f64, h: f64) -> ClassMasses {
        ClassMasses::new(l, i, h).unwrap()
    }

    #[test]
    fn cubic_examples() {
        let r = solve_cubic_real(&CubicPoly::new(1.0, 0.0, 0.0, -1.0)).unwrap();
        assert_eq!(r.len(), 1);
        assert!((r[0].value - 1.0).abs() < 1e-15);

        let r = solve_cubic_real(&CubicPoly::new(1.0, -6.0, 11.0, -6.0)).unwrap();
        let v: Vec<f64> = r.iter().map(|x| x.value).collect();
        assert_eq!(r.len(), 3);
        for (got, want) in v.iter().zip([1.0, 2.0, 3.0]) {
            assert!((got - want).abs() < 1e-14);
        }

        let r = solve_cubic_real(&CubicPoly::new(1.0, -2.0, 0.0, 0.0)).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(
            r[0],
            RealRoot {
                value: 0.0,
                multiplicity: 2
            }
        );
        assert!((r[1].value - 2.0).abs() < 1e-15 && r[1].multiplicity == 1);

        let r = solve_cubic_real(&CubicPoly::new(2.0, -6.0, 6.0, -2.0)).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].multiplicity, 3);
        assert!((r[0].value - 1.0).abs() < 1e-12);

        let r = solve_cubic_real(&CubicPoly::new(1.0, -5.0, 8.0, -4.0)).unwrap();
        assert_eq!(
            r.iter().map(|x| x.multiplicity).collect::<Vec<_>>(),
            vec![1, 2]
        );
        assert!((r[1].value - 2.0).abs() < 1e-12);

        assert!(solve_cubic_real(&CubicPoly::new(0.0, 1.0, 1.0, 1.0)).is_err());
    }

    #[test]
    fn cubic_residuals_are_tiny() {
        let mut state = 99u64;
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 * 20.0 - 10.0
        };
        for _ in 0..2000 {
            let c = CubicPoly::new(next(), next(), next(), next());
            for r in solve_cubic_real(&c).unwrap() {
                assert!(
                    c.eval(r.value).abs() <= 1e-12 * c.scale_at(r.value),
                    "{c:?} at {}",
                    r.value
                );
            }
        }
    }

    #[test]
    fn z_examples() {
        assert_eq!(z_of(0.7, 1.7), 0.0);
        assert!((z_of(0.0, 2.0) - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn g_known_value() {
        let r = rho(0.5, 0.0, 0.5);
        let g = g_value(0.0, 2.0, &r).unwrap();
        assert!((g - 3f64.sqrt()).abs() < 1e-15);
        assert!((g.log2() - 0.792_481_250_360_578_1).abs() < 1e-15);
        assert!(g_value(0.5, 1.2, &rho(0.3, 0.3, 0.4)).is_err());
    }

    #[test]
    fn z_polynomial_coefficients() {
        let z = capacity_cubic(&rho(0.3, 0.3, 0.4)).unwrap();
        for (got, want) in [z.c3, z.c2, z.c1, z.c0]
            .iter()
            .zip([0.12, -0.39, 0.04, 0.04])
        {
            assert!((got - want).abs() < 1e-15, "{got} vs {want}");
        }
        assert!(capacity_cubic(&rho(0.5, 0.2, 0.3)).is_err());
    }

    #[test]
    fn z_sign_facts() {
        for r in [rho(0.3, 0.3, 0.4), rho(0.7, 0.1, 0.2), rho(0.1, 0.1, 0.8)] {
            let z = capacity_cubic(&r).unwrap();
            let eps = 1.0 - 2.0 * r.low;
            assert!((z.eval(2.0) + 3.0 * eps * eps).abs() < 1e-14);
            assert!((z.eval(0.0) - (1.0 - 2.0 * r.high).powi(2)).abs() < 1e-15);
        }
    }

    #[test]
    fn half_cases() {
        let w = witness_311(&rho(0.5, 0.0, 0.5)).unwrap();
        assert_eq!(
            (w.y, w.lambda, w.case),
            (0.0, 2.0, WitnessCase::HalfMidZero)
        );
        let w = witness_311(&rho(0.5, 0.25, 0.25)).unwrap();
        assert!((w.y - (2.0 * 3f64.sqrt() - 3.0)).abs() < 1e-15);
        assert_eq!(w.lambda, 2.0);
        let (ry, rl) = stationarity_residuals(w.y, w.lambda, &rho(0.5, 0.25, 0.25));
        assert!(ry.abs() < 1e-9 && rl.abs() < 1e-9);
    }

    #[test]
    fn residuals_at_half_zero_and_off_witness() {
        let (ry, rl) = stationarity_residuals(0.0, 2.0, &rho(0.5, 0.0, 0.5));
        assert_eq!((ry, rl), (0.0, 0.0));
        let (ry, rl) = stationarity_residuals(0.3, 2.7, &rho(0.3, 0.3, 0.4));
        assert!(ry.abs().max(rl.abs()) > 1e-3);
    }

    #[test]
    fn known_capacity() {
        let res = cap_311(&rho(0.5, 0.0, 0.5)).unwrap();
        assert!((res.capacity_bits - 0.5 * 3f64.log2()).abs() < 1e-15);
        assert!((res.chain.entropy_rate() - res.capacity_bits).abs() < 1e-12);
        assert!(res.gradient_norm < 1e-12);
        let two = cap_qab_raw(2, 1, 1, &[0.5, 0.5]).unwrap();
        assert!((two.capacity_bits - 0.5 * 3f64.log2()).abs() < 1e-15);
    }

    #[test]
    fn general_witness_is_stationary_and_chain_matches() {
        for r in [
            rho(0.3, 0.3, 0.4),
            rho(0.6, 0.1, 0.3),
            rho(0.2, 0.0, 0.8),
            rho(0.7, 0.0, 0.3),
        ] {
            let res = cap_311(&r).unwrap();
            let w = res.witness.unwrap();
            let (ry, rl) = stationarity_residuals(w.y, w.lambda, &r);
            assert!(ry.abs() < 1e-9 && rl.abs() < 1e-9, "{r:?}");
            assert!(
                (res.chain.entropy_rate() - res.capacity_bits).abs() < 1e-10,
                "{r:?}"
            );
            assert!(res.gradient_norm < 1e-10);
        }
    }

    #[test]
    fn seam_continuity() {
        for (i, h) in [(0.0, 0.5), (0.2, 0.3), (0.45, 0.05)] {
            let at = cap_311(&rho(0.5, i, h)).unwrap().capacity_bits;
            for delta in [1e-6, -1e-6] {
                let near = cap_311(&rho(0.5 + delta, i, h - delta))
                    .unwrap()
                    .capacity_bits;
                assert!((near - at).abs() < 1e-4, "{i} {h} {delta}: {near} vs {at}");
            }
        }
        let limit = cap_311(&rho(0.5, 0.0, 0.5)).unwrap().capacity_bits;
        let near = cap_311(&rho(0.5, 1e-9, 0.5 - 1e-9)).unwrap().capacity_bits;
        assert!((near - limit).abs() < 1e-6);
    }

    #[test]
    fn qab_identity_and_even_split() {
        let p = CompositionVector::ici(3, 1, 1, vec![0.3, 0.3, 0.4]).unwrap();
        let direct = cap_311(&p.class_masses()).unwrap().capacity_bits;
        assert!((cap_qab(&p).unwrap().capacity_bits - direct).abs() < 1e-15);

        let p = CompositionVector::ici(4, 1, 2, vec![0.4, 0.2, 0.2, 0.2]).unwrap();
        let base = cap_311(&rho(0.4, 0.2, 0.4)).unwrap().capacity_bits;
        let res = cap_qab(&p).unwrap();
        assert!((res.capacity_bits - base - 0.4).abs() < 1e-14);
        assert!((res.chain.entropy_rate() - res.capacity_bits).abs() < 1e-10);
    }

    #[test]
    fn ordinary_cubic_values() {
        // Largest root of x^3 - 3x^2 + x - 2, bracketed by bisection.
        let f = |x: f64| ((x - 3.0) * x + 1.0) * x - 2.0;
        let (mut lo, mut hi) = (2.0, 3.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                hi = mid
            } else {
                lo = mid
            }
        }
        assert!((ordinary_capacity(3, 1, 1).unwrap() - lo.log2()).abs() < 1e-14);
        assert!(ordinary_capacity(3, 2, 2).is_err());
    }
}
