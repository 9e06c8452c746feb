//! Capacity under composition constraints via the convex dual
//!
//! ```text
//! sup { H(P) : E_P(I_W) = r }  =  inf_xi { xi . r + log2 lambda(A(xi)) }
//! ```
//!
//! The right-hand side is smooth and convex on a strongly connected graph,
//! with gradient `r - E_{P_xi}(I_W)` where `P_xi` is the tilted chain. It is
//! minimized by a rank-one (SR1) quasi-Newton method with backtracking.
//! Symbols with zero target frequency are removed from the graph, which is
//! the `xi_s -> infinity` limit of the objective.

use nalgebra::{DMatrix, DVector};

use crate::closedform::Witness311;
use crate::error::{Error, Result};
use crate::graphs::{build_ici_graph, LabeledGraph, Symbol, WeightSpec};
use crate::markov::{chain_from_dual, CompositionVector, MarkovChain};
use crate::spectral::{grad_from_spectrum, is_irreducible, perron};

pub const GRADIENT_TOL: f64 = 1e-10;
/// Gradient level accepted when the line search stalls at roundoff.
pub const STALL_GRADIENT_TOL: f64 = 1e-9;
pub const MAX_ITERATIONS: usize = 500;
const MAX_STEP: f64 = 8.0;
const INFEASIBLE_XI_NORM: f64 = 1e4;
const INFEASIBLE_DECREASE: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    Dual,
    ClosedForm,
    Direct,
}

impl Route {
    pub fn as_str(self) -> &'static str {
        match self {
            Route::Dual => "dual",
            Route::ClosedForm => "closed",
            Route::Direct => "direct",
        }
    }
}

/// A computed capacity together with the data that certifies it.
#[derive(Debug, Clone)]
pub struct CapacityResult {
    pub capacity_bits: f64,
    /// Finite dual coordinates, keyed by symbol.
    pub xi_star: Vec<(Symbol, f64)>,
    pub lambda_star: Option<f64>,
    /// A chain attaining the capacity.
    pub chain: MarkovChain,
    pub gradient_norm: f64,
    pub route: Route,
    pub witness: Option<Witness311>,
    pub iterations: usize,
}

/// `inf_xi { xi . r + log2 lambda(A_G(xi)) }` over the tracked symbols.
#[derive(Debug, Clone)]
pub struct DualProblem {
    pub graph: LabeledGraph,
    pub tracked: Vec<Symbol>,
    pub target: Vec<f64>,
    pub drop: Vec<Symbol>,
}

impl DualProblem {
    pub fn new(graph: LabeledGraph, tracked: Vec<Symbol>, target: Vec<f64>) -> Result<Self> {
        let p = Self {
            graph,
            tracked,
            target,
            drop: Vec::new(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_drop(mut self, drop: Vec<Symbol>) -> Result<Self> {
        self.drop = drop;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if self.tracked.len() != self.target.len() {
            return Err(Error::InvalidParameter(format!(
                "{} tracked symbols but {} targets",
                self.tracked.len(),
                self.target.len()
            )));
        }
        if let Some(r) = self
            .target
            .iter()
            .find(|r| !r.is_finite() || **r < 0.0 || **r > 1.0)
        {
            return Err(Error::InvalidParameter(format!(
                "target {r} outside [0, 1]"
            )));
        }
        let total: f64 = self.target.iter().sum();
        if total > 1.0 + 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "targets sum to {total} > 1"
            )));
        }
        for d in &self.drop {
            match self.tracked.iter().position(|s| s == d) {
                Some(k) if self.target[k] == 0.0 => {}
                _ => {
                    return Err(Error::InvalidParameter(format!(
                        "dropped symbol {} must be tracked with target 0",
                        self.graph.alphabet().name(*d)
                    )))
                }
            }
        }
        Ok(())
    }
}

struct Objective<'a> {
    graph: &'a LabeledGraph,
    free: Vec<Symbol>,
    r: Vec<f64>,
    drop: Vec<Symbol>,
}

impl Objective<'_> {
    fn spec(&self, xi: &DVector<f64>) -> WeightSpec {
        WeightSpec {
            tracked: self.free.clone(),
            xi: xi.iter().copied().collect(),
            drop: self.drop.clone(),
        }
    }

    /// Value, gradient and Perron eigenvalue at `xi`.
    fn eval(&self, xi: &DVector<f64>) -> Result<(f64, DVector<f64>, f64)> {
        let spec = self.spec(xi);
        let sp = perron(&self.graph.weight_matrix(&spec))?;
        let grad_log = grad_from_spectrum(self.graph, &spec, &sp);
        let value = xi.iter().zip(&self.r).map(|(x, r)| x * r).sum::<f64>() + sp.lambda.log2();
        let grad = DVector::from_iterator(
            self.r.len(),
            self.r.iter().zip(&grad_log).map(|(r, g)| r + g),
        );
        Ok((value, grad, sp.lambda))
    }
}

/// Minimize the dual objective and return the capacity with its witness chain.
pub fn solve_dual(prob: &DualProblem) -> Result<CapacityResult> {
    prob.validate()?;
    let mut drop = prob.drop.clone();
    let mut free = Vec::new();
    let mut r = Vec::new();
    for (&s, &t) in prob.tracked.iter().zip(&prob.target) {
        if drop.contains(&s) {
            continue;
        }
        if t == 0.0 {
            log::warn!(
                "target for symbol {} is 0; removing it (xi -> infinity limit)",
                prob.graph.alphabet().name(s)
            );
            drop.push(s);
            continue;
        }
        free.push(s);
        r.push(t);
    }
    let obj = Objective {
        graph: &prob.graph,
        free,
        r,
        drop,
    };
    if !is_irreducible(
        &prob
            .graph
            .weight_matrix(&obj.spec(&DVector::zeros(obj.free.len()))),
    ) {
        return Err(Error::Reducible);
    }

    let t = obj.free.len();
    let mut xi = DVector::zeros(t);
    let (mut f, mut g, mut lambda) = obj.eval(&xi)?;
    let mut hess = DMatrix::identity(t, t);
    let mut iterations = 0;
    while g.amax() >= GRADIENT_TOL {
        if iterations >= MAX_ITERATIONS {
            return Err(Error::NotConverged {
                method: "dual quasi-Newton",
                iterations,
                residual: g.amax(),
            });
        }
        iterations += 1;
        let mut dir = descent_direction(&hess, &g);
        let len = dir.amax();
        if len > MAX_STEP {
            dir *= MAX_STEP / len;
        }
        let slope = g.dot(&dir);
        let mut alpha = 1.0;
        let mut accepted = None;
        while alpha > 1e-12 {
            let cand = &xi + &dir * alpha;
            if let Ok((fc, gc, lc)) = obj.eval(&cand) {
                let armijo = fc <= f + 1e-4 * alpha * slope;
                // Near the optimum the objective is flat to roundoff; fall
                // back on gradient decrease.
                let flat = (fc - f).abs() <= 1e-14 * f.abs().max(1.0) && gc.amax() < g.amax();
                if armijo || flat {
                    accepted = Some((cand, fc, gc, lc));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((xn, fnew, gn, ln)) = accepted else {
            if g.amax() < STALL_GRADIENT_TOL {
                break;
            }
            return Err(Error::NotConverged {
                method: "dual line search",
                iterations,
                residual: g.amax(),
            });
        };
        let s = &xn - &xi;
        let y = &gn - &g;
        let v = &y - &hess * &s;
        let denom = v.dot(&s);
        if denom.abs() > 1e-8 * s.norm() * v.norm() && denom.abs() > 1e-300 {
            hess += &v * v.transpose() / denom;
        }
        let decrease = f - fnew;
        xi = xn;
        f = fnew;
        g = gn;
        lambda = ln;
        // Weak duality bounds the objective below by the (nonnegative)
        // entropy of any feasible chain.
        let unbounded = f < -1e-9;
        if unbounded || (xi.amax() > INFEASIBLE_XI_NORM && decrease < INFEASIBLE_DECREASE) {
            return Err(Error::Infeasible {
                xi_norm: xi.amax(),
                gradient_norm: g.amax(),
            });
        }
    }

    let spec = obj.spec(&xi);
    let chain = chain_from_dual(&prob.graph, &spec)?;
    Ok(CapacityResult {
        capacity_bits: f,
        xi_star: obj.free.iter().copied().zip(xi.iter().copied()).collect(),
        lambda_star: Some(lambda),
        chain,
        gradient_norm: g.amax(),
        route: Route::Dual,
        witness: None,
        iterations,
    })
}

/// Solve `(B + mu I) d = -g`, raising `mu` until the system is positive
/// definite.
fn descent_direction(hess: &DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    let t = g.len();
    let scale = hess.diagonal().amax().max(1e-8);
    let mut mu = 0.0;
    loop {
        let shifted = hess + DMatrix::identity(t, t) * mu;
        if let Some(chol) = shifted.cholesky() {
            let d = -chol.solve(g);
            if g.dot(&d) < 0.0 {
                return d;
            }
        }
        mu = if mu == 0.0 { 1e-6 * scale } else { mu * 10.0 };
        if mu > 1e12 * scale {
            return -g.clone();
        }
    }
}

/// Default omitted symbol: the first symbol of maximal probability.
pub fn default_omitted(p: &CompositionVector) -> Symbol {
    let mut best = Symbol(0);
    for s in p.alphabet().symbols() {
        if p.get(s) > p.get(best) {
            best = s;
        }
    }
    best
}

/// The dual problem on `G_{q;a,b}` tracking every symbol except `omit`.
pub fn composition_problem(p: &CompositionVector, omit: Symbol) -> Result<DualProblem> {
    let (a, i, b) = p.alphabet().class_sizes().expect("classified");
    let graph = build_ici_graph(a + i + b, a, b)?;
    if p.get(omit) <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "omitted symbol {} must have positive probability",
            p.alphabet().name(omit)
        )));
    }
    let tracked: Vec<Symbol> = p.alphabet().symbols().filter(|&s| s != omit).collect();
    let target: Vec<f64> = tracked.iter().map(|&s| p.get(s)).collect();
    let drop: Vec<Symbol> = tracked
        .iter()
        .copied()
        .filter(|&s| p.get(s) == 0.0)
        .collect();
    DualProblem::new(graph, tracked, target)?.with_drop(drop)
}

/// Composition-constrained capacity of the ICI system by the dual route.
pub fn capacity_composition(q: usize, a: usize, b: usize, p: &[f64]) -> Result<CapacityResult> {
    let comp = CompositionVector::ici(q, a, b, p.to_vec())?;
    capacity_composition_with(&comp, default_omitted(&comp))
}

/// As [`capacity_composition`] with an explicit omitted symbol.
pub fn capacity_composition_with(p: &CompositionVector, omit: Symbol) -> Result<CapacityResult> {
    solve_dual(&composition_problem(p, omit)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::maxentropic_chain;

    #[test]
    fn known_half_value() {
        let res = capacity_composition(3, 1, 1, &[0.5, 0.0, 0.5]).unwrap();
        assert!((res.capacity_bits - 0.5 * 3f64.log2()).abs() < 1e-9);
        assert!(res.gradient_norm < GRADIENT_TOL);
        let e = res.chain.expected_indicator(&[Symbol(2)]);
        assert!((e[0] - 0.5).abs() < 1e-8);
        assert!((res.chain.entropy_rate() - res.capacity_bits).abs() < 1e-8);
    }

    #[test]
    fn empty_tracking_is_ordinary_capacity() {
        let g = build_ici_graph(3, 1, 1).unwrap();
        let res = solve_dual(&DualProblem::new(g.clone(), vec![], vec![]).unwrap()).unwrap();
        let lam = perron(&g.adjacency_matrix()).unwrap().lambda;
        assert!((res.capacity_bits - lam.log2()).abs() < 1e-14);
        assert_eq!(res.iterations, 0);
    }

    #[test]
    fn maxentropic_marginals_give_zero_tilt() {
        let g = build_ici_graph(3, 1, 1).unwrap();
        let w = vec![Symbol(1), Symbol(2)];
        let me = maxentropic_chain(&g).unwrap();
        let r = me.expected_indicator(&w);
        let res = solve_dual(&DualProblem::new(g, w, r).unwrap()).unwrap();
        assert!(res.xi_star.iter().all(|(_, x)| x.abs() < 1e-9));
        assert!((res.capacity_bits - me.entropy_rate()).abs() < 1e-12);
    }

    #[test]
    fn binary_and_ternary_agree() {
        let two = capacity_composition(2, 1, 1, &[0.7, 0.3]).unwrap();
        let three = capacity_composition(3, 1, 1, &[0.7, 0.0, 0.3]).unwrap();
        assert!((two.capacity_bits - three.capacity_bits).abs() < 1e-8);
    }

    #[test]
    fn omitted_symbol_choice_is_irrelevant() {
        let p = CompositionVector::ici(4, 1, 2, vec![0.4, 0.1, 0.3, 0.2]).unwrap();
        let base = capacity_composition_with(&p, Symbol(0))
            .unwrap()
            .capacity_bits;
        for s in 1..4 {
            let other = capacity_composition_with(&p, Symbol(s))
                .unwrap()
                .capacity_bits;
            assert!((base - other).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_target_is_promoted_to_drop() {
        let g = build_ici_graph(3, 1, 1).unwrap();
        let prob = DualProblem::new(g, vec![Symbol(1), Symbol(2)], vec![0.0, 0.5]).unwrap();
        let res = solve_dual(&prob).unwrap();
        assert_eq!(res.xi_star.len(), 1);
        assert!((res.capacity_bits - 0.5 * 3f64.log2()).abs() < 1e-9);
    }

    #[test]
    fn infeasible_target_fails_gracefully() {
        let alphabet = crate::graphs::Alphabet::new(["a", "b"]).unwrap();
        let f = vec![alphabet.parse_word("aa").unwrap()];
        let golden = crate::graphs::build_from_forbidden(alphabet, &f).unwrap();
        // Frequency of `a` cannot exceed 1/2 in a word avoiding `aa`.
        let prob = DualProblem::new(golden, vec![Symbol(0)], vec![0.8]).unwrap();
        let err = solve_dual(&prob).unwrap_err();
        assert!(
            matches!(err, Error::Infeasible { .. } | Error::NotConverged { .. }),
            "{err:?}"
        );
    }

    #[test]
    fn rejects_bad_drop() {
        let g = build_ici_graph(3, 1, 1).unwrap();
        let p = DualProblem::new(g, vec![Symbol(1), Symbol(2)], vec![0.2, 0.5]).unwrap();
        assert!(matches!(
            p.with_drop(vec![Symbol(1)]),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn reducible_after_drop() {
        let g = build_ici_graph(3, 1, 1).unwrap();
        // Dropping H disconnects vertex 1 from the rest.
        let p = DualProblem::new(g, vec![Symbol(2)], vec![0.0]).unwrap();
        assert_eq!(solve_dual(&p).unwrap_err(), Error::Reducible);
    }
}
