//! Ground truth that shares no code with the analytic routes.
//!
//! [`count_words`] counts ICI-free words exactly, optionally restricted to a
//! composition window, and [`direct_optimize_311`] maximizes the entropy of
//! the class-level chain directly over its edge probabilities.
//!
//! Counting works at class level. Whether a word avoids `H L H` depends only
//! on its class sequence, so the DP runs over class sequences, tracked by a
//! three-state suffix automaton (nothing relevant / ends in `H` / ends in
//! `H L`) together with the running counts of `L` and `I`. Symbols are then
//! distributed inside each class by a multinomial sum that honors the
//! per-symbol bounds.

use nalgebra::{Matrix3, Vector3};
use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::dual::{CapacityResult, Route};
use crate::error::{Error, Result};
use crate::graphs::{build_ici_graph, validate_qab, Symbol, SymbolClass};
use crate::markov::{ClassMasses, CompositionVector, MarkovChain};

/// Largest DP table (positions x automaton states x count cells) allowed.
pub const STATE_LIMIT: f64 = 1e8;
/// Slack used when a window edge like `(p - eps) n` is numerically an integer.
const EDGE_SLACK: f64 = 1e-9;
const DIRECT_MAX_ITERATIONS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub enum WindowMode {
    /// Each symbol count strictly inside `((p_s - eps) n, (p_s + eps) n)`.
    EpsilonBand { epsilon: f64 },
    /// Each symbol other than `anchor` occurs exactly `floor(p_s n)` times;
    /// the anchor (a low symbol) fills the rest.
    FloorExact { anchor: Symbol },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountWindow {
    pub mode: WindowMode,
    pub p: CompositionVector,
}

impl CountWindow {
    pub fn epsilon_band(p: CompositionVector, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        Ok(Self {
            mode: WindowMode::EpsilonBand { epsilon },
            p,
        })
    }

    /// Floor-count window anchored at the first low symbol.
    pub fn floor_exact(p: CompositionVector) -> Result<Self> {
        let anchor = p
            .alphabet()
            .members(SymbolClass::Low)
            .first()
            .copied()
            .ok_or_else(|| {
                Error::InvalidParameter("alphabet has no low symbol to anchor on".into())
            })?;
        Self::floor_exact_at(p, anchor)
    }

    pub fn floor_exact_at(p: CompositionVector, anchor: Symbol) -> Result<Self> {
        if p.alphabet().class_of(anchor) != Some(SymbolClass::Low) {
            return Err(Error::InvalidParameter(
                "the floor anchor must be a low symbol".into(),
            ));
        }
        Ok(Self {
            mode: WindowMode::FloorExact { anchor },
            p,
        })
    }

    /// Inclusive per-symbol count bounds at length `n`. `None` if the window
    /// admits no count vector at all.
    pub fn symbol_bounds(&self, n: usize) -> Option<Vec<(usize, usize)>> {
        let nf = n as f64;
        match &self.mode {
            WindowMode::EpsilonBand { epsilon } => self
                .p
                .probs()
                .iter()
                .map(|&p| {
                    let lo = ((p - epsilon) * nf + EDGE_SLACK).floor() + 1.0;
                    let hi = ((p + epsilon) * nf - EDGE_SLACK).ceil() - 1.0;
                    let lo = lo.max(0.0) as usize;
                    let hi = hi.min(nf);
                    if hi < lo as f64 {
                        None
                    } else {
                        Some((lo, hi as usize))
                    }
                })
                .collect(),
            WindowMode::FloorExact { anchor } => {
                let mut bounds: Vec<(usize, usize)> = self
                    .p
                    .probs()
                    .iter()
                    .map(|&p| {
                        let k = (p * nf + EDGE_SLACK).floor() as usize;
                        (k, k)
                    })
                    .collect();
                let others: usize = bounds
                    .iter()
                    .enumerate()
                    .filter(|(s, _)| *s != anchor.0)
                    .map(|(_, b)| b.0)
                    .sum();
                let rest = n.checked_sub(others)?;
                bounds[anchor.0] = (rest, rest);
                Some(bounds)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountResult {
    pub n: usize,
    #[serde(serialize_with = "serialize_big")]
    pub count: BigUint,
    pub rate_bits: Option<f64>,
}

fn serialize_big<S: serde::Serializer>(x: &BigUint, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&x.to_str_radix(10))
}

impl CountResult {
    fn new(n: usize, count: BigUint) -> Self {
        let rate_bits = if count.is_zero() {
            None
        } else {
            Some(log2_big(&count) / n as f64)
        };
        Self {
            n,
            count,
            rate_bits,
        }
    }

    /// `n,count,rate_bits` with an empty rate for a zero count.
    pub fn csv_row(&self) -> String {
        let rate = self
            .rate_bits
            .map(|r| format!("{r:.12e}"))
            .unwrap_or_default();
        format!("{},{},{}", self.n, self.count, rate)
    }

    pub const CSV_HEADER: &'static str = "n,count,rate_bits";
}

/// `log2` of an arbitrarily large positive integer.
pub fn log2_big(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 64 {
        return (x.to_u64().expect("fits in 64 bits") as f64).log2();
    }
    let shift = bits - 64;
    let top = (x >> shift).to_u64().expect("exactly 64 bits");
    (top as f64).log2() + shift as f64
}

/// Automaton step on a class; `None` when the step completes `H L H`.
fn step(state: usize, class: SymbolClass) -> Option<usize> {
    match (state, class) {
        (2, SymbolClass::High) => None,
        (_, SymbolClass::High) => Some(1),
        (1, SymbolClass::Low) => Some(2),
        _ => Some(0),
    }
}

/// Exact number of words of length `n` in the ICI-free system over `(q, a, b)`,
/// restricted to `window` when given.
pub fn count_words(
    q: usize,
    a: usize,
    b: usize,
    n: usize,
    window: Option<&CountWindow>,
) -> Result<CountResult> {
    validate_qab(q, a, b)?;
    if n == 0 {
        return Err(Error::InvalidParameter(
            "word length must be at least 1".into(),
        ));
    }
    match window {
        None => Ok(CountResult::new(n, count_unwindowed(q, a, b, n)?)),
        Some(w) => {
            if w.p.alphabet().class_sizes() != Some((a, q - a - b, b)) {
                return Err(Error::InvalidParameter(format!(
                    "window composition is over a different alphabet than ({q}, {a}, {b})"
                )));
            }
            Ok(CountResult::new(n, count_windowed(w, n)?))
        }
    }
}

fn guard(estimate: f64) -> Result<()> {
    if estimate > STATE_LIMIT {
        Err(Error::TooLarge {
            estimate,
            limit: STATE_LIMIT,
        })
    } else {
        Ok(())
    }
}

fn count_unwindowed(q: usize, a: usize, b: usize, n: usize) -> Result<BigUint> {
    guard(n as f64 * 3.0)?;
    let weight = [a, q - a - b, b].map(BigUint::from);
    let mut cur = vec![BigUint::one(), BigUint::zero(), BigUint::zero()];
    for _ in 0..n {
        let mut next = vec![BigUint::zero(); 3];
        for (state, ways) in cur.iter().enumerate() {
            if ways.is_zero() {
                continue;
            }
            for class in SymbolClass::ALL {
                if let Some(to) = step(state, class) {
                    next[to] += ways * &weight[class.index()];
                }
            }
        }
        cur = next;
    }
    Ok(cur.into_iter().sum())
}

/// DP table size the counter would allocate for length `n`, compared
/// against [`STATE_LIMIT`] before any work is done.
pub fn table_estimate(window: Option<&CountWindow>, n: usize) -> f64 {
    match window.and_then(|w| w.symbol_bounds(n).map(|b| class_bounds(w, &b, n))) {
        None => n as f64 * 3.0,
        Some([(_, hi_l), (_, hi_i), _]) => n as f64 * 3.0 * (hi_l + 1) as f64 * (hi_i + 1) as f64,
    }
}

/// Fails with [`Error::TooLarge`] when counting at length `n` would exceed the guard.
pub fn check_size(window: Option<&CountWindow>, n: usize) -> Result<()> {
    guard(table_estimate(window, n))
}

/// Class-level count bounds implied by the symbol bounds.
fn class_bounds(w: &CountWindow, bounds: &[(usize, usize)], n: usize) -> [(usize, usize); 3] {
    SymbolClass::ALL.map(|c| {
        let members = w.p.alphabet().members(c);
        let lo: usize = members.iter().map(|s| bounds[s.0].0).sum();
        let hi: usize = members.iter().map(|s| bounds[s.0].1).sum::<usize>().min(n);
        (lo, hi)
    })
}

fn count_windowed(w: &CountWindow, n: usize) -> Result<BigUint> {
    let alphabet = w.p.alphabet();
    let Some(bounds) = w.symbol_bounds(n) else {
        return Ok(BigUint::zero());
    };
    let [(lo_l, hi_l), (lo_i, hi_i), (lo_h, hi_h)] = class_bounds(w, &bounds, n);
    if lo_l > hi_l || lo_i > hi_i || lo_h > hi_h {
        return Ok(BigUint::zero());
    }
    let (dl, di) = (hi_l + 1, hi_i + 1);
    guard(table_estimate(Some(w), n))?;

    let idx = |s: usize, l: usize, i: usize| (s * dl + l) * di + i;
    let mut cur = vec![BigUint::zero(); 3 * dl * di];
    cur[idx(0, 0, 0)] = BigUint::one();
    for len in 0..n {
        let remaining = n - len - 1;
        let mut next = vec![BigUint::zero(); cur.len()];
        for s in 0..3 {
            for l in 0..dl {
                for i in 0..di {
                    let ways = &cur[idx(s, l, i)];
                    if ways.is_zero() {
                        continue;
                    }
                    for class in SymbolClass::ALL {
                        let Some(to) = step(s, class) else { continue };
                        let (nl, ni) = match class {
                            SymbolClass::Low => (l + 1, i),
                            SymbolClass::Intermediate => (l, i + 1),
                            SymbolClass::High => (l, i),
                        };
                        let nh = len + 1 - nl - ni;
                        // Prune counts that overflow a class or can no longer
                        // reach its lower bound.
                        if nl > hi_l || ni > hi_i || nh > hi_h {
                            continue;
                        }
                        if nl + remaining < lo_l || ni + remaining < lo_i || nh + remaining < lo_h {
                            continue;
                        }
                        next[idx(to, nl, ni)] += ways;
                    }
                }
            }
        }
        cur = next;
    }

    let fill = SymbolClass::ALL.map(|c| {
        let members: Vec<(usize, usize)> =
            alphabet.members(c).iter().map(|s| bounds[s.0]).collect();
        class_fillings(&members, n)
    });
    let mut total = BigUint::zero();
    for l in lo_l..=hi_l {
        for i in lo_i..=hi_i {
            let Some(h) = n.checked_sub(l + i) else {
                continue;
            };
            if h < lo_h || h > hi_h {
                continue;
            }
            let sequences: BigUint = (0..3).map(|s| &cur[idx(s, l, i)]).sum();
            if sequences.is_zero() {
                continue;
            }
            total += sequences * &fill[0][l] * &fill[1][i] * &fill[2][h];
        }
    }
    Ok(total)
}

/// `out[c]` = number of words of length `c` over the given symbols whose
/// per-symbol counts lie within the inclusive bounds, for `c = 0..=n`.
fn class_fillings(bounds: &[(usize, usize)], n: usize) -> Vec<BigUint> {
    let binom = binomial_table(n);
    let mut ways = vec![BigUint::zero(); n + 1];
    ways[0] = BigUint::one();
    for &(lo, hi) in bounds {
        let mut next = vec![BigUint::zero(); n + 1];
        for (len, w) in ways.iter().enumerate() {
            if w.is_zero() {
                continue;
            }
            for k in lo..=hi {
                let total = len + k;
                if total > n {
                    break;
                }
                next[total] += w * &binom[total][k];
            }
        }
        ways = next;
    }
    ways
}

fn binomial_table(n: usize) -> Vec<Vec<BigUint>> {
    let mut rows: Vec<Vec<BigUint>> = Vec::with_capacity(n + 1);
    for m in 0..=n {
        let mut row = vec![BigUint::one(); m + 1];
        for k in 1..m {
            row[k] = &rows[m - 1][k - 1] + &rows[m - 1][k];
        }
        rows.push(row);
    }
    rows
}

/// Counts at each length, computed concurrently and returned in input order.
pub fn rate_curve(
    q: usize,
    a: usize,
    b: usize,
    window: Option<&CountWindow>,
    n_list: &[usize],
) -> Result<Vec<CountResult>> {
    n_list
        .par_iter()
        .map(|&n| count_words(q, a, b, n, window))
        .collect()
}

/// Maximum entropy of a stationary chain on the class-level graph with
/// class frequencies `rho`, found by maximizing over edge probabilities.
///
/// Edge probabilities are parameterized by `a = Q(1,L)`, `b = Q(2,I)` and
/// `c = Q(1,I)`; stationarity and the class frequencies fix the rest. The
/// entropy is concave in these, so a damped Newton ascent that stays
/// strictly inside the feasible polytope converges to the optimum. With
/// `rho_I = 0` the intermediate edges vanish and only `a` is free.
pub fn direct_optimize_311(rho: &ClassMasses) -> Result<CapacityResult> {
    let graph = build_ici_graph(3, 1, 1)?;
    let (l, i, h) = (rho.low, rho.mid, rho.high);
    let has_mid = i > 0.0;

    // Edge order: (1,L) (1,I) (1,H) (2,L) (2,I) (3,L) (3,I) (3,H).
    const SRC: [usize; 8] = [0, 0, 0, 1, 1, 2, 2, 2];
    const COEF: [[f64; 3]; 8] = [
        [1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0],
        [-1.0, 0.0, -1.0],
        [1.0, -1.0, 0.0],
        [0.0, 1.0, 0.0],
        [-2.0, 1.0, 0.0],
        [0.0, -1.0, -1.0],
        [1.0, 0.0, 1.0],
    ];
    let base = [0.0, 0.0, h, 0.0, 0.0, l, i, 0.0];
    let active: Vec<usize> = if has_mid {
        (0..8).collect()
    } else {
        vec![0, 2, 3, 5, 7]
    };
    let edges = |x: &Vector3<f64>| -> [f64; 8] {
        let mut q = [0.0; 8];
        for e in 0..8 {
            q[e] = base[e] + COEF[e][0] * x[0] + COEF[e][1] * x[1] + COEF[e][2] * x[2];
        }
        q
    };
    let feasible = |q: &[f64; 8]| active.iter().all(|&e| q[e] > 0.0);
    let entropy = |q: &[f64; 8]| -> f64 {
        let mut pi = [0.0; 3];
        for &e in &active {
            pi[SRC[e]] += q[e];
        }
        active
            .iter()
            .map(|&e| q[e] * (pi[SRC[e]] / q[e]).log2())
            .sum()
    };

    let mut x = if has_mid {
        let t = l.min(i).min(h) / 4.0;
        Vector3::new(2.0 * t, t, t)
    } else {
        Vector3::new(l.min(h) / 4.0, 0.0, 0.0)
    };
    let dims = if has_mid { 3 } else { 1 };
    let mut q = edges(&x);
    if !feasible(&q) {
        return Err(Error::Inconsistent(format!(
            "direct start point infeasible for {:?}",
            rho.as_array()
        )));
    }
    let mut value = entropy(&q);
    let ln2 = std::f64::consts::LN_2;
    let mut grad_norm = f64::INFINITY;
    for iteration in 0..DIRECT_MAX_ITERATIONS {
        let mut pi = [0.0; 3];
        for &e in &active {
            pi[SRC[e]] += q[e];
        }
        let mut grad = Vector3::zeros();
        let mut hess = Matrix3::zeros();
        for &e in &active {
            let ge = (pi[SRC[e]] / q[e]).log2();
            for r in 0..dims {
                grad[r] += COEF[e][r] * ge;
                for c in 0..dims {
                    hess[(r, c)] -= COEF[e][r] * COEF[e][c] / (q[e] * ln2);
                }
            }
        }
        // Same-source coupling: + (1/ln2) (sum_e coef_e)(sum_e coef_e)^T / pi_u.
        for u in 0..3 {
            let mut v = Vector3::zeros();
            for &e in active.iter().filter(|&&e| SRC[e] == u) {
                for r in 0..dims {
                    v[r] += COEF[e][r];
                }
            }
            hess += v * v.transpose() / (pi[u] * ln2);
        }
        for r in dims..3 {
            hess[(r, r)] = -1.0;
        }
        grad_norm = grad.amax();
        if grad_norm < 1e-12 {
            return Ok(direct_result(&graph, &q, value, grad_norm, iteration));
        }
        let dir = match (-hess).cholesky() {
            Some(ch) => ch.solve(&grad),
            None => grad,
        };
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-20 {
            let cand = x + dir * t;
            let qc = edges(&cand);
            if feasible(&qc) {
                let vc = entropy(&qc);
                if vc >= value - 1e-15 {
                    x = cand;
                    q = qc;
                    value = vc;
                    moved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !moved {
            // No representable ascent step left: optimal to working precision.
            if grad_norm < 1e-8 {
                return Ok(direct_result(&graph, &q, value, grad_norm, iteration));
            }
            break;
        }
    }
    Err(Error::NotConverged {
        method: "direct entropy maximization",
        iterations: DIRECT_MAX_ITERATIONS,
        residual: grad_norm,
    })
}

fn direct_result(
    graph: &crate::graphs::LabeledGraph,
    q: &[f64; 8],
    value: f64,
    grad_norm: f64,
    iterations: usize,
) -> CapacityResult {
    let prob: Vec<f64> = q.iter().map(|&x| x.max(0.0)).collect();
    let chain =
        MarkovChain::new(graph.clone(), prob).expect("direct optimum is a stationary chain");
    CapacityResult {
        capacity_bits: value,
        xi_star: Vec::new(),
        lambda_star: None,
        chain,
        gradient_norm: grad_norm,
        route: Route::Direct,
        witness: None,
        iterations,
    }
}
