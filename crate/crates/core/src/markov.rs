//! Stationary Markov chains on labeled graphs.
//!
//! A chain assigns a probability to every edge such that inflow equals
//! outflow at each vertex. Chains supported on a proper subgraph are valid;
//! irreducibility is only required by the constructions that need a Perron
//! vector.

use std::fmt::Write as _;

use rand::Rng;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::graphs::{
    build_ici_graph, Alphabet, Edge, LabeledGraph, Symbol, SymbolClass, WeightSpec,
};
use crate::spectral::perron;

/// Validation-side tolerance for normalization and stationarity.
pub const VALIDATION_TOL: f64 = 1e-9;
/// Tolerance for user-supplied probability vectors.
pub const COMPOSITION_TOL: f64 = 1e-12;

/// Base-2 entropy of a probability vector, with `0 log 0 = 0`.
pub fn entropy_bits(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.log2())
        .sum::<f64>()
}

/// Class masses `(rho_L, rho_I, rho_H)` of a composition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMasses {
    pub low: f64,
    pub mid: f64,
    pub high: f64,
}

impl ClassMasses {
    /// Requires `low, high > 0`, `mid >= 0` and unit sum.
    pub fn new(low: f64, mid: f64, high: f64) -> Result<Self> {
        let all = [low, mid, high];
        if all.iter().any(|x| !x.is_finite() || *x < 0.0 || *x > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "class masses {all:?} must lie in [0, 1]"
            )));
        }
        if ((low + mid + high) - 1.0).abs() > COMPOSITION_TOL {
            return Err(Error::InvalidParameter(format!(
                "class masses {all:?} must sum to 1"
            )));
        }
        if low <= 0.0 || high <= 0.0 {
            return Err(Error::Precondition(format!(
                "rho_L and rho_H must be strictly positive, got rho = {all:?}"
            )));
        }
        Ok(Self { low, mid, high })
    }

    pub fn get(&self, class: SymbolClass) -> f64 {
        match class {
            SymbolClass::Low => self.low,
            SymbolClass::Intermediate => self.mid,
            SymbolClass::High => self.high,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.low, self.mid, self.high]
    }

    pub fn entropy(&self) -> f64 {
        entropy_bits(&self.as_array())
    }
}

/// Target symbol frequencies over a classified alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositionVector {
    alphabet: Alphabet,
    probs: Vec<f64>,
}

impl CompositionVector {
    pub fn new(alphabet: Alphabet, probs: Vec<f64>) -> Result<Self> {
        if !alphabet.is_classified() {
            return Err(Error::InvalidParameter(
                "composition needs an L/I/H alphabet".into(),
            ));
        }
        if probs.len() != alphabet.len() {
            return Err(Error::InvalidParameter(format!(
                "composition has {} entries for an alphabet of size {}",
                probs.len(),
                alphabet.len()
            )));
        }
        if let Some(x) = probs.iter().find(|x| !x.is_finite() || **x < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "probability {x} is negative or not finite"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > COMPOSITION_TOL {
            return Err(Error::InvalidParameter(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        let v = Self { alphabet, probs };
        let rho = v.raw_masses();
        if rho[0] <= 0.0 || rho[2] <= 0.0 {
            return Err(Error::Precondition(format!(
                "rho_L and rho_H must be strictly positive, got rho = {rho:?}"
            )));
        }
        Ok(v)
    }

    /// Composition over the ICI alphabet of `(q, a, b)`.
    pub fn ici(q: usize, a: usize, b: usize, probs: Vec<f64>) -> Result<Self> {
        Self::new(Alphabet::ici(q, a, b)?, probs)
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, s: Symbol) -> f64 {
        self.probs[s.0]
    }

    fn raw_masses(&self) -> [f64; 3] {
        let mut rho = [0.0; 3];
        for s in self.alphabet.symbols() {
            let c = self.alphabet.class_of(s).expect("classified alphabet");
            rho[c.index()] += self.probs[s.0];
        }
        rho
    }

    pub fn class_masses(&self) -> ClassMasses {
        let [low, mid, high] = self.raw_masses();
        ClassMasses { low, mid, high }
    }

    pub fn entropy(&self) -> f64 {
        entropy_bits(&self.probs)
    }
}

/// Edge-probability assignment satisfying normalization and stationarity.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChain {
    graph: LabeledGraph,
    prob: Vec<f64>,
}

impl MarkovChain {
    /// Validates nonnegativity, unit mass and per-vertex balance.
    pub fn new(graph: LabeledGraph, prob: Vec<f64>) -> Result<Self> {
        if prob.len() != graph.edges().len() {
            return Err(Error::InvalidChain(format!(
                "{} probabilities for {} edges",
                prob.len(),
                graph.edges().len()
            )));
        }
        if let Some(p) = prob
            .iter()
            .find(|p| !p.is_finite() || **p < 0.0 || **p > 1.0 + VALIDATION_TOL)
        {
            return Err(Error::InvalidChain(format!(
                "edge probability {p} outside [0, 1]"
            )));
        }
        let total: f64 = prob.iter().sum();
        if (total - 1.0).abs() > VALIDATION_TOL {
            return Err(Error::InvalidChain(format!(
                "edge probabilities sum to {total}"
            )));
        }
        let residual = stationarity_residual(&graph, &prob);
        if residual > VALIDATION_TOL {
            return Err(Error::InvalidChain(format!(
                "stationarity violated by {residual:.3e}"
            )));
        }
        Ok(Self { graph, prob })
    }

    pub fn graph(&self) -> &LabeledGraph {
        &self.graph
    }

    pub fn probs(&self) -> &[f64] {
        &self.prob
    }

    /// Probability of the edge leaving `v` with `label`; zero if absent.
    pub fn prob_of(&self, v: usize, label: Symbol) -> f64 {
        self.graph
            .edges()
            .iter()
            .zip(&self.prob)
            .filter(|(e, _)| e.src == v && e.label == label)
            .map(|(_, p)| p)
            .sum()
    }

    /// Largest per-vertex |inflow - outflow|.
    pub fn stationarity_residual(&self) -> f64 {
        stationarity_residual(&self.graph, &self.prob)
    }

    /// `pi(v)` = total probability of edges leaving `v`.
    pub fn stationary_vertex_dist(&self) -> Vec<f64> {
        let mut pi = vec![0.0; self.graph.num_vertices()];
        for (e, p) in self.graph.edges().iter().zip(&self.prob) {
            pi[e.src] += p;
        }
        pi
    }

    /// Entropy rate in bits per symbol: edge entropy minus vertex entropy.
    pub fn entropy_rate(&self) -> f64 {
        entropy_bits(&self.prob) - entropy_bits(&self.stationary_vertex_dist())
    }

    /// Probability that an edge drawn from the chain carries each symbol of `w`.
    pub fn expected_indicator(&self, w: &[Symbol]) -> Vec<f64> {
        let mut out = vec![0.0; w.len()];
        for (e, p) in self.graph.edges().iter().zip(&self.prob) {
            if let Some(k) = w.iter().position(|&s| s == e.label) {
                out[k] += p;
            }
        }
        out
    }

    /// Convex combination `alpha * self + (1 - alpha) * other` on the same graph.
    pub fn mix(&self, other: &MarkovChain, alpha: f64) -> Result<MarkovChain> {
        if self.graph != other.graph {
            return Err(Error::InvalidParameter(
                "chains live on different graphs".into(),
            ));
        }
        let prob = self
            .prob
            .iter()
            .zip(&other.prob)
            .map(|(a, b)| alpha * a + (1.0 - alpha) * b)
            .collect();
        MarkovChain::new(self.graph.clone(), prob)
    }

    /// `{"edges": [{"src", "dst", "label", "prob"}]}` with 17 significant digits.
    pub fn to_json(&self) -> String {
        let g = &self.graph;
        let mut out = String::from("{\n  \"edges\": [");
        for (k, (e, p)) in g.edges().iter().zip(&self.prob).enumerate() {
            if k > 0 {
                out.push(',');
            }
            write!(
                out,
                "\n    {{\"src\": {}, \"dst\": {}, \"label\": {}, \"prob\": {:?}}}",
                serde_json::Value::from(g.vertices()[e.src].as_str()),
                serde_json::Value::from(g.vertices()[e.dst].as_str()),
                serde_json::Value::from(g.alphabet().name(e.label)),
                p
            )
            .expect("writing to a String");
        }
        out.push_str("\n  ]\n}");
        out
    }

    /// Parse chain JSON, rebuilding the graph from the edge list: vertices
    /// and symbols are numbered in order of first appearance.
    pub fn from_json(text: &str) -> Result<Self> {
        let rec: ChainRecord = serde_json::from_str(text)?;
        let mut vertices: Vec<String> = Vec::new();
        let mut names: Vec<String> = Vec::new();
        let intern = |list: &mut Vec<String>, name: &str| match list.iter().position(|x| x == name)
        {
            Some(i) => i,
            None => {
                list.push(name.to_string());
                list.len() - 1
            }
        };
        let mut edges = Vec::new();
        let mut prob = Vec::new();
        for e in &rec.edges {
            let src = intern(&mut vertices, &e.src);
            let dst = intern(&mut vertices, &e.dst);
            let label = Symbol(intern(&mut names, &e.label));
            edges.push(Edge { src, dst, label });
            prob.push(e.prob);
        }
        let graph = LabeledGraph::new(Alphabet::new(names)?, vertices, edges)?;
        MarkovChain::new(graph, prob)
    }

    /// Parse chain JSON against a known graph; edges are matched by
    /// `(src, dst, label)` names, with missing edges given probability 0.
    pub fn from_json_on(graph: &LabeledGraph, text: &str) -> Result<Self> {
        let rec: ChainRecord = serde_json::from_str(text)?;
        let mut prob = vec![0.0; graph.edges().len()];
        let mut used = vec![false; graph.edges().len()];
        for r in &rec.edges {
            let k = graph
                .edges()
                .iter()
                .enumerate()
                .position(|(k, e)| {
                    !used[k]
                        && graph.vertices()[e.src] == r.src
                        && graph.vertices()[e.dst] == r.dst
                        && graph.alphabet().name(e.label) == r.label
                })
                .ok_or_else(|| {
                    Error::Serialization(format!(
                        "edge {}->{} [{}] not in graph",
                        r.src, r.dst, r.label
                    ))
                })?;
            used[k] = true;
            prob[k] = r.prob;
        }
        MarkovChain::new(graph.clone(), prob)
    }
}

#[derive(Deserialize)]
struct ChainEdgeRecord {
    src: String,
    dst: String,
    label: String,
    prob: f64,
}

#[derive(Deserialize)]
struct ChainRecord {
    edges: Vec<ChainEdgeRecord>,
}

fn stationarity_residual(graph: &LabeledGraph, prob: &[f64]) -> f64 {
    let mut balance = vec![0.0; graph.num_vertices()];
    for (e, p) in graph.edges().iter().zip(prob) {
        balance[e.src] -= p;
        balance[e.dst] += p;
    }
    balance.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// The chain achieving the ordinary capacity `log2 lambda(adjacency)`.
pub fn maxentropic_chain(g: &LabeledGraph) -> Result<MarkovChain> {
    if !g.is_strongly_connected() {
        return Err(Error::Reducible);
    }
    chain_from_dual(g, &WeightSpec::zero(Vec::new()))
}

/// The tilted chain `P(e: u -> v) = l(u) w(e) x(v) / lambda` of the weight
/// matrix at `spec`, with `l`, `x` its left and right Perron vectors
/// (`l . x = 1`). Dropped symbols get probability zero.
pub fn chain_from_dual(g: &LabeledGraph, spec: &WeightSpec) -> Result<MarkovChain> {
    let a = g.weight_matrix(spec);
    let sp = perron(&a)?;
    let mut prob: Vec<f64> = g
        .edges()
        .iter()
        .map(|e| sp.left[e.src] * spec.edge_weight(e.label) * sp.right[e.dst] / sp.lambda)
        .collect();
    let total: f64 = prob.iter().sum();
    for p in &mut prob {
        *p /= total;
    }
    MarkovChain::new(g.clone(), prob)
}

/// A random full-support stationary chain on a strongly connected graph.
///
/// Raw positive edge weights define a transition kernel; its stationary
/// vertex law `pi` then gives `P(e) = pi(u) w(e) / sum_out(u)`, which is
/// exactly stationary.
pub fn random_chain<R: Rng + ?Sized>(g: &LabeledGraph, rng: &mut R) -> Result<MarkovChain> {
    if !g.is_strongly_connected() {
        return Err(Error::Reducible);
    }
    let n = g.num_vertices();
    let w: Vec<f64> = g
        .edges()
        .iter()
        .map(|_| rng.gen_range(0.05..1.0f64).powi(2))
        .collect();
    let mut out_sum = vec![0.0; n];
    for (e, wi) in g.edges().iter().zip(&w) {
        out_sum[e.src] += wi;
    }
    let mut t = nalgebra::DMatrix::zeros(n, n);
    for (e, wi) in g.edges().iter().zip(&w) {
        t[(e.src, e.dst)] += wi / out_sum[e.src];
    }
    let sp = perron(&t)?;
    let pi_total: f64 = sp.left.iter().sum();
    let prob: Vec<f64> = g
        .edges()
        .iter()
        .zip(&w)
        .map(|(e, wi)| sp.left[e.src] / pi_total * wi / out_sum[e.src])
        .collect();
    MarkovChain::new(g.clone(), prob)
}

/// Split a class-level chain on `G_{3;1,1}` across the symbols of each
/// class in proportion `p_s / rho_X`, giving a chain on `G_{q;a,b}`.
pub fn lift_chain(base: &MarkovChain, p: &CompositionVector) -> Result<MarkovChain> {
    let base_graph = base.graph();
    if base_graph.num_vertices() != 3 || base_graph.alphabet().len() != 3 {
        return Err(Error::Precondition(
            "lift_chain expects a chain on G_{3;1,1}".into(),
        ));
    }
    let class_label = |c: SymbolClass| {
        let alpha = base_graph.alphabet();
        alpha
            .symbols()
            .find(|&s| alpha.class_of(s) == Some(c) || alpha.name(s) == c.tag())
            .ok_or_else(|| Error::Precondition(format!("base chain has no {c} symbol")))
    };
    let labels = [
        class_label(SymbolClass::Low)?,
        class_label(SymbolClass::Intermediate)?,
        class_label(SymbolClass::High)?,
    ];
    let rho = p.class_masses();
    let got = base.expected_indicator(&labels);
    for (c, g) in SymbolClass::ALL.iter().zip(&got) {
        if (g - rho.get(*c)).abs() > VALIDATION_TOL {
            return Err(Error::Precondition(format!(
                "base chain has E[{c}] = {g}, composition needs {}",
                rho.get(*c)
            )));
        }
    }
    let (a, i, b) = p.alphabet().class_sizes().expect("classified");
    let target = build_ici_graph(a + i + b, a, b)?;
    let prob = target
        .edges()
        .iter()
        .map(|e| {
            let class = target.alphabet().class_of(e.label).expect("classified");
            let mass = rho.get(class);
            if mass == 0.0 {
                0.0
            } else {
                p.get(e.label) / mass * base.prob_of(e.src, labels[class.index()])
            }
        })
        .collect();
    MarkovChain::new(target, prob)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closedform::{solve_cubic_real, CubicPoly};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn loops(k: usize) -> LabeledGraph {
        let names: Vec<String> = (0..k).map(|i| format!("s{i}")).collect();
        let edges = (0..k)
            .map(|i| Edge {
                src: 0,
                dst: 0,
                label: Symbol(i),
            })
            .collect();
        LabeledGraph::new(Alphabet::new(names).unwrap(), vec!["v".into()], edges).unwrap()
    }

    fn cycle(m: usize) -> LabeledGraph {
        let edges = (0..m)
            .map(|i| Edge {
                src: i,
                dst: (i + 1) % m,
                label: Symbol(0),
            })
            .collect();
        let vertices = (0..m).map(|i| i.to_string()).collect();
        LabeledGraph::new(Alphabet::new(["a"]).unwrap(), vertices, edges).unwrap()
    }

    #[test]
    fn uniform_loops_have_log_k_entropy() {
        for k in 1..6 {
            let c = MarkovChain::new(loops(k), vec![1.0 / k as f64; k]).unwrap();
            assert!((c.entropy_rate() - (k as f64).log2()).abs() < 1e-14);
            assert_eq!(c.stationary_vertex_dist(), vec![1.0]);
            let e = c.expected_indicator(&[Symbol(0)]);
            assert!((e[0] - 1.0 / k as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn cycles_have_zero_entropy() {
        for m in 1..5 {
            let c = MarkovChain::new(cycle(m), vec![1.0 / m as f64; m]).unwrap();
            assert!(c.entropy_rate().abs() < 1e-14);
        }
        let c = maxentropic_chain(&cycle(2)).unwrap();
        assert!((c.probs()[0] - 0.5).abs() < 1e-14);
        assert_eq!(c.stationary_vertex_dist().len(), 2);
        assert!((c.stationary_vertex_dist()[0] - 0.5).abs() < 1e-14);
        assert!(c.entropy_rate().abs() < 1e-14);
    }

    #[test]
    fn rejects_non_stationary() {
        let g = cycle(2);
        assert!(matches!(
            MarkovChain::new(g.clone(), vec![0.7, 0.3]),
            Err(Error::InvalidChain(_))
        ));
        assert!(matches!(
            MarkovChain::new(g.clone(), vec![0.5, 0.6]),
            Err(Error::InvalidChain(_))
        ));
        assert!(matches!(
            MarkovChain::new(g, vec![1.0]),
            Err(Error::InvalidChain(_))
        ));
    }

    #[test]
    fn proper_subgraph_support_is_valid() {
        let g = build_ici_graph(3, 1, 1).unwrap();
        // All mass on the L self-loop at vertex 3.
        let k = g.follow(2, Symbol(0)).unwrap();
        let mut prob = vec![0.0; g.edges().len()];
        prob[k] = 1.0;
        let c = MarkovChain::new(g, prob).unwrap();
        assert_eq!(c.entropy_rate(), 0.0);
    }

    #[test]
    fn maxentropic_on_ici_is_log_largest_cubic_root() {
        let g = build_ici_graph(3, 1, 1).unwrap();
        let c = maxentropic_chain(&g).unwrap();
        let roots = solve_cubic_real(&CubicPoly::new(1.0, -3.0, 1.0, -2.0)).unwrap();
        let lambda = roots.last().unwrap().value;
        assert!((c.entropy_rate() - lambda.log2()).abs() < 1e-12);
        let all: Vec<Symbol> = g.alphabet().symbols().collect();
        assert!((c.expected_indicator(&all).iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(c.stationarity_residual() < 1e-12);
    }

    #[test]
    fn maxentropic_single_vertex_is_uniform() {
        let c = maxentropic_chain(&loops(4)).unwrap();
        assert!(c.probs().iter().all(|p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn zero_tilt_equals_maxentropic() {
        let g = build_ici_graph(4, 1, 2).unwrap();
        let tracked: Vec<Symbol> = g.alphabet().symbols().take(3).collect();
        let a = chain_from_dual(&g, &WeightSpec::zero(tracked)).unwrap();
        let b = maxentropic_chain(&g).unwrap();
        for (x, y) in a.probs().iter().zip(b.probs()) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn tilted_chain_duality_consistency() {
        let g = build_ici_graph(3, 1, 1).unwrap();
        let w = vec![Symbol(1), Symbol(2)];
        for xi in [[0.3, -0.8], [2.0, 1.0], [-1.5, 0.2]] {
            let spec = WeightSpec::new(w.clone(), xi.to_vec()).unwrap();
            let c = chain_from_dual(&g, &spec).unwrap();
            let e = c.expected_indicator(&w);
            let lam = perron(&g.weight_matrix(&spec)).unwrap().lambda;
            let dual = xi[0] * e[0] + xi[1] * e[1] + lam.log2();
            assert!((c.entropy_rate() - dual).abs() < 1e-12);
            assert!(c.stationarity_residual() < 1e-12);
        }
    }

    #[test]
    fn reducible_graph_rejected() {
        let g = LabeledGraph::new(
            Alphabet::new(["a"]).unwrap(),
            vec!["u".into(), "v".into()],
            vec![
                Edge {
                    src: 0,
                    dst: 1,
                    label: Symbol(0),
                },
                Edge {
                    src: 1,
                    dst: 1,
                    label: Symbol(0),
                },
            ],
        )
        .unwrap();
        assert_eq!(maxentropic_chain(&g), Err(Error::Reducible));
    }

    #[test]
    fn random_chains_are_stationary_and_bounded_by_maxentropic() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (q, a, b) in [(3, 1, 1), (4, 1, 2)] {
            let g = build_ici_graph(q, a, b).unwrap();
            let best = maxentropic_chain(&g).unwrap().entropy_rate();
            for _ in 0..1000 {
                let c = random_chain(&g, &mut rng).unwrap();
                assert!(c.stationarity_residual() < 1e-12);
                assert!(c.entropy_rate() <= best + 1e-12);
            }
        }
    }

    #[test]
    fn entropy_rate_is_concave() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = build_ici_graph(4, 2, 1).unwrap();
        for _ in 0..300 {
            let p1 = random_chain(&g, &mut rng).unwrap();
            let p2 = random_chain(&g, &mut rng).unwrap();
            let alpha: f64 = rng.gen();
            let mixed = p1.mix(&p2, alpha).unwrap();
            let lower = alpha * p1.entropy_rate() + (1.0 - alpha) * p2.entropy_rate();
            assert!(mixed.entropy_rate() >= lower - 1e-10);
        }
    }

    fn class_chain(rng: &mut ChaCha8Rng) -> MarkovChain {
        random_chain(&build_ici_graph(3, 1, 1).unwrap(), rng).unwrap()
    }

    #[test]
    fn identity_lift_for_singleton_classes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = class_chain(&mut rng);
        let rho = q.expected_indicator(&[Symbol(0), Symbol(1), Symbol(2)]);
        let p = CompositionVector::ici(3, 1, 1, rho).unwrap();
        let lifted = lift_chain(&q, &p).unwrap();
        for (x, y) in lifted.probs().iter().zip(q.probs()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn even_high_split() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = class_chain(&mut rng);
        let rho = q.expected_indicator(&[Symbol(0), Symbol(1), Symbol(2)]);
        let p = CompositionVector::ici(4, 1, 2, vec![rho[0], rho[1], rho[2] / 2.0, rho[2] / 2.0])
            .unwrap();
        let lifted = lift_chain(&q, &p).unwrap();
        for v in 0..3 {
            assert_eq!(lifted.prob_of(v, Symbol(2)), lifted.prob_of(v, Symbol(3)));
            assert!((lifted.prob_of(v, Symbol(2)) - q.prob_of(v, Symbol(2)) / 2.0).abs() < 1e-16);
        }
        let gain = lifted.entropy_rate() - q.entropy_rate();
        assert!((gain - p.entropy() + p.class_masses().entropy()).abs() < 1e-12);
        assert!((gain - rho[2]).abs() < 1e-12);
    }

    #[test]
    fn zero_mass_symbol_keeps_zero_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let q = class_chain(&mut rng);
        let rho = q.expected_indicator(&[Symbol(0), Symbol(1), Symbol(2)]);
        let p = CompositionVector::ici(4, 2, 1, vec![rho[0], 0.0, rho[1], rho[2]]).unwrap();
        let lifted = lift_chain(&q, &p).unwrap();
        assert_eq!(lifted.graph().edges().len(), 3 * 2 + 3 + 2);
        for v in 0..3 {
            assert_eq!(lifted.prob_of(v, Symbol(1)), 0.0);
        }
        assert!((lifted.entropy_rate() - q.entropy_rate()).abs() < 1e-12);
    }

    #[test]
    fn lift_rejects_mismatched_masses() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = class_chain(&mut rng);
        let p = CompositionVector::ici(3, 1, 1, vec![0.3, 0.3, 0.4]).unwrap();
        assert!(matches!(lift_chain(&q, &p), Err(Error::Precondition(_))));
    }

    #[test]
    fn chain_json_round_trip() {
        let g = build_ici_graph(4, 1, 2).unwrap();
        let c = maxentropic_chain(&g).unwrap();
        let text = c.to_json();
        let back = MarkovChain::from_json_on(&g, &text).unwrap();
        assert_eq!(back, c);
        let rebuilt = MarkovChain::from_json(&text).unwrap();
        assert!((rebuilt.entropy_rate() - c.entropy_rate()).abs() < 1e-15);
        assert_eq!(rebuilt.graph().vertices(), g.vertices());
        assert_eq!(rebuilt.graph().alphabet().names(), g.alphabet().names());
    }

    #[test]
    fn composition_validation() {
        assert!(matches!(
            CompositionVector::ici(3, 1, 1, vec![1.0, 0.0, 0.0]),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            CompositionVector::ici(3, 1, 1, vec![0.5, 0.5, 0.5]),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            CompositionVector::ici(3, 1, 1, vec![0.5, 0.5]),
            Err(Error::InvalidParameter(_))
        ));
        let p = CompositionVector::ici(5, 2, 2, vec![0.1, 0.2, 0.3, 0.15, 0.25]).unwrap();
        let rho = p.class_masses();
        assert!(
            (rho.low - 0.3).abs() < 1e-15
                && (rho.mid - 0.3).abs() < 1e-15
                && (rho.high - 0.4).abs() < 1e-15
        );
    }
}
