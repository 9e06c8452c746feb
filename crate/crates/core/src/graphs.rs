//! Edge-labeled graph presentations of constrained systems.
//!
//! A [`LabeledGraph`] is a directed multigraph whose edges carry symbols of an
//! [`Alphabet`]. Reading labels along paths generates the words of the
//! constrained system. Two builders are provided: the three-vertex ICI-free
//! presentation [`build_ici_graph`] and a generic pattern-matching automaton
//! for arbitrary finite forbidden-word sets, [`build_from_forbidden`].

use std::collections::{HashMap, VecDeque};
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of a symbol in its alphabet's declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Symbol(pub usize);

/// Low / intermediate / high partition of an ICI alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SymbolClass {
    #[serde(rename = "L")]
    Low,
    #[serde(rename = "I")]
    Intermediate,
    #[serde(rename = "H")]
    High,
}

impl SymbolClass {
    pub const ALL: [SymbolClass; 3] = [
        SymbolClass::Low,
        SymbolClass::Intermediate,
        SymbolClass::High,
    ];

    pub fn index(self) -> usize {
        match self {
            SymbolClass::Low => 0,
            SymbolClass::Intermediate => 1,
            SymbolClass::High => 2,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            SymbolClass::Low => "L",
            SymbolClass::Intermediate => "I",
            SymbolClass::High => "H",
        }
    }

    fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "L" => Some(SymbolClass::Low),
            "I" => Some(SymbolClass::Intermediate),
            "H" => Some(SymbolClass::High),
            _ => None,
        }
    }
}

impl fmt::Display for SymbolClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Ordered set of named symbols, optionally partitioned into L/I/H classes.
#[derive(Debug, Clone, PartialEq)]
pub struct Alphabet {
    names: Vec<String>,
    classes: Option<Vec<SymbolClass>>,
}

impl Alphabet {
    /// Unclassified alphabet. Names must be distinct and nonempty.
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::InvalidParameter("alphabet must not be empty".into()));
        }
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() {
                return Err(Error::InvalidParameter(
                    "symbol names must be nonempty".into(),
                ));
            }
            if names[..i].contains(n) {
                return Err(Error::InvalidParameter(format!("duplicate symbol {n:?}")));
            }
        }
        Ok(Self {
            names,
            classes: None,
        })
    }

    /// Classified alphabet; requires at least one L and one H symbol.
    pub fn with_classes<S: Into<String>>(
        names: impl IntoIterator<Item = S>,
        classes: Vec<SymbolClass>,
    ) -> Result<Self> {
        let mut alphabet = Self::new(names)?;
        if classes.len() != alphabet.names.len() {
            return Err(Error::InvalidParameter(format!(
                "{} classes for {} symbols",
                classes.len(),
                alphabet.names.len()
            )));
        }
        let count = |c| classes.iter().filter(|&&x| x == c).count();
        if count(SymbolClass::Low) == 0 || count(SymbolClass::High) == 0 {
            return Err(Error::InvalidParameter(
                "classified alphabet needs at least one L and one H symbol".into(),
            ));
        }
        alphabet.classes = Some(classes);
        Ok(alphabet)
    }

    /// The q-ary ICI alphabet: `a` low symbols, then `q - a - b`
    /// intermediate ones, then `b` high ones. A singleton class is named by
    /// its tag alone (`L`, `I`, `H`); larger classes get numbered names.
    pub fn ici(q: usize, a: usize, b: usize) -> Result<Self> {
        validate_qab(q, a, b)?;
        let i = q - a - b;
        let mut names = Vec::with_capacity(q);
        let mut classes = Vec::with_capacity(q);
        for (class, size) in [
            (SymbolClass::Low, a),
            (SymbolClass::Intermediate, i),
            (SymbolClass::High, b),
        ] {
            for k in 0..size {
                if size == 1 {
                    names.push(class.tag().to_string());
                } else {
                    names.push(format!("{}{}", class.tag(), k + 1));
                }
                classes.push(class);
            }
        }
        Self::with_classes(names, classes)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn symbols(&self) -> impl Iterator<Item = Symbol> + '_ {
        (0..self.names.len()).map(Symbol)
    }

    pub fn name(&self, s: Symbol) -> &str {
        &self.names[s.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<Symbol> {
        self.names.iter().position(|n| n == name).map(Symbol)
    }

    pub fn is_classified(&self) -> bool {
        self.classes.is_some()
    }

    pub fn class_of(&self, s: Symbol) -> Option<SymbolClass> {
        self.classes.as_ref().map(|c| c[s.0])
    }

    /// Symbols of one class, in declaration order. Empty when unclassified.
    pub fn members(&self, class: SymbolClass) -> Vec<Symbol> {
        match &self.classes {
            Some(c) => c
                .iter()
                .enumerate()
                .filter(|(_, &x)| x == class)
                .map(|(i, _)| Symbol(i))
                .collect(),
            None => Vec::new(),
        }
    }

    /// Class sizes `(|L|, |I|, |H|)`, if classified.
    pub fn class_sizes(&self) -> Option<(usize, usize, usize)> {
        self.classes.as_ref().map(|_| {
            (
                self.members(SymbolClass::Low).len(),
                self.members(SymbolClass::Intermediate).len(),
                self.members(SymbolClass::High).len(),
            )
        })
    }

    /// Parse a word written as a sequence of symbol names. Single-character
    /// names may be concatenated; otherwise names are separated by spaces.
    pub fn parse_word(&self, text: &str) -> Result<Vec<Symbol>> {
        let lookup = |tok: &str| {
            self.index_of(tok)
                .ok_or_else(|| Error::InvalidParameter(format!("unknown symbol {tok:?}")))
        };
        if text.contains(char::is_whitespace) {
            text.split_whitespace().map(lookup).collect()
        } else {
            text.chars().map(|c| lookup(&c.to_string())).collect()
        }
    }
}

pub(crate) fn validate_qab(q: usize, a: usize, b: usize) -> Result<()> {
    if q < 2 || a < 1 || b < 1 || a + b > q {
        return Err(Error::InvalidParameter(format!(
            "need q >= 2, a >= 1, b >= 1, a + b <= q; got (q, a, b) = ({q}, {a}, {b})"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub label: Symbol,
}

/// Directed edge-labeled multigraph over an alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledGraph {
    alphabet: Alphabet,
    vertices: Vec<String>,
    edges: Vec<Edge>,
}

impl LabeledGraph {
    pub fn new(alphabet: Alphabet, vertices: Vec<String>, edges: Vec<Edge>) -> Result<Self> {
        for e in &edges {
            if e.src >= vertices.len() || e.dst >= vertices.len() {
                return Err(Error::InvalidParameter(format!(
                    "edge {e:?} references a missing vertex"
                )));
            }
            if e.label.0 >= alphabet.len() {
                return Err(Error::InvalidParameter(format!(
                    "edge label {} outside the alphabet",
                    e.label.0
                )));
            }
        }
        Ok(Self {
            alphabet,
            vertices,
            edges,
        })
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn vertices(&self) -> &[String] {
        &self.vertices
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn out_edges(&self, v: usize) -> impl Iterator<Item = (usize, &Edge)> + '_ {
        self.edges
            .iter()
            .enumerate()
            .filter(move |(_, e)| e.src == v)
    }

    /// Edge index of the edge leaving `v` with `label`, for deterministic graphs.
    pub fn follow(&self, v: usize, label: Symbol) -> Option<usize> {
        self.edges
            .iter()
            .position(|e| e.src == v && e.label == label)
    }

    pub fn is_deterministic(&self) -> bool {
        let mut seen = std::collections::HashSet::new();
        self.edges.iter().all(|e| seen.insert((e.src, e.label)))
    }

    /// True iff every ordered vertex pair is joined by a directed path.
    pub fn is_strongly_connected(&self) -> bool {
        strongly_connected(
            self.num_vertices(),
            self.edges.iter().map(|e| (e.src, e.dst)),
        )
    }

    /// Parallel-edge count matrix.
    pub fn adjacency_matrix(&self) -> DMatrix<f64> {
        let n = self.num_vertices();
        let mut m = DMatrix::zeros(n, n);
        for e in &self.edges {
            m[(e.src, e.dst)] += 1.0;
        }
        m
    }

    /// The tilted matrix `A(xi)`: each edge contributes `2^(-xi_s)` when its
    /// label `s` is tracked, `1` when untracked and `0` when dropped.
    pub fn weight_matrix(&self, spec: &WeightSpec) -> DMatrix<f64> {
        let n = self.num_vertices();
        let mut m = DMatrix::zeros(n, n);
        for e in &self.edges {
            m[(e.src, e.dst)] += spec.edge_weight(e.label);
        }
        m
    }

    /// Whether some path reads `word`.
    pub fn generates(&self, word: &[Symbol]) -> bool {
        let mut current: Vec<bool> = vec![true; self.num_vertices()];
        for &s in word {
            let mut next = vec![false; self.num_vertices()];
            let mut any = false;
            for e in &self.edges {
                if e.label == s && current[e.src] {
                    next[e.dst] = true;
                    any = true;
                }
            }
            if !any {
                return false;
            }
            current = next;
        }
        true
    }

    /// Number of distinct words of length `n` read along paths. Counts via
    /// the subset construction, so parallel paths reading the same word are
    /// not double counted.
    pub fn count_words(&self, n: usize) -> u128 {
        let nv = self.num_vertices();
        let mut layer: HashMap<Vec<bool>, u128> = HashMap::new();
        layer.insert(vec![true; nv], 1);
        for _ in 0..n {
            let mut next: HashMap<Vec<bool>, u128> = HashMap::new();
            for (subset, count) in &layer {
                for s in self.alphabet.symbols() {
                    let mut image = vec![false; nv];
                    let mut any = false;
                    for e in &self.edges {
                        if e.label == s && subset[e.src] {
                            image[e.dst] = true;
                            any = true;
                        }
                    }
                    if any {
                        *next.entry(image).or_insert(0) += count;
                    }
                }
            }
            layer = next;
        }
        layer.values().sum()
    }

    /// Restrict to vertices lying on bi-infinite paths: repeatedly delete
    /// vertices without incoming or outgoing edges.
    pub fn trim(&self) -> LabeledGraph {
        let nv = self.num_vertices();
        let mut alive = vec![true; nv];
        loop {
            let mut indeg = vec![0usize; nv];
            let mut outdeg = vec![0usize; nv];
            for e in &self.edges {
                if alive[e.src] && alive[e.dst] {
                    outdeg[e.src] += 1;
                    indeg[e.dst] += 1;
                }
            }
            let mut changed = false;
            for v in 0..nv {
                if alive[v] && (indeg[v] == 0 || outdeg[v] == 0) {
                    alive[v] = false;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        self.induced(&alive)
    }

    fn induced(&self, keep: &[bool]) -> LabeledGraph {
        let mut remap = vec![usize::MAX; self.num_vertices()];
        let mut vertices = Vec::new();
        for (v, name) in self.vertices.iter().enumerate() {
            if keep[v] {
                remap[v] = vertices.len();
                vertices.push(name.clone());
            }
        }
        let edges = self
            .edges
            .iter()
            .filter(|e| keep[e.src] && keep[e.dst])
            .map(|e| Edge {
                src: remap[e.src],
                dst: remap[e.dst],
                label: e.label,
            })
            .collect();
        LabeledGraph {
            alphabet: self.alphabet.clone(),
            vertices,
            edges,
        }
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let edges = self
            .edges
            .iter()
            .map(|e| EdgeRecord {
                src: self.vertices[e.src].clone(),
                dst: self.vertices[e.dst].clone(),
                label: self.alphabet.name(e.label).to_string(),
            })
            .collect();
        let mut classes = serde_json::Map::new();
        for s in self.alphabet.symbols() {
            if let Some(c) = self.alphabet.class_of(s) {
                classes.insert(self.alphabet.name(s).to_string(), c.tag().into());
            }
        }
        serde_json::to_value(GraphRecord {
            vertices: self.vertices.clone(),
            edges,
            classes,
        })
        .expect("graph record serializes")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_json_value()).expect("graph record serializes")
    }

    /// Inverse of [`LabeledGraph::to_json`]. The alphabet is the class map's
    /// key order when present, else label order of first appearance.
    pub fn from_json(text: &str) -> Result<Self> {
        let rec: GraphRecord = serde_json::from_str(text)?;
        let mut names: Vec<String> = rec.classes.keys().cloned().collect();
        for e in &rec.edges {
            if !names.contains(&e.label) {
                names.push(e.label.clone());
            }
        }
        let alphabet = if rec.classes.is_empty() {
            Alphabet::new(names)?
        } else {
            let classes = names
                .iter()
                .map(|n| {
                    rec.classes
                        .get(n)
                        .and_then(|v| v.as_str())
                        .and_then(SymbolClass::from_tag)
                        .ok_or_else(|| {
                            Error::Serialization(format!("missing or bad class for {n:?}"))
                        })
                })
                .collect::<Result<Vec<_>>>()?;
            Alphabet::with_classes(names, classes)?
        };
        let vidx = |name: &str| {
            rec.vertices
                .iter()
                .position(|v| v == name)
                .ok_or_else(|| Error::Serialization(format!("unknown vertex {name:?}")))
        };
        let edges = rec
            .edges
            .iter()
            .map(|e| {
                Ok(Edge {
                    src: vidx(&e.src)?,
                    dst: vidx(&e.dst)?,
                    label: alphabet.index_of(&e.label).expect("label collected above"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(alphabet, rec.vertices, edges)
    }
}

#[derive(Serialize, Deserialize)]
struct EdgeRecord {
    src: String,
    dst: String,
    label: String,
}

#[derive(Serialize, Deserialize)]
struct GraphRecord {
    vertices: Vec<String>,
    edges: Vec<EdgeRecord>,
    #[serde(default)]
    classes: serde_json::Map<String, serde_json::Value>,
}

/// Strong connectivity of the digraph on `0..n` with the given arcs.
pub(crate) fn strongly_connected(
    n: usize,
    arcs: impl Iterator<Item = (usize, usize)> + Clone,
) -> bool {
    if n == 0 {
        return false;
    }
    let reach = |forward: bool| {
        let mut adj = vec![Vec::new(); n];
        for (u, v) in arcs.clone() {
            if forward {
                adj[u].push(v);
            } else {
                adj[v].push(u);
            }
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen.into_iter().all(|b| b)
    };
    reach(true) && reach(false)
}

/// Tilt specification: tracked symbols `W` with their coordinates `xi`, and
/// symbols removed outright (the `xi_s -> infinity` limit).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSpec {
    pub tracked: Vec<Symbol>,
    pub xi: Vec<f64>,
    pub drop: Vec<Symbol>,
}

impl WeightSpec {
    pub fn new(tracked: Vec<Symbol>, xi: Vec<f64>) -> Result<Self> {
        if tracked.len() != xi.len() {
            return Err(Error::InvalidParameter(format!(
                "{} tracked symbols but {} tilt coordinates",
                tracked.len(),
                xi.len()
            )));
        }
        if let Some(x) = xi.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "tilt coordinate {x} is not finite"
            )));
        }
        Ok(Self {
            tracked,
            xi,
            drop: Vec::new(),
        })
    }

    /// Zero tilt on the given symbols.
    pub fn zero(tracked: Vec<Symbol>) -> Self {
        let xi = vec![0.0; tracked.len()];
        Self {
            tracked,
            xi,
            drop: Vec::new(),
        }
    }

    pub fn with_drop(mut self, drop: Vec<Symbol>) -> Self {
        self.drop = drop;
        self
    }

    pub fn edge_weight(&self, label: Symbol) -> f64 {
        if self.drop.contains(&label) {
            return 0.0;
        }
        match self.tracked.iter().position(|&s| s == label) {
            Some(k) => (-self.xi[k]).exp2(),
            None => 1.0,
        }
    }
}

/// The graph of Fig.-1 type presenting the ICI-free constraint: vertex `1`
/// follows a high symbol, `2` follows a high-then-low pair, and `3` is every
/// other context. Each class arrow expands to one edge per class member.
pub fn build_ici_graph(q: usize, a: usize, b: usize) -> Result<LabeledGraph> {
    let alphabet = Alphabet::ici(q, a, b)?;
    use SymbolClass::*;
    // (src, class, dst), in class order per source vertex.
    const ARROWS: [(usize, SymbolClass, usize); 8] = [
        (0, Low, 1),
        (0, Intermediate, 2),
        (0, High, 0),
        (1, Low, 2),
        (1, Intermediate, 2),
        (2, Low, 2),
        (2, Intermediate, 2),
        (2, High, 0),
    ];
    let mut edges = Vec::new();
    for (src, class, dst) in ARROWS {
        for label in alphabet.members(class) {
            edges.push(Edge { src, dst, label });
        }
    }
    LabeledGraph::new(alphabet, vec!["1".into(), "2".into(), "3".into()], edges)
}

/// Deterministic presentation of the system avoiding `forbidden`.
///
/// States are the proper prefixes of forbidden words; reading a symbol moves
/// to the longest prefix that is a suffix of the extended context. States
/// whose context ends in a forbidden word are removed, as are states not
/// reachable from the empty context. Every path from the empty context reads
/// an admissible word and every admissible word is read from it.
pub fn build_from_forbidden(alphabet: Alphabet, forbidden: &[Vec<Symbol>]) -> Result<LabeledGraph> {
    if forbidden.is_empty() {
        return Err(Error::InvalidParameter(
            "forbidden set must be nonempty".into(),
        ));
    }
    let q = alphabet.len();
    for w in forbidden {
        if w.is_empty() {
            return Err(Error::InvalidParameter(
                "forbidden words must be nonempty".into(),
            ));
        }
        if let Some(s) = w.iter().find(|s| s.0 >= q) {
            return Err(Error::InvalidParameter(format!(
                "symbol index {} outside alphabet",
                s.0
            )));
        }
    }

    // Trie.
    let mut children: Vec<Vec<Option<usize>>> = vec![vec![None; q]];
    let mut prefix: Vec<Vec<Symbol>> = vec![Vec::new()];
    let mut hit = vec![false];
    for w in forbidden {
        let mut node = 0;
        for &s in w {
            node = match children[node][s.0] {
                Some(c) => c,
                None => {
                    let c = children.len();
                    children.push(vec![None; q]);
                    let mut p = prefix[node].clone();
                    p.push(s);
                    prefix.push(p);
                    hit.push(false);
                    children[node][s.0] = Some(c);
                    c
                }
            };
        }
        hit[node] = true;
    }

    // Failure links and the full transition function, breadth first.
    let nodes = children.len();
    let mut fail = vec![0usize; nodes];
    let mut delta = vec![vec![0usize; q]; nodes];
    let mut queue = VecDeque::new();
    for s in 0..q {
        match children[0][s] {
            Some(c) => {
                delta[0][s] = c;
                queue.push_back(c);
            }
            None => delta[0][s] = 0,
        }
    }
    while let Some(u) = queue.pop_front() {
        hit[u] = hit[u] || hit[fail[u]];
        for s in 0..q {
            match children[u][s] {
                Some(c) => {
                    fail[c] = delta[fail[u]][s];
                    delta[u][s] = c;
                    queue.push_back(c);
                }
                None => delta[u][s] = delta[fail[u]][s],
            }
        }
    }

    // Keep non-hit states reachable from the root.
    let mut index = vec![usize::MAX; nodes];
    let mut order = Vec::new();
    let mut queue = VecDeque::from([0usize]);
    index[0] = 0;
    order.push(0);
    while let Some(u) = queue.pop_front() {
        for s in 0..q {
            let v = delta[u][s];
            if !hit[v] && index[v] == usize::MAX {
                index[v] = order.len();
                order.push(v);
                queue.push_back(v);
            }
        }
    }
    let mut edges = Vec::new();
    for &u in &order {
        for s in 0..q {
            let v = delta[u][s];
            if !hit[v] {
                edges.push(Edge {
                    src: index[u],
                    dst: index[v],
                    label: Symbol(s),
                });
            }
        }
    }
    if edges.is_empty() {
        return Err(Error::EmptySystem);
    }
    let vertices = order
        .iter()
        .map(|&u| {
            if prefix[u].is_empty() {
                "ε".to_string()
            } else {
                prefix[u]
                    .iter()
                    .map(|&s| alphabet.name(s))
                    .collect::<Vec<_>>()
                    .join("")
            }
        })
        .collect();
    LabeledGraph::new(alphabet, vertices, edges)
}

/// The ICI forbidden set `{h l h' : h, h' in H, l in L}`.
pub fn ici_forbidden_words(alphabet: &Alphabet) -> Vec<Vec<Symbol>> {
    let lows = alphabet.members(SymbolClass::Low);
    let highs = alphabet.members(SymbolClass::High);
    let mut words = Vec::new();
    for &h1 in &highs {
        for &l in &lows {
            for &h2 in &highs {
                words.push(vec![h1, l, h2]);
            }
        }
    }
    words
}
