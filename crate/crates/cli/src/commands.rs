//! Subcommand bodies. Each returns the full text to print so that output is
//! assembled deterministically before anything reaches stdout.

use std::fmt::Write;

use icicap::closedform::{cap_qab, ordinary_capacity};
use icicap::dual::{capacity_composition_with, default_omitted, CapacityResult};
use icicap::graphs::{build_ici_graph, Alphabet, SymbolClass};
use icicap::markov::{lift_chain, maxentropic_chain, CompositionVector, MarkovChain};
use icicap::oracle::{check_size, direct_optimize_311, rate_curve, CountWindow};
use icicap::spectral::perron;
use icicap::{Error, Result};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::output::{sig12, Format};
use crate::{Axis, Outcome, RouteArg, Shape};

fn composition(shape: Shape, p: Vec<f64>) -> Result<CompositionVector> {
    CompositionVector::ici(shape.q, shape.a, shape.b, p)
}

/// The direct route optimizes at class level and lifts like the closed form.
fn direct_route(p: &CompositionVector) -> Result<CapacityResult> {
    let rho = p.class_masses();
    let base = direct_optimize_311(&rho)?;
    let chain = lift_chain(&base.chain, p)?;
    Ok(CapacityResult {
        capacity_bits: base.capacity_bits + p.entropy() - rho.entropy(),
        chain,
        ..base
    })
}

fn chain_value(chain: &MarkovChain) -> Value {
    serde_json::from_str(&chain.to_json()).expect("chain JSON is well formed")
}

fn route_value(res: &CapacityResult, alphabet: &Alphabet) -> Value {
    let xi: serde_json::Map<String, Value> = res
        .xi_star
        .iter()
        .map(|&(s, x)| (alphabet.name(s).to_string(), json!(x)))
        .collect();
    json!({
        "route": res.route.as_str(),
        "capacity_bits": res.capacity_bits,
        "lambda": res.lambda_star,
        "y": res.witness.map(|w| w.y),
        "z": res.witness.map(|w| w.z),
        "xi_star": xi,
        "gradient_norm": res.gradient_norm,
        "iterations": res.iterations,
        "chain": chain_value(&res.chain),
    })
}

pub fn capacity(shape: Shape, p: Vec<f64>, route: RouteArg, fmt: Format) -> Result<Outcome> {
    let comp = composition(shape, p)?;
    let mut results = Vec::new();
    if matches!(route, RouteArg::Closed | RouteArg::All) {
        results.push(cap_qab(&comp)?);
    }
    if matches!(route, RouteArg::Dual | RouteArg::All) {
        results.push(capacity_composition_with(&comp, default_omitted(&comp))?);
    }
    if matches!(route, RouteArg::Direct | RouteArg::All) {
        results.push(direct_route(&comp)?);
    }
    let values: Vec<f64> = results.iter().map(|r| r.capacity_bits).collect();
    let spread = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - values.iter().cloned().fold(f64::INFINITY, f64::min);
    let discrepancy = (route == RouteArg::All).then_some(spread);
    let alphabet = comp.alphabet();

    let mut out = String::new();
    match fmt {
        Format::Json => {
            let doc = json!({
                "q": shape.q, "a": shape.a, "b": shape.b,
                "p": comp.probs(),
                "routes": results.iter().map(|r| route_value(r, alphabet)).collect::<Vec<_>>(),
                "max_discrepancy": discrepancy,
            });
            writeln!(out, "{}", serde_json::to_string_pretty(&doc)?).unwrap();
        }
        Format::Csv => {
            out.push_str("route,capacity_bits,lambda,y,z\n");
            for r in &results {
                let opt = |x: Option<f64>| x.map(sig12).unwrap_or_default();
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    r.route.as_str(),
                    sig12(r.capacity_bits),
                    opt(r.lambda_star),
                    opt(r.witness.map(|w| w.y)),
                    opt(r.witness.map(|w| w.z))
                )
                .unwrap();
            }
        }
        Format::Text => {
            writeln!(
                out,
                "q = {}, a = {}, b = {}, p = {:?}",
                shape.q,
                shape.a,
                shape.b,
                comp.probs()
            )
            .unwrap();
            for r in &results {
                write!(out, "{:<8} {}", r.route.as_str(), r.capacity_bits).unwrap();
                if let Some(w) = r.witness {
                    write!(out, "  lambda {} y {} z {}", w.lambda, w.y, w.z).unwrap();
                } else if let Some(l) = r.lambda_star {
                    write!(out, "  lambda {l}").unwrap();
                }
                let xi: Vec<String> = r
                    .xi_star
                    .iter()
                    .map(|&(s, x)| format!("{}={}", alphabet.name(s), x))
                    .collect();
                if !xi.is_empty() {
                    write!(out, "  xi* {}", xi.join(" ")).unwrap();
                }
                out.push('\n');
            }
            if let Some(d) = discrepancy {
                writeln!(out, "max discrepancy {d:e}").unwrap();
            }
            writeln!(out, "chain ({} route):", results[0].route.as_str()).unwrap();
            write_chain_text(&mut out, &results[0].chain);
        }
    }
    Ok(Outcome::Done(out))
}

fn write_chain_text(out: &mut String, chain: &MarkovChain) {
    let g = chain.graph();
    for (e, p) in g.edges().iter().zip(chain.probs()) {
        writeln!(
            out,
            "  {} -> {} {:<3} {}",
            g.vertices()[e.src],
            g.vertices()[e.dst],
            g.alphabet().name(e.label),
            p
        )
        .unwrap();
    }
}

pub fn ordinary(shape: Shape, fmt: Format) -> Result<Outcome> {
    let cubic = ordinary_capacity(shape.q, shape.a, shape.b)?;
    let g = build_ici_graph(shape.q, shape.a, shape.b)?;
    let spectral = perron(&g.adjacency_matrix())?.lambda.log2();
    let diff = (cubic - spectral).abs();
    let out = match fmt {
        Format::Json => format!(
            "{}\n",
            serde_json::to_string_pretty(&json!({
                "q": shape.q, "a": shape.a, "b": shape.b,
                "cubic_bits": cubic, "perron_bits": spectral, "difference": diff,
            }))?
        ),
        Format::Csv => format!(
            "cubic_bits,perron_bits,difference\n{},{},{}\n",
            sig12(cubic),
            sig12(spectral),
            sig12(diff)
        ),
        Format::Text => format!("cubic   {cubic}\nperron  {spectral}\ndiff    {diff:e}\n"),
    };
    Ok(Outcome::Done(out))
}

struct SweepRow {
    probs: Vec<f64>,
    capacity: Option<f64>,
    dual_gap: Option<f64>,
    warning: String,
}

/// Class masses spread evenly over the symbols of each class.
fn even_split(alphabet: &Alphabet, rho: [f64; 3]) -> Vec<f64> {
    let sizes = SymbolClass::ALL.map(|c| alphabet.members(c).len());
    alphabet
        .symbols()
        .map(|s| {
            let c = alphabet.class_of(s).expect("classified").index();
            rho[c] / sizes[c] as f64
        })
        .collect()
}

fn sweep_row(shape: Shape, alphabet: &Alphabet, rho: [f64; 3]) -> SweepRow {
    let probs = even_split(alphabet, rho);
    let skipped = |warning: String| SweepRow {
        probs: probs.clone(),
        capacity: None,
        dual_gap: None,
        warning,
    };
    if rho[0] <= 0.0 || rho[2] <= 0.0 || rho[1] < 0.0 {
        return skipped("rho_L or rho_H not positive".into());
    }
    let comp = match composition(shape, probs.clone()) {
        Ok(c) => c,
        Err(e) => return skipped(e.to_string()),
    };
    let closed = match cap_qab(&comp) {
        Ok(r) => r.capacity_bits,
        Err(e) => return skipped(e.to_string()),
    };
    match capacity_composition_with(&comp, default_omitted(&comp)) {
        Ok(d) => SweepRow {
            probs,
            capacity: Some(closed),
            dual_gap: Some((d.capacity_bits - closed).abs()),
            warning: String::new(),
        },
        Err(e) => SweepRow {
            probs,
            capacity: Some(closed),
            dual_gap: None,
            warning: format!("dual: {e}"),
        },
    }
}

pub fn sweep(
    shape: Shape,
    axis: Axis,
    from: f64,
    to: f64,
    steps: usize,
    other: f64,
    fmt: Format,
) -> Result<Outcome> {
    let alphabet = Alphabet::ici(shape.q, shape.a, shape.b)?;
    if steps == 0 || !from.is_finite() || !to.is_finite() || !(0.0..=1.0).contains(&other) {
        return Err(Error::InvalidParameter(
            "sweep needs steps >= 1 and finite bounds".into(),
        ));
    }
    if shape.q - shape.a - shape.b == 0 && (axis == Axis::Mid || other > 0.0) {
        return Err(Error::InvalidParameter(
            "this alphabet has no intermediate symbols".into(),
        ));
    }
    let grid: Vec<[f64; 3]> = (0..=steps)
        .map(|k| {
            let x = from + (to - from) * k as f64 / steps as f64;
            let (mid, high) = match axis {
                Axis::High => (other, x),
                Axis::Mid => (x, other),
            };
            [1.0 - mid - high, mid, high]
        })
        .collect();
    let rows: Vec<SweepRow> = grid
        .par_iter()
        .map(|&rho| sweep_row(shape, &alphabet, rho))
        .collect();
    for r in rows.iter().filter(|r| !r.warning.is_empty()) {
        log::warn!("sweep row {:?}: {}", r.probs, r.warning);
    }

    let mut out = String::new();
    if fmt == Format::Json {
        let doc: Vec<Value> = rows
            .iter()
            .map(|r| json!({ "p": r.probs, "capacity_bits": r.capacity, "dual_gap": r.dual_gap, "warning": r.warning }))
            .collect();
        writeln!(out, "{}", serde_json::to_string_pretty(&doc)?).unwrap();
        return Ok(Outcome::Done(out));
    }
    let header: Vec<String> = alphabet.names().iter().map(|n| format!("p_{n}")).collect();
    writeln!(out, "{},capacity_bits,dual_gap,warning", header.join(",")).unwrap();
    for r in &rows {
        let p: Vec<String> = r.probs.iter().map(|&x| sig12(x)).collect();
        let opt = |x: Option<f64>| x.map(sig12).unwrap_or_default();
        let warning = r.warning.replace(',', ";");
        writeln!(
            out,
            "{},{},{},{}",
            p.join(","),
            opt(r.capacity),
            opt(r.dual_gap),
            warning
        )
        .unwrap();
    }
    Ok(Outcome::Done(out))
}

pub fn verify(
    shape: Shape,
    p: Vec<f64>,
    n_max: usize,
    epsilon: f64,
    step: usize,
    tolerance: f64,
    fmt: Format,
) -> Result<Outcome> {
    let comp = composition(shape, p)?;
    if n_max == 0 || step == 0 {
        return Err(Error::InvalidParameter(
            "n-max and step must be positive".into(),
        ));
    }
    let window = CountWindow::epsilon_band(comp.clone(), epsilon)?;
    check_size(Some(&window), n_max)?;
    let analytic = cap_qab(&comp)?.capacity_bits;
    let mut lengths: Vec<usize> = (1..).map(|k| k * step).take_while(|&n| n < n_max).collect();
    lengths.push(n_max);
    let curve = rate_curve(shape.q, shape.a, shape.b, Some(&window), &lengths)?;
    let gap = |r: Option<f64>| r.map(|r| (r - analytic).abs());
    let final_gap = gap(curve.last().and_then(|c| c.rate_bits));
    let pass = final_gap.is_some_and(|g| g < tolerance);
    let verdict = if pass { "PASS" } else { "FAIL" };

    let mut out = String::new();
    match fmt {
        Format::Json => {
            let rows: Vec<Value> = curve
                .iter()
                .map(|c| json!({ "n": c.n, "count": c.count.to_string(), "rate_bits": c.rate_bits, "gap": gap(c.rate_bits) }))
                .collect();
            let doc = json!({
                "analytic_bits": analytic, "epsilon": epsilon, "tolerance": tolerance,
                "rates": rows, "final_gap": final_gap, "verdict": verdict,
            });
            writeln!(out, "{}", serde_json::to_string_pretty(&doc)?).unwrap();
        }
        Format::Csv => {
            out.push_str("n,count,rate_bits,gap\n");
            for c in &curve {
                let opt = |x: Option<f64>| x.map(sig12).unwrap_or_default();
                writeln!(
                    out,
                    "{},{},{},{}",
                    c.n,
                    c.count,
                    opt(c.rate_bits),
                    opt(gap(c.rate_bits))
                )
                .unwrap();
            }
        }
        Format::Text => {
            writeln!(out, "analytic capacity {analytic} bits (epsilon {epsilon})").unwrap();
            for c in &curve {
                let rate = c
                    .rate_bits
                    .map(|r| format!("{r:.6}"))
                    .unwrap_or_else(|| "-".into());
                writeln!(out, "n {:>4}  count {:>30}  rate {rate}", c.n, c.count).unwrap();
            }
            let shown = final_gap
                .map(|g| format!("{g:.6}"))
                .unwrap_or_else(|| "undefined".into());
            writeln!(
                out,
                "final gap {shown} at n = {n_max} (tolerance {tolerance}): {verdict}"
            )
            .unwrap();
        }
    }
    Ok(if pass {
        Outcome::Done(out)
    } else {
        Outcome::VerifyFailed(out)
    })
}

pub fn chain(shape: Shape, p: Option<Vec<f64>>, fmt: Format) -> Result<Outcome> {
    let chain = match p {
        Some(p) => cap_qab(&composition(shape, p)?)?.chain,
        None => maxentropic_chain(&build_ici_graph(shape.q, shape.a, shape.b)?)?,
    };
    let out = match fmt {
        Format::Csv => {
            let g = chain.graph();
            let mut out = String::from("src,dst,label,prob\n");
            for (e, p) in g.edges().iter().zip(chain.probs()) {
                let (src, dst) = (&g.vertices()[e.src], &g.vertices()[e.dst]);
                writeln!(
                    out,
                    "{src},{dst},{},{}",
                    g.alphabet().name(e.label),
                    sig12(*p)
                )
                .unwrap();
            }
            out
        }
        Format::Json | Format::Text => format!("{}\n", chain.to_json()),
    };
    Ok(Outcome::Done(out))
}
