//! Number formatting and probability parsing shared by the subcommands.

use clap::ValueEnum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
    Csv,
}

/// Twelve significant digits, plain decimal where readable, trailing zeros
/// trimmed. Locale independent.
pub fn sig12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let e = x.abs().log10().floor() as i32;
    if !(-4..12).contains(&e) {
        return format!("{x:.11e}");
    }
    let s = format!("{:.*}", (11 - e).max(0) as usize, x);
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// A probability written as a decimal (`0.25`) or a fraction (`1/3`).
pub fn parse_prob(text: &str) -> Result<f64, String> {
    let text = text.trim();
    let value = match text.split_once('/') {
        Some((num, den)) => {
            let num: u64 = num
                .trim()
                .parse()
                .map_err(|_| format!("bad numerator in {text:?}"))?;
            let den: u64 = den
                .trim()
                .parse()
                .map_err(|_| format!("bad denominator in {text:?}"))?;
            if den == 0 {
                return Err(format!("zero denominator in {text:?}"));
            }
            // Exact for numerator and denominator below 2^53.
            num as f64 / den as f64
        }
        None => text
            .parse::<f64>()
            .map_err(|_| format!("not a probability: {text:?}"))?,
    };
    if !(0.0..=1.0).contains(&value) {
        return Err(format!("probability {text} outside [0, 1]"));
    }
    Ok(value)
}

/// Comma-separated probabilities, as parsed from one flag value.
#[derive(Debug, Clone, PartialEq)]
pub struct Probs(pub Vec<f64>);

pub fn parse_probs(text: &str) -> Result<Probs, String> {
    text.split(',')
        .map(parse_prob)
        .collect::<Result<_, _>>()
        .map(Probs)
}
