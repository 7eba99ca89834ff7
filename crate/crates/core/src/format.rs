//! Numeric formatting and CSV writers for exported results.

use std::io::{self, Write};

use crate::graph::TrustGraph;
use crate::solver::ReputationVector;
use crate::trust::TrustScore;

/// Formats `x` with 12 significant digits, `%.12g` style: fixed notation for
/// moderate exponents, scientific otherwise, trailing zeros trimmed.
pub fn sig12(x: f64) -> String {
    sig(x, 12)
}

pub fn sig(x: f64, digits: usize) -> String {
    assert!(digits >= 1);
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -5 || exp >= digits as i32 {
        format!("{}e{}", trim_zeros(mantissa), exp)
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_owned()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// `user_id,rep_pos,rep_neg,rep` rows in the given order.
pub fn write_reputation_csv<W: Write>(
    mut out: W,
    graph: &TrustGraph,
    rep: &ReputationVector,
    order: &[(usize, f64)],
) -> io::Result<()> {
    writeln!(out, "user_id,rep_pos,rep_neg,rep")?;
    for &(i, _) in order {
        writeln!(
            out,
            "{},{},{},{}",
            graph.name(i),
            sig12(rep.rep_pos[i]),
            sig12(rep.rep_neg[i]),
            sig12(rep.rep[i])
        )?;
    }
    Ok(())
}

/// `trustor,trustee,trust,basis` rows in the given order.
pub fn write_trust_csv<W: Write>(
    mut out: W,
    graph: &TrustGraph,
    trustor: &str,
    ranked: &[(usize, TrustScore)],
) -> io::Result<()> {
    writeln!(out, "trustor,trustee,trust,basis")?;
    for (i, score) in ranked {
        writeln!(
            out,
            "{},{},{},{}",
            trustor,
            graph.name(*i),
            sig12(score.value),
            score.basis.as_str()
        )?;
    }
    Ok(())
}

/// `step,exp` rows; step 0 is the starting value.
pub fn write_trace_csv<W: Write>(mut out: W, trace: &[f64]) -> io::Result<()> {
    writeln!(out, "step,exp")?;
    for (step, v) in trace.iter().enumerate() {
        writeln!(out, "{},{}", step, sig12(*v))?;
    }
    Ok(())
}
