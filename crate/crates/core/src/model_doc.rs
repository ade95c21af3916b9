//! Structured text documents for fitted variance models.
//!
//! One document per discipline, carrying the model, its diagnostics and the
//! bin table it was fitted on. Floats are written in shortest round-trip
//! form, so parsing a document back reproduces the model bit for bit. This
//! document is the contract between fitting and judge scoring, and the
//! plotting input.

use std::io::Write;

use thiserror::Error;

use crate::variance::{Shape, SigmaCurve, VarianceBin, VarianceModel};

const MAGIC: &str = "judgekit-model v1";

#[derive(Debug, Error)]
pub enum ModelDocError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

fn bad(line: usize, message: impl Into<String>) -> ModelDocError {
    ModelDocError::Malformed {
        line,
        message: message.into(),
    }
}

/// Serialize a fitted model and its bin table.
pub fn write_model_document<W: Write>(
    mut w: W,
    discipline: &str,
    model: &VarianceModel,
    bins: &[VarianceBin],
) -> std::io::Result<()> {
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "discipline {discipline}")?;
    writeln!(w, "kind {}", model.kind())?;
    match model.curve {
        SigmaCurve::Quadratic { a0, a1, a2 } => writeln!(w, "coefficients {a0} {a1} {a2}")?,
        SigmaCurve::Exponential { alpha, beta } => writeln!(w, "coefficients {alpha} {beta}")?,
    }
    writeln!(w, "domain {} {}", model.domain.0, model.domain.1)?;
    writeln!(w, "floor {}", model.floor)?;
    match model.r2_weighted {
        Some(r2) => writeln!(w, "r2_weighted {r2}")?,
        None => writeln!(w, "r2_weighted NA")?,
    }
    writeln!(w, "rmsd_weighted {}", model.rmsd_weighted)?;
    writeln!(w, "shape {}", model.shape)?;
    writeln!(w, "bins {}", bins.len())?;
    for b in bins {
        writeln!(w, "{} {} {}", b.center, b.count, b.sigma)?;
    }
    Ok(())
}

/// Parse a model document produced by [`write_model_document`].
pub fn parse_model_document(
    text: &str,
) -> Result<(String, VarianceModel, Vec<VarianceBin>), ModelDocError> {
    let mut lines = text.lines().enumerate();
    let mut next = |expect: &str| -> Result<(usize, String), ModelDocError> {
        let (i, line) = lines
            .next()
            .ok_or_else(|| bad(0, format!("missing `{expect}` line")))?;
        let n = i + 1;
        if expect.is_empty() {
            return Ok((n, line.to_string()));
        }
        let rest = line
            .strip_prefix(expect)
            .ok_or_else(|| bad(n, format!("expected `{expect} ...`")))?;
        Ok((n, rest.trim_start().to_string()))
    };

    let (n, magic) = next("")?;
    if magic != MAGIC {
        return Err(bad(n, format!("not a model document (header `{magic}`)")));
    }
    let (_, discipline) = next("discipline")?;
    let (kn, kind) = next("kind")?;
    let (cn, coef_text) = next("coefficients")?;
    let coefs: Vec<f64> = coef_text
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| bad(cn, "bad coefficient")))
        .collect::<Result<_, _>>()?;
    let curve = match (kind.as_str(), coefs.as_slice()) {
        ("quadratic", &[a0, a1, a2]) => SigmaCurve::Quadratic { a0, a1, a2 },
        ("exponential", &[alpha, beta]) => SigmaCurve::Exponential { alpha, beta },
        ("quadratic", _) | ("exponential", _) => {
            return Err(bad(cn, "wrong coefficient count for kind"))
        }
        _ => return Err(bad(kn, format!("unknown kind `{kind}`"))),
    };
    let (dn, domain_text) = next("domain")?;
    let d: Vec<f64> = domain_text
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| bad(dn, "bad domain bound")))
        .collect::<Result<_, _>>()?;
    let &[lo, hi] = d.as_slice() else {
        return Err(bad(dn, "domain needs two bounds"));
    };
    let (fln, floor_text) = next("floor")?;
    let floor: f64 = floor_text.parse().map_err(|_| bad(fln, "bad floor"))?;
    let (rn, r2_text) = next("r2_weighted")?;
    let r2_weighted = if r2_text == "NA" {
        None
    } else {
        Some(r2_text.parse::<f64>().map_err(|_| bad(rn, "bad r2"))?)
    };
    let (rmn, rmsd_text) = next("rmsd_weighted")?;
    let rmsd_weighted: f64 = rmsd_text.parse().map_err(|_| bad(rmn, "bad rmsd"))?;
    let (sn, shape_text) = next("shape")?;
    let shape = match shape_text.as_str() {
        "concave" => Shape::Concave,
        "convex" => Shape::Convex,
        "degenerate" => Shape::Degenerate,
        other => return Err(bad(sn, format!("unknown shape `{other}`"))),
    };
    let (bn, count_text) = next("bins")?;
    let bin_count: usize = count_text.parse().map_err(|_| bad(bn, "bad bin count"))?;
    let mut bins = Vec::with_capacity(bin_count);
    for _ in 0..bin_count {
        let (ln, row) = next("")?;
        let parts: Vec<&str> = row.split_whitespace().collect();
        let [center, count, sigma] = parts.as_slice() else {
            return Err(bad(ln, "bin row needs `center count sigma`"));
        };
        bins.push(VarianceBin {
            center: center.parse().map_err(|_| bad(ln, "bad bin center"))?,
            count: count.parse().map_err(|_| bad(ln, "bad bin count"))?,
            sigma: sigma.parse().map_err(|_| bad(ln, "bad bin sigma"))?,
        });
    }
    let model = VarianceModel {
        curve,
        domain: (lo, hi),
        floor,
        r2_weighted,
        rmsd_weighted,
        shape,
        condition: None,
    };
    Ok((discipline, model, bins))
}
