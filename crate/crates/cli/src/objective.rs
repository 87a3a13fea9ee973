//! Objective strings: `l1+nuclear`, `l1:0.5+nuclear:2`, `max(nuclear,l12)`.

use anyhow::{bail, Context};
use simrec::geometry::{ConeKind, ObjectiveSpec};
use simrec::norms::NormKind;

fn norm(s: &str) -> anyhow::Result<NormKind> {
    NormKind::parse(s).with_context(|| format!("unknown norm {s:?} (l1, l12_cols, l12_rows, nuclear)"))
}

pub fn parse(text: &str, cone: ConeKind) -> anyhow::Result<ObjectiveSpec> {
    let t = text.trim();
    if let Some(inner) = t.strip_prefix("max(").and_then(|r| r.strip_suffix(')')) {
        let kinds = inner.split(',').map(norm).collect::<anyhow::Result<Vec<_>>>()?;
        return Ok(ObjectiveSpec::max_ratio(&kinds, cone));
    }
    let mut terms = Vec::new();
    for part in t.split('+') {
        let (name, weight) = match part.split_once(':') {
            Some((n, w)) => (n, w.trim().parse::<f64>().with_context(|| format!("bad weight {w:?}"))?),
            None => (part, 1.0),
        };
        terms.push((norm(name)?, weight));
    }
    if terms.is_empty() {
        bail!("empty objective");
    }
    Ok(ObjectiveSpec::weighted(&terms, cone))
}

pub fn parse_list(text: &str) -> anyhow::Result<Vec<f64>> {
    text.split(',')
        .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad number {v:?}")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use simrec::geometry::Mode;

    #[test]
    fn weighted_and_max_forms() {
        let o = parse("l1:0.5+nuclear", ConeKind::Psd).unwrap();
        assert_eq!(o.mode, Mode::WeightedSum);
        assert_eq!(o.kinds(), vec![NormKind::L1, NormKind::Nuclear]);
        assert_eq!(o.terms[0].weight, 0.5);
        assert_eq!(o.terms[1].weight, 1.0);
        let o = parse("max(tr, l12)", ConeKind::Full).unwrap();
        assert_eq!(o.mode, Mode::MaxRatio);
        assert_eq!(o.kinds(), vec![NormKind::Nuclear, NormKind::L12Cols]);
        assert!(parse("l3", ConeKind::Full).is_err());
        assert!(parse("l1:x", ConeKind::Full).is_err());
    }
}
