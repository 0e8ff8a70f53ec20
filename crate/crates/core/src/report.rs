//! Gap-reduction ratios and their histograms.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Denominators at or below this are treated as a degenerate interval.
pub const DEGENERATE_GAP: f64 = 1e-9;

/// Slack allowed when checking that the relaxed interval sits inside the
/// classical one.
pub const SANDWICH_TOL: f64 = 1e-6;

/// A closed price interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub min: f64,
    pub max: f64,
}

impl Interval {
    pub fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRecord {
    pub label: String,
    pub mot_min: f64,
    pub mot_max: f64,
    pub mc_min: f64,
    pub mc_max: f64,
    pub ratio: f64,
    /// Set when the classical interval had zero width and the ratio was
    /// defined as 1.
    pub degenerate: bool,
}

impl RatioRecord {
    pub fn new(label: impl Into<String>, mot: Interval, mc: Interval) -> Result<Self> {
        let ratio = compute_ratio(mot, mc)?;
        Ok(Self {
            label: label.into(),
            mot_min: mot.min,
            mot_max: mot.max,
            mc_min: mc.min,
            mc_max: mc.max,
            ratio,
            degenerate: mot.width() <= DEGENERATE_GAP,
        })
    }
}

/// `(mc_max - mc_min) / (mot_max - mot_min)`, or 1 when the classical
/// interval is degenerate. Fails if the relaxed interval is not inside the
/// classical one.
pub fn compute_ratio(mot: Interval, mc: Interval) -> Result<f64> {
    if mot.max < mot.min - DEGENERATE_GAP {
        return Err(Error::Consistency(format!(
            "classical interval is inverted: [{}, {}]",
            mot.min, mot.max
        )));
    }
    if mc.min < mot.min - SANDWICH_TOL || mc.max > mot.max + SANDWICH_TOL || mc.max < mc.min - SANDWICH_TOL {
        return Err(Error::Consistency(format!(
            "relaxed interval [{}, {}] is not inside the classical interval [{}, {}]",
            mc.min, mc.max, mot.min, mot.max
        )));
    }
    let denom = mot.width();
    if denom <= DEGENERATE_GAP {
        return Ok(1.0);
    }
    Ok((mc.width() / denom).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Equal-width bins over the range of `values`; a zero-width range puts
    /// everything in the first bin.
    pub fn of(values: &[f64], bins: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("histogram needs at least one value"));
        }
        if bins == 0 {
            return Err(Error::invalid("histogram needs at least one bin"));
        }
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let width = (hi - lo) / bins as f64;
        let edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![0; bins];
        for &v in values {
            let b = if width > 0.0 {
                (((v - lo) / width) as usize).min(bins - 1)
            } else {
                0
            };
            counts[b] += 1;
        }
        Ok(Self { edges, counts })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lower,bin_upper,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", self.edges[i], self.edges[i + 1], c);
        }
        out
    }

    /// A static bar chart.
    pub fn to_svg(&self, title: &str) -> String {
        let (w, h, pad) = (640.0, 360.0, 40.0);
        let max = *self.counts.iter().max().unwrap_or(&1) as f64;
        let bar_w = (w - 2.0 * pad) / self.counts.len() as f64;
        let mut svg = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
        );
        let _ = writeln!(svg, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">{}</text>",
            w / 2.0,
            escape(title)
        );
        for (i, &c) in self.counts.iter().enumerate() {
            let bh = if max > 0.0 { (h - 2.0 * pad) * c as f64 / max } else { 0.0 };
            let x = pad + bar_w * i as f64;
            let y = h - pad - bh;
            let _ = writeln!(
                svg,
                "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{:.2}\" height=\"{bh:.2}\" fill=\"steelblue\" stroke=\"black\"><title>[{:.4}, {:.4}): {c}</title></rect>",
                (bar_w - 1.0).max(0.5),
                self.edges[i],
                self.edges[i + 1]
            );
        }
        let _ = writeln!(
            svg,
            "<line x1=\"{pad}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>",
            h - pad,
            w - pad
        );
        for (x, v) in [(pad, self.edges[0]), (w - pad, *self.edges.last().unwrap())] {
            let _ = writeln!(
                svg,
                "<text x=\"{x}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{v:.4}</text>",
                h - pad + 16.0
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Histogram of the records' ratios as `(csv, svg)`.
pub fn emit_histogram(records: &[RatioRecord], bins: usize) -> Result<(String, String)> {
    let ratios: Vec<f64> = records.iter().map(|r| r.ratio).collect();
    let h = Histogram::of(&ratios, bins)?;
    Ok((h.to_csv(), h.to_svg("gap-reduction ratio")))
}

pub fn records_to_csv(records: &[RatioRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ratio_examples() {
        let r = compute_ratio(Interval::new(0.87923, 1.30432), Interval::new(0.88730, 1.26458)).unwrap();
        assert!((r - 0.88752).abs() < 1e-5);
        let same = Interval::new(2.0, 3.0);
        assert_eq!(compute_ratio(same, same).unwrap(), 1.0);
        let flat = Interval::new(2.0, 2.0);
        assert_eq!(compute_ratio(flat, flat).unwrap(), 1.0);
        let rec = RatioRecord::new("flat", flat, flat).unwrap();
        assert!(rec.degenerate);
        assert!(matches!(
            compute_ratio(same, Interval::new(1.0, 3.0)),
            Err(Error::Consistency(_))
        ));
    }

    #[test]
    fn histogram_examples() {
        let rec = |r| RatioRecord {
            label: String::new(),
            mot_min: 0.0,
            mot_max: 1.0,
            mc_min: 0.0,
            mc_max: r,
            ratio: r,
            degenerate: false,
        };
        let h = Histogram::of(&[0.7], 5).unwrap();
        assert_eq!(h.counts.iter().filter(|&&c| c > 0).count(), 1);
        let h = Histogram::of(&[0.9; 7], 4).unwrap();
        assert_eq!(h.counts.iter().filter(|&&c| c > 0).count(), 1);
        assert_eq!(h.counts.iter().sum::<usize>(), 7);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 2000;
        let records: Vec<RatioRecord> = (0..n).map(|_| rec(rng.gen_range(0.8..1.0))).collect();
        let values: Vec<f64> = records.iter().map(|r| r.ratio).collect();
        let h = Histogram::of(&values, 10).unwrap();
        let expected = n as f64 / 10.0;
        let sigma = (n as f64 * 0.1 * 0.9).sqrt();
        for &c in &h.counts {
            assert!((c as f64 - expected).abs() <= 3.0 * sigma, "{:?}", h.counts);
        }
        let (csv, svg) = emit_histogram(&records, 10).unwrap();
        assert_eq!(csv.lines().count(), 11);
        assert!(svg.starts_with("<svg") && svg.matches("<rect").count() == 11);
        assert!(emit_histogram(&[], 3).is_err());
    }
}
