//! Scatter plots of point sets as standalone SVG 1.1.
//!
//! Each set gets its own panel. The ordered axis (or axis 0) runs left to
//! right and the first other axis bottom to top; one-dimensional sets are
//! drawn on a horizontal line. Conditioned regions are shaded grey.

use std::fmt::Write as _;

use point_set_diffusion::{AxisBox, Domain, PointSet};

const PANEL: f64 = 200.0;
const PAD: f64 = 10.0;
const COLUMNS: usize = 4;

fn axes(domain: &Domain) -> (usize, Option<usize>) {
    let h = domain.ordered_axis().unwrap_or(0);
    let v = (0..domain.dim()).find(|&j| j != h);
    (h, v)
}

/// Render `sets` (all on `domain`) with optional shaded boxes and known
/// points drawn in a second color.
pub fn render(
    domain: &Domain,
    sets: &[PointSet],
    shaded: &[AxisBox],
    known: Option<&PointSet>,
) -> String {
    let (h, v) = axes(domain);
    let cols = sets.len().clamp(1, COLUMNS);
    let rows = sets.len().div_ceil(COLUMNS).max(1);
    let width = cols as f64 * (PANEL + PAD) + PAD;
    let height = rows as f64 * (PANEL + PAD) + PAD;
    let sx = |x: f64| (x - domain.lower()[h]) / (domain.upper()[h] - domain.lower()[h]) * PANEL;
    let sy = |p: &[f64]| match v {
        Some(j) => {
            PANEL - (p[j] - domain.lower()[j]) / (domain.upper()[j] - domain.lower()[j]) * PANEL
        }
        None => PANEL / 2.0,
    };

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    for (k, set) in sets.iter().enumerate() {
        let ox = PAD + (k % COLUMNS) as f64 * (PANEL + PAD);
        let oy = PAD + (k / COLUMNS) as f64 * (PANEL + PAD);
        let _ = writeln!(out, r#"<g transform="translate({ox},{oy})">"#);
        let _ = writeln!(
            out,
            r#"<rect x="0" y="0" width="{PANEL}" height="{PANEL}" fill="white" stroke="black"/>"#
        );
        for b in shaded {
            let (x0, x1) = (sx(b.lower[h]), sx(b.upper[h]));
            let (y0, y1) = match v {
                Some(j) => {
                    let mut lo = b.lower.clone();
                    let mut hi = b.upper.clone();
                    lo[j] = b.upper[j];
                    hi[j] = b.lower[j];
                    (sy(&lo), sy(&hi))
                }
                None => (0.0, PANEL),
            };
            let (x0, x1) = (x0.clamp(0.0, PANEL), x1.clamp(0.0, PANEL));
            let (y0, y1) = (y0.clamp(0.0, PANEL), y1.clamp(0.0, PANEL));
            let _ = writeln!(
                out,
                r#"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="grey" fill-opacity="0.3"/>"#,
                (x1 - x0).max(0.0),
                (y1 - y0).max(0.0)
            );
        }
        let mut dot = |p: &[f64], color: &str| {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{color}"/>"#,
                sx(p[h]),
                sy(p)
            );
        };
        if let Some(known) = known {
            known.iter().for_each(|p| dot(p, "crimson"));
        }
        set.iter().for_each(|p| dot(p, "steelblue"));
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    out
}
