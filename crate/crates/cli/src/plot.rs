//! Static SVG scatter plot of a constellation.
//!
//! Equal aspect: one scale for both axes, centred on the origin. The half-range
//! covers every point and the `sqrt(P_a)` reference circle with a margin, so no
//! marker is clipped.

use std::fmt::Write;

use swipt_core::transceiver::Constellation;

use crate::config::PlotOptions;

const MARGIN: f64 = 1.15;

/// Half-width of the plotted square in signal units.
pub fn half_range(c: &Constellation, p_a: f64) -> f64 {
    let max_abs = c.points.iter().map(|p| p.norm()).fold(0.0, f64::max);
    let r = max_abs.max(p_a.sqrt());
    if r > 0.0 {
        r * MARGIN
    } else {
        1.0
    }
}

/// Renders the plot. `p_a` sets the reference circle radius `sqrt(p_a)`.
pub fn render_svg(c: &Constellation, p_a: f64, opts: &PlotOptions) -> String {
    let size = opts.size as f64;
    let centre = size / 2.0;
    let range = half_range(c, p_a);
    let scale = centre / range;
    let px = |x: f64| centre + x * scale;
    let py = |y: f64| centre - y * scale;
    let marker = (size / 120.0).max(2.5);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    );
    let _ = writeln!(s, r#"<rect width="{size}" height="{size}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r##"<g class="axes" stroke="#888" stroke-width="1"><line x1="0" y1="{centre}" x2="{size}" y2="{centre}"/><line x1="{centre}" y1="0" x2="{centre}" y2="{size}"/></g>"##
    );
    let _ = writeln!(
        s,
        r##"<circle class="reference" cx="{centre}" cy="{centre}" r="{:.3}" fill="none" stroke="#4a7" stroke-dasharray="4 3"/>"##,
        p_a.sqrt() * scale
    );
    let _ = writeln!(
        s,
        r##"<text x="4" y="14" font-family="sans-serif" font-size="11" fill="#444">half-range {range:.4e}, circle sqrt(P_a) = {:.4e}</text>"##,
        p_a.sqrt()
    );
    for (i, p) in c.points.iter().enumerate() {
        let (x, y) = (px(p.re), py(p.im));
        let _ = writeln!(
            s,
            r##"<circle class="symbol" data-index="{i}" cx="{x:.3}" cy="{y:.3}" r="{marker:.2}" fill="#c33"/>"##
        );
        if opts.labels {
            let _ = writeln!(
                s,
                r##"<text x="{:.3}" y="{:.3}" font-family="sans-serif" font-size="10" fill="#222">{i}</text>"##,
                x + marker + 1.0,
                y - marker - 1.0
            );
        }
    }
    s.push_str("</svg>\n");
    s
}
