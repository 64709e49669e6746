//! Minimal SVG histogram with an optional normal density overlay.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 48.0;

/// Freedman-Diaconis style bin count, clamped to `[10, 80]`.
fn bin_count(sorted: &[f64]) -> usize {
    let n = sorted.len();
    let iqr = sorted[(3 * n) / 4] - sorted[n / 4];
    let range = sorted[n - 1] - sorted[0];
    if iqr.is_nan() || iqr <= 0.0 || range.is_nan() || range <= 0.0 {
        return 10;
    }
    let h = 2.0 * iqr / (n as f64).cbrt();
    ((range / h).ceil() as usize).clamp(10, 80)
}

/// Density-scaled histogram of `samples`; with `sigma`, the `N(0, sigma^2)`
/// density is drawn on top. Output depends only on the inputs.
pub fn histogram_svg(samples: &[f64], sigma: Option<f64>, title: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    let _ = writeln!(out, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{}</text>",
        WIDTH / 2.0,
        escape(title)
    );
    let mut sorted: Vec<f64> = samples.iter().copied().filter(|x| x.is_finite()).collect();
    if sorted.len() < 2 {
        out.push_str("</svg>\n");
        return out;
    }
    sorted.sort_by(f64::total_cmp);
    let bins = bin_count(&sorted);
    let mut lo = sorted[0];
    let mut hi = sorted[sorted.len() - 1];
    if let Some(s) = sigma.filter(|s| *s > 0.0) {
        lo = lo.min(-4.0 * s);
        hi = hi.max(4.0 * s);
    }
    if hi <= lo {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &x in &sorted {
        let b = (((x - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let n = sorted.len() as f64;
    let dens: Vec<f64> = counts.iter().map(|&c| c as f64 / (n * width)).collect();
    let mut ymax = dens.iter().copied().fold(0.0, f64::max);
    let normal = |x: f64, s: f64| (-0.5 * (x / s).powi(2)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
    if let Some(s) = sigma.filter(|s| *s > 0.0) {
        ymax = ymax.max(normal(0.0, s));
    }
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let px = |x: f64| MARGIN + (x - lo) / (hi - lo) * plot_w;
    let py = |y: f64| HEIGHT - MARGIN - y / ymax * plot_h;
    for (b, &d) in dens.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        let x0 = px(lo + b as f64 * width);
        let x1 = px(lo + (b + 1) as f64 * width);
        let _ = writeln!(
            out,
            "<rect x=\"{x0:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#7aa6d6\" stroke=\"#3b6ea5\" stroke-width=\"0.5\"/>",
            py(d),
            x1 - x0,
            HEIGHT - MARGIN - py(d)
        );
    }
    if let Some(s) = sigma.filter(|s| *s > 0.0) {
        let mut path = String::new();
        for i in 0..=200 {
            let x = lo + (hi - lo) * i as f64 / 200.0;
            let _ = write!(path, "{}{:.2},{:.2} ", if i == 0 { "M" } else { "L" }, px(x), py(normal(x, s)));
        }
        let _ = writeln!(out, "<path d=\"{}\" fill=\"none\" stroke=\"#c0392b\" stroke-width=\"1.5\"/>", path.trim_end());
    }
    let base = HEIGHT - MARGIN;
    let _ = writeln!(
        out,
        "<line x1=\"{MARGIN}\" y1=\"{base}\" x2=\"{}\" y2=\"{base}\" stroke=\"black\"/>",
        WIDTH - MARGIN
    );
    for (x, anchor) in [(lo, "start"), (0.0, "middle"), (hi, "end")] {
        if x < lo || x > hi {
            continue;
        }
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"{anchor}\">{x:.3}</text>",
            px(x),
            base + 16.0
        );
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
