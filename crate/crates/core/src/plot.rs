//! Minimal SVG emitters for benchmark boxplots and training curves.
//! Presentation only; nothing downstream depends on these.

fn axis_bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        if v.is_finite() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = (hi - lo) * 0.08;
    (lo - pad, hi + pad)
}

fn quartiles(sorted: &[f64]) -> (f64, f64, f64) {
    let q = |p: f64| {
        let idx = p * (sorted.len() - 1) as f64;
        let lo = idx.floor() as usize;
        let hi = idx.ceil() as usize;
        let frac = idx - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    };
    (q(0.25), q(0.5), q(0.75))
}

/// Boxplot per labeled group (median, quartile box, min/max whiskers).
pub fn boxplot_svg(title: &str, groups: &[(String, Vec<f64>)]) -> String {
    let (w, h) = (120 + groups.len() * 90, 360);
    let (lo, hi) = axis_bounds(groups.iter().flat_map(|(_, v)| v.iter().copied()));
    let y = |v: f64| 40.0 + (h as f64 - 100.0) * (1.0 - (v - lo) / (hi - lo));
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <text x=\"10\" y=\"20\" font-size=\"13\">{title}</text>\n"
    );
    s.push_str(&format!(
        "<text x=\"6\" y=\"{:.1}\">{:.3}</text>\n<text x=\"6\" y=\"{:.1}\">{:.3}</text>\n",
        y(hi) + 4.0,
        hi,
        y(lo) + 4.0,
        lo
    ));
    for (i, (label, vals)) in groups.iter().enumerate() {
        let cx = 120.0 + i as f64 * 90.0;
        if vals.is_empty() {
            continue;
        }
        let mut sorted = vals.clone();
        sorted.sort_by(f64::total_cmp);
        let (q1, med, q3) = quartiles(&sorted);
        let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
        s.push_str(&format!(
            "<line x1=\"{cx}\" y1=\"{:.1}\" x2=\"{cx}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
            y(min),
            y(max)
        ));
        s.push_str(&format!(
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"44\" height=\"{:.1}\" fill=\"#9ecae1\" stroke=\"black\"/>\n",
            cx - 22.0,
            y(q3),
            (y(q1) - y(q3)).max(1.0)
        ));
        s.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\" stroke-width=\"2\"/>\n",
            cx - 22.0,
            y(med),
            cx + 22.0,
            y(med)
        ));
        s.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            cx,
            h - 30,
            label
        ));
    }
    s.push_str("</svg>\n");
    s
}

/// Polyline chart of one or more `(x, y)` series.
pub fn curve_svg(title: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let (w, h) = (560, 340);
    let (xlo, xhi) = axis_bounds(series.iter().flat_map(|(_, v)| v.iter().map(|p| p.0)));
    let (ylo, yhi) = axis_bounds(series.iter().flat_map(|(_, v)| v.iter().map(|p| p.1)));
    let px = |x: f64| 60.0 + (w as f64 - 80.0) * (x - xlo) / (xhi - xlo);
    let py = |y: f64| 30.0 + (h as f64 - 80.0) * (1.0 - (y - ylo) / (yhi - ylo));
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b"];
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <text x=\"10\" y=\"18\" font-size=\"13\">{title}</text>\n\
         <text x=\"6\" y=\"{:.1}\">{:.3}</text>\n<text x=\"6\" y=\"{:.1}\">{:.3}</text>\n",
        py(yhi) + 4.0,
        yhi,
        py(ylo) + 4.0,
        ylo
    );
    for (i, (label, pts)) in series.iter().enumerate() {
        if pts.is_empty() {
            continue;
        }
        let path: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y)))
            .collect();
        let color = colors[i % colors.len()];
        s.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\n",
            path.join(" "),
            color
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" fill=\"{}\">{}</text>\n",
            w - 120,
            24 + i * 14,
            color,
            label
        ));
    }
    s.push_str("</svg>\n");
    s
}
