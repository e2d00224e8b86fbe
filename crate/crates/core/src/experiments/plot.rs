use std::collections::BTreeMap;
use std::fmt::Write;

use super::ResultRow;

const W: f64 = 720.0;
const H: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 220.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
    dashed: bool,
}

/// Mean over replicates of `value` per coordinate, in coordinate order.
fn averaged<'a>(rows: impl Iterator<Item = &'a ResultRow>, value: impl Fn(&ResultRow) -> f64) -> Vec<(f64, f64)> {
    let mut acc: BTreeMap<u64, (f64, f64, usize)> = BTreeMap::new();
    for r in rows {
        // order-preserving key for finite floats
        let bits = r.coordinate.to_bits();
        let key = if r.coordinate.is_sign_negative() { !bits } else { bits | (1 << 63) };
        let e = acc.entry(key).or_insert((r.coordinate, 0.0, 0));
        e.1 += value(r);
        e.2 += 1;
    }
    acc.into_values().map(|(x, s, n)| (x, s / n as f64)).collect()
}

/// Line plot of `p_relative` against the sweep coordinate for each variant
/// and message level, with the relative homodyne limit dashed and the
/// Helstrom baseline at zero.
pub fn render_svg(rows: &[ResultRow], x_label: &str) -> String {
    let coordinate_is_level = rows.iter().all(|r| r.coordinate == r.message_db);
    // when the coordinate is the message level, all levels form one series
    let mut levels: Vec<Option<f64>> = if coordinate_is_level {
        vec![None]
    } else {
        rows.iter().map(|r| Some(r.message_db)).collect()
    };
    levels.sort_by(|a, b| a.unwrap_or(0.0).total_cmp(&b.unwrap_or(0.0)));
    levels.dedup();

    let mut series = Vec::new();
    for &level in &levels {
        let at = |r: &&ResultRow| level.is_none_or(|m| r.message_db == m);
        let suffix = match level {
            Some(m) if levels.len() > 1 => format!(" ({m} dB)"),
            _ => String::new(),
        };
        for v in [super::Variant::HdCnn, super::Variant::HdGnnCnn] {
            let pts = averaged(rows.iter().filter(at).filter(|r| r.variant == v), |r| r.p_relative);
            if !pts.is_empty() {
                series.push(Series {
                    label: format!("{}{suffix}", v.as_str()),
                    points: pts,
                    dashed: false,
                });
            }
        }
        if !coordinate_is_level {
            series.push(Series {
                label: format!("homodyne limit{suffix}"),
                points: averaged(rows.iter().filter(at), |r| r.p_relative_hd),
                dashed: true,
            });
        }
    }
    if coordinate_is_level {
        series.push(Series {
            label: "homodyne limit".into(),
            points: averaged(rows.iter(), |r| r.p_relative_hd),
            dashed: true,
        });
    }

    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, 0.0_f64, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y1) = (0.0, 1.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    y1 += 0.05 * (y1 - y0);
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for i in 0..=5 {
        let f = i as f64 / 5.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(
            s,
            r#"<line x1="{px:.1}" y1="{:.1}" x2="{px:.1}" y2="{:.1}" stroke="black"/><text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 20.0,
            tick(xv)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{py:.1}" x2="{LEFT}" y2="{py:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            py + 4.0,
            tick(yv)
        );
    }
    let zy = sy(0.0);
    let _ = writeln!(
        s,
        r##"<line x1="{LEFT}" y1="{zy:.1}" x2="{:.1}" y2="{zy:.1}" stroke="#555" stroke-dasharray="2,3"/>"##,
        LEFT + pw
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        H - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(16 {:.1}) rotate(-90)" text-anchor="middle">relative error probability</text>"#,
        TOP + ph / 2.0
    );

    let mut entries = series.iter().map(|se| (se.label.clone(), se.dashed)).collect::<Vec<_>>();
    entries.push(("Helstrom limit".into(), true));
    for (k, se) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = se.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let dash = if se.dashed { r#" stroke-dasharray="6,4""# } else { "" };
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
            pts.join(" ")
        );
        if !se.dashed {
            for &(x, y) in &se.points {
                let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#, sx(x), sy(y));
            }
        }
    }
    for (k, (label, dashed)) in entries.iter().enumerate() {
        let color = if k < series.len() { PALETTE[k % PALETTE.len()] } else { "#555" };
        let ly = TOP + 10.0 + 18.0 * k as f64;
        let lx = W - RIGHT + 15.0;
        let dash = if *dashed { r#" stroke-dasharray="6,4""# } else { "" };
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{:.1}" y2="{ly}" stroke="{color}" stroke-width="1.5"{dash}/><text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 25.0,
            lx + 30.0,
            ly + 4.0,
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 0.1 && v.abs() < 1000.0 {
        format!("{v:.2}")
    } else {
        format!("{v:.1e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
