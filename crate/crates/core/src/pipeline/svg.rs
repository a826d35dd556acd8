//! Self-contained SVG figures.

use std::fmt::Write;

use crate::egta::{EquilibriumSet, Heatmap, MetaGameTable, Parameterisation, SsdReport};

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

pub const COOPERATE: &str = "#2ca02c";
pub const DEFECT: &str = "#d62728";
pub const AVERAGE: &str = "#1f77b4";

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    );
}

/// Linear map from data to pixels.
struct Scale {
    d0: f64,
    d1: f64,
    p0: f64,
    p1: f64,
}

impl Scale {
    fn at(&self, v: f64) -> f64 {
        self.p0 + (v - self.d0) / (self.d1 - self.d0) * (self.p1 - self.p0)
    }
}

/// Schelling diagram: cooperator payoff in green, defector payoff in red, the
/// group average in blue, equilibria circled and the three dilemma
/// conditions as bars in an inset.
pub fn schelling_svg(
    table: &MetaGameTable<f64>,
    ssd: Option<&SsdReport<f64>>,
    equilibria: Option<&EquilibriumSet<f64>>,
    title: &str,
) -> String {
    let max_x = table.max_index();
    let series: [(Vec<(usize, f64)>, &str, &str); 3] = [
        ((0..=max_x).filter_map(|x| table.r_c(x).map(|v| (x, v))).collect(), COOPERATE, "R_c"),
        ((0..=max_x).filter_map(|x| table.r_d(x).map(|v| (x, v))).collect(), DEFECT, "R_d"),
        ((0..=max_x).filter_map(|x| table.r_avg(x).map(|v| (x, v))).collect(), AVERAGE, "R_avg"),
    ];
    let values: Vec<f64> = series.iter().flat_map(|s| s.0.iter().map(|p| p.1)).collect();
    let (mut lo, mut hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if values.is_empty() {
        (lo, hi) = (0.0, 1.0);
    } else if lo == hi {
        (lo, hi) = (lo - 1.0, hi + 1.0);
    }
    let pad = (hi - lo) * 0.08;
    let xs = Scale { d0: 0.0, d1: max_x.max(1) as f64, p0: LEFT, p1: W - RIGHT };
    let ys = Scale { d0: lo - pad, d1: hi + pad, p0: H - BOTTOM, p1: TOP };

    let mut out = String::new();
    header(&mut out, title);
    // axes and ticks
    let _ = writeln!(
        out,
        r#"<path d="M{LEFT},{TOP} V{} H{}" fill="none" stroke="black"/>"#,
        H - BOTTOM,
        W - RIGHT
    );
    for x in 0..=max_x {
        let px = xs.at(x as f64);
        let _ = writeln!(
            out,
            r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle">{x}</text>"#,
            H - BOTTOM + 16.0
        );
    }
    for k in 0..=4 {
        let v = lo - pad + (hi - lo + 2.0 * pad) * k as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.3}</text>"#,
            LEFT - 6.0,
            ys.at(v) + 4.0
        );
    }
    let xlabel = match table.parameterisation {
        Parameterisation::Total => "number of cooperators",
        Parameterisation::Other => "number of other cooperators",
    };
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{xlabel}</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        H - 12.0
    );

    // equilibria: circle each role's payoff at that count
    if let Some(eq) = equilibria {
        for &x in &eq.equilibria {
            let points: Vec<(usize, Option<f64>)> = match table.parameterisation {
                Parameterisation::Total => vec![(x, table.r_avg(x))],
                Parameterisation::Other => vec![
                    (x.wrapping_sub(1), x.checked_sub(1).and_then(|k| table.r_c(k))),
                    (x, table.r_d(x)),
                ],
            };
            for (px, v) in points {
                if let Some(v) = v {
                    let _ = writeln!(
                        out,
                        r##"<ellipse class="equilibrium" cx="{:.1}" cy="{:.1}" rx="16" ry="11" fill="#999999" fill-opacity="0.35"/>"##,
                        xs.at(px as f64),
                        ys.at(v)
                    );
                }
            }
        }
    }

    for (points, colour, name) in &series {
        if points.is_empty() {
            continue;
        }
        let path: Vec<String> = points
            .iter()
            .map(|&(x, v)| format!("{:.1},{:.1}", xs.at(x as f64), ys.at(v)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline class="{name}" points="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#,
            path.join(" ")
        );
        for &(x, v) in points {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{colour}"/>"#,
                xs.at(x as f64),
                ys.at(v)
            );
        }
    }
    for (i, (_, colour, name)) in series.iter().filter(|s| !s.0.is_empty()).enumerate() {
        let y = TOP + 4.0 + 16.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{colour}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{name}</text>"#,
            LEFT + 10.0,
            LEFT + 30.0,
            LEFT + 36.0,
            y + 4.0
        );
    }
    if let Some(r) = ssd {
        inset(&mut out, r);
    }
    out.push_str("</svg>\n");
    out
}

fn inset(out: &mut String, r: &SsdReport<f64>) {
    let (w, h) = (170.0, 84.0);
    let (x0, y0) = (W - RIGHT - w - 6.0, TOP + 6.0);
    let mid = x0 + 30.0 + (w - 40.0) / 2.0;
    let half = (w - 40.0) / 2.0;
    let span = [r.c1, r.c2, r.c3].iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let _ = writeln!(
        out,
        r##"<g class="ssd-inset"><rect x="{x0:.1}" y="{y0:.1}" width="{w}" height="{h}" fill="white" stroke="#444444"/>"##
    );
    let _ = writeln!(
        out,
        r##"<line x1="{mid:.1}" y1="{:.1}" x2="{mid:.1}" y2="{:.1}" stroke="#444444"/>"##,
        y0 + 6.0,
        y0 + h - 14.0
    );
    for (i, (name, v)) in [("C1", r.c1), ("C2", r.c2), ("C3", r.c3)].into_iter().enumerate() {
        let y = y0 + 10.0 + 20.0 * i as f64;
        let len = v.abs() / span * half;
        let x = if v >= 0.0 { mid } else { mid - len };
        let fill = if v > 0.0 { COOPERATE } else { DEFECT };
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}">{name}</text><rect class="{name}" x="{x:.1}" y="{y:.1}" width="{len:.1}" height="12" fill="{fill}"/>"#,
            x0 + 6.0,
            y + 10.0
        );
    }
    let verdict = if r.is_ssd { "SSD" } else { "no SSD" };
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{verdict}</text></g>"#,
        x0 + w / 2.0,
        y0 + h - 3.0
    );
}

/// Algorithm-by-rate grid of mean restraint, white (0%) to dark (100%).
pub fn heatmap_svg(map: &Heatmap, title: &str) -> String {
    let rows = map.algorithms.len().max(1);
    let cols = map.rates.len().max(1);
    let (cw, ch) = ((W - 110.0 - RIGHT) / cols as f64, (H - TOP - BOTTOM) / rows as f64);
    let mut out = String::new();
    header(&mut out, title);
    for (r, alg) in map.algorithms.iter().enumerate() {
        let y = TOP + ch * r as f64;
        let _ = writeln!(
            out,
            r#"<text x="104" y="{:.1}" text-anchor="end">{}</text>"#,
            y + ch / 2.0 + 4.0,
            escape(alg)
        );
        for c in 0..map.rates.len() {
            let cell = map.cell(r, c);
            let x = 110.0 + cw * c as f64;
            let (fill, label) = match cell.mean_restraint {
                Some(m) => {
                    let shade = (255.0 * (1.0 - m / 100.0)).round().clamp(0.0, 255.0) as u8;
                    (format!("rgb({shade},{shade},255)"), format!("{m:.1}"))
                }
                None => ("#eeeeee".to_string(), "n/a".to_string()),
            };
            let _ = writeln!(
                out,
                r##"<rect x="{x:.1}" y="{y:.1}" width="{cw:.1}" height="{ch:.1}" fill="{fill}" stroke="#ffffff"/><text x="{:.1}" y="{:.1}" text-anchor="middle">{label}</text>"##,
                x + cw / 2.0,
                y + ch / 2.0 + 4.0
            );
        }
    }
    for (c, rate) in map.rates.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{rate}</text>"#,
            110.0 + cw * (c as f64 + 0.5),
            H - BOTTOM + 16.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">regeneration rate</text>"#,
        110.0 + (W - 110.0 - RIGHT) / 2.0,
        H - 12.0
    );
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::egta::{find_equilibria, heatmap, reparameterise, ssd_indicator, HeatmapEntry};

    fn table() -> MetaGameTable<f64> {
        let mut t = MetaGameTable::new(4);
        for x in 0..=4 {
            if x > 0 {
                t.cooperate[x] = vec![0.5 * x as f64];
            }
            if x < 4 {
                t.defect[x] = vec![1.0 + 0.5 * x as f64];
            }
        }
        t
    }

    #[test]
    fn schelling_has_three_lines_inset_and_shading() {
        let t = table();
        let ssd = ssd_indicator(&t).unwrap();
        let eq = find_equilibria(&t).unwrap();
        let svg = schelling_svg(&t, Some(&ssd), Some(&eq), "IA2C <a=0>");
        for colour in [COOPERATE, DEFECT, AVERAGE] {
            assert!(svg.contains(&format!(r#"stroke="{colour}" stroke-width="2"/>"#)));
        }
        assert_eq!(svg.matches("class=\"equilibrium\"").count(), 1);
        assert!(svg.contains("ssd-inset") && svg.contains(">SSD<"));
        assert!(svg.contains("IA2C &lt;a=0&gt;"));
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
    }

    #[test]
    fn negative_condition_points_left() {
        let mut t = table();
        // make cooperation dominant so C3 < 0
        for x in 1..=4 {
            t.cooperate[x] = vec![10.0 + x as f64];
        }
        let ssd = ssd_indicator(&t).unwrap();
        assert!(ssd.c3 < 0.0);
        let svg = schelling_svg(&t, Some(&ssd), None, "t");
        let bar = svg.split("class=\"C3\"").nth(1).unwrap();
        let x: f64 = bar.split('"').nth(1).unwrap().parse().unwrap();
        let mid_line = svg.split("class=\"ssd-inset\"").nth(1).unwrap();
        let mid: f64 = mid_line.split("x1=\"").nth(1).unwrap().split('"').next().unwrap().parse().unwrap();
        assert!(x < mid);
        assert!(svg.contains(">no SSD<"));
    }

    #[test]
    fn other_parameterisation_renders() {
        let t = reparameterise(&table()).unwrap();
        let eq = find_equilibria(&table()).unwrap();
        let svg = schelling_svg(&t, None, Some(&eq), "other");
        assert!(svg.contains("number of other cooperators"));
        assert!(!svg.contains(&format!(r#"stroke="{AVERAGE}" stroke-width="2"/>"#)));
        // equilibrium x = 0 has no cooperator, so only the defector is circled
        assert_eq!(svg.matches("class=\"equilibrium\"").count(), 1);
    }

    #[test]
    fn heatmap_marks_missing_cells() {
        let entries = vec![HeatmapEntry {
            algorithm: "IA2C".into(),
            rate: 0.1,
            alpha: 0.0,
            seed_index: 0,
            restraint: 100.0,
        }];
        let map = heatmap(&entries, &["IA2C".into()], &[0.1, 0.03], 0.0);
        let svg = heatmap_svg(&map, "restraint");
        assert!(svg.contains("rgb(0,0,255)"));
        assert!(svg.contains(">n/a<"));
    }
}
