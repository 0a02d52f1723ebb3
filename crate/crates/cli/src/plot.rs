//! Band chart of cooperation regions over π(X=0).

use std::fmt::Write;

use disg_core::Region;

use crate::error::CliError;

const LABEL_W: f64 = 170.0;
const PLOT_W: f64 = 600.0;
const BAND_H: f64 = 26.0;
const GAP: f64 = 10.0;
const TOP: f64 = 20.0;
const AXIS_H: f64 = 40.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// One horizontal band per region, cells filled where the region holds.
/// Grid point `i` covers `[(i - 1/2)/R, (i + 1/2)/R]` clipped to `[0, 1]`.
pub fn emit_region_plot(regions: &[(String, Region)]) -> Result<String, CliError> {
    if let Some((_, r)) = regions.iter().find(|(_, r)| r.grid().num_states() != 2) {
        return Err(CliError::UnsupportedDimension(r.grid().num_states()));
    }
    let width = LABEL_W + PLOT_W + 30.0;
    let height = TOP + regions.len() as f64 * (BAND_H + GAP) + AXIS_H;
    let x = |p: f64| LABEL_W + p * PLOT_W;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (k, (label, region)) in regions.iter().enumerate() {
        let y = TOP + k as f64 * (BAND_H + GAP);
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            LABEL_W - 8.0,
            y + BAND_H / 2.0 + 4.0,
            escape(label)
        );
        let _ = writeln!(
            svg,
            r##"<rect x="{:.2}" y="{y:.1}" width="{PLOT_W:.2}" height="{BAND_H:.1}" fill="#f2f2f2" stroke="#999"/>"##,
            x(0.0)
        );
        let r = f64::from(region.grid().resolution());
        for (lo, hi) in region.runs() {
            let a = ((lo as f64 - 0.5) / r).max(0.0);
            let b = ((hi as f64 + 0.5) / r).min(1.0);
            let _ = writeln!(
                svg,
                r##"<rect x="{:.2}" y="{y:.1}" width="{:.2}" height="{BAND_H:.1}" fill="#3b6ea5"/>"##,
                x(a),
                (b - a) * PLOT_W
            );
        }
    }
    let axis_y = TOP + regions.len() as f64 * (BAND_H + GAP);
    let _ = writeln!(
        svg,
        r#"<line x1="{:.2}" y1="{axis_y:.1}" x2="{:.2}" y2="{axis_y:.1}" stroke="black"/>"#,
        x(0.0),
        x(1.0)
    );
    for t in 0..=5 {
        let p = t as f64 / 5.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{0:.2}" y1="{axis_y:.1}" x2="{0:.2}" y2="{1:.1}" stroke="black"/>"#,
            x(p),
            axis_y + 5.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.1}" text-anchor="middle">{p:.1}</text>"#,
            x(p),
            axis_y + 18.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.1}" text-anchor="middle">belief π(X=0)</text>"#,
        x(0.5),
        axis_y + 34.0
    );
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use disg_core::SimplexGrid;

    #[test]
    fn empty_and_full_bands() {
        let g = SimplexGrid::build(2, 10).unwrap();
        let svg = emit_region_plot(&[
            ("none".into(), Region::empty(&g)),
            ("all <c>".into(), Region::full(&g)),
        ])
        .unwrap();
        assert_eq!(svg.matches("fill=\"#3b6ea5\"").count(), 1);
        assert!(svg.contains(&format!(
            r#"x="{:.2}" y="56.0" width="{:.2}""#,
            LABEL_W, PLOT_W
        )));
        assert!(svg.contains("all &lt;c&gt;"));
        assert_eq!(
            svg,
            emit_region_plot(&[
                ("none".into(), Region::empty(&g)),
                ("all <c>".into(), Region::full(&g))
            ])
            .unwrap()
        );
    }

    #[test]
    fn three_states_are_refused() {
        let g = SimplexGrid::build(3, 4).unwrap();
        assert!(matches!(
            emit_region_plot(&[("x".into(), Region::full(&g))]),
            Err(CliError::UnsupportedDimension(3))
        ));
    }
}
