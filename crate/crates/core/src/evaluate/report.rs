//! Text tables and SVG window plots.

use std::fmt::Write as _;

use super::experiment::ArmSummary;
use crate::domain::{Arm, RssiWindow, CANONICAL_RATE_HZ};

/// Arms as rows, houses as columns, `mean±std` macro F1 cells.
pub fn macro_f1_table(summaries: &[ArmSummary]) -> String {
    let mut houses: Vec<&str> = Vec::new();
    for s in summaries {
        if !houses.contains(&s.house_id.as_str()) {
            houses.push(&s.house_id);
        }
    }
    let mut rows =
        vec![std::iter::once("arm".to_string()).chain(houses.iter().map(|h| h.to_string())).collect::<Vec<_>>()];
    for arm in Arm::ALL {
        if !summaries.iter().any(|s| s.arm == arm) {
            continue;
        }
        let mut row = vec![arm.name().to_string()];
        for h in &houses {
            let cell = summaries.iter().find(|s| s.arm == arm && s.house_id == *h).map(ArmSummary::macro_f1_cell);
            row.push(cell.unwrap_or_else(|| "-".into()));
        }
        rows.push(row);
    }
    render(&rows)
}

/// Per-room accuracy change against the baseline, one block per house.
pub fn delta_table(summaries: &[ArmSummary]) -> String {
    let mut out = String::new();
    let mut houses: Vec<&str> = Vec::new();
    for s in summaries {
        if !houses.contains(&s.house_id.as_str()) {
            houses.push(&s.house_id);
        }
    }
    for h in houses {
        let rows: Vec<&ArmSummary> = summaries.iter().filter(|s| s.house_id == h && s.arm != Arm::Baseline).collect();
        let Some(first) = rows.iter().find(|s| !s.per_class_delta.is_empty()) else {
            continue;
        };
        let rooms: Vec<&String> = first.per_class_delta.keys().collect();
        let mut table =
            vec![std::iter::once(format!("{h}: arm")).chain(rooms.iter().map(|r| r.to_string())).collect::<Vec<_>>()];
        for s in rows {
            let mut row = vec![s.arm.name().to_string()];
            row.extend(rooms.iter().map(|r| s.per_class_delta.get(*r).map_or("-".into(), |d| format!("{d:+.2}"))));
            table.push(row);
        }
        out.push_str(&render(&table));
        out.push('\n');
    }
    out
}

fn render(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> =
        (0..cols).map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<String> = row.iter().zip(&widths).map(|(s, &w)| format!("{s:<w$}")).collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            out.push_str(&widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().join("  "));
            out.push('\n');
        }
    }
    out
}

const PALETTE: [&str; 12] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
    "#393b79", "#637939",
];

const PANEL_W: f64 = 320.0;
const PANEL_H: f64 = 200.0;
const MARGIN: f64 = 34.0;
const COLUMNS: usize = 4;

/// One line per AP over the window's duration, normalized RSSI on the y axis.
pub fn window_svg(window: &RssiWindow, title: &str) -> String {
    panels_svg(&[(title, window)], title)
}

/// Small multiples of [`window_svg`], four panels per row.
pub fn panels_svg(panels: &[(&str, &RssiWindow)], title: &str) -> String {
    let cols = panels.len().clamp(1, COLUMNS);
    let rows = panels.len().div_ceil(COLUMNS).max(1);
    let (w, h) = (PANEL_W * cols as f64, 30.0 + PANEL_H * rows as f64);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" font-size="15" text-anchor="middle">{}</text>"#, w / 2.0, escape(title));
    for (i, (label, window)) in panels.iter().enumerate() {
        let ox = PANEL_W * (i % COLUMNS) as f64;
        let oy = 30.0 + PANEL_H * (i / COLUMNS) as f64;
        panel(&mut s, ox, oy, label, window);
    }
    s.push_str("</svg>\n");
    s
}

fn panel(s: &mut String, ox: f64, oy: f64, label: &str, window: &RssiWindow) {
    let (n_aps, n_t) = window.shape();
    let duration = n_t as f64 / CANONICAL_RATE_HZ;
    let (left, right, top, bottom) = (ox + MARGIN, ox + PANEL_W - 10.0, oy + 22.0, oy + PANEL_H - MARGIN);
    let x = |t: usize| left + (right - left) * t as f64 / (n_t.max(2) - 1) as f64;
    let y = |v: f32| bottom - (bottom - top) * (v as f64).clamp(0.0, 1.0);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{}</text>"#,
        (left + right) / 2.0,
        oy + 14.0,
        escape(label)
    );
    let _ = writeln!(s, r#"<path d="M{left} {top} V{bottom} H{right}" fill="none" stroke="black"/>"#);
    let _ = writeln!(s, r#"<text x="{left}" y="{}" font-size="10">0 s</text>"#, bottom + 13.0);
    let _ =
        writeln!(s, r#"<text x="{right}" y="{}" font-size="10" text-anchor="end">{duration} s</text>"#, bottom + 13.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">1</text>"#, left - 4.0, top + 4.0);
    let _ = writeln!(s, r#"<text x="{}" y="{bottom}" font-size="10" text-anchor="end">0</text>"#, left - 4.0);
    for ap in 0..n_aps {
        let pts: Vec<String> =
            window.row(ap).iter().enumerate().map(|(t, &v)| format!("{:.1},{:.1}", x(t), y(v))).collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.3"><title>AP {ap}</title></polyline>"#,
            pts.join(" "),
            PALETTE[ap % PALETTE.len()]
        );
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
