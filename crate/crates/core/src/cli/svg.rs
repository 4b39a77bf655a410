use std::fmt::Write;

const W: f64 = 720.0;
const H: f64 = 360.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 40.0;

/// Line plot of `Λ` against step (steps start at 1) with the control limit,
/// the alarm step and the estimated change point marked.
pub fn lambda_trajectory_svg(lambda: &[f64], h: f64, alarm: Option<usize>, tau: Option<usize>) -> String {
    let n = lambda.len().max(1) as f64;
    let finite = lambda.iter().copied().filter(|v| v.is_finite());
    let top = finite.clone().fold(h, f64::max) * 1.05;
    let bottom = finite.fold(0.0, f64::min);
    let span = (top - bottom).max(1e-12);
    let x = |step: f64| LEFT + (step - 1.0) / (n - 1.0).max(1.0) * (W - LEFT - RIGHT);
    let y = |v: f64| TOP + (top - v.clamp(bottom, top)) / span * (H - TOP - BOTTOM);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let (x0, x1, yb) = (LEFT, W - RIGHT, H - BOTTOM);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{TOP}" x2="{x0}" y2="{yb}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{yb}" x2="{x1}" y2="{yb}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">step</text>"#, (x0 + x1) / 2.0, H - 8.0);
    let _ = writeln!(s, r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">Λ</text>"#, (TOP + yb) / 2.0, (TOP + yb) / 2.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{:.3}</text>"#, x0 - 4.0, TOP + 4.0, top);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{:.3}</text>"#, x0 - 4.0, yb, bottom);
    let _ = writeln!(s, r#"<text x="{x0}" y="{}" text-anchor="middle">1</text>"#, yb + 16.0);
    let _ = writeln!(s, r#"<text x="{x1}" y="{}" text-anchor="middle">{}</text>"#, yb + 16.0, lambda.len());

    let yh = y(h);
    let _ = writeln!(
        s,
        r##"<line class="limit" x1="{x0}" y1="{yh:.2}" x2="{x1}" y2="{yh:.2}" stroke="#c00" stroke-dasharray="6 4"/>"##
    );
    let _ = writeln!(s, r##"<text x="{}" y="{:.2}" fill="#c00" text-anchor="end">h = {h:.4}</text>"##, x1, yh - 4.0);
    if let Some(t) = tau {
        let xt = x(t as f64);
        let _ = writeln!(
            s,
            r##"<line class="change-point" x1="{xt:.2}" y1="{TOP}" x2="{xt:.2}" y2="{yb}" stroke="#070" stroke-dasharray="2 3"/>"##
        );
        let _ = writeln!(s, r##"<text x="{:.2}" y="{}" fill="#070">τ̂ = {t}</text>"##, xt + 3.0, TOP + 12.0);
    }
    if let Some(a) = alarm {
        let xa = x(a as f64);
        let _ = writeln!(s, r##"<line class="alarm" x1="{xa:.2}" y1="{TOP}" x2="{xa:.2}" y2="{yb}" stroke="#c60"/>"##);
        let _ = writeln!(s, r##"<text x="{:.2}" y="{}" fill="#c60">alarm {a}</text>"##, xa + 3.0, TOP + 26.0);
    }
    let pts: Vec<String> = lambda
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .map(|(i, &v)| format!("{:.2},{:.2}", x(i as f64 + 1.0), y(v)))
        .collect();
    let _ = writeln!(
        s,
        r##"<polyline class="lambda" fill="none" stroke="#036" stroke-width="1.5" points="{}"/>"##,
        pts.join(" ")
    );
    s.push_str("</svg>\n");
    s
}
