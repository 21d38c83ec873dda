//! Minimal deterministic SVG line charts. No dependencies, fixed canvas,
//! coordinates rounded to hundredths so repeated renders are byte-identical.

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 62.0;
const MARGIN_RIGHT: f64 = 18.0;
const MARGIN_TOP: f64 = 34.0;
const MARGIN_BOTTOM: f64 = 46.0;

pub struct Series {
    pub label: String,
    pub color: &'static str,
    pub points: Vec<(f64, f64)>,
}

pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Shaded corridor `(x, low, high)`, drawn under the series.
    pub band: Option<Vec<(f64, f64, f64)>>,
}

struct Scale {
    min: f64,
    max: f64,
    from: f64,
    to: f64,
}

impl Scale {
    /// Map data range to pixel range, padding degenerate spans so a constant
    /// series still lands mid-canvas.
    fn new(mut min: f64, mut max: f64, from: f64, to: f64) -> Scale {
        if !min.is_finite() || !max.is_finite() {
            min = 0.0;
            max = 1.0;
        }
        if max - min < 1e-12 {
            let pad = if min.abs() > 1e-12 { min.abs() * 0.1 } else { 0.5 };
            min -= pad;
            max += pad;
        }
        Scale { min, max, from, to }
    }

    fn at(&self, v: f64) -> f64 {
        self.from + (v - self.min) / (self.max - self.min) * (self.to - self.from)
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn fmt(v: f64) -> String {
    format!("{:.2}", v)
}

/// Short tick label: enough digits to tell neighbours apart without turning
/// the axis into noise.
fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if a >= 1000.0 || a < 0.01 {
        format!("{v:.1e}")
    } else if a >= 10.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.3}")
    }
}

impl Chart {
    pub fn render(&self) -> String {
        let mut xs: Vec<f64> = Vec::new();
        let mut ys: Vec<f64> = Vec::new();
        for s in &self.series {
            for &(x, y) in &s.points {
                xs.push(x);
                ys.push(y);
            }
        }
        if let Some(band) = &self.band {
            for &(x, lo, hi) in band {
                xs.push(x);
                ys.push(lo);
                ys.push(hi);
            }
        }
        let fold = |v: &[f64], pick: fn(f64, f64) -> f64, seed: f64| {
            v.iter().copied().filter(|x| x.is_finite()).fold(seed, pick)
        };
        let x_scale = Scale::new(
            fold(&xs, f64::min, f64::INFINITY),
            fold(&xs, f64::max, f64::NEG_INFINITY),
            MARGIN_LEFT,
            WIDTH - MARGIN_RIGHT,
        );
        let y_scale = Scale::new(
            fold(&ys, f64::min, f64::INFINITY),
            fold(&ys, f64::max, f64::NEG_INFINITY),
            HEIGHT - MARGIN_BOTTOM,
            MARGIN_TOP,
        );

        let mut svg = String::new();
        svg.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
             viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">\n"
        ));
        svg.push_str(&format!(
            "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
            fmt(WIDTH / 2.0),
            escape(&self.title)
        ));

        if let Some(band) = &self.band {
            if band.len() >= 2 {
                let mut d = String::from("M");
                for &(x, _, hi) in band {
                    d.push_str(&format!(" {},{}", fmt(x_scale.at(x)), fmt(y_scale.at(hi))));
                }
                for &(x, lo, _) in band.iter().rev() {
                    d.push_str(&format!(" L {},{}", fmt(x_scale.at(x)), fmt(y_scale.at(lo))));
                }
                d.push_str(" Z");
                svg.push_str(&format!(
                    "<path class=\"band\" d=\"{d}\" fill=\"#c8d8ea\" stroke=\"none\" opacity=\"0.7\"/>\n"
                ));
            }
        }

        // Axes with five ticks each.
        svg.push_str(&format!(
            "<line x1=\"{l}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"#444\"/>\n\
             <line x1=\"{l}\" y1=\"{t}\" x2=\"{l}\" y2=\"{b}\" stroke=\"#444\"/>\n",
            l = fmt(MARGIN_LEFT),
            r = fmt(WIDTH - MARGIN_RIGHT),
            t = fmt(MARGIN_TOP),
            b = fmt(HEIGHT - MARGIN_BOTTOM),
        ));
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let xv = x_scale.min + f * (x_scale.max - x_scale.min);
            let yv = y_scale.min + f * (y_scale.max - y_scale.min);
            let xp = fmt(x_scale.at(xv));
            let yp = fmt(y_scale.at(yv));
            svg.push_str(&format!(
                "<line x1=\"{xp}\" y1=\"{b}\" x2=\"{xp}\" y2=\"{b2}\" stroke=\"#444\"/>\n\
                 <text x=\"{xp}\" y=\"{ty}\" text-anchor=\"middle\">{lx}</text>\n",
                b = fmt(HEIGHT - MARGIN_BOTTOM),
                b2 = fmt(HEIGHT - MARGIN_BOTTOM + 5.0),
                ty = fmt(HEIGHT - MARGIN_BOTTOM + 18.0),
                lx = escape(&tick_label(xv)),
            ));
            svg.push_str(&format!(
                "<line x1=\"{l}\" y1=\"{yp}\" x2=\"{l2}\" y2=\"{yp}\" stroke=\"#444\"/>\n\
                 <text x=\"{tx}\" y=\"{typ}\" text-anchor=\"end\">{ly}</text>\n",
                l = fmt(MARGIN_LEFT),
                l2 = fmt(MARGIN_LEFT - 5.0),
                tx = fmt(MARGIN_LEFT - 8.0),
                typ = fmt(y_scale.at(yv) + 4.0),
                ly = escape(&tick_label(yv)),
            ));
        }
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            fmt((MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0),
            fmt(HEIGHT - 8.0),
            escape(&self.x_label)
        ));
        if !self.y_label.is_empty() {
            svg.push_str(&format!(
                "<text x=\"16\" y=\"{mid}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {mid})\">{}</text>\n",
                escape(&self.y_label),
                mid = fmt((MARGIN_TOP + HEIGHT - MARGIN_BOTTOM) / 2.0),
            ));
        }

        for series in &self.series {
            if series.points.is_empty() {
                continue;
            }
            let mut d = String::new();
            for (i, &(x, y)) in series.points.iter().enumerate() {
                d.push_str(if i == 0 { "M" } else { " L" });
                d.push_str(&format!(" {},{}", fmt(x_scale.at(x)), fmt(y_scale.at(y))));
            }
            svg.push_str(&format!(
                "<path d=\"{d}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\n",
                series.color
            ));
            if series.points.len() == 1 {
                let (x, y) = series.points[0];
                svg.push_str(&format!(
                    "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{}\"/>\n",
                    fmt(x_scale.at(x)),
                    fmt(y_scale.at(y)),
                    series.color
                ));
            }
        }
        svg.push_str("</svg>\n");
        svg
    }
}
