use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::sweep::SweepRecord;
use super::trial::Classifier;
use crate::error::{Error, Result};
use crate::regimes::{averaging_threshold, mni_threshold};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    P,
    Q,
    R,
    T,
}

impl Axis {
    fn of(self, v: [f64; 4]) -> f64 {
        v[self as usize]
    }

    fn name(self) -> &'static str {
        match self {
            Axis::P => "p",
            Axis::Q => "q",
            Axis::R => "r",
            Axis::T => "t",
        }
    }
}

/// Which slice of a sweep to draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSpec {
    pub x: Axis,
    pub y: Axis,
    pub classifier: Classifier,
    /// Required when the records span several `n`.
    #[serde(default)]
    pub n: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Overlay {
    pub label: String,
    /// Polyline in (x, y) axis coordinates.
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagram {
    pub spec: PhaseSpec,
    pub n: usize,
    /// Exponents off the two axes, by name.
    pub fixed: Vec<(String, f64)>,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// `cells[iy][ix]` is the mean error at `(xs[ix], ys[iy])`.
    pub cells: Vec<Vec<f64>>,
    pub overlays: Vec<Overlay>,
}

const OVERLAY_SAMPLES: usize = 101;

fn sorted_unique(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| a.to_bits() == b.to_bits());
    v
}

fn exponents(r: &SweepRecord) -> [f64; 4] {
    [r.point.p, r.point.q, r.point.r, r.point.t]
}

/// Grids mean error over two exponent axes. Overlays are the threshold
/// curves `t = 1 - r`, `t = p + 1 - 2 max{1, q + r}` (MNI) and
/// `t = p + 1 - 2(q + r)` (averaging); they are drawn only when `t` is one
/// of the axes.
pub fn phase_diagram(records: &[SweepRecord], spec: &PhaseSpec) -> Result<PhaseDiagram> {
    if spec.x == spec.y {
        return Err(Error::InvalidArgument("phase axes must differ".into()));
    }
    let mut selected: Vec<&SweepRecord> = records.iter().filter(|r| r.classifier == spec.classifier).collect();
    let ns = {
        let mut ns: Vec<usize> = selected.iter().map(|r| r.point.n).collect();
        ns.sort_unstable();
        ns.dedup();
        ns
    };
    let n = match (spec.n, ns.as_slice()) {
        (Some(n), _) => n,
        (None, [n]) => *n,
        (None, []) => return Err(Error::InvalidArgument("no records for this classifier".into())),
        (None, _) => return Err(Error::InvalidArgument(format!("records span n = {ns:?}; choose one"))),
    };
    selected.retain(|r| r.point.n == n);
    if selected.is_empty() {
        return Err(Error::InvalidArgument(format!("no records at n = {n}")));
    }
    let c_k = selected[0].point.c_k;
    if selected.iter().any(|r| r.point.c_k != c_k) {
        return Err(Error::InvalidArgument("records mix several c_k".into()));
    }

    let off: Vec<Axis> = [Axis::P, Axis::Q, Axis::R, Axis::T]
        .into_iter()
        .filter(|a| *a != spec.x && *a != spec.y)
        .collect();
    let mut fixed = Vec::new();
    for &a in &off {
        let values = sorted_unique(selected.iter().map(|r| a.of(exponents(r))).collect());
        if values.len() != 1 {
            return Err(Error::InvalidArgument(format!(
                "records vary in {} ({values:?}); the slice must fix it",
                a.name()
            )));
        }
        fixed.push((a.name().to_string(), values[0]));
    }

    let xs = sorted_unique(selected.iter().map(|r| spec.x.of(exponents(r))).collect());
    let ys = sorted_unique(selected.iter().map(|r| spec.y.of(exponents(r))).collect());
    let mut cells = vec![vec![f64::NAN; xs.len()]; ys.len()];
    for r in &selected {
        let e = exponents(r);
        let ix = xs.iter().position(|v| v.to_bits() == spec.x.of(e).to_bits()).expect("x present");
        let iy = ys.iter().position(|v| v.to_bits() == spec.y.of(e).to_bits()).expect("y present");
        cells[iy][ix] = r.mean;
    }
    let missing: Vec<(f64, f64)> = ys
        .iter()
        .enumerate()
        .flat_map(|(iy, &y)| {
            let row = &cells[iy];
            xs.iter()
                .enumerate()
                .filter(move |(ix, _)| row[*ix].is_nan())
                .map(move |(_, &x)| (x, y))
        })
        .collect();
    if !missing.is_empty() {
        return Err(Error::IncompleteGrid(missing));
    }

    let overlays = overlays(spec, &fixed, &xs, &ys);
    Ok(PhaseDiagram {
        spec: spec.clone(),
        n,
        fixed,
        xs,
        ys,
        cells,
        overlays,
    })
}

fn overlays(spec: &PhaseSpec, fixed: &[(String, f64)], xs: &[f64], ys: &[f64]) -> Vec<Overlay> {
    let (free, t_on_x) = match (spec.x, spec.y) {
        (other, Axis::T) => (other, false),
        (Axis::T, other) => (other, true),
        _ => return Vec::new(),
    };
    let range = if t_on_x { ys } else { xs };
    let (lo, hi) = (range[0], range[range.len() - 1]);
    let fixed_value = |name: &str| fixed.iter().find(|(k, _)| k == name).map(|(_, v)| *v);
    let curve = |label: &str, f: &dyn Fn(f64, f64, f64) -> f64| {
        let points = (0..OVERLAY_SAMPLES)
            .map(|i| {
                let u = if hi > lo {
                    lo + (hi - lo) * i as f64 / (OVERLAY_SAMPLES - 1) as f64
                } else {
                    lo
                };
                let get = |a: Axis| if a == free { u } else { fixed_value(a.name()).unwrap_or(f64::NAN) };
                let t = f(get(Axis::P), get(Axis::Q), get(Axis::R));
                if t_on_x {
                    (t, u)
                } else {
                    (u, t)
                }
            })
            .collect();
        Overlay {
            label: label.to_string(),
            points,
        }
    };
    vec![
        curve("t = 1 - r", &|_, _, r| 1.0 - r),
        curve("t = p + 1 - 2 max{1, q + r}", &|p, q, r| p + 1.0 - 2.0 * (q + r).max(1.0)),
        curve("mni threshold", &mni_threshold),
        curve("averaging threshold", &averaging_threshold),
    ]
}

/// Blue (0) to red (1).
fn color(err: f64) -> String {
    let e = err.clamp(0.0, 1.0);
    let r = (40.0 + 200.0 * e).round() as u8;
    let b = (240.0 - 200.0 * e).round() as u8;
    format!("#{r:02x}50{b:02x}")
}

impl PhaseDiagram {
    pub fn to_svg(&self) -> String {
        const CELL: f64 = 48.0;
        const MARGIN: f64 = 60.0;
        let (nx, ny) = (self.xs.len(), self.ys.len());
        let (w, h) = (nx as f64 * CELL, ny as f64 * CELL);
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" font-family="sans-serif" font-size="11">"#,
            w + 2.0 * MARGIN + 160.0,
            h + 2.0 * MARGIN
        );
        let fixed: Vec<String> = self.fixed.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let _ = writeln!(
            s,
            r#"<text x="{MARGIN}" y="20">{} mean error, n={}, {}</text>"#,
            self.spec.classifier.as_str(),
            self.n,
            fixed.join(", ")
        );
        for (iy, row) in self.cells.iter().enumerate() {
            for (ix, &v) in row.iter().enumerate() {
                let x = MARGIN + ix as f64 * CELL;
                let y = MARGIN + h - (iy + 1) as f64 * CELL;
                let _ = writeln!(
                    s,
                    r#"<rect x="{x:.1}" y="{y:.1}" width="{CELL}" height="{CELL}" fill="{}"><title>{v:.4}</title></rect>"#,
                    color(v)
                );
            }
        }
        for (ix, x) in self.xs.iter().enumerate() {
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{x}</text>"#,
                MARGIN + (ix as f64 + 0.5) * CELL,
                MARGIN + h + 16.0
            );
        }
        for (iy, y) in self.ys.iter().enumerate() {
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{y}</text>"#,
                MARGIN - 6.0,
                MARGIN + h - (iy as f64 + 0.5) * CELL + 4.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            MARGIN + w / 2.0,
            MARGIN + h + 36.0,
            self.spec.x.name()
        );
        let _ = writeln!(
            s,
            r#"<text x="20" y="{:.1}" text-anchor="middle">{}</text>"#,
            MARGIN + h / 2.0,
            self.spec.y.name()
        );

        // Cell centers sit at the grid values; overlays share that mapping.
        let map = |v: f64, axis: &[f64]| -> f64 {
            if axis.len() < 2 {
                return 0.5;
            }
            let (lo, hi) = (axis[0], axis[axis.len() - 1]);
            let step = (hi - lo) / (axis.len() - 1) as f64;
            (v - lo) / step + 0.5
        };
        let dashes = ["", "6 3", "2 2", "8 2 2 2"];
        for (i, o) in self.overlays.iter().enumerate() {
            let pts: Vec<String> = o
                .points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|&(x, y)| {
                    let px = MARGIN + map(x, &self.xs) * CELL;
                    let py = MARGIN + h - map(y, &self.ys) * CELL;
                    format!("{px:.2},{py:.2}")
                })
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="black" stroke-width="1.5" stroke-dasharray="{}"/>"#,
                pts.join(" "),
                dashes[i % dashes.len()]
            );
            let ly = MARGIN + 16.0 * i as f64;
            let lx = MARGIN + w + 20.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx}" y1="{ly}" x2="{:.0}" y2="{ly}" stroke="black" stroke-dasharray="{}"/><text x="{:.0}" y="{:.0}">{}</text>"#,
                lx + 24.0,
                dashes[i % dashes.len()],
                lx + 30.0,
                ly + 4.0,
                o.label
            );
        }
        s.push_str("</svg>\n");
        s
    }
}
