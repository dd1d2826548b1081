//! Output artifacts: band plot of the sweep table and run manifests.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::sweep::{RegionStatus, TableRow};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const FILLS: [&str; 6] = ["#c6dbef", "#6baed6", "#2171b5", "#08306b", "#74c476", "#238b45"];

fn nice_step(span: f64) -> f64 {
    let raw = span / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 2.5, 5.0, 10.0].iter().map(|m| m * mag).find(|&s| s >= raw).unwrap_or(10.0 * mag)
}

/// Flexibility bands per probability level versus hour, with the zero-dispatch
/// base load as a dashed line.
pub fn render_svg(rows: &[TableRow]) -> String {
    let mut levels: Vec<f64> = rows.iter().map(|r| r.probability).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();

    let ok: Vec<&TableRow> = rows.iter().filter(|r| r.status == RegionStatus::Optimal).collect();
    let values = ok.iter().flat_map(|r| [r.q_sub_max_kvar, r.q_sub_min_kvar, r.base_load_kvar]).flatten();
    let (mut lo, mut hi) = values.fold((0.0_f64, 0.0_f64), |(l, h), v| (l.min(v), h.max(v)));
    if hi - lo < 1e-9 {
        hi += 1.0;
        lo -= 1.0;
    }
    let step = nice_step(hi - lo);
    lo = (lo / step).floor() * step;
    hi = (hi / step).ceil() * step;

    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let x = |h: f64| LEFT + pw * h / 23.0;
    let y = |v: f64| TOP + ph * (hi - v) / (hi - lo);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);

    let mut v = lo;
    while v <= hi + step * 1e-6 {
        let yy = y(v);
        let _ =
            writeln!(s, r##"<line x1="{LEFT:.2}" y1="{yy:.2}" x2="{:.2}" y2="{yy:.2}" stroke="#dddddd"/>"##, LEFT + pw);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            yy + 4.0,
            crate::sweep::fmt_sig6(v)
        );
        v += step;
    }
    for h in (0..24).step_by(3) {
        let xx = x(h as f64);
        let _ = writeln!(s, r#"<text x="{xx:.2}" y="{:.2}" text-anchor="middle">{h}</text>"#, TOP + ph + 18.0);
    }
    let _ =
        writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">hour</text>"#, LEFT + pw / 2.0, HEIGHT - 10.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">substation reactive power (kVAr)</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );

    // Widest band (lowest level) first so narrower ones stay visible.
    for (i, &p) in levels.iter().enumerate() {
        let mut band: Vec<&TableRow> = ok.iter().copied().filter(|r| r.probability == p).collect();
        band.sort_by_key(|r| r.hour);
        for run in band.chunk_by(|a, b| b.hour == a.hour + 1) {
            let mut pts: Vec<String> = run
                .iter()
                .filter_map(|r| Some(format!("{:.2},{:.2}", x(r.hour as f64), y(r.q_sub_max_kvar?))))
                .collect();
            pts.extend(
                run.iter().rev().filter_map(|r| Some(format!("{:.2},{:.2}", x(r.hour as f64), y(r.q_sub_min_kvar?)))),
            );
            let _ = writeln!(
                s,
                r##"<polygon points="{}" fill="{}" fill-opacity="0.75" stroke="#333333" stroke-width="0.5"/>"##,
                pts.join(" "),
                FILLS[i % FILLS.len()]
            );
        }
        let ly = TOP + 20.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{ly:.2}" width="14" height="14" fill="{}"/>"#,
            WIDTH - RIGHT + 16.0,
            FILLS[i % FILLS.len()]
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}">P = {}</text>"#,
            WIDTH - RIGHT + 36.0,
            ly + 11.0,
            crate::sweep::fmt_sig6(p)
        );
    }

    if let Some(&p0) = levels.first() {
        let mut base: Vec<&TableRow> = ok.iter().copied().filter(|r| r.probability == p0).collect();
        base.sort_by_key(|r| r.hour);
        let pts: Vec<String> =
            base.iter().filter_map(|r| Some(format!("{:.2},{:.2}", x(r.hour as f64), y(r.base_load_kvar?)))).collect();
        if !pts.is_empty() {
            let _ = writeln!(
                s,
                r##"<polyline points="{}" fill="none" stroke="#000000" stroke-width="1.5" stroke-dasharray="6,4"/>"##,
                pts.join(" ")
            );
            let ly = TOP + 20.0 * levels.len() as f64 + 7.0;
            let _ = writeln!(
                s,
                r##"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="#000000" stroke-dasharray="6,4"/>"##,
                WIDTH - RIGHT + 16.0,
                WIDTH - RIGHT + 30.0
            );
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">base load</text>"#, WIDTH - RIGHT + 36.0, ly + 4.0);
        }
    }
    let _ = writeln!(s, r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#000000"/>"##);
    s.push_str("</svg>\n");
    s
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

impl InputRecord {
    pub fn hash_file(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let path = path.as_ref();
        Ok(Self { path: path.display().to_string(), sha256: sha256_hex(&std::fs::read(path)?) })
    }
}

/// Inputs, parameters and tool version behind an output file. Written next
/// to the output; carries no timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub inputs: BTreeMap<String, InputRecord>,
    pub params: BTreeMap<String, serde_json::Value>,
    pub outputs: BTreeMap<String, InputRecord>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            tool: "varflex".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            inputs: BTreeMap::new(),
            params: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json_str(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// Manifest path for an output file: `<out>.manifest.json`.
    pub fn path_for(output: &Path) -> std::path::PathBuf {
        let mut name = output.as_os_str().to_owned();
        name.push(".manifest.json");
        name.into()
    }
}
