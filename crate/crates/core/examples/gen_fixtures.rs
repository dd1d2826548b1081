//! Writes the repository fixtures: test feeders, a year of synthetic solar
//! forecast history, 24-hour profiles and a DER config.
//!
//! ```text
//! cargo run -p varflex --example gen_fixtures -- [out_dir]
//! ```

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use varflex::network::{BusFile, LineFile, NetworkFile};

const MILE_FT: f64 = 5280.0;

/// Overhead three-phase line, ohm/mile (r, x).
const Z_TRUNK: ([[f64; 3]; 3], [[f64; 3]; 3]) = (
    [[0.3465, 0.1560, 0.1580], [0.1560, 0.3375, 0.1535], [0.1580, 0.1535, 0.3414]],
    [[1.0179, 0.5017, 0.4236], [0.5017, 1.0478, 0.3849], [0.4236, 0.3849, 1.0348]],
);
/// Lighter lateral conductor, ohm/mile.
const Z_LATERAL: ([[f64; 3]; 3], [[f64; 3]; 3]) = (
    [[0.7526, 0.1580, 0.1560], [0.1580, 0.7475, 0.1535], [0.1560, 0.1535, 0.7436]],
    [[1.1814, 0.4236, 0.5017], [0.4236, 1.1983, 0.3849], [0.5017, 0.3849, 1.2112]],
);

fn line(from: &str, to: &str, phases: &str, z: ([[f64; 3]; 3], [[f64; 3]; 3]), miles: f64) -> LineFile {
    let present = |i: usize| phases.contains(["a", "b", "c"][i]);
    let pick = |m: [[f64; 3]; 3]| {
        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                if present(i) && present(j) {
                    out[i][j] = m[i][j] * miles;
                }
            }
        }
        out
    };
    LineFile { from: from.into(), to: to.into(), r_ohm: pick(z.0), x_ohm: pick(z.1) }
}

fn bus(id: &str, phases: &str, kw: &[f64], kvar: &[f64], a1: Option<f64>) -> BusFile {
    let n = phases.len();
    BusFile {
        id: id.into(),
        phases: phases.into(),
        load_kw: kw.to_vec(),
        load_kvar: kvar.to_vec(),
        a0: a1.map(|v| vec![1.0 - v; n]),
        a1: a1.map(|v| vec![v; n]),
    }
}

fn two_bus() -> NetworkFile {
    NetworkFile {
        s_base_kva: 1000.0,
        v_base_kv: 2.4018,
        slack: "sub".into(),
        v0_pu: [1.0; 3],
        buses: vec![
            bus("sub", "abc", &[], &[], None),
            bus("n1", "abc", &[300.0, 280.0, 320.0], &[120.0, 110.0, 130.0], None),
        ],
        lines: vec![line("sub", "n1", "abc", Z_TRUNK, 1.0)],
    }
}

fn three_bus_mutual() -> NetworkFile {
    NetworkFile {
        s_base_kva: 1000.0,
        v_base_kv: 2.4018,
        slack: "sub".into(),
        v0_pu: [1.0; 3],
        buses: vec![
            bus("sub", "abc", &[], &[], None),
            bus("n1", "abc", &[150.0, 60.0, 220.0], &[70.0, 25.0, 90.0], Some(0.4)),
            bus("n2", "ab", &[180.0, 90.0], &[80.0, 40.0], None),
        ],
        lines: vec![line("sub", "n1", "abc", Z_TRUNK, 0.8), line("n1", "n2", "ab", Z_LATERAL, 0.6)],
    }
}

fn four_bus() -> NetworkFile {
    NetworkFile {
        s_base_kva: 1000.0,
        v_base_kv: 2.4018,
        slack: "sub".into(),
        v0_pu: [1.0; 3],
        buses: vec![
            bus("sub", "abc", &[], &[], None),
            bus("n1", "abc", &[100.0, 120.0, 90.0], &[40.0, 50.0, 35.0], None),
            bus("n2", "abc", &[80.0, 60.0, 110.0], &[30.0, 25.0, 45.0], Some(0.5)),
            bus("n3", "c", &[140.0], &[60.0], None),
        ],
        lines: vec![
            line("sub", "n1", "abc", Z_TRUNK, 0.5),
            line("n1", "n2", "abc", Z_TRUNK, 0.4),
            line("n1", "n3", "c", Z_LATERAL, 0.3),
        ],
    }
}

/// Thirteen-bus unbalanced feeder with one-, two- and three-phase laterals.
fn ieee13_like() -> NetworkFile {
    let ft = |f: f64| f / MILE_FT;
    let mut buses = vec![
        bus("650", "abc", &[], &[], None),
        bus("632", "abc", &[17.0, 66.0, 117.0], &[10.0, 38.0, 68.0], None),
        bus("633", "abc", &[], &[], None),
        bus("634", "abc", &[160.0, 120.0, 120.0], &[110.0, 90.0, 90.0], None),
        bus("645", "bc", &[170.0, 0.0], &[125.0, 0.0], None),
        bus("646", "bc", &[230.0, 0.0], &[132.0, 0.0], Some(1.0)),
        bus("671", "abc", &[385.0, 385.0, 385.0], &[220.0, 220.0, 220.0], None),
        bus("680", "abc", &[], &[], None),
        bus("684", "ac", &[], &[], None),
        bus("611", "c", &[170.0], &[80.0], Some(1.0)),
        bus("652", "a", &[128.0], &[86.0], Some(1.0)),
        bus("692", "abc", &[0.0, 0.0, 170.0], &[0.0, 0.0, 151.0], None),
        bus("675", "abc", &[485.0, 68.0, 290.0], &[190.0, 60.0, 212.0], None),
    ];
    // Half the classic spot loads keeps the unregulated feeder above 0.92 p.u.
    for b in &mut buses {
        b.load_kw.iter_mut().chain(b.load_kvar.iter_mut()).for_each(|v| *v *= 0.5);
    }
    let lines = vec![
        line("650", "632", "abc", Z_TRUNK, ft(2000.0)),
        line("632", "633", "abc", Z_LATERAL, ft(500.0)),
        line("633", "634", "abc", Z_LATERAL, ft(500.0)),
        line("632", "645", "bc", Z_LATERAL, ft(500.0)),
        line("645", "646", "bc", Z_LATERAL, ft(300.0)),
        line("632", "671", "abc", Z_TRUNK, ft(2000.0)),
        line("671", "680", "abc", Z_TRUNK, ft(1000.0)),
        line("671", "684", "ac", Z_LATERAL, ft(300.0)),
        line("684", "611", "c", Z_LATERAL, ft(300.0)),
        line("684", "652", "a", Z_LATERAL, ft(800.0)),
        line("671", "692", "abc", Z_TRUNK, ft(10.0)),
        line("692", "675", "abc", Z_LATERAL, ft(500.0)),
    ];
    NetworkFile { s_base_kva: 1000.0, v_base_kv: 2.4018, slack: "650".into(), v0_pu: [1.0; 3], buses, lines }
}

/// 123-bus feeder: a 22-bus three-phase trunk with a five-bus lateral hanging
/// off each of the first 20 trunk buses.
fn feeder123() -> NetworkFile {
    let trunk_miles = 0.025;
    let lateral_miles = 0.015;
    let mut buses = vec![bus("150", "abc", &[], &[], None)];
    let mut lines = Vec::new();
    let mut prev = "150".to_string();
    for t in 1..=22 {
        let id = format!("t{t}");
        let kw = if t % 2 == 0 { [20.0, 20.0, 20.0] } else { [0.0; 3] };
        let kvar = kw.map(|p| p * 0.5);
        buses.push(bus(&id, "abc", &kw, &kvar, None));
        lines.push(line(&prev, &id, "abc", Z_TRUNK, trunk_miles));
        prev = id;
    }
    let kinds = ["abc", "a", "b", "c", "ab", "bc", "a", "b", "c", "ac"];
    for t in 1..=20 {
        let phases = kinds[(t - 1) % kinds.len()];
        let per_phase = match phases.len() {
            3 => 12.0,
            2 => 18.0,
            _ => 30.0,
        };
        // Voltage-dependent share on every third lateral.
        let a1 = (t % 3 == 0).then_some(0.5);
        let mut up = format!("t{t}");
        for k in 1..=5 {
            let id = format!("l{t}_{k}");
            let kw = vec![per_phase; phases.len()];
            let kvar: Vec<f64> = kw.iter().map(|p| p * 0.45).collect();
            buses.push(bus(&id, phases, &kw, &kvar, a1));
            lines.push(line(&up, &id, phases, Z_LATERAL, lateral_miles));
            up = id;
        }
    }
    NetworkFile { s_base_kva: 1000.0, v_base_kv: 2.4018, slack: "150".into(), v0_pu: [1.035; 3], buses, lines }
}

/// Clear-sky shape for day `d`, hour `h` as a fraction of capacity.
fn clear_sky(d: usize, h: usize) -> f64 {
    let season = 0.75 + 0.2 * (2.0 * PI * (d as f64 - 80.0) / 365.0).sin();
    let half = 6.0 + 1.5 * (2.0 * PI * (d as f64 - 80.0) / 365.0).sin();
    let x = (h as f64 + 0.5 - 12.5) / half;
    if x.abs() >= 1.0 {
        0.0
    } else {
        season * (0.5 * PI * x).cos().powf(1.3)
    }
}

/// One year of hourly forecast/actual pairs. Relative error has mean
/// `0.02 - 0.03 f` and spread `0.7 exp(-3 f)` at normalized forecast `f`.
fn solar_history() -> String {
    let capacity = 1000.0;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut out = String::from("timestamp,forecast_kw,actual_kw,capacity_kw\n");
    for d in 0..365 {
        let cloud = 0.55 + 0.45 * rng.random::<f64>();
        for h in 0..24 {
            let f = (clear_sky(d, h) * cloud).min(1.0);
            let forecast = (f * capacity * 1000.0).round() / 1000.0;
            let actual = if forecast == 0.0 {
                0.0
            } else {
                let fn_ = forecast / capacity;
                let z: f64 = rng.sample(StandardNormal);
                let e = 0.02 - 0.03 * fn_ + 0.7 * (-3.0 * fn_).exp() * z;
                ((forecast * (1.0 + e)).clamp(0.0, capacity) * 1000.0).round() / 1000.0
            };
            let (month, day) = month_day(d);
            out.push_str(&format!("2023-{month:02}-{day:02}T{h:02}:00,{forecast},{actual},{capacity}\n"));
        }
    }
    out
}

fn month_day(doy: usize) -> (usize, usize) {
    const DAYS: [usize; 12] = [31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];
    let mut d = doy;
    for (m, &n) in DAYS.iter().enumerate() {
        if d < n {
            return (m + 1, d + 1);
        }
        d -= n;
    }
    unreachable!("day of year beyond 365")
}

fn load_mult(h: usize) -> f64 {
    const M: [f64; 24] = [
        0.55, 0.5, 0.48, 0.47, 0.48, 0.53, 0.62, 0.7, 0.74, 0.75, 0.74, 0.72, 0.7, 0.7, 0.71, 0.74, 0.8, 0.88, 0.96,
        1.0, 0.97, 0.88, 0.76, 0.64,
    ];
    M[h]
}

fn profiles(daylight: bool) -> String {
    let mut out = String::from("hour,load_mult,solar_forecast_norm\n");
    for h in 0..24 {
        let solar = if daylight && (7..=17).contains(&h) { 0.8 * (PI * (h as f64 - 6.0) / 12.0).sin() } else { 0.0 };
        out.push_str(&format!("{h},{},{}\n", load_mult(h), (solar * 1e6).round() / 1e6));
    }
    out
}

fn write(dir: &Path, name: &str, text: &str) {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap_or_else(|e| panic!("writing {}: {e}", path.display()));
    println!("wrote {}", path.display());
}

fn main() {
    let dir: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures"));
    std::fs::create_dir_all(&dir).expect("create output dir");
    for (name, net) in [
        ("two_bus.json", two_bus()),
        ("three_bus_mutual.json", three_bus_mutual()),
        ("four_bus.json", four_bus()),
        ("ieee13_like.json", ieee13_like()),
        ("feeder123.json", feeder123()),
    ] {
        net.clone().into_model().unwrap_or_else(|e| panic!("{name}: {e}"));
        write(&dir, name, &serde_json::to_string_pretty(&net).expect("serialize"));
    }
    write(&dir, "solar_history.csv", &solar_history());
    write(&dir, "profiles.csv", &profiles(true));
    write(&dir, "profiles_night.csv", &profiles(false));
    write(&dir, "der_config.json", &serde_json::to_string_pretty(&varflex::DerConfig::default()).expect("serialize"));
}
