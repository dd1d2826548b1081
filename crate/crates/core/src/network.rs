//! Radial three-phase feeder description: buses, lines, slack, bases.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const COMPOSITION_TOL: f64 = 1e-9;
const SYMMETRY_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("cannot read network file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed network file: {0}")]
    Parse(String),
    #[error("topology error: {0}")]
    Topology(String),
    #[error("invalid value: {0}")]
    Value(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    #[serde(rename = "a")]
    A,
    #[serde(rename = "b")]
    B,
    #[serde(rename = "c")]
    C,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::A => "a",
            Phase::B => "b",
            Phase::C => "c",
        })
    }
}

impl FromStr for Phase {
    type Err = NetworkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "a" | "A" => Ok(Phase::A),
            "b" | "B" => Ok(Phase::B),
            "c" | "C" => Ok(Phase::C),
            other => Err(NetworkError::Parse(format!("unknown phase {other:?}"))),
        }
    }
}

/// Subset of {a, b, c}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PhaseSet(u8);

impl PhaseSet {
    pub const ABC: PhaseSet = PhaseSet(0b111);

    pub fn contains(self, phase: Phase) -> bool {
        self.0 & (1 << phase.index()) != 0
    }

    pub fn insert(&mut self, phase: Phase) {
        self.0 |= 1 << phase.index();
    }

    pub fn is_subset(self, other: PhaseSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Phase> {
        Phase::ALL.into_iter().filter(move |&p| self.contains(p))
    }
}

impl FromStr for PhaseSet {
    type Err = NetworkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut set = PhaseSet::default();
        for ch in s.chars() {
            let phase: Phase = ch.to_string().parse()?;
            if set.contains(phase) {
                return Err(NetworkError::Parse(format!("phase {phase} repeated in {s:?}")));
            }
            set.insert(phase);
        }
        if set.is_empty() {
            return Err(NetworkError::Parse("empty phase set".into()));
        }
        Ok(set)
    }
}

impl fmt::Display for PhaseSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in self.iter() {
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

/// Per-phase quantities, indexed by [`Phase::index`]. Absent phases hold zero.
pub type PerPhase = [f64; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: String,
    pub phases: PhaseSet,
    /// Nameplate load at 1.0 p.u. voltage (kW).
    pub load_p: PerPhase,
    /// Nameplate reactive load (kVAr).
    pub load_q: PerPhase,
    /// Constant-power fraction of the load.
    pub a0: PerPhase,
    /// Fraction of the load proportional to squared voltage magnitude.
    pub a1: PerPhase,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    /// Series impedance (ohms).
    pub z: [[Complex64; 3]; 3],
}

impl Line {
    /// Phases carried by the line, i.e. those of its downstream bus.
    pub fn phases(&self, net: &NetworkModel) -> PhaseSet {
        net.buses[net.downstream(self)].phases
    }
}

/// A (bus, phase) pair that carries its own squared-voltage variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodePhase {
    pub bus: usize,
    pub phase: Phase,
}

#[derive(Debug, Clone)]
pub struct NetworkModel {
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub slack: usize,
    /// Slack voltage magnitude per phase (p.u.).
    pub v0: PerPhase,
    pub s_base_kva: f64,
    pub v_base_kv: f64,
    topology: Topology,
}

#[derive(Debug, Clone)]
struct Topology {
    /// Line feeding each bus (None for the slack).
    parent_line: Vec<Option<usize>>,
    parent_bus: Vec<Option<usize>>,
    depth: Vec<usize>,
    /// Buses ordered from the slack outward.
    bfs_order: Vec<usize>,
    node_phases: Vec<NodePhase>,
    node_phase_index: HashMap<NodePhase, usize>,
    bus_index: HashMap<String, usize>,
}

impl NetworkModel {
    pub fn new(
        buses: Vec<Bus>,
        lines: Vec<Line>,
        slack: usize,
        v0: PerPhase,
        s_base_kva: f64,
        v_base_kv: f64,
    ) -> Result<Self, NetworkError> {
        let topology = validate(&buses, &lines, slack, v0, s_base_kva, v_base_kv)?;
        Ok(Self { buses, lines, slack, v0, s_base_kva, v_base_kv, topology })
    }

    pub fn from_json_str(text: &str) -> Result<Self, NetworkError> {
        let file: NetworkFile = serde_json::from_str(text).map_err(|e| NetworkError::Parse(e.to_string()))?;
        file.into_model()
    }

    pub fn to_file(&self) -> NetworkFile {
        NetworkFile::from_model(self)
    }

    pub fn bus_index(&self, id: &str) -> Option<usize> {
        self.topology.bus_index.get(id).copied()
    }

    pub fn downstream(&self, line: &Line) -> usize {
        if self.topology.parent_line[line.to].is_some() && self.topology.parent_bus[line.to] == Some(line.from) {
            line.to
        } else {
            line.from
        }
    }

    pub fn upstream(&self, line: &Line) -> usize {
        if self.downstream(line) == line.to {
            line.from
        } else {
            line.to
        }
    }

    pub fn parent_line(&self, bus: usize) -> Option<usize> {
        self.topology.parent_line[bus]
    }

    pub fn parent_bus(&self, bus: usize) -> Option<usize> {
        self.topology.parent_bus[bus]
    }

    pub fn depth(&self, bus: usize) -> usize {
        self.topology.depth[bus]
    }

    /// Buses in breadth-first order starting at the slack.
    pub fn bfs_order(&self) -> &[usize] {
        &self.topology.bfs_order
    }

    /// Lines on the path from `bus` up to the slack, nearest first.
    pub fn path_to_slack(&self, mut bus: usize) -> Vec<usize> {
        let mut path = Vec::with_capacity(self.depth(bus));
        while let Some(l) = self.topology.parent_line[bus] {
            path.push(l);
            bus = self.topology.parent_bus[bus].expect("parent bus exists with parent line");
        }
        path
    }

    /// Non-slack node-phases in bus-file order, phases a, b, c within a bus.
    pub fn node_phases(&self) -> &[NodePhase] {
        &self.topology.node_phases
    }

    pub fn node_phase_index(&self, np: NodePhase) -> Option<usize> {
        self.topology.node_phase_index.get(&np).copied()
    }

    pub fn n_node_phases(&self) -> usize {
        self.topology.node_phases.len()
    }

    pub fn z_base_ohm(&self) -> f64 {
        self.v_base_kv * self.v_base_kv * 1000.0 / self.s_base_kva
    }

    pub fn to_pu_power(&self, kw: f64) -> f64 {
        kw / self.s_base_kva
    }

    pub fn from_pu_power(&self, pu: f64) -> f64 {
        pu * self.s_base_kva
    }

    /// Copy with every nameplate load multiplied by `mult`.
    pub fn scaled_loads(&self, mult: f64) -> Self {
        let mut out = self.clone();
        for bus in &mut out.buses {
            for k in 0..3 {
                bus.load_p[k] *= mult;
                bus.load_q[k] *= mult;
            }
        }
        out
    }

    pub fn total_load_kw(&self) -> f64 {
        self.buses.iter().map(|b| b.load_p.iter().sum::<f64>()).sum()
    }
}

pub fn load_network(path: impl AsRef<Path>) -> Result<NetworkModel, NetworkError> {
    let text = std::fs::read_to_string(path)?;
    NetworkModel::from_json_str(&text)
}

fn validate(
    buses: &[Bus],
    lines: &[Line],
    slack: usize,
    v0: PerPhase,
    s_base_kva: f64,
    v_base_kv: f64,
) -> Result<Topology, NetworkError> {
    if !(s_base_kva > 0.0 && s_base_kva.is_finite()) || !(v_base_kv > 0.0 && v_base_kv.is_finite()) {
        return Err(NetworkError::Value("power and voltage bases must be positive".into()));
    }
    if slack >= buses.len() {
        return Err(NetworkError::Topology("slack bus not among buses".into()));
    }
    if v0.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(NetworkError::Value("slack voltage must be positive".into()));
    }

    let mut bus_index = HashMap::new();
    for (i, bus) in buses.iter().enumerate() {
        if bus_index.insert(bus.id.clone(), i).is_some() {
            return Err(NetworkError::Topology(format!("duplicate bus id {:?}", bus.id)));
        }
        for phase in Phase::ALL {
            let k = phase.index();
            let present = bus.phases.contains(phase);
            let vals = [bus.load_p[k], bus.load_q[k], bus.a0[k], bus.a1[k]];
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(NetworkError::Value(format!("non-finite load data at bus {:?}", bus.id)));
            }
            if !present {
                if bus.load_p[k] != 0.0 || bus.load_q[k] != 0.0 {
                    return Err(NetworkError::Topology(format!("bus {:?} has load on absent phase {phase}", bus.id)));
                }
                continue;
            }
            if bus.a0[k] < 0.0 || bus.a1[k] < 0.0 || (bus.a0[k] + bus.a1[k] - 1.0).abs() > COMPOSITION_TOL {
                return Err(NetworkError::Value(format!(
                    "bus {:?} phase {phase}: load composition a0 = {}, a1 = {} must be nonnegative and sum to 1",
                    bus.id, bus.a0[k], bus.a1[k]
                )));
            }
        }
    }

    let n = buses.len();
    if lines.len() + 1 != n {
        return Err(NetworkError::Topology(format!(
            "{} lines for {} buses; a radial feeder needs exactly {}",
            lines.len(),
            n,
            n - 1
        )));
    }

    let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (li, line) in lines.iter().enumerate() {
        if line.from >= n || line.to >= n {
            return Err(NetworkError::Topology(format!("line {li} references an unknown bus")));
        }
        if line.from == line.to {
            return Err(NetworkError::Topology(format!("line {li} is a self-loop")));
        }
        for i in 0..3 {
            for j in 0..3 {
                let (a, b) = (line.z[i][j], line.z[j][i]);
                if !a.re.is_finite() || !a.im.is_finite() {
                    return Err(NetworkError::Value(format!("line {li} has non-finite impedance")));
                }
                if (a - b).norm() > SYMMETRY_TOL * (1.0 + a.norm()) {
                    return Err(NetworkError::Value(format!("line {li} impedance is not symmetric")));
                }
            }
            if line.z[i][i].re < 0.0 {
                return Err(NetworkError::Value(format!("line {li} has negative resistance")));
            }
        }
        adjacency[line.from].push((line.to, li));
        adjacency[line.to].push((line.from, li));
    }

    let mut parent_line = vec![None; n];
    let mut parent_bus = vec![None; n];
    let mut depth = vec![0; n];
    let mut visited = vec![false; n];
    let mut bfs_order = Vec::with_capacity(n);
    let mut queue = VecDeque::from([slack]);
    visited[slack] = true;
    while let Some(u) = queue.pop_front() {
        bfs_order.push(u);
        for &(v, li) in &adjacency[u] {
            if parent_line[u] == Some(li) {
                continue;
            }
            if visited[v] {
                return Err(NetworkError::Topology(format!(
                    "line {li} ({:?} - {:?}) closes a cycle",
                    buses[u].id, buses[v].id
                )));
            }
            visited[v] = true;
            parent_line[v] = Some(li);
            parent_bus[v] = Some(u);
            depth[v] = depth[u] + 1;
            queue.push_back(v);
        }
    }
    if let Some(lost) = visited.iter().position(|v| !v) {
        return Err(NetworkError::Topology(format!("bus {:?} is not connected to the slack", buses[lost].id)));
    }

    for (li, line) in lines.iter().enumerate() {
        let (up, down) = if parent_line[line.to] == Some(li) { (line.from, line.to) } else { (line.to, line.from) };
        let (up_ph, down_ph) = (buses[up].phases, buses[down].phases);
        if !down_ph.is_subset(up_ph) {
            return Err(NetworkError::Topology(format!(
                "bus {:?} (phases {down_ph}) is fed from {:?} (phases {up_ph})",
                buses[down].id, buses[up].id
            )));
        }
        for i in 0..3 {
            for j in 0..3 {
                let present = down_ph.contains(Phase::ALL[i]) && down_ph.contains(Phase::ALL[j]);
                if !present && line.z[i][j] != Complex64::new(0.0, 0.0) {
                    return Err(NetworkError::Value(format!(
                        "line {li} has impedance on a phase absent at bus {:?}",
                        buses[down].id
                    )));
                }
            }
        }
    }

    let mut node_phases = Vec::new();
    for (bi, bus) in buses.iter().enumerate() {
        if bi == slack {
            continue;
        }
        for phase in bus.phases.iter() {
            node_phases.push(NodePhase { bus: bi, phase });
        }
    }
    let node_phase_index = node_phases.iter().enumerate().map(|(i, &np)| (np, i)).collect();

    Ok(Topology { parent_line, parent_bus, depth, bfs_order, node_phases, node_phase_index, bus_index })
}

/// On-disk network description (physical units).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub s_base_kva: f64,
    pub v_base_kv: f64,
    pub slack: String,
    pub v0_pu: [f64; 3],
    pub buses: Vec<BusFile>,
    pub lines: Vec<LineFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusFile {
    pub id: String,
    pub phases: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub load_kw: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub load_kvar: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a1: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineFile {
    pub from: String,
    pub to: String,
    pub r_ohm: [[f64; 3]; 3],
    pub x_ohm: [[f64; 3]; 3],
}

impl NetworkFile {
    pub fn into_model(self) -> Result<NetworkModel, NetworkError> {
        let mut ids = HashMap::new();
        let mut buses = Vec::with_capacity(self.buses.len());
        for (i, b) in self.buses.into_iter().enumerate() {
            let phases: PhaseSet = b.phases.parse()?;
            let np = phases.len();
            let spread = |vals: &[f64], what: &str, default: f64| -> Result<PerPhase, NetworkError> {
                let mut out = [0.0; 3];
                if vals.is_empty() {
                    for p in phases.iter() {
                        out[p.index()] = default;
                    }
                    return Ok(out);
                }
                if vals.len() != np {
                    return Err(NetworkError::Parse(format!(
                        "bus {:?}: {what} has {} entries for {np} phases",
                        b.id,
                        vals.len()
                    )));
                }
                for (p, &v) in phases.iter().zip(vals) {
                    out[p.index()] = v;
                }
                Ok(out)
            };
            let load_p = spread(&b.load_kw, "load_kw", 0.0)?;
            let load_q = spread(&b.load_kvar, "load_kvar", 0.0)?;
            let a0 = spread(b.a0.as_deref().unwrap_or(&[]), "a0", 1.0)?;
            let a1 = match &b.a1 {
                Some(v) => spread(v, "a1", 0.0)?,
                None => {
                    // a1 defaults to the complement of a0.
                    let mut out = [0.0; 3];
                    for p in phases.iter() {
                        out[p.index()] = 1.0 - a0[p.index()];
                    }
                    out
                }
            };
            ids.insert(b.id.clone(), i);
            buses.push(Bus { id: b.id, phases, load_p, load_q, a0, a1 });
        }
        let slack = *ids
            .get(&self.slack)
            .ok_or_else(|| NetworkError::Topology(format!("slack bus {:?} not defined", self.slack)))?;
        let mut lines = Vec::with_capacity(self.lines.len());
        for l in self.lines {
            let lookup = |id: &str| {
                ids.get(id)
                    .copied()
                    .ok_or_else(|| NetworkError::Topology(format!("line references unknown bus {id:?}")))
            };
            let (from, to) = (lookup(&l.from)?, lookup(&l.to)?);
            let mut z = [[Complex64::new(0.0, 0.0); 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    z[i][j] = Complex64::new(l.r_ohm[i][j], l.x_ohm[i][j]);
                }
            }
            lines.push(Line { from, to, z });
        }
        NetworkModel::new(buses, lines, slack, self.v0_pu, self.s_base_kva, self.v_base_kv)
    }

    pub fn from_model(net: &NetworkModel) -> Self {
        let per = |bus: &Bus, vals: &PerPhase| bus.phases.iter().map(|p| vals[p.index()]).collect::<Vec<_>>();
        let buses = net
            .buses
            .iter()
            .map(|b| BusFile {
                id: b.id.clone(),
                phases: b.phases.to_string(),
                load_kw: per(b, &b.load_p),
                load_kvar: per(b, &b.load_q),
                a0: Some(per(b, &b.a0)),
                a1: Some(per(b, &b.a1)),
            })
            .collect();
        let lines = net
            .lines
            .iter()
            .map(|l| LineFile {
                from: net.buses[l.from].id.clone(),
                to: net.buses[l.to].id.clone(),
                r_ohm: l.z.map(|row| row.map(|c| c.re)),
                x_ohm: l.z.map(|row| row.map(|c| c.im)),
            })
            .collect();
        Self {
            s_base_kva: net.s_base_kva,
            v_base_kv: net.v_base_kv,
            slack: net.buses[net.slack].id.clone(),
            v0_pu: net.v0,
            buses,
            lines,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_bus_json(extra_line: bool) -> String {
        let extra = if extra_line {
            r#",{"from":"2","to":"1","r_ohm":[[0.1,0,0],[0,0.1,0],[0,0,0.1]],"x_ohm":[[0.1,0,0],[0,0.1,0],[0,0,0.1]]}"#
        } else {
            ""
        };
        format!(
            r#"{{"s_base_kva":1000,"v_base_kv":2.4,"slack":"1","v0_pu":[1,1,1],
            "buses":[{{"id":"1","phases":"abc"}},{{"id":"2","phases":"abc","load_kw":[10,10,10],"load_kvar":[5,5,5]}}],
            "lines":[{{"from":"1","to":"2","r_ohm":[[0.1,0,0],[0,0.1,0],[0,0,0.1]],"x_ohm":[[0.2,0,0],[0,0.2,0],[0,0,0.2]]}}{extra}]}}"#
        )
    }

    #[test]
    fn minimal_two_bus() {
        let net = NetworkModel::from_json_str(&two_bus_json(false)).unwrap();
        assert_eq!(net.lines.len(), 1);
        assert_eq!(net.n_node_phases(), 3);
        assert_eq!(net.buses[1].a0, [1.0; 3]);
        assert_eq!(net.path_to_slack(1), vec![0]);
    }

    #[test]
    fn duplicate_line_is_a_cycle() {
        let err = NetworkModel::from_json_str(&two_bus_json(true)).unwrap_err();
        assert!(matches!(err, NetworkError::Topology(_)), "{err}");
    }

    #[test]
    fn cycle_with_correct_line_count() {
        // 4 buses, 3 lines, but one bus is isolated while the rest form a triangle.
        let z = r#""r_ohm":[[0.1,0,0],[0,0.1,0],[0,0,0.1]],"x_ohm":[[0.1,0,0],[0,0.1,0],[0,0,0.1]]"#;
        let text = format!(
            r#"{{"s_base_kva":1000,"v_base_kv":2.4,"slack":"1","v0_pu":[1,1,1],
            "buses":[{{"id":"1","phases":"abc"}},{{"id":"2","phases":"abc"}},{{"id":"3","phases":"abc"}},{{"id":"4","phases":"abc"}}],
            "lines":[{{"from":"1","to":"2",{z}}},{{"from":"2","to":"3",{z}}},{{"from":"3","to":"1",{z}}}]}}"#
        );
        assert!(matches!(NetworkModel::from_json_str(&text), Err(NetworkError::Topology(_))));
    }

    #[test]
    fn phase_mismatch_rejected() {
        let text = r#"{"s_base_kva":1000,"v_base_kv":2.4,"slack":"1","v0_pu":[1,1,1],
            "buses":[{"id":"1","phases":"a"},{"id":"2","phases":"ab"}],
            "lines":[{"from":"1","to":"2","r_ohm":[[0.1,0,0],[0,0.1,0],[0,0,0]],"x_ohm":[[0.1,0,0],[0,0.1,0],[0,0,0]]}]}"#;
        assert!(matches!(NetworkModel::from_json_str(text), Err(NetworkError::Topology(_))));
    }

    #[test]
    fn value_errors() {
        let neg_r = two_bus_json(false).replacen("0.1,0,0", "-0.1,0,0", 1);
        assert!(matches!(NetworkModel::from_json_str(&neg_r), Err(NetworkError::Value(_))));

        let bad_mix = two_bus_json(false)
            .replace(r#""load_kvar":[5,5,5]"#, r#""load_kvar":[5,5,5],"a0":[0.5,0.5,0.5],"a1":[0.4,0.5,0.5]"#);
        assert!(matches!(NetworkModel::from_json_str(&bad_mix), Err(NetworkError::Value(_))));

        let asym = two_bus_json(false).replacen("[[0.2,0,0],[0,0.2,0]", "[[0.2,0.05,0],[0,0.2,0]", 1);
        assert!(matches!(NetworkModel::from_json_str(&asym), Err(NetworkError::Value(_))));
    }

    #[test]
    fn malformed_json() {
        assert!(matches!(NetworkModel::from_json_str("{"), Err(NetworkError::Parse(_))));
        let wrong_len = two_bus_json(false).replace("[10,10,10]", "[10,10]");
        assert!(matches!(NetworkModel::from_json_str(&wrong_len), Err(NetworkError::Parse(_))));
    }

    #[test]
    fn file_round_trip() {
        let net = NetworkModel::from_json_str(&two_bus_json(false)).unwrap();
        let file = net.to_file();
        let text = serde_json::to_string(&file).unwrap();
        let back: NetworkFile = serde_json::from_str(&text).unwrap();
        assert_eq!(file, back);
    }

    #[test]
    fn phase_set_parsing() {
        let s: PhaseSet = "ca".parse().unwrap();
        assert_eq!(s.to_string(), "ac");
        assert!("aa".parse::<PhaseSet>().is_err());
        assert!("d".parse::<PhaseSet>().is_err());
        assert!("".parse::<PhaseSet>().is_err());
    }
}
