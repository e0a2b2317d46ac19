//! Feedback policies on the grid and their file format.
//!
//! A policy file is the 8-byte magic `PDMPPOL1`, a little-endian `u32` header
//! length, a UTF-8 JSON header, then little-endian `u16` action indices:
//! first the main table laid out `[level][mode][node]`, then the
//! expectation-optimal fallback table `[mode][node]`. Node indices run with
//! the first axis fastest.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ControlSet, Grid, GridDescriptor};

const MAGIC: &[u8; 8] = b"PDMPPOL1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Depends on the remaining budget `s` through the level index.
    Threshold,
    /// Expectation-optimal, the same at every level (one stored level).
    Expectation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    kind: PolicyKind,
    grid: GridDescriptor,
    controls: ControlSet,
    modes: usize,
    levels: usize,
    nodes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub kind: PolicyKind,
    pub grid: GridDescriptor,
    pub controls: ControlSet,
    modes: usize,
    levels: usize,
    actions: Vec<u16>,
    fallback: Vec<u16>,
}

impl Policy {
    pub fn new(
        kind: PolicyKind,
        grid: GridDescriptor,
        controls: ControlSet,
        modes: usize,
        actions: Vec<u16>,
        fallback: Vec<u16>,
    ) -> Result<Self> {
        let nodes = grid.node_count();
        let levels = match kind {
            PolicyKind::Expectation => 1,
            PolicyKind::Threshold => grid.levels,
        };
        if actions.len() != levels * modes * nodes || fallback.len() != modes * nodes {
            return Err(Error::Format(format!(
                "action tables have {} and {} entries, expected {} and {}",
                actions.len(),
                fallback.len(),
                levels * modes * nodes,
                modes * nodes
            )));
        }
        let count = controls.len().max(1);
        if let Some(&bad) = actions.iter().chain(&fallback).find(|&&a| a as usize >= count) {
            return Err(Error::Format(format!("action index {bad} out of range for {count} controls")));
        }
        Ok(Policy { kind, grid, controls, modes, levels, actions, fallback })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn is_s_independent(&self) -> bool {
        self.kind == PolicyKind::Expectation
    }

    /// Stored action at a grid node and level.
    pub fn action(&self, level: usize, mode: usize, k: usize) -> usize {
        let nodes = self.grid.node_count();
        let n = if self.is_s_independent() { 0 } else { level };
        self.actions[(n * self.modes + mode) * nodes + k] as usize
    }

    pub fn fallback_action(&self, mode: usize, k: usize) -> usize {
        self.fallback[mode * self.grid.node_count() + k] as usize
    }

    /// Action at an arbitrary point with the nearest-lower node and level;
    /// a negative remaining budget uses the expectation-optimal fallback.
    pub fn lookup(&self, mode: usize, x: &[f64], remaining: Option<f64>) -> usize {
        let k = self.grid.lower_node(x);
        match (self.kind, remaining) {
            (PolicyKind::Threshold, Some(s)) => match self.grid.lower_level(s) {
                Some(n) => self.action(n, mode, k),
                None => self.fallback_action(mode, k),
            },
            (PolicyKind::Threshold, None) => self.fallback_action(mode, k),
            (PolicyKind::Expectation, _) => self.action(0, mode, k),
        }
    }

    /// The same table lifted to every level of `grid`, e.g. for a
    /// threshold-aware simulator.
    pub fn expectation_lift(&self) -> Policy {
        Policy { kind: PolicyKind::Expectation, levels: 1, actions: self.fallback.clone(), ..self.clone() }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = Header {
            kind: self.kind,
            grid: self.grid.clone(),
            controls: self.controls.clone(),
            modes: self.modes,
            levels: self.levels,
            nodes: self.grid.node_count(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?;
        w.write_all(MAGIC)?;
        w.write_all(&(json.len() as u32).to_le_bytes())?;
        w.write_all(&json)?;
        let mut buf = Vec::with_capacity(2 * (self.actions.len() + self.fallback.len()));
        for a in self.actions.iter().chain(&self.fallback) {
            buf.extend_from_slice(&a.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a policy file (bad magic)".into()));
        }
        let mut len = [0u8; 4];
        r.read_exact(&mut len)?;
        let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
        r.read_exact(&mut json)?;
        let h: Header = serde_json::from_slice(&json).map_err(|e| Error::Format(format!("policy header: {e}")))?;
        if h.nodes != h.grid.node_count() {
            return Err(Error::Format("policy header node count disagrees with its grid".into()));
        }
        let count = (h.levels + 1) * h.modes * h.nodes;
        let mut body = Vec::new();
        r.read_to_end(&mut body)?;
        if body.len() != 2 * count {
            return Err(Error::Format(format!("policy body has {} bytes, expected {}", body.len(), 2 * count)));
        }
        let mut all: Vec<u16> = body.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect();
        let fallback = all.split_off(h.levels * h.modes * h.nodes);
        let p = Policy::new(h.kind, h.grid, h.controls, h.modes, all, fallback)?;
        if p.levels != h.levels {
            return Err(Error::Format("policy level count disagrees with its kind".into()));
        }
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Policy::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Exit nodes carry no meaningful action, yet nearest-lower lookup hands them
/// the cell between a low face and the first interior node. Each exit node
/// takes the action of its inward neighbour instead.
pub(crate) fn inherit_exit_actions(grid: &Grid, table: &mut [u16]) {
    let nodes = grid.node_count();
    let [nx, ny] = grid.shape();
    let inward = |i: usize, n: usize| match i {
        _ if n < 3 => i,
        0 => 1,
        _ if i == n - 1 => n - 2,
        _ => i,
    };
    let exits: Vec<(usize, usize)> = (0..nodes)
        .filter(|&k| grid.is_exit(k))
        .filter_map(|k| {
            let [ix, iy] = grid.split(k);
            let src = grid.index(inward(ix, nx), inward(iy, ny));
            (!grid.is_exit(src)).then_some((k, src))
        })
        .collect();
    for block in table.chunks_mut(nodes) {
        for &(k, src) in &exits {
            block[k] = block[src];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Policy {
        let grid = GridDescriptor { lo: vec![0.0], dx: 0.25, nodes: vec![5], ds: 0.5, levels: 3 };
        let controls = ControlSet::Finite { controls: vec![vec![-1.0], vec![1.0]] };
        let actions: Vec<u16> = (0..30).map(|i| (i % 2) as u16).collect();
        Policy::new(PolicyKind::Threshold, grid, controls, 2, actions, vec![1; 10]).unwrap()
    }

    #[test]
    fn file_layout() {
        let p = small();
        let mut buf = Vec::new();
        p.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..8], b"PDMPPOL1");
        let hlen = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
        assert_eq!(buf.len(), 12 + hlen + 2 * 40);
        let body = &buf[12 + hlen..];
        assert_eq!(u16::from_le_bytes([body[2], body[3]]), 1);
        assert_eq!(Policy::read_from(&buf[..]).unwrap(), p);
    }

    #[test]
    fn rejects_corrupt_files() {
        let p = small();
        let mut buf = Vec::new();
        p.write_to(&mut buf).unwrap();
        assert!(Policy::read_from(&buf[..buf.len() - 2]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(Policy::read_from(&bad[..]).is_err());
        let n = bad.len();
        buf[n - 1] = 0x7f;
        assert!(matches!(Policy::read_from(&buf[..]), Err(Error::Format(_))));
    }

    #[test]
    fn nearest_lower_lookup() {
        let p = small();
        assert_eq!(p.lookup(0, &[0.3], Some(0.6)), p.action(1, 0, 1));
        assert_eq!(p.lookup(1, &[0.5], Some(0.5)), p.action(1, 1, 2));
        assert_eq!(p.lookup(1, &[0.49], Some(0.49)), p.action(0, 1, 1));
        assert_eq!(p.lookup(0, &[0.3], Some(-0.1)), 1);
        assert_eq!(p.lookup(0, &[0.3], Some(9.0)), p.action(2, 0, 1));
    }

    #[test]
    fn exit_nodes_take_inward_actions() {
        let spec = crate::catalog::example3();
        let grid = crate::model::build_grid(&spec, 0.25, 0.5, 1.0).unwrap();
        let mut table: Vec<u16> = (0..2 * grid.node_count()).map(|k| k as u16).collect();
        inherit_exit_actions(&grid, &mut table);
        let n = grid.node_count();
        assert_eq!(table[grid.index(0, 2)], grid.index(1, 2) as u16);
        assert_eq!(table[grid.index(0, 0)], grid.index(1, 1) as u16);
        assert_eq!(table[n + grid.index(4, 3)], (n + grid.index(3, 3)) as u16);
        assert_eq!(table[grid.index(2, 2)], grid.index(2, 2) as u16);
    }
}
