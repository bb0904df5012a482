//! Molecular graphs from a restricted SMILES subset, and r-radius vertex
//! typing for the graph network.
//!
//! Supported grammar: organic-subset atoms (`B C N O P S F Cl Br I`),
//! bracket atoms holding an element symbol with an optional ignored hydrogen
//! count (`[Na]`, `[NH2]`), bonds `-` `=` `#`, branches and ring closures
//! `1`..`9`. Aromatic atoms, stereo marks, charges, isotopes and
//! dot-disconnected fragments are rejected.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[rustfmt::skip]
const ELEMENTS: &[&str] = &[
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S",
    "Cl", "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga",
    "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd",
    "Ag", "Cd", "In", "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm",
    "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os",
    "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa",
    "U", "Np", "Pu", "Am", "Cm", "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg",
    "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og",
];

pub fn is_element(symbol: &str) -> bool {
    ELEMENTS.contains(&symbol)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BondOrder {
    Single = 1,
    Double = 2,
    Triple = 3,
}

impl BondOrder {
    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(Self::Single),
            2 => Some(Self::Double),
            3 => Some(Self::Triple),
            _ => None,
        }
    }

    pub fn as_number(self) -> u8 {
        self as u8
    }
}

impl fmt::Display for BondOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_number())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bond {
    pub i: usize,
    pub j: usize,
    pub order: BondOrder,
}

/// Connected, simple, undirected graph with element-labelled vertices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MolecularGraph {
    atoms: Vec<String>,
    bonds: Vec<Bond>,
}

impl MolecularGraph {
    pub fn new(atoms: Vec<String>, bonds: Vec<Bond>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidGraph("molecule has no atoms".into()));
        }
        let n = atoms.len();
        let mut seen = HashSet::new();
        for b in &bonds {
            if b.i >= n || b.j >= n {
                return Err(Error::InvalidGraph(format!(
                    "bond ({}, {}) references a missing atom",
                    b.i, b.j
                )));
            }
            if b.i == b.j {
                return Err(Error::InvalidGraph(format!("self-loop on atom {}", b.i)));
            }
            if !seen.insert((b.i.min(b.j), b.i.max(b.j))) {
                return Err(Error::InvalidGraph(format!(
                    "duplicate bond between {} and {}",
                    b.i, b.j
                )));
            }
        }
        let graph = Self { atoms, bonds };
        if !graph.is_connected() {
            return Err(Error::InvalidGraph("molecule is not connected".into()));
        }
        Ok(graph)
    }

    pub fn atoms(&self) -> &[String] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    /// Neighbour lists with bond orders, in bond insertion order.
    pub fn adjacency(&self) -> Vec<Vec<(usize, BondOrder)>> {
        let mut adj = vec![Vec::new(); self.atoms.len()];
        for b in &self.bonds {
            adj[b.i].push((b.j, b.order));
            adj[b.j].push((b.i, b.order));
        }
        adj
    }

    fn is_connected(&self) -> bool {
        let adj = self.adjacency();
        let mut seen = vec![false; self.atoms.len()];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &(u, _) in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    count += 1;
                    queue.push_back(u);
                }
            }
        }
        count == self.atoms.len()
    }

    /// Relabels vertices: old vertex `i` becomes vertex `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.atoms.len();
        let mut check = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut check[p], true)) {
            return Err(Error::Argument("not a permutation of the vertex set".into()));
        }
        let mut atoms = vec![String::new(); n];
        for (old, &new) in perm.iter().enumerate() {
            atoms[new] = self.atoms[old].clone();
        }
        let bonds = self
            .bonds
            .iter()
            .map(|b| Bond {
                i: perm[b.i],
                j: perm[b.j],
                order: b.order,
            })
            .collect();
        Self::new(atoms, bonds)
    }
}

struct SmilesParser<'a> {
    src: &'a [u8],
    pos: usize,
    atoms: Vec<String>,
    bonds: Vec<Bond>,
    bond_set: HashSet<(usize, usize)>,
}

fn smiles_err(offset: usize, msg: impl Into<String>) -> Error {
    Error::Smiles {
        offset,
        msg: msg.into(),
    }
}

impl SmilesParser<'_> {
    fn add_bond(&mut self, i: usize, j: usize, order: BondOrder, offset: usize) -> Result<()> {
        if i == j {
            return Err(smiles_err(offset, "ring closure bonds an atom to itself"));
        }
        if !self.bond_set.insert((i.min(j), i.max(j))) {
            return Err(smiles_err(offset, format!("duplicate bond between atoms {i} and {j}")));
        }
        self.bonds.push(Bond { i, j, order });
        Ok(())
    }

    fn bracket_atom(&mut self) -> Result<String> {
        let open = self.pos;
        self.pos += 1;
        let start = self.pos;
        match self.src.get(self.pos) {
            Some(c) if c.is_ascii_uppercase() => self.pos += 1,
            Some(c) if c.is_ascii_digit() => return Err(smiles_err(self.pos, "isotopes are not supported")),
            Some(c) if c.is_ascii_lowercase() => return Err(smiles_err(self.pos, "aromatic atoms are not supported")),
            Some(_) => return Err(smiles_err(self.pos, "expected element symbol")),
            None => return Err(smiles_err(open, "unterminated bracket atom")),
        }
        if matches!(self.src.get(self.pos), Some(c) if c.is_ascii_lowercase()) {
            self.pos += 1;
        }
        let symbol = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or_default();
        if !is_element(symbol) {
            return Err(smiles_err(start, format!("unknown element `{symbol}`")));
        }
        let symbol = symbol.to_string();
        if self.src.get(self.pos) == Some(&b'H') {
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(c) if c.is_ascii_digit()) {
                self.pos += 1;
            }
        }
        match self.src.get(self.pos) {
            Some(b']') => {
                self.pos += 1;
                Ok(symbol)
            }
            Some(b'+') | Some(b'-') => Err(smiles_err(self.pos, "charges are not supported")),
            Some(b'@') => Err(smiles_err(self.pos, "stereo marks are not supported")),
            Some(b':') => Err(smiles_err(self.pos, "atom classes are not supported")),
            Some(_) => Err(smiles_err(self.pos, "unexpected character in bracket atom")),
            None => Err(smiles_err(open, "unterminated bracket atom")),
        }
    }

    fn organic_atom(&mut self) -> Result<String> {
        let c = self.src[self.pos];
        let next = self.src.get(self.pos + 1).copied();
        let (symbol, len) = match (c, next) {
            (b'C', Some(b'l')) => ("Cl", 2),
            (b'B', Some(b'r')) => ("Br", 2),
            (b'B', _) => ("B", 1),
            (b'C', _) => ("C", 1),
            (b'N', _) => ("N", 1),
            (b'O', _) => ("O", 1),
            (b'P', _) => ("P", 1),
            (b'S', _) => ("S", 1),
            (b'F', _) => ("F", 1),
            (b'I', _) => ("I", 1),
            _ => return Err(smiles_err(self.pos, format!("unknown atom symbol `{}`", c as char))),
        };
        self.pos += len;
        Ok(symbol.to_string())
    }

    fn parse(mut self) -> Result<MolecularGraph> {
        if self.src.is_empty() {
            return Err(smiles_err(0, "empty SMILES string"));
        }
        let mut prev: Option<usize> = None;
        let mut pending: Option<(BondOrder, usize)> = None;
        let mut branches: Vec<(usize, usize)> = Vec::new();
        let mut rings: [Option<(usize, Option<BondOrder>, usize)>; 10] = [None; 10];

        while self.pos < self.src.len() {
            let offset = self.pos;
            let c = self.src[offset];
            match c {
                b'(' => {
                    let Some(p) = prev else {
                        return Err(smiles_err(offset, "branch without a preceding atom"));
                    };
                    if pending.is_some() {
                        return Err(smiles_err(offset, "bond symbol before branch"));
                    }
                    branches.push((p, offset));
                    self.pos += 1;
                }
                b')' => {
                    if let Some((_, at)) = pending {
                        return Err(smiles_err(at, "dangling bond symbol"));
                    }
                    let Some((p, _)) = branches.pop() else {
                        return Err(smiles_err(offset, "unmatched `)`"));
                    };
                    prev = Some(p);
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' => {
                    if prev.is_none() {
                        return Err(smiles_err(offset, "bond without a preceding atom"));
                    }
                    if pending.is_some() {
                        return Err(smiles_err(offset, "consecutive bond symbols"));
                    }
                    let order = match c {
                        b'-' => BondOrder::Single,
                        b'=' => BondOrder::Double,
                        _ => BondOrder::Triple,
                    };
                    pending = Some((order, offset));
                    self.pos += 1;
                }
                b'1'..=b'9' => {
                    let Some(p) = prev else {
                        return Err(smiles_err(offset, "ring closure without a preceding atom"));
                    };
                    let digit = (c - b'0') as usize;
                    let here = pending.take().map(|(o, _)| o);
                    match rings[digit].take() {
                        Some((other, there, _)) => {
                            let order = match (here, there) {
                                (Some(a), Some(b)) if a != b => {
                                    return Err(smiles_err(offset, "conflicting bond orders on ring closure"))
                                }
                                (a, b) => a.or(b).unwrap_or(BondOrder::Single),
                            };
                            self.add_bond(other, p, order, offset)?;
                        }
                        None => rings[digit] = Some((p, here, offset)),
                    }
                    self.pos += 1;
                }
                b'0' => return Err(smiles_err(offset, "ring-closure digit 0 is not supported")),
                b'%' => return Err(smiles_err(offset, "two-digit ring closures are not supported")),
                b'[' | b'A'..=b'Z' => {
                    let symbol = if c == b'[' {
                        self.bracket_atom()?
                    } else {
                        self.organic_atom()?
                    };
                    let idx = self.atoms.len();
                    self.atoms.push(symbol);
                    if let Some(p) = prev {
                        let order = pending.take().map_or(BondOrder::Single, |(o, _)| o);
                        self.add_bond(p, idx, order, offset)?;
                    }
                    prev = Some(idx);
                }
                b'a'..=b'z' => return Err(smiles_err(offset, "aromatic atoms are not supported")),
                b'/' | b'\\' | b'@' => return Err(smiles_err(offset, "stereo marks are not supported")),
                b'+' => return Err(smiles_err(offset, "charges are not supported")),
                b'.' => return Err(smiles_err(offset, "disconnected fragments are not supported")),
                _ => return Err(smiles_err(offset, format!("unexpected character `{}`", c as char))),
            }
        }
        if let Some((_, at)) = pending {
            return Err(smiles_err(at, "dangling bond symbol"));
        }
        if let Some(&(_, at)) = branches.last() {
            return Err(smiles_err(at, "unmatched `(`"));
        }
        if let Some((_, _, at)) = rings.iter().flatten().min_by_key(|r| r.2) {
            return Err(smiles_err(*at, "unclosed ring"));
        }
        MolecularGraph::new(self.atoms, self.bonds)
    }
}

/// Parses one molecule written in the supported SMILES subset.
pub fn parse_smiles(s: &str) -> Result<MolecularGraph> {
    SmilesParser {
        src: s.as_bytes(),
        pos: 0,
        atoms: Vec::new(),
        bonds: Vec::new(),
        bond_set: HashSet::new(),
    }
    .parse()
}

/// One row of a drug-structure CSV (`id,smiles`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructureRecord {
    pub id: String,
    pub smiles: String,
}

impl StructureRecord {
    pub fn graph(&self) -> Result<MolecularGraph> {
        parse_smiles(&self.smiles).map_err(|e| Error::Structure {
            id: self.id.clone(),
            source: Box::new(e),
        })
    }
}

pub fn parse_structures_csv(text: &str) -> Result<Vec<StructureRecord>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == "id,smiles" => {}
        other => {
            return Err(Error::Format {
                line: other.map_or(1, |(l, _)| l),
                msg: "header must be `id,smiles`".into(),
            })
        }
    }
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in lines {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != 2 || cells[0].is_empty() {
            return Err(Error::Format {
                line: lineno,
                msg: "expected `id,smiles`".into(),
            });
        }
        if !seen.insert(cells[0].to_string()) {
            return Err(Error::DuplicateKey(cells[0].to_string()));
        }
        out.push(StructureRecord {
            id: cells[0].to_string(),
            smiles: cells[1].to_string(),
        });
    }
    Ok(out)
}

pub fn load_structures(path: impl AsRef<Path>) -> Result<Vec<StructureRecord>> {
    let path = path.as_ref();
    parse_structures_csv(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

/// Parses the plain-graph fallback format.
///
/// Each molecule is a block of `atom <index> <element>` and
/// `bond <i> <j> <order>` lines, blocks separated by blank lines. An optional
/// `molecule <id>` line names the block; `#` starts a comment line.
pub fn parse_plain_graphs(text: &str) -> Result<Vec<(Option<String>, MolecularGraph)>> {
    struct Block {
        id: Option<String>,
        atoms: Vec<String>,
        bonds: Vec<Bond>,
        first_line: usize,
    }
    fn finish(block: Block, out: &mut Vec<(Option<String>, MolecularGraph)>) -> Result<()> {
        let graph = MolecularGraph::new(block.atoms, block.bonds).map_err(|e| Error::Format {
            line: block.first_line,
            msg: e.to_string(),
        })?;
        out.push((block.id, graph));
        Ok(())
    }

    let mut out = Vec::new();
    let mut current: Option<Block> = None;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.starts_with('#') {
            continue;
        }
        if line.is_empty() {
            if let Some(b) = current.take() {
                finish(b, &mut out)?;
            }
            continue;
        }
        let block = current.get_or_insert_with(|| Block {
            id: None,
            atoms: Vec::new(),
            bonds: Vec::new(),
            first_line: lineno,
        });
        let fields: Vec<&str> = line.split_whitespace().collect();
        let bad = |msg: &str| Error::Format {
            line: lineno,
            msg: msg.to_string(),
        };
        let index = |s: &str| s.parse::<usize>().map_err(|_| bad("vertex index is not an integer"));
        match fields.as_slice() {
            ["molecule", id] => {
                if block.id.is_some() || !block.atoms.is_empty() {
                    return Err(bad("`molecule` must open its block"));
                }
                block.id = Some((*id).to_string());
            }
            ["atom", idx, element] => {
                if index(idx)? != block.atoms.len() {
                    return Err(bad("atom indices must be consecutive from 0"));
                }
                if !is_element(element) {
                    return Err(bad(&format!("unknown element `{element}`")));
                }
                block.atoms.push((*element).to_string());
            }
            ["bond", a, b, order] => {
                let order = match *order {
                    "1" | "single" => BondOrder::Single,
                    "2" | "double" => BondOrder::Double,
                    "3" | "triple" => BondOrder::Triple,
                    _ => return Err(bad("bond order must be 1, 2 or 3")),
                };
                block.bonds.push(Bond {
                    i: index(a)?,
                    j: index(b)?,
                    order,
                });
            }
            _ => return Err(bad("expected `atom <index> <element>` or `bond <i> <j> <order>`")),
        }
    }
    if let Some(b) = current.take() {
        finish(b, &mut out)?;
    }
    Ok(out)
}

fn encode_from(
    atoms: &[String],
    adj: &[Vec<(usize, BondOrder)>],
    v: usize,
    parent: Option<usize>,
    depth: usize,
    bond_orders: bool,
) -> String {
    let mut out = atoms[v].clone();
    if depth == 0 {
        return out;
    }
    let mut children: Vec<(u8, &str, String)> = adj[v]
        .iter()
        .filter(|&&(u, _)| Some(u) != parent)
        .map(|&(u, order)| {
            let code = if bond_orders { order.as_number() } else { 0 };
            (
                code,
                atoms[u].as_str(),
                encode_from(atoms, adj, u, Some(v), depth - 1, bond_orders),
            )
        })
        .collect();
    if children.is_empty() {
        return out;
    }
    children.sort();
    out.push('(');
    for (k, (code, _, enc)) in children.iter().enumerate() {
        if k > 0 {
            out.push(',');
        }
        out.push(if bond_orders { (b'0' + code) as char } else { '~' });
        out.push_str(enc);
    }
    out.push(')');
    out
}

/// Canonical radius-`r` neighbourhood encoding of every vertex.
///
/// The neighbourhood is unfolded as a non-backtracking tree of depth `r`;
/// children are sorted by (bond order, atom label, child encoding).
pub fn canonical_encodings(graph: &MolecularGraph, radius: usize, bond_orders: bool) -> Vec<String> {
    let adj = graph.adjacency();
    (0..graph.atom_count())
        .map(|v| encode_from(&graph.atoms, &adj, v, None, radius, bond_orders))
        .collect()
}

/// Vocabulary of r-radius vertex types.
///
/// Ids are dense from 0. Once frozen, unseen encodings map to
/// [`SubgraphDictionary::unknown_id`], which is one past the last entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgraphDictionary {
    radius: usize,
    bond_orders: bool,
    entries: BTreeMap<String, u32>,
    frozen: bool,
}

impl SubgraphDictionary {
    pub fn new(radius: usize, bond_orders: bool) -> Self {
        Self {
            radius,
            bond_orders,
            entries: BTreeMap::new(),
            frozen: false,
        }
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn uses_bond_orders(&self) -> bool {
        self.bond_orders
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn unknown_id(&self) -> u32 {
        self.entries.len() as u32
    }

    /// Rows needed in an embedding table: every entry plus the unknown slot.
    pub fn vocab_size(&self) -> usize {
        self.entries.len() + 1
    }

    pub fn get(&self, encoding: &str) -> Option<u32> {
        self.entries.get(encoding).copied()
    }

    fn id_for(&mut self, encoding: String) -> u32 {
        if let Some(&id) = self.entries.get(&encoding) {
            return id;
        }
        if self.frozen {
            return self.unknown_id();
        }
        let id = self.entries.len() as u32;
        self.entries.insert(encoding, id);
        id
    }
}

/// One type id per vertex; grows `dict` unless it is frozen.
pub fn assign_r_radius_types(graph: &MolecularGraph, radius: usize, dict: &mut SubgraphDictionary) -> Result<Vec<u32>> {
    if dict.radius != radius {
        return Err(Error::Argument(format!(
            "dictionary radius {} does not match requested radius {radius}",
            dict.radius
        )));
    }
    Ok(canonical_encodings(graph, radius, dict.bond_orders)
        .into_iter()
        .map(|enc| dict.id_for(enc))
        .collect())
}

/// Type ids against a frozen (or read-only) dictionary; unseen encodings
/// map to the unknown id.
pub fn lookup_r_radius_types(graph: &MolecularGraph, dict: &SubgraphDictionary) -> Vec<u32> {
    canonical_encodings(graph, dict.radius, dict.bond_orders)
        .into_iter()
        .map(|enc| dict.get(&enc).unwrap_or(dict.unknown_id()))
        .collect()
}
