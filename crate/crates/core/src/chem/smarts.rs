//! SMARTS matching over decoded molecules.
//!
//! Covers the syntax used by the logP atom types, the QED acceptor and alert
//! lists and the strict rotatable-bond pattern: bracket atoms with logical
//! operators, recursive `$()` environments, ring primitives (`R`, `r`, `@`),
//! ring closures and dot-separated components. Chirality and atom maps are
//! not supported.

use std::collections::HashSet;

use crate::aromatic::{cyclic_bonds, find_rings};
use crate::graph::MoleculeGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BondKind {
    Single,
    Double,
    Triple,
    Aromatic,
}

#[derive(Debug, Clone, Copy)]
pub struct Node {
    pub atomic_number: u8,
    pub aromatic: bool,
    pub total_h: u8,
    /// Neighbors present in the graph (hydrogen nodes included when expanded).
    pub degree: u8,
    /// Total connections, hydrogens included.
    pub connectivity: u8,
    /// Kekulé bond-order sum plus hydrogens.
    pub valence: u8,
    pub charge: i8,
    pub isotope: u16,
    /// Number of rings of the ring set containing the atom.
    pub ring_count: u8,
    /// Size of the smallest such ring, 0 when acyclic.
    pub smallest_ring: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub to: usize,
    pub kind: BondKind,
    pub in_ring: bool,
}

/// Matching target. Heavy atoms come first; hydrogens, when present, follow
/// as separate nodes.
#[derive(Debug, Clone)]
pub struct ExpandedGraph {
    pub nodes: Vec<Node>,
    pub adjacency: Vec<Vec<Edge>>,
    pub heavy_atoms: usize,
}

impl ExpandedGraph {
    /// Every hydrogen becomes its own node.
    pub fn new(g: &MoleculeGraph) -> Self {
        Self::build(g, true)
    }

    /// Heavy atoms only; hydrogens are visible through `H` and `X`.
    pub fn heavy(g: &MoleculeGraph) -> Self {
        Self::build(g, false)
    }

    fn build(g: &MoleculeGraph, with_h: bool) -> Self {
        let n = g.atom_count();
        let cyclic = cyclic_bonds(g);
        let mut ring_count = vec![0u8; n];
        let mut smallest = vec![0u8; n];
        if cyclic.iter().any(|&c| c) {
            for ring in find_rings(g) {
                let len = ring.len().min(u8::MAX as usize) as u8;
                for &a in &ring.atoms {
                    ring_count[a] = ring_count[a].saturating_add(1);
                    if smallest[a] == 0 || len < smallest[a] {
                        smallest[a] = len;
                    }
                }
            }
        }
        let mut nodes = Vec::with_capacity(if with_h { n * 2 } else { n });
        let mut adjacency: Vec<Vec<Edge>> = vec![Vec::new(); n];
        for (i, a) in g.atoms().iter().enumerate() {
            let h = a.hydrogens;
            nodes.push(Node {
                atomic_number: a.element.atomic_number(),
                aromatic: a.aromatic,
                total_h: h,
                degree: g.degree(i) as u8 + if with_h { h } else { 0 },
                connectivity: g.degree(i) as u8 + h,
                valence: g.bond_order_sum(i) + h,
                charge: 0,
                isotope: 0,
                ring_count: ring_count[i],
                smallest_ring: smallest[i],
            });
        }
        for (idx, b) in g.bonds().iter().enumerate() {
            let kind = if b.aromatic {
                BondKind::Aromatic
            } else {
                match b.order {
                    1 => BondKind::Single,
                    2 => BondKind::Double,
                    _ => BondKind::Triple,
                }
            };
            adjacency[b.a].push(Edge { to: b.b, kind, in_ring: cyclic[idx] });
            adjacency[b.b].push(Edge { to: b.a, kind, in_ring: cyclic[idx] });
        }
        if with_h {
            let hydrogen = Node {
                atomic_number: 1,
                aromatic: false,
                total_h: 0,
                degree: 1,
                connectivity: 1,
                valence: 1,
                charge: 0,
                isotope: 0,
                ring_count: 0,
                smallest_ring: 0,
            };
            for (i, a) in g.atoms().iter().enumerate() {
                for _ in 0..a.hydrogens {
                    let h = nodes.len();
                    nodes.push(hydrogen);
                    adjacency.push(vec![Edge { to: i, kind: BondKind::Single, in_ring: false }]);
                    adjacency[i].push(Edge { to: h, kind: BondKind::Single, in_ring: false });
                }
            }
        }
        Self { nodes, adjacency, heavy_atoms: n }
    }
}

#[derive(Debug, Clone)]
enum Primitive {
    /// `aromatic == None` for `#n`.
    Element { number: u8, aromatic: Option<bool> },
    Any,
    Aromatic,
    Aliphatic,
    HCount(u8),
    Degree(u8),
    Connectivity(u8),
    Valence(u8),
    Charge(i8),
    Isotope(u16),
    /// `R` alone means "in some ring".
    RingCount(Option<u8>),
    RingSize(Option<u8>),
    Recursive(Box<Pattern>),
}

#[derive(Debug, Clone)]
enum Expr<P> {
    Prim(P),
    Not(Box<Expr<P>>),
    And(Vec<Expr<P>>),
    Or(Vec<Expr<P>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BondPrim {
    Single,
    Double,
    Triple,
    Aromatic,
    Any,
    Ring,
}

type AtomExpr = Expr<Primitive>;

#[derive(Debug, Clone)]
enum BondExpr {
    /// Unwritten bond: single or aromatic.
    Implicit,
    Explicit(Expr<BondPrim>),
}

#[derive(Debug, Clone)]
pub struct Pattern {
    atoms: Vec<AtomExpr>,
    /// Tree bond to an earlier atom; `None` starts a new component.
    parents: Vec<Option<(usize, BondExpr)>>,
    /// Ring-closure bonds to earlier atoms, checked when the later end maps.
    closures: Vec<Vec<(usize, BondExpr)>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError(pub String);

const TWO_LETTER: &[(&str, u8)] = &[
    ("Cl", 17),
    ("Br", 35),
    ("Li", 3),
    ("Be", 4),
    ("Na", 11),
    ("Mg", 12),
    ("Al", 13),
    ("Si", 14),
    ("Ca", 20),
    ("Ti", 22),
    ("Mn", 25),
    ("Fe", 26),
    ("Ni", 28),
    ("Cu", 29),
    ("Zn", 30),
    ("Ga", 31),
    ("Ge", 32),
    ("As", 33),
    ("Se", 34),
    ("se", 34),
    ("Sr", 38),
    ("Nb", 41),
    ("Mo", 42),
    ("Ru", 44),
    ("Rh", 45),
    ("Pd", 46),
    ("Ag", 47),
    ("Cd", 48),
    ("Sn", 50),
    ("Sb", 51),
    ("Te", 52),
    ("Ba", 56),
    ("Ho", 67),
    ("Hf", 72),
    ("Au", 79),
    ("Hg", 80),
    ("Tl", 81),
    ("Pb", 82),
    ("Bi", 83),
];

fn one_letter(c: u8) -> Option<u8> {
    Some(match c.to_ascii_uppercase() {
        b'B' => 5,
        b'C' => 6,
        b'N' => 7,
        b'O' => 8,
        b'F' if c == b'F' => 9,
        b'P' => 15,
        b'S' => 16,
        b'K' if c == b'K' => 19,
        b'I' if c == b'I' => 53,
        _ => return None,
    })
}

struct Cursor<'a> {
    s: &'a [u8],
    i: usize,
}

impl Cursor<'_> {
    fn peek(&self) -> Option<u8> {
        self.s.get(self.i).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.peek();
        self.i += 1;
        c
    }

    fn number(&mut self) -> Option<u32> {
        let start = self.i;
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.i += 1;
        }
        if start == self.i {
            None
        } else {
            std::str::from_utf8(&self.s[start..self.i]).ok()?.parse().ok()
        }
    }

    fn err(&self, what: &str) -> ParseError {
        ParseError(format!("{what} at offset {}", self.i))
    }

    /// Element symbol at the cursor. Two-letter symbols are only tried inside
    /// brackets, as in SMILES.
    fn symbol(&mut self, bracket: bool) -> Option<(u8, bool)> {
        let rest = &self.s[self.i..];
        let two: &[(&str, u8)] = if bracket { TWO_LETTER } else { &TWO_LETTER[..2] };
        for &(sym, number) in two {
            if rest.starts_with(sym.as_bytes()) {
                self.i += 2;
                return Some((number, sym == "se"));
            }
        }
        let c = *rest.first()?;
        let number = one_letter(c)?;
        if c.is_ascii_lowercase() && !matches!(c, b'b' | b'c' | b'n' | b'o' | b'p' | b's') {
            return None;
        }
        self.i += 1;
        Some((number, c.is_ascii_lowercase()))
    }

    /// Text up to the parenthesis closing the one just consumed.
    fn balanced(&mut self) -> Result<&str, ParseError> {
        let start = self.i;
        let mut depth = 1;
        while let Some(c) = self.bump() {
            match c {
                b'(' => depth += 1,
                b')' => {
                    depth -= 1;
                    if depth == 0 {
                        return std::str::from_utf8(&self.s[start..self.i - 1]).map_err(|_| self.err("bad utf-8"));
                    }
                }
                _ => {}
            }
        }
        Err(self.err("unbalanced $("))
    }
}

fn is_bond_char(c: u8) -> bool {
    matches!(c, b'-' | b'=' | b'#' | b':' | b'~' | b'@' | b'!' | b'&' | b',' | b';')
}

impl Pattern {
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let mut cur = Cursor { s: text.as_bytes(), i: 0 };
        let mut atoms = Vec::new();
        let mut parents: Vec<Option<(usize, BondExpr)>> = Vec::new();
        let mut closures: Vec<Vec<(usize, BondExpr)>> = Vec::new();
        let mut open: Vec<Option<(usize, BondExpr)>> = vec![None; 100];
        let mut branch_stack: Vec<usize> = Vec::new();
        let mut prev: Option<usize> = None;
        let mut pending: Option<Expr<BondPrim>> = None;
        while let Some(c) = cur.peek() {
            if is_bond_char(c) {
                if pending.is_some() {
                    return Err(cur.err("two bonds in a row"));
                }
                pending = Some(parse_bond(&mut cur)?);
                continue;
            }
            match c {
                b'(' => {
                    cur.bump();
                    branch_stack.push(prev.ok_or_else(|| cur.err("branch before atom"))?);
                }
                b')' => {
                    cur.bump();
                    prev = Some(branch_stack.pop().ok_or_else(|| cur.err("unbalanced )"))?);
                }
                b'.' => {
                    cur.bump();
                    prev = None;
                }
                b'0'..=b'9' | b'%' => {
                    let digit = if c == b'%' {
                        cur.bump();
                        let hi = cur.bump().filter(u8::is_ascii_digit).ok_or_else(|| cur.err("ring label"))?;
                        let lo = cur.bump().filter(u8::is_ascii_digit).ok_or_else(|| cur.err("ring label"))?;
                        ((hi - b'0') * 10 + (lo - b'0')) as usize
                    } else {
                        cur.bump();
                        (c - b'0') as usize
                    };
                    let here = prev.ok_or_else(|| cur.err("ring closure before atom"))?;
                    let bond = pending.take().map(BondExpr::Explicit);
                    match open[digit].take() {
                        None => open[digit] = Some((here, bond.unwrap_or(BondExpr::Implicit))),
                        Some((other, first)) => {
                            if other == here {
                                return Err(cur.err("ring closure to itself"));
                            }
                            let expr = match (first, bond) {
                                (BondExpr::Implicit, Some(b)) => b,
                                (first, _) => first,
                            };
                            closures[here].push((other, expr));
                        }
                    }
                }
                _ => {
                    let expr = if c == b'[' {
                        cur.bump();
                        let e = parse_low(&mut cur)?;
                        if cur.bump() != Some(b']') {
                            return Err(cur.err("expected ]"));
                        }
                        e
                    } else if matches!(c, b'a' | b'A' | b'*') {
                        cur.bump();
                        Expr::Prim(match c {
                            b'a' => Primitive::Aromatic,
                            b'A' => Primitive::Aliphatic,
                            _ => Primitive::Any,
                        })
                    } else {
                        let (number, aromatic) = cur.symbol(false).ok_or_else(|| cur.err("unknown atom"))?;
                        Expr::Prim(Primitive::Element { number, aromatic: Some(aromatic) })
                    };
                    let idx = atoms.len();
                    atoms.push(expr);
                    closures.push(Vec::new());
                    let bond = pending.take().map(BondExpr::Explicit).unwrap_or(BondExpr::Implicit);
                    parents.push(prev.map(|p| (p, bond)));
                    prev = Some(idx);
                }
            }
        }
        if atoms.is_empty() || !branch_stack.is_empty() || pending.is_some() || open.iter().any(Option::is_some) {
            return Err(ParseError(format!("incomplete pattern `{text}`")));
        }
        Ok(Self { atoms, parents, closures })
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    /// Whether the pattern matches with its first atom mapped onto `root`.
    pub fn matches_at(&self, g: &ExpandedGraph, root: usize) -> bool {
        let mut map = Vec::with_capacity(self.atoms.len());
        self.try_map(g, &mut map, root) && self.extend(g, &mut map, &mut |_| true)
    }

    pub fn has_match(&self, g: &ExpandedGraph) -> bool {
        (0..g.nodes.len()).any(|root| self.matches_at(g, root))
    }

    /// Number of matches that differ in their set of target atoms.
    pub fn count_unique(&self, g: &ExpandedGraph) -> usize {
        let mut seen: HashSet<Vec<usize>> = HashSet::new();
        let mut map = Vec::with_capacity(self.atoms.len());
        for root in 0..g.nodes.len() {
            if self.try_map(g, &mut map, root) {
                self.extend(g, &mut map, &mut |m| {
                    let mut key = m.to_vec();
                    key.sort_unstable();
                    seen.insert(key);
                    false
                });
                map.clear();
            }
        }
        seen.len()
    }

    /// Pushes `cand` as the image of the next pattern atom when the atom and
    /// every bond back to mapped atoms agree.
    fn try_map(&self, g: &ExpandedGraph, map: &mut Vec<usize>, cand: usize) -> bool {
        let next = map.len();
        if map.contains(&cand) || !atom_matches(&self.atoms[next], g, cand) {
            return false;
        }
        for (other, bond) in &self.closures[next] {
            match g.adjacency[cand].iter().find(|e| e.to == map[*other]) {
                Some(edge) if bond_matches(bond, edge) => {}
                _ => return false,
            }
        }
        map.push(cand);
        true
    }

    /// Depth-first completion. `done` sees each full mapping and returns
    /// true to stop the search.
    fn extend(&self, g: &ExpandedGraph, map: &mut Vec<usize>, done: &mut dyn FnMut(&[usize]) -> bool) -> bool {
        let next = map.len();
        if next == self.atoms.len() {
            return done(map);
        }
        match &self.parents[next] {
            Some((parent, bond)) => {
                for edge in &g.adjacency[map[*parent]] {
                    if bond_matches(bond, edge) && self.try_map(g, map, edge.to) {
                        if self.extend(g, map, done) {
                            return true;
                        }
                        map.pop();
                    }
                }
            }
            None => {
                for cand in 0..g.nodes.len() {
                    if self.try_map(g, map, cand) {
                        if self.extend(g, map, done) {
                            return true;
                        }
                        map.pop();
                    }
                }
            }
        }
        false
    }
}

fn parse_bond(cur: &mut Cursor) -> Result<Expr<BondPrim>, ParseError> {
    fn unary(cur: &mut Cursor) -> Result<Expr<BondPrim>, ParseError> {
        let c = cur.bump().ok_or_else(|| cur.err("unexpected end"))?;
        Ok(Expr::Prim(match c {
            b'!' => return Ok(Expr::Not(Box::new(unary(cur)?))),
            b'-' => BondPrim::Single,
            b'=' => BondPrim::Double,
            b'#' => BondPrim::Triple,
            b':' => BondPrim::Aromatic,
            b'~' => BondPrim::Any,
            b'@' => BondPrim::Ring,
            _ => return Err(cur.err("bad bond primitive")),
        }))
    }
    let starts = |c: Option<u8>| matches!(c, Some(b'-' | b'=' | b'#' | b':' | b'~' | b'@' | b'!'));
    let mut lows = Vec::new();
    loop {
        let mut ors = Vec::new();
        loop {
            let mut ands = vec![unary(cur)?];
            loop {
                if cur.peek() == Some(b'&') {
                    cur.bump();
                    ands.push(unary(cur)?);
                } else if starts(cur.peek()) {
                    ands.push(unary(cur)?);
                } else {
                    break;
                }
            }
            ors.push(collapse(ands, Expr::And));
            if cur.peek() != Some(b',') {
                break;
            }
            cur.bump();
        }
        lows.push(collapse(ors, Expr::Or));
        if cur.peek() != Some(b';') {
            break;
        }
        cur.bump();
    }
    Ok(collapse(lows, Expr::And))
}

fn parse_low(cur: &mut Cursor) -> Result<AtomExpr, ParseError> {
    let mut terms = vec![parse_or(cur)?];
    while cur.peek() == Some(b';') {
        cur.bump();
        terms.push(parse_or(cur)?);
    }
    Ok(collapse(terms, Expr::And))
}

fn parse_or(cur: &mut Cursor) -> Result<AtomExpr, ParseError> {
    let mut terms = vec![parse_and(cur)?];
    while cur.peek() == Some(b',') {
        cur.bump();
        terms.push(parse_and(cur)?);
    }
    Ok(collapse(terms, Expr::Or))
}

fn parse_and(cur: &mut Cursor) -> Result<AtomExpr, ParseError> {
    let mut terms = Vec::new();
    loop {
        match cur.peek() {
            None | Some(b']' | b';' | b',') => break,
            Some(b'&') => {
                cur.bump();
            }
            _ => terms.push(parse_unary(cur)?),
        }
    }
    if terms.is_empty() {
        return Err(cur.err("empty atom expression"));
    }
    Ok(collapse(terms, Expr::And))
}

fn collapse<P>(mut terms: Vec<Expr<P>>, wrap: fn(Vec<Expr<P>>) -> Expr<P>) -> Expr<P> {
    if terms.len() == 1 {
        terms.pop().unwrap()
    } else {
        wrap(terms)
    }
}

fn parse_unary(cur: &mut Cursor) -> Result<AtomExpr, ParseError> {
    let c = cur.peek().ok_or_else(|| cur.err("unexpected end"))?;
    let count = |cur: &mut Cursor| cur.number().map(|n| n as u8);
    let prim = match c {
        b'!' => {
            cur.bump();
            return Ok(Expr::Not(Box::new(parse_unary(cur)?)));
        }
        b'$' => {
            cur.bump();
            if cur.bump() != Some(b'(') {
                return Err(cur.err("expected ( after $"));
            }
            let inner = cur.balanced()?.to_string();
            Primitive::Recursive(Box::new(Pattern::parse(&inner)?))
        }
        b'0'..=b'9' => Primitive::Isotope(cur.number().unwrap_or(0) as u16),
        b'#' => {
            cur.bump();
            let n = cur.number().ok_or_else(|| cur.err("expected atomic number"))?;
            Primitive::Element { number: n as u8, aromatic: None }
        }
        b'*' => {
            cur.bump();
            Primitive::Any
        }
        b'+' | b'-' => {
            cur.bump();
            let sign: i8 = if c == b'+' { 1 } else { -1 };
            let mut n = cur.number().map(|n| n as i8);
            if n.is_none() {
                let mut repeat = 1;
                while cur.peek() == Some(c) {
                    cur.bump();
                    repeat += 1;
                }
                n = Some(repeat);
            }
            Primitive::Charge(sign * n.unwrap_or(1))
        }
        _ => {
            if let Some((number, aromatic)) = cur.symbol(true) {
                Primitive::Element { number, aromatic: Some(aromatic) }
            } else {
                cur.bump();
                match c {
                    b'H' => Primitive::HCount(count(cur).unwrap_or(1)),
                    b'D' => Primitive::Degree(count(cur).unwrap_or(1)),
                    b'X' => Primitive::Connectivity(count(cur).unwrap_or(1)),
                    b'v' => Primitive::Valence(count(cur).unwrap_or(1)),
                    b'R' => Primitive::RingCount(count(cur)),
                    b'r' => Primitive::RingSize(count(cur)),
                    b'a' => Primitive::Aromatic,
                    b'A' => Primitive::Aliphatic,
                    _ => return Err(cur.err("unknown primitive")),
                }
            }
        }
    };
    Ok(Expr::Prim(prim))
}

fn eval<P>(e: &Expr<P>, leaf: &mut impl FnMut(&P) -> bool) -> bool {
    match e {
        Expr::Prim(p) => leaf(p),
        Expr::Not(inner) => !eval(inner, leaf),
        Expr::And(terms) => terms.iter().all(|t| eval(t, leaf)),
        Expr::Or(terms) => terms.iter().any(|t| eval(t, leaf)),
    }
}

fn atom_matches(e: &AtomExpr, g: &ExpandedGraph, idx: usize) -> bool {
    let node = &g.nodes[idx];
    eval(e, &mut |p| match p {
        Primitive::Element { number, aromatic } => {
            node.atomic_number == *number && aromatic.is_none_or(|a| a == node.aromatic)
        }
        Primitive::Any => true,
        Primitive::Aromatic => node.aromatic,
        Primitive::Aliphatic => !node.aromatic,
        Primitive::HCount(h) => node.total_h == *h,
        Primitive::Degree(d) => node.degree == *d,
        Primitive::Connectivity(x) => node.connectivity == *x,
        Primitive::Valence(v) => node.valence == *v,
        Primitive::Charge(q) => node.charge == *q,
        Primitive::Isotope(m) => node.isotope == *m,
        Primitive::RingCount(None) | Primitive::RingSize(None) => node.ring_count > 0,
        Primitive::RingCount(Some(n)) => node.ring_count == *n,
        Primitive::RingSize(Some(n)) => node.smallest_ring == *n,
        Primitive::Recursive(p) => p.matches_at(g, idx),
    })
}

fn bond_matches(b: &BondExpr, edge: &Edge) -> bool {
    match b {
        BondExpr::Implicit => matches!(edge.kind, BondKind::Single | BondKind::Aromatic),
        BondExpr::Explicit(e) => eval(e, &mut |p| match p {
            BondPrim::Single => edge.kind == BondKind::Single,
            BondPrim::Double => edge.kind == BondKind::Double,
            BondPrim::Triple => edge.kind == BondKind::Triple,
            BondPrim::Aromatic => edge.kind == BondKind::Aromatic,
            BondPrim::Any => true,
            BondPrim::Ring => edge.in_ring,
        }),
    }
}
