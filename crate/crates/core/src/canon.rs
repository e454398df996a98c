//! Canonical SMILES-like text for decoded graphs.
//!
//! Atoms are first partitioned by invariants and refined by neighbour
//! colours (Morgan-style). Remaining ties are broken by individualizing one
//! atom of the first non-trivial cell and refining again; every leaf of that
//! search yields a total atom order and a DFS string, and the smallest string
//! wins. Equal strings from different leaves reveal automorphisms, which
//! prune sibling branches.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ChemError;
use crate::graph::{Element, MoleculeGraph};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CanonicalForm(String);

impl CanonicalForm {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }

    /// Wraps text already produced by [`canonicalize`], e.g. read back from
    /// a cache. No check is made.
    pub fn from_canonical(text: String) -> Self {
        Self(text)
    }
}

impl fmt::Display for CanonicalForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn canonicalize(g: &MoleculeGraph) -> Result<CanonicalForm, ChemError> {
    if !g.is_valid() {
        return Err(ChemError::InvalidMolecule);
    }
    let (text, _) = canonical_order(g);
    Ok(CanonicalForm(text))
}

/// The canonical form together with the graph renumbered into canonical
/// atom order. Floating-point sums over atoms then run in the same order for
/// every bitstring of a class, so scores agree to the last bit.
pub fn canonical_graph(g: &MoleculeGraph) -> Result<(CanonicalForm, MoleculeGraph), ChemError> {
    if !g.is_valid() {
        return Err(ChemError::InvalidMolecule);
    }
    let (text, order) = canonical_order(g);
    let mut perm = vec![0; order.len()];
    for (pos, &atom) in order.iter().enumerate() {
        perm[atom] = pos;
    }
    Ok((CanonicalForm(text), g.permuted(&perm)))
}

/// Canonical text plus the atoms in order of appearance in it.
pub fn canonical_order(g: &MoleculeGraph) -> (String, Vec<usize>) {
    let n = g.atom_count();
    if n == 0 {
        return (String::new(), Vec::new());
    }
    let mut colors = initial_colors(g);
    refine(g, &mut colors);
    let mut search = Search { g, best: None, automorphisms: Vec::new() };
    search.descend(colors, &mut Vec::new());
    let (text, order) = search.best.expect("search visits at least one leaf");
    (text, order)
}

/// Colour-refinement classes of the atoms. Atoms in different classes are
/// never exchanged by a symmetry of the graph.
pub fn symmetry_classes(g: &MoleculeGraph) -> Vec<u32> {
    let mut colors = initial_colors(g);
    refine(g, &mut colors);
    colors
}

fn element_rank(e: Element) -> u8 {
    match e {
        Element::C => 0,
        Element::N => 1,
        Element::O => 2,
        Element::F => 3,
        Element::Cl => 4,
    }
}

fn bond_label(g: &MoleculeGraph, bond: usize) -> u8 {
    let b = &g.bonds()[bond];
    if b.aromatic {
        4
    } else {
        b.order
    }
}

fn initial_colors(g: &MoleculeGraph) -> Vec<u32> {
    let keys: Vec<(usize, u8, bool, u8)> = g
        .atoms()
        .iter()
        .enumerate()
        .map(|(i, a)| (g.degree(i), element_rank(a.element), a.aromatic, a.hydrogens))
        .collect();
    dense_ranks(&keys)
}

fn dense_ranks<T: Ord + Clone>(keys: &[T]) -> Vec<u32> {
    let mut sorted: Vec<T> = keys.to_vec();
    sorted.sort();
    sorted.dedup();
    keys.iter()
        .map(|k| sorted.binary_search(k).expect("key present") as u32)
        .collect()
}

fn cell_count(colors: &[u32]) -> usize {
    let mut seen: Vec<u32> = colors.to_vec();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

/// Splits colour classes by sorted (bond label, neighbour colour) lists until
/// stable. Splitting keeps the relative order of existing classes.
fn refine(g: &MoleculeGraph, colors: &mut Vec<u32>) {
    *colors = dense_ranks(colors);
    let mut cells = cell_count(colors);
    loop {
        if cells == colors.len() {
            return;
        }
        let sigs: Vec<(u32, Vec<(u8, u32)>)> = (0..colors.len())
            .map(|v| {
                let mut s: Vec<(u8, u32)> = g
                    .neighbors(v)
                    .iter()
                    .map(|&(nb, bi)| (bond_label(g, bi), colors[nb]))
                    .collect();
                s.sort_unstable();
                (colors[v], s)
            })
            .collect();
        let next = dense_ranks(&sigs);
        let next_cells = cell_count(&next);
        *colors = next;
        if next_cells == cells {
            return;
        }
        cells = next_cells;
    }
}

fn individualize(colors: &[u32], v: usize) -> Vec<u32> {
    let c = colors[v];
    colors
        .iter()
        .enumerate()
        .map(|(u, &cu)| {
            let base = 2 * cu;
            if cu == c && u != v {
                base + 1
            } else {
                base
            }
        })
        .collect()
}

struct Search<'a> {
    g: &'a MoleculeGraph,
    best: Option<(String, Vec<usize>)>,
    /// Atom permutations found so far that map the graph onto itself.
    automorphisms: Vec<Vec<usize>>,
}

impl Search<'_> {
    fn descend(&mut self, mut colors: Vec<u32>, path: &mut Vec<usize>) {
        refine(self.g, &mut colors);
        let n = colors.len();
        let target = match first_nontrivial_cell(&colors) {
            None => {
                self.leaf(&colors);
                return;
            }
            Some(c) => c,
        };
        let members: Vec<usize> = (0..n).filter(|&v| colors[v] == target).collect();
        let mut explored: Vec<usize> = Vec::new();
        for &v in &members {
            if !explored.is_empty() && self.equivalent_to_explored(v, &explored, path) {
                continue;
            }
            path.push(v);
            self.descend(individualize(&colors, v), path);
            path.pop();
            explored.push(v);
        }
    }

    /// True when `v` lies in the orbit of an explored vertex under the
    /// automorphisms that fix every vertex on the current path.
    fn equivalent_to_explored(&self, v: usize, explored: &[usize], path: &[usize]) -> bool {
        let gens: Vec<&Vec<usize>> = self
            .automorphisms
            .iter()
            .filter(|p| path.iter().all(|&x| p[x] == x))
            .collect();
        if gens.is_empty() {
            return false;
        }
        let n = self.g.atom_count();
        let mut seen = vec![false; n];
        seen[v] = true;
        let mut stack = vec![v];
        while let Some(x) = stack.pop() {
            if explored.contains(&x) {
                return true;
            }
            for p in &gens {
                let y = p[x];
                if !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
        false
    }

    fn leaf(&mut self, colors: &[u32]) {
        let (text, visit) = write_smiles(self.g, colors);
        match &self.best {
            None => self.best = Some((text, visit)),
            Some((best, best_visit)) => match text.cmp(best) {
                Ordering::Less => self.best = Some((text, visit)),
                Ordering::Equal => {
                    let mut perm = vec![0; visit.len()];
                    for (a, b) in best_visit.iter().zip(&visit) {
                        perm[*a] = *b;
                    }
                    if perm.iter().enumerate().any(|(i, &p)| i != p) {
                        self.automorphisms.push(perm);
                    }
                }
                Ordering::Greater => {}
            },
        }
    }
}

fn first_nontrivial_cell(colors: &[u32]) -> Option<u32> {
    let mut counts = vec![0usize; colors.len()];
    for &c in colors {
        counts[c as usize] += 1;
    }
    counts.iter().position(|&k| k > 1).map(|c| c as u32)
}

fn atom_text(g: &MoleculeGraph, v: usize) -> String {
    let a = g.atoms()[v];
    if !a.aromatic {
        return a.element.symbol().to_string();
    }
    // Aromatic hydrogens are not implied by valence; carbon follows the usual
    // convention and everything else spells hydrogens out.
    let implied = if a.element == Element::C {
        let used: i32 = g
            .neighbors(v)
            .iter()
            .map(|&(_, bi)| {
                let b = &g.bonds()[bi];
                if b.aromatic {
                    1
                } else {
                    b.order as i32
                }
            })
            .sum();
        (3 - used).max(0) as u8
    } else {
        0
    };
    let sym = a.element.aromatic_symbol();
    match a.hydrogens {
        h if h == implied => sym.to_string(),
        0 => format!("[{sym}]"),
        1 => format!("[{sym}H]"),
        h => format!("[{sym}H{h}]"),
    }
}

fn bond_text(g: &MoleculeGraph, bond: usize) -> &'static str {
    let b = &g.bonds()[bond];
    if b.aromatic {
        return "";
    }
    match b.order {
        1 if g.atoms()[b.a].aromatic && g.atoms()[b.b].aromatic => "-",
        1 => "",
        2 => "=",
        _ => "#",
    }
}

fn ring_label(d: usize) -> String {
    if d < 10 {
        d.to_string()
    } else {
        format!("%{d}")
    }
}

/// Writes the DFS string for the total order given by `rank` (lower first)
/// and returns it with the atom visit order.
pub(crate) fn write_smiles(g: &MoleculeGraph, rank: &[u32]) -> (String, Vec<usize>) {
    let n = g.atom_count();
    let sorted_nbrs: Vec<Vec<(usize, usize)>> = (0..n)
        .map(|v| {
            let mut nb = g.neighbors(v).to_vec();
            nb.sort_by_key(|&(u, _)| rank[u]);
            nb
        })
        .collect();

    // Pass 1: DFS forest; every non-tree bond becomes a ring closure.
    let mut by_rank: Vec<usize> = (0..n).collect();
    by_rank.sort_by_key(|&v| rank[v]);
    let (visit, tree_children, is_tree) = dfs_forest(g, &sorted_nbrs, &by_rank);
    let mut closures: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut pos = vec![usize::MAX; n];
    for (i, &v) in visit.iter().enumerate() {
        pos[v] = i;
    }
    for (bi, b) in g.bonds().iter().enumerate() {
        if !is_tree[bi] {
            let (first, second) = if pos[b.a] < pos[b.b] { (b.a, b.b) } else { (b.b, b.a) };
            closures[first].push((second, bi));
            closures[second].push((first, bi));
        }
    }

    // Pass 2: emit.
    let mut out = String::new();
    let mut open: Vec<Option<usize>> = Vec::new(); // digit slot -> bond
    let mut bond_digit = vec![usize::MAX; g.bonds().len()];
    let mut emitted = vec![false; n];
    for &v in &visit {
        if emitted[v] {
            continue;
        }
        if !out.is_empty() {
            out.push('.');
        }
        emit(g, v, &tree_children, &closures, &pos, &mut open, &mut bond_digit, &mut emitted, &mut out);
    }
    (out, visit)
}

fn dfs_forest(
    g: &MoleculeGraph,
    sorted_nbrs: &[Vec<(usize, usize)>],
    by_rank: &[usize],
) -> (Vec<usize>, Vec<Vec<(usize, usize)>>, Vec<bool>) {
    let n = g.atom_count();
    let mut visit = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    let mut children = vec![Vec::new(); n];
    let mut is_tree = vec![false; g.bonds().len()];
    for &root in by_rank {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        visit.push(root);
        // explicit stack of (vertex, next neighbour index)
        let mut stack = vec![(root, 0usize)];
        while let Some(top) = stack.last_mut() {
            let (v, i) = *top;
            if i >= sorted_nbrs[v].len() {
                stack.pop();
                continue;
            }
            top.1 += 1;
            let (u, bi) = sorted_nbrs[v][i];
            if !seen[u] {
                seen[u] = true;
                visit.push(u);
                children[v].push((u, bi));
                is_tree[bi] = true;
                stack.push((u, 0));
            }
        }
    }
    (visit, children, is_tree)
}

#[allow(clippy::too_many_arguments)]
fn emit(
    g: &MoleculeGraph,
    root: usize,
    children: &[Vec<(usize, usize)>],
    closures: &[Vec<(usize, usize)>],
    pos: &[usize],
    open: &mut Vec<Option<usize>>,
    bond_digit: &mut [usize],
    emitted: &mut [bool],
    out: &mut String,
) {
    // Explicit work stack keeps deep chains off the call stack.
    enum Work {
        Atom(usize),
        Text(&'static str),
    }
    let mut work = vec![Work::Atom(root)];
    while let Some(item) = work.pop() {
        let v = match item {
            Work::Text(t) => {
                out.push_str(t);
                continue;
            }
            Work::Atom(v) => v,
        };
        emitted[v] = true;
        out.push_str(&atom_text(g, v));
        // closing digits first (partner seen earlier), by partner position
        let mut closing: Vec<(usize, usize)> = closures[v]
            .iter()
            .filter(|&&(u, _)| pos[u] < pos[v])
            .copied()
            .collect();
        closing.sort_by_key(|&(u, _)| pos[u]);
        let mut opening: Vec<(usize, usize)> = closures[v]
            .iter()
            .filter(|&&(u, _)| pos[u] > pos[v])
            .copied()
            .collect();
        opening.sort_by_key(|&(u, _)| pos[u]);
        for &(_, bi) in &closing {
            let d = bond_digit[bi];
            out.push_str(&ring_label(d));
            open[d] = None;
        }
        for &(_, bi) in &opening {
            let d = match open.iter().skip(1).position(Option::is_none) {
                Some(d) => d + 1,
                None => {
                    if open.is_empty() {
                        open.push(None); // ring labels start at 1
                    }
                    open.push(None);
                    open.len() - 1
                }
            };
            open[d] = Some(bi);
            bond_digit[bi] = d;
            out.push_str(bond_text(g, bi));
            out.push_str(&ring_label(d));
        }
        let kids = &children[v];
        // pushed in reverse so the first child is processed first
        for (i, &(u, bi)) in kids.iter().enumerate().rev() {
            let last = i + 1 == kids.len();
            if !last {
                work.push(Work::Text(")"));
            }
            work.push(Work::Atom(u));
            work.push(Work::Text(bond_text(g, bi)));
            if !last {
                work.push(Work::Text("("));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aromatic::perceive;
    use Element::*;

    fn mol(elements: &[Element], bonds: &[(usize, usize, u8)]) -> MoleculeGraph {
        let mut g = MoleculeGraph::from_parts(elements, bonds).unwrap();
        perceive(&mut g);
        g
    }

    fn text(g: &MoleculeGraph) -> String {
        canonicalize(g).unwrap().into_string()
    }

    #[test]
    fn simple_chains() {
        assert_eq!(text(&mol(&[C; 6], &[(0, 1, 1), (1, 2, 1), (2, 3, 1), (3, 4, 1), (4, 5, 1)])), "CCCCCC");
        assert_eq!(text(&mol(&[O, C], &[(0, 1, 1)])), "CO");
        assert_eq!(text(&mol(&[C, C, C, C, C, O], &[(0, 1, 1), (1, 2, 1), (2, 3, 1), (3, 4, 1), (4, 5, 1)])), "CCCCCO");
    }

    #[test]
    fn ether_and_alcohol_differ() {
        let coc = mol(&[C, O, C], &[(0, 1, 1), (1, 2, 1)]);
        let cco = mol(&[C, C, O], &[(0, 1, 1), (1, 2, 1)]);
        assert_ne!(text(&coc), text(&cco));
    }

    #[test]
    fn benzene_and_branches() {
        let bz = mol(&[C; 6], &[(0, 1, 2), (1, 2, 1), (2, 3, 2), (3, 4, 1), (4, 5, 2), (5, 0, 1)]);
        assert_eq!(text(&bz), "c1ccccc1");
        let iso = mol(&[C; 4], &[(0, 1, 1), (1, 2, 1), (1, 3, 1)]);
        assert_eq!(text(&iso), "CC(C)C");
    }

    #[test]
    fn kekule_forms_agree() {
        let a = mol(&[C; 6], &[(0, 1, 2), (1, 2, 1), (2, 3, 2), (3, 4, 1), (4, 5, 2), (5, 0, 1)]);
        let b = mol(&[C; 6], &[(0, 1, 1), (1, 2, 2), (2, 3, 1), (3, 4, 2), (4, 5, 1), (5, 0, 2)]);
        assert_eq!(text(&a), text(&b));
    }

    #[test]
    fn relabeling_invariance() {
        let g = mol(
            &[C, C, N, O, C, C, Cl],
            &[(0, 1, 1), (1, 2, 1), (2, 3, 1), (1, 4, 2), (4, 5, 1), (5, 0, 1), (5, 6, 1)],
        );
        let t = text(&g);
        let perms: [[usize; 7]; 3] = [[6, 5, 4, 3, 2, 1, 0], [1, 2, 3, 4, 5, 6, 0], [3, 0, 6, 1, 5, 2, 4]];
        for p in perms {
            assert_eq!(text(&g.permuted(&p)), t);
        }
    }

    #[test]
    fn invalid_is_error() {
        assert_eq!(canonicalize(&MoleculeGraph::invalid("x")), Err(ChemError::InvalidMolecule));
    }
}
