//! Region adjacency graphs.
//!
//! Regions are indexed `0..n` internally. The text format is 1-based:
//!
//! ```text
//! # comment
//! 3
//! 1 1 2
//! 2 2 1 3
//! 3 1 2
//! ```
//!
//! Line 1 holds `N`, then one line per region: `<id> <n_i> <neighbour ids...>`.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;

use crate::error::{Error, Result};

/// Undirected adjacency over areal units.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArealGraph {
    neighbors: Vec<Vec<usize>>,
    region_ids: Vec<String>,
    connected: bool,
}

impl ArealGraph {
    /// Builds a graph from 0-based neighbour lists, validating symmetry,
    /// self-loops and duplicates. Region ids are the 1-based indices.
    pub fn from_adjacency(mut neighbors: Vec<Vec<usize>>) -> Result<Self> {
        let n = neighbors.len();
        if n == 0 {
            return Err(Error::InvalidDimension("graph has no regions".into()));
        }
        for (i, nb) in neighbors.iter_mut().enumerate() {
            nb.sort_unstable();
            for w in nb.windows(2) {
                if w[0] == w[1] {
                    return Err(Error::DuplicateEdge(i + 1, w[0] + 1));
                }
            }
            for &j in nb.iter() {
                if j == i {
                    return Err(Error::SelfLoop(i + 1));
                }
                if j >= n {
                    return Err(Error::InvalidDimension(format!(
                        "region {} references neighbour {} beyond N = {}",
                        i + 1,
                        j + 1,
                        n
                    )));
                }
            }
        }
        for i in 0..n {
            for &j in &neighbors[i] {
                if neighbors[j].binary_search(&i).is_err() {
                    return Err(Error::AsymmetricAdjacency { from: i + 1, to: j + 1 });
                }
            }
        }
        let region_ids = (1..=n).map(|i| i.to_string()).collect();
        let mut g = ArealGraph { neighbors, region_ids, connected: false };
        g.connected = g.connected_components().len() == 1;
        Ok(g)
    }

    /// Parses the neighbour-list text format.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());

        let (first_line, header) = lines.next().ok_or(Error::GraphParse {
            line: 1,
            msg: "empty graph file".into(),
        })?;
        let n: usize = header.parse().map_err(|_| Error::GraphParse {
            line: first_line,
            msg: format!("expected region count, found '{header}'"),
        })?;
        if n == 0 {
            return Err(Error::GraphParse { line: first_line, msg: "region count must be positive".into() });
        }

        let mut neighbors: Vec<Option<Vec<usize>>> = vec![None; n];
        let mut seen = 0usize;
        for (line, content) in lines {
            let mut tokens = content.split_whitespace();
            let parse_index = |tok: Option<&str>, what: &str| -> Result<usize> {
                let tok = tok.ok_or_else(|| Error::GraphParse { line, msg: format!("missing {what}") })?;
                let v: usize = tok.parse().map_err(|_| Error::GraphParse {
                    line,
                    msg: format!("invalid {what} '{tok}'"),
                })?;
                Ok(v)
            };
            let id = parse_index(tokens.next(), "region id")?;
            if id == 0 || id > n {
                return Err(Error::GraphParse { line, msg: format!("region id {id} outside 1..={n}") });
            }
            let count = parse_index(tokens.next(), "neighbour count")?;
            let mut nb = Vec::with_capacity(count);
            for _ in 0..count {
                let j = parse_index(tokens.next(), "neighbour id")?;
                if j == 0 || j > n {
                    return Err(Error::GraphParse { line, msg: format!("neighbour id {j} outside 1..={n}") });
                }
                nb.push(j - 1);
            }
            if tokens.next().is_some() {
                return Err(Error::GraphParse {
                    line,
                    msg: format!("more neighbour ids than the declared count {count}"),
                });
            }
            if neighbors[id - 1].is_some() {
                return Err(Error::GraphParse { line, msg: format!("region {id} listed twice") });
            }
            neighbors[id - 1] = Some(nb);
            seen += 1;
        }
        if seen != n {
            let missing = neighbors.iter().position(Option::is_none).map_or(0, |i| i + 1);
            return Err(Error::GraphParse {
                line: text.lines().count(),
                msg: format!("expected {n} region lines, found {seen} (region {missing} missing)"),
            });
        }
        Self::from_adjacency(neighbors.into_iter().map(Option::unwrap_or_default).collect())
    }

    /// Serialises to the neighbour-list text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.n_regions());
        for (i, nb) in self.neighbors.iter().enumerate() {
            let _ = write!(out, "{} {}", i + 1, nb.len());
            for j in nb {
                let _ = write!(out, " {}", j + 1);
            }
            out.push('\n');
        }
        out
    }

    /// Four-neighbour grid graph, row-major.
    pub fn lattice(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidDimension(format!("lattice {rows}x{cols} has a zero dimension")));
        }
        if rows * cols < 2 {
            return Err(Error::InvalidDimension("lattice needs at least two regions".into()));
        }
        let idx = |r: usize, c: usize| r * cols + c;
        let mut neighbors = vec![Vec::new(); rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                let nb = &mut neighbors[idx(r, c)];
                if r > 0 {
                    nb.push(idx(r - 1, c));
                }
                if c > 0 {
                    nb.push(idx(r, c - 1));
                }
                if c + 1 < cols {
                    nb.push(idx(r, c + 1));
                }
                if r + 1 < rows {
                    nb.push(idx(r + 1, c));
                }
            }
        }
        Self::from_adjacency(neighbors)
    }

    /// The bundled 67-region stand-in: a 7x10 lattice with three corner
    /// cells removed.
    pub fn lattice67() -> Self {
        Self::lattice(7, 10)
            .and_then(|g| g.drop_regions(&[0, 9, 69]))
            .expect("7x10 lattice minus three corners is valid")
    }

    /// Removes the given regions and re-indexes the rest in order.
    pub fn drop_regions(&self, drop: &[usize]) -> Result<Self> {
        let n = self.n_regions();
        let mut keep = vec![true; n];
        for &d in drop {
            if d >= n {
                return Err(Error::InvalidDimension(format!("cannot drop region {d}, graph has {n}")));
            }
            keep[d] = false;
        }
        let mut new_index = vec![usize::MAX; n];
        let mut next = 0;
        for i in 0..n {
            if keep[i] {
                new_index[i] = next;
                next += 1;
            }
        }
        if next == 0 {
            return Err(Error::InvalidDimension("all regions dropped".into()));
        }
        let neighbors = (0..n)
            .filter(|&i| keep[i])
            .map(|i| self.neighbors[i].iter().filter(|&&j| keep[j]).map(|&j| new_index[j]).collect())
            .collect();
        Self::from_adjacency(neighbors)
    }

    /// Breadth-first connected components, each sorted, ordered by smallest member.
    pub fn connected_components(&self) -> Vec<Vec<usize>> {
        let n = self.n_regions();
        let mut seen = vec![false; n];
        let mut components = Vec::new();
        let mut queue = VecDeque::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            queue.push_back(start);
            let mut comp = Vec::new();
            while let Some(i) = queue.pop_front() {
                comp.push(i);
                for &j in &self.neighbors[i] {
                    if !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
            comp.sort_unstable();
            components.push(comp);
        }
        components
    }

    pub fn n_regions(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn n_edges(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn region_ids(&self) -> &[String] {
        &self.region_ids
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.region_ids.iter().position(|r| r == id)
    }

    pub fn is_connected(&self) -> bool {
        self.connected
    }

    /// Errors with [`Error::Disconnected`] unless the graph is connected.
    pub fn require_connected(&self) -> Result<()> {
        if self.connected {
            Ok(())
        } else {
            Err(Error::Disconnected(self.connected_components().len()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_path_graph() {
        let g = ArealGraph::parse("3\n1 1 2\n2 2 1 3\n3 1 2\n").unwrap();
        assert_eq!(g.n_regions(), 3);
        assert_eq!((g.degree(0), g.degree(1), g.degree(2)), (1, 2, 1));
        assert_eq!(g.neighbors(1), &[0, 2]);
        assert!(g.is_connected());
    }

    #[test]
    fn comments_and_blank_lines() {
        let g = ArealGraph::parse("# path\n\n3 # regions\n3 1 2\n1 1 2\n2 2 3 1\n").unwrap();
        assert_eq!(g.neighbors(1), &[0, 2]);
    }

    #[test]
    fn asymmetric_is_rejected() {
        let err = ArealGraph::parse("2\n1 1 2\n2 0\n").unwrap_err();
        assert_eq!(err, Error::AsymmetricAdjacency { from: 1, to: 2 });
        assert!(err.to_string().contains("asymmetric adjacency"));
    }

    #[test]
    fn self_loop_and_duplicates_are_rejected() {
        assert_eq!(ArealGraph::parse("2\n1 1 1\n2 0\n").unwrap_err(), Error::SelfLoop(1));
        assert_eq!(
            ArealGraph::parse("2\n1 2 2 2\n2 1 1\n").unwrap_err(),
            Error::DuplicateEdge(1, 2)
        );
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        match ArealGraph::parse("3\n1 1 2\n2 x\n3 1 2\n") {
            Err(Error::GraphParse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        match ArealGraph::parse("2\n1 2 2\n2 1 1\n") {
            Err(Error::GraphParse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn lattice_degrees() {
        let g = ArealGraph::lattice(1, 2).unwrap();
        assert_eq!(g.neighbors(0), &[1]);
        assert_eq!(g.neighbors(1), &[0]);
        let g = ArealGraph::lattice(2, 2).unwrap();
        assert!((0..4).all(|i| g.degree(i) == 2));
        assert!(ArealGraph::lattice(0, 3).is_err());
        assert!(ArealGraph::lattice(1, 1).is_err());
    }

    #[test]
    fn components() {
        let g = ArealGraph::from_adjacency(vec![vec![1], vec![0], vec![3], vec![2]]).unwrap();
        let c = g.connected_components();
        assert_eq!(c, vec![vec![0, 1], vec![2, 3]]);
        assert!(!g.is_connected());
        assert_eq!(g.require_connected(), Err(Error::Disconnected(2)));
    }

    #[test]
    fn lattice67_is_connected() {
        let g = ArealGraph::lattice67();
        assert_eq!(g.n_regions(), 67);
        assert!(g.is_connected());
    }
}
