//! Domain partitioning and the block DAG.
//!
//! Locations are tiled by axis-parallel breaks into a grid of cells. Each
//! cell is a block of the DAG; on the cubic mesh a block's parents are its
//! lower neighbours along every axis. Blocks are numbered lexicographically
//! (last axis fastest), which is also a topological order.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum BreakMode {
    #[default]
    EqualSpacing,
    /// Nested empirical quantiles: axis 0 is split on global quantiles, each
    /// later axis on quantiles of the points inside the enclosing slab.
    Quantile,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartitionSpec {
    pub breaks_per_axis: Vec<usize>,
    pub mode: BreakMode,
}

impl PartitionSpec {
    pub fn equal(breaks_per_axis: Vec<usize>) -> Self {
        Self { breaks_per_axis, mode: BreakMode::EqualSpacing }
    }

    pub fn quantile(breaks_per_axis: Vec<usize>) -> Self {
        Self { breaks_per_axis, mode: BreakMode::Quantile }
    }

    pub fn n_blocks(&self) -> usize {
        self.breaks_per_axis.iter().product()
    }
}

/// Interior cut points along one axis, with one subtree per resulting slab
/// for the remaining axes.
#[derive(Clone, Debug, PartialEq)]
struct Splits {
    cuts: Vec<f64>,
    next: Vec<Splits>,
}

impl Splits {
    /// Cell index along this axis: the number of cuts at or below `x`.
    /// Intervals are `[lo, hi)` and out-of-range values clamp to the ends.
    fn slot(&self, x: f64) -> usize {
        self.cuts.partition_point(|&c| c <= x)
    }
}

/// Assignment of locations to grid cells.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    dims: Vec<usize>,
    splits: Splits,
    block_of: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl Partition {
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn n_blocks(&self) -> usize {
        self.members.len()
    }

    /// Block id of each input location.
    pub fn block_of(&self) -> &[usize] {
        &self.block_of
    }

    /// Location indices per block, ascending.
    pub fn members(&self) -> &[Vec<usize>] {
        &self.members
    }

    /// Cell containing `loc`; points outside the tiled box clamp to the
    /// nearest boundary cell.
    pub fn locate(&self, loc: &[f64]) -> usize {
        assert_eq!(loc.len(), self.dims.len(), "dimension mismatch");
        let mut node = &self.splits;
        let mut id = 0;
        for (axis, &x) in loc.iter().enumerate() {
            let s = node.slot(x);
            id = id * self.dims[axis] + s;
            if axis + 1 < loc.len() {
                node = &node.next[s];
            }
        }
        id
    }

    /// Grid coordinates (zero-based) of a block id.
    pub fn cell_coords(&self, block: usize) -> Vec<usize> {
        grid_coords(&self.dims, block)
    }
}

fn grid_coords(dims: &[usize], mut id: usize) -> Vec<usize> {
    let mut out = vec![0; dims.len()];
    for a in (0..dims.len()).rev() {
        out[a] = id % dims[a];
        id /= dims[a];
    }
    out
}

fn grid_id(dims: &[usize], coords: &[usize]) -> usize {
    coords.iter().zip(dims).fold(0, |acc, (&c, &m)| acc * m + c)
}

fn equal_cuts(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    (1..m).map(|t| lo + (hi - lo) * t as f64 / m as f64).collect()
}

fn quantile_cuts(values: &mut [f64], m: usize, lo: f64, hi: f64) -> Vec<f64> {
    if values.len() < 2 {
        return equal_cuts(lo, hi, m);
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let mut cuts: Vec<f64> = Vec::with_capacity(m.saturating_sub(1));
    for t in 1..m {
        let c = ((t * n + m / 2) / m).clamp(1, n - 1);
        let cut = if values[c - 1] < values[c] {
            0.5 * (values[c - 1] + values[c])
        } else {
            values[c]
        };
        let prev = cuts.last().copied().unwrap_or(f64::NEG_INFINITY);
        cuts.push(cut.max(prev));
    }
    cuts
}

fn build_splits(
    coords: &Matrix<f64>,
    idx: &[usize],
    axis: usize,
    spec: &PartitionSpec,
    bounds: &[(f64, f64)],
) -> Splits {
    let m = spec.breaks_per_axis[axis];
    let (lo, hi) = bounds[axis];
    let cuts = match spec.mode {
        BreakMode::EqualSpacing => equal_cuts(lo, hi, m),
        BreakMode::Quantile => {
            let mut vals: Vec<f64> = idx.iter().map(|&i| coords[(i, axis)]).collect();
            quantile_cuts(&mut vals, m, lo, hi)
        }
    };
    let d = coords.cols();
    let next = if axis + 1 == d {
        Vec::new()
    } else {
        let mut slabs = vec![Vec::new(); m];
        let node = Splits { cuts: cuts.clone(), next: Vec::new() };
        for &i in idx {
            slabs[node.slot(coords[(i, axis)])].push(i);
        }
        slabs.iter().map(|s| build_splits(coords, s, axis + 1, spec, bounds)).collect()
    };
    Splits { cuts, next }
}

/// Tiles the bounding box of `coords` (rows are locations) into cells.
pub fn build_partition(coords: &Matrix<f64>, spec: &PartitionSpec) -> Result<Partition> {
    let n = coords.rows();
    let d = coords.cols();
    if n == 0 {
        return Err(Error::Empty("location list"));
    }
    if spec.breaks_per_axis.len() != d {
        return Err(Error::Invalid(format!(
            "partition has {} axes but locations have {d} coordinates",
            spec.breaks_per_axis.len()
        )));
    }
    if spec.breaks_per_axis.contains(&0) {
        return Err(Error::Invalid("every axis needs at least one break".into()));
    }
    if let Some(pos) = coords.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("coordinate of location {}", pos / d)));
    }
    let bounds: Vec<(f64, f64)> = (0..d)
        .map(|a| {
            (0..n).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
                (lo.min(coords[(i, a)]), hi.max(coords[(i, a)]))
            })
        })
        .collect();
    let all: Vec<usize> = (0..n).collect();
    let splits = build_splits(coords, &all, 0, spec, &bounds);
    let mut part = Partition {
        dims: spec.breaks_per_axis.clone(),
        splits,
        block_of: Vec::with_capacity(n),
        members: vec![Vec::new(); spec.n_blocks()],
    };
    for i in 0..n {
        let b = part.locate(coords.row(i));
        part.block_of.push(b);
        part.members[b].push(i);
    }
    Ok(part)
}

/// Block DAG with moral-graph colouring.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MeshGraph {
    dims: Option<Vec<usize>>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    coparents: Vec<Vec<usize>>,
    blanket: Vec<Vec<usize>>,
    colors: Vec<usize>,
    n_colors: usize,
}

/// Cubic mesh over a grid with the given number of cells per axis.
pub fn build_cubic_dag(dims: &[usize]) -> Result<MeshGraph> {
    if dims.is_empty() || dims.contains(&0) {
        return Err(Error::Invalid("grid dimensions must be positive".into()));
    }
    let n: usize = dims.iter().product();
    let d = dims.len();
    let mut parents = Vec::with_capacity(n);
    let mut colors = Vec::with_capacity(n);
    for id in 0..n {
        let c = grid_coords(dims, id);
        let mut ps = Vec::new();
        for a in 0..d {
            if c[a] > 0 {
                let mut p = c.clone();
                p[a] -= 1;
                ps.push(grid_id(dims, &p));
            }
        }
        ps.sort_unstable();
        parents.push(ps);
        colors.push(c.iter().fold(0, |acc, &x| (acc << 1) | (x & 1)));
    }
    let mut g = MeshGraph::with_edges(parents, Some(dims.to_vec()));
    // parity vectors only vary along axes with more than one cell
    let used: std::collections::BTreeSet<usize> = colors.iter().copied().collect();
    let mut remap = vec![0; 1 << d];
    for (k, &c) in used.iter().enumerate() {
        remap[c] = k;
    }
    g.colors = colors.iter().map(|&c| remap[c]).collect();
    g.n_colors = used.len();
    Ok(g)
}

impl MeshGraph {
    /// General DAG from parent lists; node ids must already be in
    /// topological order (every parent id smaller than its child's).
    /// Colours come from a greedy pass over the moral graph.
    pub fn from_parents(parents: Vec<Vec<usize>>) -> Result<Self> {
        for (i, ps) in parents.iter().enumerate() {
            if let Some(&p) = ps.iter().find(|&&p| p >= i) {
                return Err(Error::Invalid(format!(
                    "parent {p} of node {i} breaks topological order"
                )));
            }
        }
        let mut parents = parents;
        for ps in &mut parents {
            ps.sort_unstable();
            ps.dedup();
        }
        let mut g = Self::with_edges(parents, None);
        let n = g.n_blocks();
        let mut colors = vec![usize::MAX; n];
        let mut n_colors = 0;
        for i in 0..n {
            let taken: Vec<usize> =
                g.blanket[i].iter().map(|&b| colors[b]).filter(|&c| c != usize::MAX).collect();
            let c = (0..).find(|c| !taken.contains(c)).unwrap_or(0);
            colors[i] = c;
            n_colors = n_colors.max(c + 1);
        }
        g.colors = colors;
        g.n_colors = n_colors;
        Ok(g)
    }

    fn with_edges(parents: Vec<Vec<usize>>, dims: Option<Vec<usize>>) -> Self {
        let n = parents.len();
        let mut children = vec![Vec::new(); n];
        for (i, ps) in parents.iter().enumerate() {
            for &p in ps {
                children[p].push(i);
            }
        }
        let mut coparents = vec![Vec::new(); n];
        for i in 0..n {
            let mut cp: Vec<usize> = children[i]
                .iter()
                .flat_map(|&c| parents[c].iter().copied())
                .filter(|&p| p != i)
                .collect();
            cp.sort_unstable();
            cp.dedup();
            coparents[i] = cp;
        }
        let blanket = (0..n)
            .map(|i| {
                let mut b: Vec<usize> =
                    parents[i].iter().chain(&children[i]).chain(&coparents[i]).copied().collect();
                b.sort_unstable();
                b.dedup();
                b
            })
            .collect();
        Self { dims, parents, children, coparents, blanket, colors: vec![0; n], n_colors: 1 }
    }

    pub fn n_blocks(&self) -> usize {
        self.parents.len()
    }

    pub fn dims(&self) -> Option<&[usize]> {
        self.dims.as_deref()
    }

    pub fn parents(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub fn coparents(&self, i: usize) -> &[usize] {
        &self.coparents[i]
    }

    pub fn color(&self, i: usize) -> usize {
        self.colors[i]
    }

    pub fn colors(&self) -> &[usize] {
        &self.colors
    }

    pub fn n_colors(&self) -> usize {
        self.n_colors
    }

    pub fn n_edges(&self) -> usize {
        self.parents.iter().map(Vec::len).sum()
    }

    /// Blocks grouped by colour, each group ascending.
    pub fn color_classes(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_colors];
        for (i, &c) in self.colors.iter().enumerate() {
            out[c].push(i);
        }
        out
    }

    /// Parents ∪ children ∪ co-parents, sorted.
    pub fn markov_blanket(&self, i: usize) -> Result<&[usize]> {
        self.blanket.get(i).map(Vec::as_slice).ok_or(Error::UnknownBlock(i))
    }

    /// Parity label of a cubic-mesh block using one-based grid indices,
    /// e.g. `"oe"` for the cell in row 3, column 2.
    pub fn color_label(&self, i: usize) -> Option<String> {
        let dims = self.dims.as_ref()?;
        Some(
            grid_coords(dims, i)
                .iter()
                .map(|&c| if (c + 1) % 2 == 1 { 'o' } else { 'e' })
                .collect(),
        )
    }

    /// Block id of a zero-based grid cell on a cubic mesh.
    pub fn block_at(&self, coords: &[usize]) -> Option<usize> {
        let dims = self.dims.as_ref()?;
        if coords.len() != dims.len() || coords.iter().zip(dims).any(|(&c, &m)| c >= m) {
            return None;
        }
        Some(grid_id(dims, coords))
    }

    /// Checks that no block shares a colour with a blanket member.
    pub fn coloring_is_valid(&self) -> bool {
        (0..self.n_blocks()).all(|i| self.blanket[i].iter().all(|&b| self.colors[b] != self.colors[i]))
    }
}

/// Block whose cell contains `loc` (clamped to the tiled box).
pub fn parent_set_for_prediction(partition: &Partition, loc: &[f64]) -> usize {
    partition.locate(loc)
}

/// Smallest pairwise distance below `tol`, reported as a pair of row indices.
pub fn find_duplicate(coords: &Matrix<f64>, tol: f64) -> Option<(usize, usize)> {
    let n = coords.rows();
    if n < 2 {
        return None;
    }
    // sort on the first coordinate and sweep a window of width tol
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| coords[(a, 0)].total_cmp(&coords[(b, 0)]).then(a.cmp(&b)));
    for (pos, &i) in order.iter().enumerate() {
        for &j in &order[pos + 1..] {
            if coords[(j, 0)] - coords[(i, 0)] >= tol {
                break;
            }
            let d2: f64 = coords.row(i).iter().zip(coords.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2.sqrt() < tol {
                return Some((i.min(j), i.max(j)));
            }
        }
    }
    None
}
