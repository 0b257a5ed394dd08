//! Cultural-grid metrics on a rectangular, non-wrapping von Neumann lattice.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricError {
    #[error("culture vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("empty population")]
    Empty,
    #[error("grid {width}x{height} does not match {cells} cells")]
    Shape { width: usize, height: usize, cells: usize },
    #[error("feature index {0} out of range")]
    Feature(usize),
}

/// Fraction of features on which two vectors agree.
pub fn similarity(a: &[usize], b: &[usize]) -> Result<f64, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(MetricError::Empty);
    }
    let same = a.iter().zip(b).filter(|(x, y)| x == y).count();
    Ok(same as f64 / a.len() as f64)
}

/// Unordered adjacent index pairs `(i, j)`, `i < j`, of a row-major grid.
pub fn adjacent_pairs(width: usize, height: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            if x + 1 < width {
                out.push((i, i + 1));
            }
            if y + 1 < height {
                out.push((i, i + width));
            }
        }
    }
    out
}

/// Culture vectors laid out row-major on a `width x height` grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CultureGrid {
    pub width: usize,
    pub height: usize,
    pub cells: Vec<Vec<usize>>,
}

impl CultureGrid {
    pub fn new(width: usize, height: usize, cells: Vec<Vec<usize>>) -> Result<Self, MetricError> {
        if cells.is_empty() {
            return Err(MetricError::Empty);
        }
        if width * height != cells.len() {
            return Err(MetricError::Shape { width, height, cells: cells.len() });
        }
        let f = cells[0].len();
        if let Some(bad) = cells.iter().find(|c| c.len() != f) {
            return Err(MetricError::LengthMismatch(f, bad.len()));
        }
        if f == 0 {
            return Err(MetricError::Empty);
        }
        Ok(CultureGrid { width, height, cells })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn features(&self) -> usize {
        self.cells[0].len()
    }

    fn pair_sims(&self) -> impl Iterator<Item = f64> + '_ {
        adjacent_pairs(self.width, self.height)
            .into_iter()
            .map(|(i, j)| similarity(&self.cells[i], &self.cells[j]).expect("validated grid"))
    }
}

/// Mean similarity over adjacent pairs.
pub fn local_convergence(grid: &CultureGrid) -> Result<f64, MetricError> {
    let sims: Vec<f64> = grid.pair_sims().collect();
    if sims.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(sims.iter().sum::<f64>() / sims.len() as f64)
}

/// Fraction of adjacent pairs whose similarity is at least `threshold`.
pub fn high_sim_fraction(grid: &CultureGrid, threshold: f64) -> Result<f64, MetricError> {
    let sims: Vec<f64> = grid.pair_sims().collect();
    if sims.is_empty() {
        return Err(MetricError::Empty);
    }
    // similarities are multiples of 1/F; compare with a tolerance for exact thresholds like 0.6
    Ok(sims.iter().filter(|&&s| s >= threshold - 1e-9).count() as f64 / sims.len() as f64)
}

/// Number of adjacent pairs with identical vectors.
pub fn identical_pair_count(grid: &CultureGrid) -> usize {
    adjacent_pairs(grid.width, grid.height).into_iter().filter(|&(i, j)| grid.cells[i] == grid.cells[j]).count()
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Sizes of the connected regions of adjacent identical cultures.
fn regions(grid: &CultureGrid) -> Vec<usize> {
    let n = grid.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for (i, j) in adjacent_pairs(grid.width, grid.height) {
        if grid.cells[i] == grid.cells[j] {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
    for i in 0..n {
        *sizes.entry(find(&mut parent, i)).or_default() += 1;
    }
    sizes.into_values().collect()
}

/// Identical-culture regions per agent.
pub fn diversity(grid: &CultureGrid) -> Result<f64, MetricError> {
    if grid.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(regions(grid).len() as f64 / grid.len() as f64)
}

/// Distinct culture vectors per agent, ignoring adjacency.
pub fn diversity_vectors(cells: &[Vec<usize>]) -> Result<f64, MetricError> {
    if cells.is_empty() {
        return Err(MetricError::Empty);
    }
    let distinct: BTreeSet<&Vec<usize>> = cells.iter().collect();
    Ok(distinct.len() as f64 / cells.len() as f64)
}

/// Histogram `region size -> number of regions`.
pub fn cluster_sizes(grid: &CultureGrid) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for s in regions(grid) {
        *hist.entry(s).or_default() += 1;
    }
    hist
}

/// Frequency of the most common value of `feature`, over the population size.
pub fn dominant_share(cells: &[Vec<usize>], feature: usize) -> Result<f64, MetricError> {
    if cells.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for c in cells {
        let v = *c.get(feature).ok_or(MetricError::Feature(feature))?;
        *counts.entry(v).or_default() += 1;
    }
    Ok(*counts.values().max().expect("non-empty") as f64 / cells.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn similarity_examples() {
        assert_eq!(similarity(&[0, 1, 2, 3, 4], &[0, 1, 2, 3, 4]).unwrap(), 1.0);
        assert_eq!(similarity(&[0, 0, 0, 0, 0], &[1, 1, 1, 1, 1]).unwrap(), 0.0);
        assert!((similarity(&[0, 1, 2, 3, 4], &[0, 1, 2, 0, 0]).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(similarity(&[0], &[0, 1]), Err(MetricError::LengthMismatch(1, 2)));
    }

    #[test]
    fn two_by_one_grid() {
        let g = CultureGrid::new(2, 1, vec![vec![0, 1, 2, 3, 4], vec![0, 1, 0, 0, 0]]).unwrap();
        assert!((local_convergence(&g).unwrap() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn diversity_examples() {
        let distinct = CultureGrid::new(2, 2, (0..4).map(|i| vec![i; 3]).collect()).unwrap();
        assert_eq!(diversity(&distinct).unwrap(), 1.0);
        let same = CultureGrid::new(2, 2, vec![vec![1; 3]; 4]).unwrap();
        assert_eq!(diversity(&same).unwrap(), 0.25);
        let top_row = CultureGrid::new(2, 2, vec![vec![1; 3], vec![1; 3], vec![2; 3], vec![3; 3]]).unwrap();
        assert_eq!(diversity(&top_row).unwrap(), 0.75);
        assert_eq!(cluster_sizes(&top_row), [(1, 2), (2, 1)].into_iter().collect());
        assert_eq!(high_sim_fraction(&same, 0.6).unwrap(), 1.0);
        assert_eq!(high_sim_fraction(&distinct, 0.6).unwrap(), 0.0);
        assert_eq!(dominant_share(&same.cells, 0).unwrap(), 1.0);
        assert_eq!(dominant_share(&distinct.cells, 0).unwrap(), 0.25);
    }

    #[test]
    fn identical_non_adjacent_cultures_are_separate_regions() {
        let g = CultureGrid::new(3, 1, vec![vec![1], vec![2], vec![1]]).unwrap();
        assert_eq!(diversity(&g).unwrap(), 1.0);
        assert!((diversity_vectors(&g.cells).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }
}
