//! Local neighborhood geometry: isolation, rescaling to the unit ball,
//! uncentered second-moment PCA, dimension estimation and projection.
//!
//! Neighborhoods are always expressed relative to their query point: a
//! member `x_j` is stored as `(x_j - x_i) / scale`, so every rescaled row
//! lies in the closed unit ball. The second moment is taken about that
//! query point (no mean-centering), which keeps one-sided neighborhoods at
//! a boundary visibly different from a full disk.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Smallest neighborhood the uniformity test will score.
pub const MIN_NEIGHBORHOOD: usize = 10;

/// Dense row-major point cloud: `n` points in `R^dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dim: usize,
    data: Vec<f64>,
}

impl PointCloud {
    /// Builds a cloud from a flat row-major buffer.
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be >= 1".into()));
        }
        if data.len() % dim != 0 {
            return Err(Error::InvalidParameter(format!(
                "buffer of length {} is not a multiple of dimension {dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "coordinate {} of point {}",
                pos % dim,
                pos / dim
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).ok_or(Error::EmptySample)?;
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::InvalidParameter(format!(
                    "row {i} has {} coordinates, expected {dim}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::new(dim, data)
    }

    /// An empty cloud of the given dimension.
    pub fn empty(dim: usize) -> Self {
        Self {
            dim: dim.max(1),
            data: Vec::new(),
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Appends `extra` zero coordinates to every point.
    pub fn zero_padded(&self, extra: usize) -> Self {
        let dim = self.dim + extra;
        let mut data = Vec::with_capacity(self.len() * dim);
        for row in self.rows() {
            data.extend_from_slice(row);
            data.extend(std::iter::repeat_n(0.0, extra));
        }
        Self { dim, data }
    }

    /// Applies `x -> rotation * x + shift` to every point. `rotation` is
    /// `dim x dim` row-major.
    pub fn affine(&self, rotation: &[f64], shift: &[f64]) -> Self {
        let d = self.dim;
        assert_eq!(rotation.len(), d * d);
        assert_eq!(shift.len(), d);
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.rows() {
            for a in 0..d {
                let r = &rotation[a * d..(a + 1) * d];
                data.push(dot(r, row) + shift[a]);
            }
        }
        Self { dim: d, data }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let t = x - y;
            t * t
        })
        .sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// The rescaled local neighborhood of one query point.
#[derive(Debug, Clone)]
pub struct Neighborhood {
    pub center_index: usize,
    /// Member indices in the original cloud, center excluded.
    pub member_indices: Vec<usize>,
    /// Rows `(x_j - x_center) / scale`, aligned with `member_indices`.
    pub rescaled: PointCloud,
    pub scale: f64,
}

impl Neighborhood {
    pub fn len(&self) -> usize {
        self.member_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member_indices.is_empty()
    }

    fn build(cloud: &PointCloud, center: usize, members: Vec<usize>, scale: f64) -> Self {
        let x = cloud.row(center);
        let inv = 1.0 / scale;
        let mut data = Vec::with_capacity(members.len() * cloud.dim());
        for &j in &members {
            data.extend(cloud.row(j).iter().zip(x).map(|(a, b)| (a - b) * inv));
        }
        Neighborhood {
            center_index: center,
            member_indices: members,
            rescaled: PointCloud {
                dim: cloud.dim(),
                data,
            },
            scale,
        }
    }
}

/// All points strictly within distance `r` of point `i`, excluding `i` itself.
pub fn neighbors_radius(cloud: &PointCloud, i: usize, r: f64) -> Result<Neighborhood> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidParameter(format!("radius must be positive, got {r}")));
    }
    let x = cloud.row(i);
    let r2 = r * r;
    let members: Vec<usize> = cloud
        .rows()
        .enumerate()
        .filter(|&(j, y)| j != i && sq_dist(x, y) < r2)
        .map(|(j, _)| j)
        .collect();
    Ok(Neighborhood::build(cloud, i, members, r))
}

/// The `k` nearest points to point `i` (ties broken by lower index). The
/// scale is the distance to the k-th neighbor, so that neighbor rescales to
/// norm exactly one.
pub fn neighbors_knn(cloud: &PointCloud, i: usize, k: usize) -> Result<Neighborhood> {
    let n = cloud.len();
    if k == 0 || k >= n {
        return Err(Error::InvalidParameter(format!(
            "k = {k} must satisfy 1 <= k <= n - 1 = {}",
            n.saturating_sub(1)
        )));
    }
    let nearest = nearest_sorted(cloud, i, k);
    let scale = nearest[k - 1].0.sqrt();
    if scale <= 0.0 {
        return Err(Error::DegenerateNeighborhood);
    }
    let members = nearest.into_iter().map(|(_, j)| j).collect();
    Ok(Neighborhood::build(cloud, i, members, scale))
}

/// Squared distances and indices of the `k` nearest neighbors of `i`
/// (excluding `i`), ascending by `(distance, index)`.
pub(crate) fn nearest_sorted(cloud: &PointCloud, i: usize, k: usize) -> Vec<(f64, usize)> {
    let x = cloud.row(i);
    let mut all: Vec<(f64, usize)> = cloud
        .rows()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(j, y)| (sq_dist(x, y), j))
        .collect();
    let k = k.min(all.len());
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < all.len() {
        all.select_nth_unstable_by(k, cmp);
        all.truncate(k);
    }
    all.sort_unstable_by(cmp);
    all
}

/// Uncentered second moment `(1/k) * sum_j x_j x_j^T` as a `D x D` matrix.
pub fn second_moment(points: &PointCloud) -> DMatrix<f64> {
    let d = points.dim();
    let k = points.len();
    let mut m = DMatrix::<f64>::zeros(d, d);
    if k == 0 {
        return m;
    }
    for row in points.rows() {
        for a in 0..d {
            let xa = row[a];
            if xa == 0.0 {
                continue;
            }
            for b in a..d {
                m[(a, b)] += xa * row[b];
            }
        }
    }
    let inv = 1.0 / k as f64;
    for a in 0..d {
        for b in a..d {
            let v = m[(a, b)] * inv;
            m[(a, b)] = v;
            m[(b, a)] = v;
        }
    }
    m
}

/// Smallest number of leading eigenvalues explaining at least `eta` of the
/// total. Eigenvalues must be sorted descending.
pub fn estimate_dim(eigenvalues: &[f64], eta: f64) -> Result<usize> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidParameter(format!("eta must lie in (0,1), got {eta}")));
    }
    let total: f64 = eigenvalues.iter().map(|v| v.max(0.0)).sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateNeighborhood);
    }
    let target = eta * total - 1e-12 * total;
    let mut acc = 0.0;
    for (i, v) in eigenvalues.iter().enumerate() {
        acc += v.max(0.0);
        if acc >= target {
            return Ok(i + 1);
        }
    }
    Ok(eigenvalues.len())
}

/// Principal directions of a rescaled neighborhood.
#[derive(Debug, Clone)]
pub struct PcaResult {
    /// Descending, nonnegative; length `min(k, D)`.
    pub eigenvalues: Vec<f64>,
    /// `D x d_hat` matrix with orthonormal columns.
    pub basis: DMatrix<f64>,
    pub d_hat: usize,
}

/// Eigen-decomposition of the uncentered second moment followed by
/// dimension estimation at threshold `eta`.
///
/// When the neighborhood has fewer points than ambient dimensions the
/// decomposition runs on the `k x k` Gram matrix instead, which shares the
/// nonzero spectrum and keeps the cost linear in `D`.
pub fn local_pca(points: &PointCloud, eta: f64) -> Result<PcaResult> {
    let k = points.len();
    let d = points.dim();
    if k == 0 {
        return Err(Error::DegenerateNeighborhood);
    }
    if k >= d {
        let eig = SymmetricEigen::new(second_moment(points));
        let order = descending_order(eig.eigenvalues.as_slice());
        let eigenvalues: Vec<f64> = order.iter().map(|&j| eig.eigenvalues[j].max(0.0)).collect();
        let d_hat = estimate_dim(&eigenvalues, eta)?;
        let mut basis = DMatrix::<f64>::zeros(d, d_hat);
        for (c, &j) in order.iter().take(d_hat).enumerate() {
            basis.set_column(c, &eig.eigenvectors.column(j));
        }
        Ok(PcaResult {
            eigenvalues,
            basis,
            d_hat,
        })
    } else {
        let mut gram = DMatrix::<f64>::zeros(k, k);
        let inv = 1.0 / k as f64;
        for a in 0..k {
            for b in a..k {
                let v = dot(points.row(a), points.row(b)) * inv;
                gram[(a, b)] = v;
                gram[(b, a)] = v;
            }
        }
        let eig = SymmetricEigen::new(gram);
        let order = descending_order(eig.eigenvalues.as_slice());
        let eigenvalues: Vec<f64> = order.iter().map(|&j| eig.eigenvalues[j].max(0.0)).collect();
        let d_hat = estimate_dim(&eigenvalues, eta)?;
        // v = X^T u / sqrt(k * lambda)
        let mut basis = DMatrix::<f64>::zeros(d, d_hat);
        for (c, &j) in order.iter().take(d_hat).enumerate() {
            let lambda = eigenvalues[c];
            let u = eig.eigenvectors.column(j);
            let mut col = vec![0.0; d];
            for (a, row) in points.rows().enumerate() {
                let w = u[a];
                for (o, x) in col.iter_mut().zip(row) {
                    *o += w * x;
                }
            }
            let s = 1.0 / (k as f64 * lambda).sqrt();
            for (r, v) in col.into_iter().enumerate() {
                basis[(r, c)] = v * s;
            }
        }
        Ok(PcaResult {
            eigenvalues,
            basis,
            d_hat,
        })
    }
}

fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}

/// Coordinates of the rescaled neighborhood in the top `d_hat` principal
/// directions (`k x d_hat`).
pub fn project(neighborhood: &Neighborhood, pca: &PcaResult) -> PointCloud {
    project_points(&neighborhood.rescaled, pca)
}

pub fn project_points(points: &PointCloud, pca: &PcaResult) -> PointCloud {
    let m = pca.d_hat;
    let mut data = Vec::with_capacity(points.len() * m);
    let cols: Vec<Vec<f64>> = (0..m).map(|c| pca.basis.column(c).iter().copied().collect()).collect();
    for row in points.rows() {
        for col in &cols {
            data.push(dot(col, row));
        }
    }
    PointCloud { dim: m, data }
}
