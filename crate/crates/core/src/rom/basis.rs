//! Reduced bases: plain POD, constrained POD and span merging.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    energy_truncation, pod, qr_full, qr_thin, weighted_pod, DenseMatrix, DEFAULT_RANK_TOL,
};
use crate::mesh::AggregationMatrix;

/// Orthonormality tolerance enforced when a basis is constructed.
const ORTHONORMAL_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    Pod,
    ConstrainedPod,
    SpanMerge,
}

/// Trial basis `Φ` with `Φᵀ W Φ = I`; `W = I` when `weights` is `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedBasis {
    matrix: DenseMatrix,
    weights: Option<Vec<f64>>,
    kind: BasisKind,
    /// Leading columns that span the constraint space (0 for plain POD).
    constraint_rank: usize,
}

impl ReducedBasis {
    pub fn new(
        matrix: DenseMatrix,
        weights: Option<Vec<f64>>,
        kind: BasisKind,
        constraint_rank: usize,
    ) -> Result<Self> {
        if !matrix.is_finite() {
            return Err(Error::NonFinite("reduced basis"));
        }
        if let Some(w) = &weights {
            if w.len() != matrix.rows() {
                return Err(Error::dim("ReducedBasis weights", matrix.rows(), w.len()));
            }
        }
        if constraint_rank > matrix.cols() {
            return Err(Error::InvalidArgument(format!(
                "constraint rank {constraint_rank} exceeds basis size {}",
                matrix.cols()
            )));
        }
        let res = matrix.orthonormality_residual(weights.as_deref());
        if res > ORTHONORMAL_TOL {
            return Err(Error::InvalidArgument(format!(
                "basis is not orthonormal (residual {res:e})"
            )));
        }
        Ok(Self {
            matrix,
            weights,
            kind,
            constraint_rank,
        })
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn constraint_rank(&self) -> usize {
        self.constraint_rank
    }

    /// Full-order dimension `N`.
    pub fn n_full(&self) -> usize {
        self.matrix.rows()
    }

    /// Number of basis vectors.
    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    /// `Φᵀ W u`.
    pub fn project(&self, u: &[f64]) -> Result<Vec<f64>> {
        match &self.weights {
            Some(w) => {
                if u.len() != w.len() {
                    return Err(Error::dim("ReducedBasis::project", w.len(), u.len()));
                }
                let wu: Vec<f64> = u.iter().zip(w).map(|(a, b)| a * b).collect();
                self.matrix.tr_matvec(&wu)
            }
            None => self.matrix.tr_matvec(u),
        }
    }

    /// `Φ a`.
    pub fn lift(&self, a: &[f64]) -> Result<Vec<f64>> {
        self.matrix.matvec(a)
    }

    pub fn orthonormality_residual(&self) -> f64 {
        self.matrix.orthonormality_residual(self.weights())
    }

    /// `‖C − Φ Φᵀ W C‖_max`.
    pub fn inclusion_residual(&self, c: &DenseMatrix) -> Result<f64> {
        let wc = match &self.weights {
            Some(w) => c.scale_rows(w)?,
            None => c.clone(),
        };
        let coeffs = self.matrix.tr_matmul(&wc)?;
        Ok(c.sub(&self.matrix.matmul(&coeffs)?)?.max_abs())
    }

    /// `Σⱼ ‖xⱼ − Φ Φᵀ W xⱼ‖²_W` over the snapshot columns.
    pub fn reconstruction_error(&self, x: &DenseMatrix) -> Result<f64> {
        let wx = match &self.weights {
            Some(w) => x.scale_rows(w)?,
            None => x.clone(),
        };
        let coeffs = self.matrix.tr_matmul(&wx)?;
        let resid = x.sub(&self.matrix.matmul(&coeffs)?)?;
        let mut total = 0.0;
        for i in 0..resid.rows() {
            let wi = self.weights.as_ref().map_or(1.0, |w| w[i]);
            total += wi * resid.row(i).iter().map(|v| v * v).sum::<f64>();
        }
        Ok(total)
    }
}

/// Flips each column so that its largest-magnitude entry (first on ties)
/// is nonnegative.
pub(crate) fn normalize_column_signs(m: &mut DenseMatrix) {
    for j in 0..m.cols() {
        let col = m.column(j);
        let mut best = 0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            let flipped: Vec<f64> = col.iter().map(|v| -v).collect();
            m.set_column(j, &flipped);
        }
    }
}

/// First `p` left singular vectors of the snapshot matrix.
pub fn pod_basis(x: &DenseMatrix, p: usize) -> Result<ReducedBasis> {
    let modes = pod(x, p, DEFAULT_RANK_TOL)?;
    ReducedBasis::new(modes.modes, None, BasisKind::Pod, 0)
}

/// POD in the `W`-weighted inner product.
pub fn weighted_pod_basis(x: &DenseMatrix, weights: &[f64], p: usize) -> Result<ReducedBasis> {
    let modes = weighted_pod(x, Some(weights), p, DEFAULT_RANK_TOL)?;
    ReducedBasis::new(modes.modes, Some(weights.to_vec()), BasisKind::Pod, 0)
}

/// Range/complement split of `C` and the deflated snapshots `Q₂ᵀX`.
struct ConstraintSplit {
    q1: DenseMatrix,
    q2: DenseMatrix,
    deflated: DenseMatrix,
}

fn split_constraints(x: &DenseMatrix, c: &AggregationMatrix) -> Result<ConstraintSplit> {
    let cm = c.matrix();
    if cm.rows() != x.rows() {
        return Err(Error::dim("constrained_pod_basis", x.rows(), cm.rows()));
    }
    if cm.cols() == 0 {
        return Ok(ConstraintSplit {
            q1: DenseMatrix::zeros(x.rows(), 0),
            q2: DenseMatrix::identity(x.rows()),
            deflated: x.clone(),
        });
    }
    let qr = qr_full(cm, DEFAULT_RANK_TOL)?;
    let q2 = qr.q2();
    let deflated = q2.tr_matmul(x)?;
    Ok(ConstraintSplit {
        q1: qr.q1(),
        q2,
        deflated,
    })
}

/// Basis size `H_C + p` where `p` POD modes of the deflated snapshots
/// capture `fraction` of their energy.
pub fn constrained_pod_size(x: &DenseMatrix, c: &AggregationMatrix, fraction: f64) -> Result<usize> {
    let split = split_constraints(x, c)?;
    let hc = split.q1.cols();
    if split.deflated.rows() == 0 {
        return Ok(hc);
    }
    let modes = pod(&split.deflated, 0, DEFAULT_RANK_TOL)?;
    Ok(hc + energy_truncation(&modes.singular_values, fraction))
}

/// `Φ̃ = [Q₁  Q₂V]`: an orthonormal basis of `range(C)` followed by the
/// leading POD modes of the snapshots deflated against it.
///
/// This is the snapshot-optimal `q`-dimensional orthonormal basis whose
/// span contains `range(C)`.
pub fn constrained_pod_basis(x: &DenseMatrix, c: &AggregationMatrix, q: usize) -> Result<ReducedBasis> {
    let split = split_constraints(x, c)?;
    let hc = split.q1.cols();
    if q < hc {
        return Err(Error::InvalidArgument(format!(
            "basis size q = {q} is smaller than rank(C) = {hc}"
        )));
    }
    let extra = q - hc;
    let matrix = if extra == 0 || split.deflated.rows() == 0 {
        if extra > 0 {
            warn!("constraint space fills the whole state space; ignoring {extra} POD modes");
        }
        split.q1
    } else {
        let avail = split.deflated.rows().min(split.deflated.cols());
        let modes = pod(&split.deflated, extra.min(avail), DEFAULT_RANK_TOL)?;
        if modes.modes.cols() < extra {
            warn!(
                "deflated snapshots have rank {}; constrained basis truncated to {} columns",
                modes.rank,
                hc + modes.modes.cols()
            );
        }
        let mut pod_part = split.q2.matmul(&modes.modes)?;
        normalize_column_signs(&mut pod_part);
        if hc == 0 {
            pod_part
        } else {
            split.q1.hcat(&pod_part)?
        }
    };
    ReducedBasis::new(matrix, None, BasisKind::ConstrainedPod, hc)
}

/// Orthonormal basis of `span([Φ C])` with `rank([Φ C])` columns.
///
/// The inclusion constraint holds, but the result is generally not the
/// snapshot-optimal constrained basis.
pub fn span_merge_basis(phi: &ReducedBasis, c: &AggregationMatrix) -> Result<ReducedBasis> {
    let cm = c.matrix();
    if cm.rows() != phi.n_full() {
        return Err(Error::dim("span_merge_basis", phi.n_full(), cm.rows()));
    }
    let merged = phi.matrix().hcat(cm)?;
    let sqrt_w: Option<Vec<f64>> = phi.weights().map(|w| w.iter().map(|v| v.sqrt()).collect());
    let scaled = match &sqrt_w {
        Some(s) => merged.scale_rows(s)?,
        None => merged,
    };
    let mut q = qr_thin(&scaled, DEFAULT_RANK_TOL)?.q1();
    if let Some(s) = &sqrt_w {
        let inv: Vec<f64> = s.iter().map(|v| 1.0 / v).collect();
        q = q.scale_rows(&inv)?;
    }
    let hc = if cm.cols() == 0 {
        0
    } else {
        qr_thin(cm, DEFAULT_RANK_TOL)?.rank()
    };
    ReducedBasis::new(q, phi.weights().map(<[f64]>::to_vec), BasisKind::SpanMerge, hc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::projector_distance;
    use crate::mesh::{build_aggregation_matrix, SubdomainDecomposition};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
        DenseMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn aggregation(n: usize, sets: Vec<Vec<usize>>) -> AggregationMatrix {
        let d = SubdomainDecomposition::new(sets, n).unwrap();
        build_aggregation_matrix(&vec![1.0; n], &d).unwrap()
    }

    #[test]
    fn repeated_snapshot_gives_single_mode() {
        let mut x = DenseMatrix::zeros(4, 3);
        for j in 0..3 {
            x[(0, j)] = 1.0;
        }
        let b = pod_basis(&x, 1).unwrap();
        assert_eq!(b.matrix().column(0), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(b.kind(), BasisKind::Pod);
        // Asking for more modes than the rank truncates.
        assert_eq!(pod_basis(&x, 3).unwrap().dim(), 1);
    }

    #[test]
    fn equal_energy_snapshots_span_is_recovered() {
        let s = 0.5_f64.sqrt();
        let x = DenseMatrix::from_columns(&[vec![s, s, 0.0], vec![s, -s, 0.0]]).unwrap();
        let b = pod_basis(&x, 2).unwrap();
        assert!(projector_distance(b.matrix(), &x, None) < 1e-12);
    }

    #[test]
    fn q_equal_to_constraint_rank_gives_q1() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_matrix(10, 6, &mut rng);
        let c = aggregation(10, vec![(0..4).collect(), (4..10).collect()]);
        let b = constrained_pod_basis(&x, &c, 2).unwrap();
        assert_eq!(b.dim(), 2);
        let q1 = qr_full(c.matrix(), DEFAULT_RANK_TOL).unwrap().q1();
        assert!(b.matrix().sub(&q1).unwrap().max_abs() == 0.0);
        assert!(matches!(
            constrained_pod_basis(&x, &c, 1),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn unit_cell_constraint_with_disjoint_snapshots() {
        // C = e₀ and snapshots vanish on cell 0: Φ̃ = [±e₀, POD(X)].
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut x = random_matrix(6, 4, &mut rng);
        for j in 0..4 {
            x[(0, j)] = 0.0;
        }
        let c = aggregation(6, vec![vec![0]]);
        let b = constrained_pod_basis(&x, &c, 3).unwrap();
        assert!((b.matrix()[(0, 0)].abs() - 1.0).abs() < 1e-15);
        let modes = pod_basis(&x, 2).unwrap();
        let tail = b.matrix().columns_range(1, 3);
        assert!(projector_distance(&tail, modes.matrix(), None) < 1e-12);
    }

    #[test]
    fn constrained_basis_is_orthonormal_and_includes_c() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_matrix(20, 12, &mut rng);
        let c = aggregation(20, vec![(0..7).collect(), (7..13).collect(), vec![13, 15, 19]]);
        let b = constrained_pod_basis(&x, &c, 8).unwrap();
        assert!(b.orthonormality_residual() < 1e-12);
        assert!(b.inclusion_residual(c.matrix()).unwrap() < 1e-12);
        assert_eq!(b.constraint_rank(), 3);
    }

    #[test]
    fn span_merge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // C inside span(Φ): span unchanged.
        let c = aggregation(8, vec![(0..4).collect()]);
        let cols: Vec<Vec<f64>> = vec![c.matrix().column(0), random_matrix(8, 1, &mut rng).column(0)];
        let q = qr_thin(&DenseMatrix::from_columns(&cols).unwrap(), 1e-10).unwrap().q1();
        let phi = ReducedBasis::new(q, None, BasisKind::Pod, 0).unwrap();
        let merged = span_merge_basis(&phi, &c).unwrap();
        assert_eq!(merged.dim(), 2);
        assert!(projector_distance(merged.matrix(), phi.matrix(), None) < 1e-12);

        // Φ orthogonal to C: dimensions add.
        let phi = ReducedBasis::new(
            DenseMatrix::from_columns(&[vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]]).unwrap(),
            None,
            BasisKind::Pod,
            0,
        )
        .unwrap();
        let c2 = aggregation(8, vec![(0..4).collect(), vec![5, 6]]);
        assert_eq!(span_merge_basis(&phi, &c2).unwrap().dim(), 3);

        let x = random_matrix(15, 9, &mut rng);
        let phi = pod_basis(&x, 4).unwrap();
        let c3 = aggregation(15, vec![(0..5).collect(), (5..15).collect()]);
        let merged = span_merge_basis(&phi, &c3).unwrap();
        assert!(merged.inclusion_residual(c3.matrix()).unwrap() < 1e-12);
        assert!(merged.orthonormality_residual() < 1e-12);
    }

    #[test]
    fn energy_sized_constrained_basis() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_matrix(12, 5, &mut rng);
        let c = aggregation(12, vec![(0..6).collect()]);
        let q = constrained_pod_size(&x, &c, 0.9999).unwrap();
        assert!((2..=6).contains(&q));
    }
}
