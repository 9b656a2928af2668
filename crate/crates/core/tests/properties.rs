//! Randomized structural properties of the linear algebra kernels and the
//! configuration validator.

use nalgebra::DMatrix;
use proptest::prelude::*;

use scrom::linalg::{qr_thin, svd, weighted_pod, DenseMatrix, DEFAULT_RANK_TOL};
use scrom::pipeline::ScenarioConfig;
use scrom::Error;

fn matrix(max_rows: usize, max_cols: usize) -> impl Strategy<Value = DenseMatrix> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(|(m, n)| {
        prop::collection::vec(-1.0f64..1.0, m * n)
            .prop_map(move |d| DenseMatrix::from_col_major(m, n, &d).unwrap())
    })
}

fn to_na(a: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_column_slice(a.rows(), a.cols(), &a.to_col_major())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn qr_is_orthonormal_and_reconstructs(a in matrix(200, 50)) {
        let f = qr_thin(&a, DEFAULT_RANK_TOL).unwrap();
        let q = f.q();
        let scale = a.max_abs().max(1.0);
        prop_assert!(q.orthonormality_residual(None) <= 1e-12 * (a.rows() as f64).sqrt().max(1.0));
        prop_assert!(f.reconstruct().sub(&a).unwrap().max_abs() <= 1e-12 * scale * a.rows() as f64);
    }

    #[test]
    fn singular_values_ignore_row_order(a in matrix(40, 20), seed in any::<u64>()) {
        let m = a.rows();
        let mut perm: Vec<usize> = (0..m).collect();
        let mut s = seed;
        for i in (1..m).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let b = DenseMatrix::from_fn(m, a.cols(), |i, j| a[(perm[i], j)]);
        let sa = svd(&a).unwrap().s;
        let sb = svd(&b).unwrap().s;
        let tol = 1e-12 * sa[0].max(1.0);
        for (x, y) in sa.iter().zip(&sb) {
            prop_assert!((x - y).abs() <= tol, "{x} vs {y}");
        }
    }

    #[test]
    fn weighted_pod_attains_the_truncated_tail(
        a in matrix(30, 12),
        w in prop::collection::vec(0.1f64..4.0, 30),
        r in 1usize..6,
    ) {
        let (n, m) = a.shape();
        let r = r.min(n.min(m));
        let w = &w[..n];
        let modes = weighted_pod(&a, Some(w), r, 0.0).unwrap();
        let phi = &modes.modes;
        prop_assert!(phi.orthonormality_residual(Some(w)) <= 1e-12);

        // Oracle: singular values of W^{1/2} X from an independent SVD.
        let mut xw = to_na(&a);
        for i in 0..n {
            xw.row_mut(i).scale_mut(w[i].sqrt());
        }
        let sv = xw.singular_values();
        let mut sv: Vec<f64> = sv.iter().copied().collect();
        sv.sort_by(|x, y| y.partial_cmp(x).unwrap());
        let r = phi.cols();
        let tail: f64 = sv[r..].iter().map(|s| s * s).sum();
        let total: f64 = sv.iter().map(|s| s * s).sum();

        // ‖X − ΦΦᵀWX‖²_W computed directly.
        let coeff = DenseMatrix::from_fn(r, m, |k, j| (0..n).map(|i| phi[(i, k)] * w[i] * a[(i, j)]).sum());
        let resid = a.sub(&phi.matmul(&coeff).unwrap()).unwrap();
        let err: f64 = (0..n)
            .map(|i| w[i] * resid.row(i).iter().map(|v| v * v).sum::<f64>())
            .sum();
        prop_assert!((err - tail).abs() <= 1e-10 * total.max(1.0), "{err} vs {tail}");
    }
}

const BASE: &str = r#"
problem = "burgers1d"
[grid]
n = 16
[physics]
viscosity = 0.01
[initial_condition]
preset = "constant"
value = 1.0
[time]
dt = 0.01
t_end = 0.1
[[subdomains]]
range = [0, 8]
[[subdomains]]
range = [8, 16]
[rom]
kind = "novel"
size = 4
"#;

/// Each mutation replaces one line of the base scenario and names the field
/// the validator must report.
const MUTATIONS: &[(&str, &str, &str)] = &[
    ("n = 16", "n = 1", "grid.n"),
    ("n = 16", "n = 16\nnx = 4", "grid.nx"),
    ("viscosity = 0.01", "viscosity = -1.0", "physics.viscosity"),
    ("dt = 0.01", "dt = 0.0", "time.dt"),
    ("dt = 0.01", "dt = 0.03", "time.t_end"),
    ("t_end = 0.1", "t_end = -0.1", "time.t_end"),
    ("range = [8, 16]", "range = [8, 17]", "subdomains[1].range"),
    ("size = 4", "size = 99", "rom.size"),
    ("size = 4", "size = 4\ncolour = 1", "colour"),
    ("viscosity = 0.01", "viscocity = 0.01", "viscocity"),
];

proptest! {
    #[test]
    fn config_mutations_name_the_field(k in 0..MUTATIONS.len()) {
        let (from, to, field) = MUTATIONS[k];
        prop_assert!(ScenarioConfig::from_toml_str(BASE).is_ok());
        let text = BASE.replacen(from, to, 1);
        match ScenarioConfig::from_toml_str(&text) {
            Err(Error::Config { field: got, .. }) => prop_assert_eq!(got, field),
            other => prop_assert!(false, "expected a config error for {}, got {:?}", field, other),
        }
    }
}
