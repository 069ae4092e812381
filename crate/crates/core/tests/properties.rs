use featurescope::acts_io::{read_dump, write_dump, ActivationDump, Branch};
use featurescope::attribution::{contributions, fold_head, importance};
use featurescope::dictionary::{kkt_violation, nnls_extract, Dictionary, FeatureMatrix, KKT_TOL};
use featurescope::flow::cka;
use featurescope::metafeatures::{aggregate_complexity, MetaFeatureSet};
use featurescope::numkit::{kmeans, spearman};
use featurescope::vinformation::{v_information, ComplexityProfile};
use nalgebra::DMatrix;
use ndarray::{Array1, Array2};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize, lo: f64, hi: f64) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(lo..hi, rows * cols).prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

fn sized_matrix(rows: std::ops::Range<usize>, cols: std::ops::Range<usize>, lo: f64, hi: f64) -> impl Strategy<Value = Array2<f64>> {
    (rows, cols).prop_flat_map(move |(r, c)| matrix(r, c, lo, hi))
}

fn orthogonal(seed: &[f64], d: usize) -> Array2<f64> {
    let qr = DMatrix::from_row_slice(d, d, &seed[..d * d]).qr();
    let q = qr.q();
    Array2::from_shape_fn((d, d), |(i, j)| q[(i, j)])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn acts_round_trip(
        data in sized_matrix(2..12, 1..8, -1e6, 1e6),
        layer in "[a-z0-9_.]{0,12}",
        branch in prop_oneof![Just(Branch::Residual), Just(Branch::Main), Just(Branch::Combined)],
        epoch in any::<u64>(),
        start in 0u64..1000,
    ) {
        let ids: Vec<u64> = (0..data.nrows() as u64).map(|i| start + 3 * i).collect();
        let dump = ActivationDump::from_f64(layer, branch, epoch, &data, ids).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.acts");
        write_dump(&dump, &path).unwrap();
        prop_assert_eq!(read_dump(&path).unwrap(), dump);
    }

    #[test]
    fn nnls_rows_are_independent(
        atoms in sized_matrix(1..6, 2..7, 0.01, 2.0),
        seed_rows in prop::collection::vec(-3.0f64..3.0, 60),
        shift in 1usize..9,
    ) {
        let d = atoms.ncols();
        let n = seed_rows.len() / d;
        let a = Array2::from_shape_vec((n, d), seed_rows[..n * d].to_vec()).unwrap();
        let dict = Dictionary::new(atoms).unwrap();
        let order: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
        let permuted = a.select(ndarray::Axis(0), &order);
        let z = nnls_extract(&dict, a.view()).unwrap();
        let zp = nnls_extract(&dict, permuted.view()).unwrap();
        let gram = dict.gram();
        for (i, &src) in order.iter().enumerate() {
            prop_assert_eq!(zp.values.row(i), z.values.row(src));
            let b = dict.atoms.dot(&a.row(src));
            let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
            prop_assert!(kkt_violation(gram.view(), b.view(), z.values.row(src)) <= KKT_TOL * scale);
            prop_assert!(z.values.row(src).iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn cka_invariances(
        a in matrix(30, 4, -5.0, 5.0),
        b in matrix(30, 3, -5.0, 5.0),
        q_seed in prop::collection::vec(-1.0f64..1.0, 16),
        scale in 0.01f64..100.0,
    ) {
        let base = cka(a.view(), b.view()).unwrap();
        prop_assert!((0.0..=1.0).contains(&base));
        prop_assert!((cka(a.view(), a.view()).unwrap() - 1.0).abs() < 1e-8);
        prop_assert!((cka(b.view(), a.view()).unwrap() - base).abs() < 1e-10);
        let rotated = a.dot(&orthogonal(&q_seed, 4));
        prop_assert!((cka(rotated.view(), b.view()).unwrap() - base).abs() < 1e-8);
        let scaled = &b * scale;
        prop_assert!((cka(a.view(), scaled.view()).unwrap() - base).abs() < 1e-8);
    }

    #[test]
    fn importance_is_homogeneous(
        z in matrix(8, 4, 0.0, 3.0),
        atoms in matrix(4, 5, 0.0, 1.0),
        head in matrix(5, 3, -2.0, 2.0),
        targets in prop::collection::vec(0usize..3, 8),
        c in 0.0f64..10.0,
    ) {
        prop_assume!(atoms.rows().into_iter().all(|r| r.iter().any(|&v| v > 0.0)));
        let dict = Dictionary::new(atoms).unwrap();
        let folded = fold_head(&dict, head.view()).unwrap();
        let ids: Vec<u64> = (0..8).collect();
        let base = importance(&FeatureMatrix::new(z.clone(), ids.clone()).unwrap(), &folded, &targets).unwrap();
        let scaled = importance(&FeatureMatrix::new(&z * c, ids.clone()).unwrap(), &folded, &targets).unwrap();
        for (x, y) in base.per_feature.iter().zip(&scaled.per_feature) {
            prop_assert!((y.importance - c * x.importance).abs() <= 1e-10 * (1.0 + c * x.importance));
        }
        let fm = FeatureMatrix::new(z, ids).unwrap();
        let contrib = contributions(&fm, &folded, &targets).unwrap();
        let logits = folded.logits(&fm).unwrap();
        for (s, &t) in targets.iter().enumerate() {
            let total: f64 = contrib.row(s).sum();
            prop_assert!((total - logits[[s, t]]).abs() <= 1e-10 * (1.0 + logits[[s, t]].abs()));
        }
    }

    #[test]
    fn vinfo_is_bounded_and_affine_invariant(
        x in matrix(40, 3, -2.0, 2.0),
        noise in prop::collection::vec(-1.0f64..1.0, 40),
        w in prop::collection::vec(-2.0f64..2.0, 3),
        a in 0.1f64..10.0,
        b in -5.0f64..5.0,
    ) {
        let z = x.dot(&Array1::from(w)) + Array1::from(noise);
        let v = v_information(x.view(), z.view(), 1e-6).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
        let moved = z.mapv(|t| a * t + b);
        prop_assert!((v_information(x.view(), moved.view(), 1e-6).unwrap() - v).abs() < 1e-8);
        let mut xs = x.clone();
        xs.column_mut(1).mapv_inplace(|t| t * 7.0 - 1.0);
        prop_assert!((v_information(xs.view(), z.view(), 1e-6).unwrap() - v).abs() < 1e-8);
    }

    #[test]
    fn spearman_is_bounded(x in prop::collection::vec(-10.0f64..10.0, 3..30), seed in any::<u64>()) {
        let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| v * v - i as f64).collect();
        let c = spearman(&x, &y, 200, seed).unwrap();
        prop_assert!((-1.0..=1.0).contains(&c.rho));
        prop_assert!(c.p_value > 0.0 && c.p_value <= 1.0);
    }

    #[test]
    fn kmeans_sse_never_increases(points in sized_matrix(5..40, 1..4, -10.0, 10.0), k in 1usize..5, seed in any::<u64>()) {
        prop_assume!(k <= points.nrows());
        let fit = kmeans(points.view(), k, seed, 100).unwrap();
        for w in fit.sse_history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12);
        }
        prop_assert_eq!(fit, kmeans(points.view(), k, seed, 100).unwrap());
    }

    #[test]
    fn cluster_means_weight_to_global_mean(
        assignments in prop::collection::vec(0usize..5, 1..40),
        ks in prop::collection::vec(0.0f64..1.0, 40),
    ) {
        let k = assignments.len();
        let set = MetaFeatureSet { assignments, n_clusters: 5, per_cluster: vec![] };
        let profiles: Vec<ComplexityProfile> = (0..k)
            .map(|i| ComplexityProfile {
                feature_id: i,
                per_layer_vinfo: vec![],
                complexity_k: Some(ks[i]),
                per_epoch_vinfo: Default::default(),
                lambda_ttd: None,
            })
            .collect();
        let filled = aggregate_complexity(&set, &profiles).unwrap();
        prop_assert_eq!(filled.per_cluster.iter().map(|c| c.member_count).sum::<usize>(), k);
        let weighted: f64 = filled
            .per_cluster
            .iter()
            .filter_map(|c| c.mean_complexity.map(|m| m * c.member_count as f64))
            .sum::<f64>() / k as f64;
        let global = ks[..k].iter().sum::<f64>() / k as f64;
        prop_assert!((weighted - global).abs() < 1e-10);
    }
}
