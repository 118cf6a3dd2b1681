//! Property tests for the crate's data-level invariants.

use drekit::autodiff::{Graph, Tensor};
use drekit::config::{parse_config_str, Config};
use drekit::metrics::mmd2;
use drekit::models::{
    load_checkpoint, save_checkpoint, Checkpoint, KernelRatioModel, MlpRatioModel, OutputMode,
    RatioModel, DEFAULT_RBAR,
};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Ratio outputs stay inside [1/R̄, R̄] for arbitrary finite inputs and
    /// perturbed parameters, in both output modes.
    #[test]
    fn ratio_outputs_stay_clipped(
        seed in 0u64..1000,
        scale in 0.1f64..40.0,
        xs in proptest::collection::vec(-10.0f64..10.0, 2..40),
        exponential in any::<bool>(),
    ) {
        let rbar = 50.0;
        let mode = if exponential { OutputMode::Exponential } else { OutputMode::ClippedSoftplus };
        let mut model = MlpRatioModel::init(2, 8, seed, mode, rbar, false);
        // blow the weights up so clipping actually engages sometimes
        for w in model.core.weights.iter_mut() {
            *w = w.map(|v| v * scale);
        }
        let n = xs.len() / 2;
        let x = Tensor::new(n, 2, xs[..n * 2].to_vec());
        let (r, logr) = model.forward(&x).unwrap();
        for (rv, lv) in r.iter().zip(&logr) {
            prop_assert!(rv.is_finite() && lv.is_finite());
            prop_assert!(*rv >= 1.0 / rbar && *rv <= rbar, "r = {rv}");
            if exponential {
                prop_assert!((lv.exp() - rv).abs() <= 1e-9 * rv.max(1.0));
            }
        }
    }

    /// Gradient accumulation is insensitive to the insertion order of
    /// commutative sums.
    #[test]
    fn gradient_accumulation_order_independent(
        vals in proptest::collection::vec(-2.0f64..2.0, 8),
    ) {
        let a = Tensor::row(&vals[0..2]);
        let b = Tensor::row(&vals[2..4]);
        let c = Tensor::row(&vals[4..6]);
        let d = Tensor::row(&vals[6..8]);
        let build = |order: [usize; 4]| {
            let mut g = Graph::new();
            let ids = [
                g.param(a.clone()),
                g.param(b.clone()),
                g.param(c.clone()),
                g.param(d.clone()),
            ];
            let prods = [
                g.mul(ids[order[0]], ids[order[1]]),
                g.mul(ids[order[2]], ids[order[3]]),
            ];
            let s = g.add(prods[0], prods[1]);
            let m = g.mean(s);
            let e = g.exp(m);
            let (_, grads) = g.evaluate_with_grad(e).unwrap();
            ids.map(|id| grads.param(id).data().to_vec())
        };
        // same pairing, the two product terms inserted in opposite order;
        // each leaf keeps its identity so gradients must match slot-wise
        let ga = build([0, 1, 2, 3]);
        let gb = build([2, 3, 0, 1]);
        for (x, y) in ga.iter().zip(&gb) {
            for (u, v) in x.iter().zip(y) {
                prop_assert!((u - v).abs() < 1e-12);
            }
        }
    }

    /// MMD² is symmetric and non-negative up to rounding.
    #[test]
    fn mmd_nonnegative_and_symmetric(
        xs in proptest::collection::vec(-3.0f64..3.0, 8..60),
        ys in proptest::collection::vec(-3.0f64..3.0, 8..60),
        sigma in 0.2f64..3.0,
    ) {
        let a = Tensor::new(xs.len() / 2, 2, xs[..(xs.len() / 2) * 2].to_vec());
        let b = Tensor::new(ys.len() / 2, 2, ys[..(ys.len() / 2) * 2].to_vec());
        let ab = mmd2(&a, &b, sigma);
        let ba = mmd2(&b, &a, sigma);
        prop_assert!(ab >= -1e-12);
        prop_assert!((ab - ba).abs() < 1e-12);
    }

    /// Checkpoints round-trip bit-exactly through text for both kinds.
    #[test]
    fn checkpoint_roundtrip_bits(seed in 0u64..500, kernel in any::<bool>()) {
        let dir = std::env::temp_dir().join(format!("drekit-prop-{}-{seed}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.ckpt");
        let before: Checkpoint = if kernel {
            let centers = Tensor::new(3, 2, (0..6).map(|i| (i as f64 + seed as f64).sin()).collect());
            Checkpoint::Kernel(KernelRatioModel::new(centers, vec![0.1, -0.2, 3.0], 0.9))
        } else {
            Checkpoint::Mlp(MlpRatioModel::init(3, 4, seed, OutputMode::Exponential, DEFAULT_RBAR, true))
        };
        save_checkpoint(&path, &before).unwrap();
        let after = load_checkpoint(&path).unwrap();
        match (&before, &after) {
            (Checkpoint::Mlp(a), Checkpoint::Mlp(b)) => {
                let bits = |m: &MlpRatioModel| -> Vec<u64> {
                    m.core.param_tensors().iter().flat_map(|t| t.to_bits()).collect()
                };
                prop_assert_eq!(bits(a), bits(b));
                // the restored function is the same function
                let x = Tensor::new(2, 3, vec![0.1, -0.5, 0.7, 1.0, 0.0, -1.0]);
                let (ra, _) = a.forward(&x).unwrap();
                let (rb, _) = b.forward(&x).unwrap();
                prop_assert_eq!(ra, rb);
            }
            (Checkpoint::Kernel(a), Checkpoint::Kernel(b)) => {
                prop_assert_eq!(a.centers.to_bits(), b.centers.to_bits());
                prop_assert_eq!(a.weights.clone(), b.weights.clone());
                prop_assert_eq!(a.sigma.to_bits(), b.sigma.to_bits());
            }
            _ => prop_assert!(false, "kind changed through roundtrip"),
        }
        let _ = std::fs::remove_dir_all(&dir);
    }

    /// Printed configs parse back to the identical config.
    #[test]
    fn config_print_parse_roundtrip(
        lambda in 0.0f64..=1.0,
        c in 0.0f64..3.0,
        epochs in 0usize..500,
        seed in any::<u64>(),
        n in 1usize..5000,
        m in 1usize..5000,
    ) {
        let mut cfg = Config::default();
        cfg.objective.lambda = lambda;
        cfg.objective.c = c;
        cfg.train.epochs = epochs;
        cfg.train.seed = seed;
        cfg.dataset.n = n;
        cfg.dataset.m = m;
        let back = parse_config_str(&cfg.print()).unwrap();
        prop_assert_eq!(cfg, back);
    }
}
