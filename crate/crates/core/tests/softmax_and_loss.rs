use proptest::prelude::*;
use reidlab_core::distill::{distillation_loss, entropy, tempered_softmax, DistillConfig};
use reidlab_core::neural::{softmax, softmax_cross_entropy, TrainConfig};

fn cfg(t: f64, lambda: f64) -> DistillConfig {
    DistillConfig::new(t, lambda, TrainConfig::default())
}

fn logits() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-30.0f64..30.0, 2..25)
}

fn numeric_grad(f: impl Fn(&[f64]) -> f64, z: &[f64]) -> Vec<f64> {
    let h = 1e-5;
    (0..z.len())
        .map(|i| {
            let (mut up, mut dn) = (z.to_vec(), z.to_vec());
            up[i] += h;
            dn[i] -= h;
            (f(&up) - f(&dn)) / (2.0 * h)
        })
        .collect()
}

proptest! {
    #[test]
    fn tempered_softmax_is_a_distribution(z in logits(), t in 1.0f64..100.0) {
        let p = tempered_softmax(&z, t);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn temperature_preserves_order(z in logits(), t in 1.0f64..50.0) {
        let p = tempered_softmax(&z, t);
        for i in 0..z.len() {
            for j in 0..z.len() {
                if z[i] > z[j] {
                    prop_assert!(p[i] >= p[j]);
                }
            }
        }
    }

    #[test]
    fn entropy_grows_with_temperature(z in logits(), t in 1.0f64..20.0, dt in 0.0f64..20.0) {
        prop_assume!(z.iter().any(|&v| v != z[0]));
        let lo = entropy(&tempered_softmax(&z, t)).unwrap();
        let hi = entropy(&tempered_softmax(&z, t + dt)).unwrap();
        prop_assert!(hi >= lo - 1e-12, "{lo} > {hi}");
        prop_assert!(hi <= (z.len() as f64).ln() + 1e-12);
    }

    #[test]
    fn unit_temperature_is_the_classifier_softmax(z in logits()) {
        let p = tempered_softmax(&z, 1.0);
        let q = softmax(&z);
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn loss_gradient_matches_finite_differences(
        zt in prop::collection::vec(-5.0f64..5.0, 5),
        zs in prop::collection::vec(-5.0f64..5.0, 5),
        label in 0usize..5,
        t in 1.0f64..30.0,
        lambda in 0.0f64..1.0,
    ) {
        let c = cfg(t, lambda);
        let (_, g) = distillation_loss(&zt, &zs, label, &c).unwrap();
        let n = numeric_grad(|z| distillation_loss(&zt, z, label, &c).unwrap().0.total, &zs);
        let scale = g.iter().chain(&n).fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
        for (a, b) in g.iter().zip(&n) {
            prop_assert!((a - b).abs() / scale <= 1e-4, "{a} vs {b}");
        }
    }

    #[test]
    fn hard_term_is_lambda_times_cross_entropy(z in prop::collection::vec(-5.0f64..5.0, 4), label in 0usize..4, lambda in 0.0f64..2.0) {
        let (l, _) = distillation_loss(&z, &z, label, &cfg(3.0, lambda)).unwrap();
        let (ce, _) = softmax_cross_entropy(&z, label);
        prop_assert!((l.weighted_hard - lambda * ce).abs() <= 1e-12 * (1.0 + ce));
        prop_assert!((l.total - l.soft - l.weighted_hard).abs() <= 1e-12 * (1.0 + l.total));
    }
}

#[test]
fn very_high_temperature_flattens_to_uniform() {
    let z = [25.0, -25.0, 3.0, 0.0, 11.0];
    for p in tempered_softmax(&z, 1e6) {
        assert!((p - 0.2).abs() < 1e-5);
    }
}

#[test]
fn soft_gradient_vanishes_when_student_matches_teacher() {
    let z = [1.0, -2.0, 0.5];
    let (_, g) = distillation_loss(&z, &z, 0, &cfg(4.0, 0.0)).unwrap();
    assert!(g.iter().all(|v| v.abs() < 1e-15));
}

#[test]
fn rescale_flag_multiplies_soft_term_by_t_squared() {
    let (zt, zs) = ([0.3, 1.7, -0.4], [1.0, 0.0, -1.0]);
    let plain = cfg(4.0, 0.0);
    let scaled = DistillConfig {
        rescale_soft_term: true,
        ..plain.clone()
    };
    let (a, ga) = distillation_loss(&zt, &zs, 1, &plain).unwrap();
    let (b, gb) = distillation_loss(&zt, &zs, 1, &scaled).unwrap();
    assert!((b.soft - 16.0 * a.soft).abs() < 1e-12);
    for (x, y) in ga.iter().zip(&gb) {
        assert!((y - 16.0 * x).abs() < 1e-12);
    }
}

#[test]
fn invalid_inputs_are_rejected() {
    assert!(distillation_loss(&[0.0, 1.0], &[0.0], 0, &cfg(2.0, 0.1)).is_err());
    assert!(distillation_loss(&[0.0, 1.0], &[0.0, 1.0], 2, &cfg(2.0, 0.1)).is_err());
    assert!(cfg(0.5, 0.1).validate().is_err());
    assert!(cfg(2.0, -0.1).validate().is_err());
}
