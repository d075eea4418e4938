use randwidth::lawcheck::{
    arbitrary_lower_bound, bound_vs_estimate, concentration_probe, lipschitz_probe,
    ConcentrationParams, LipschitzParams,
};
use randwidth::randsrc::{
    make_rng, IsotropicFamily, IsotropicModel, Perturbation, PerturbationLaw,
};

fn model(family: IsotropicFamily, n: usize) -> IsotropicModel {
    IsotropicModel::new(family, n).unwrap()
}

#[test]
fn sphere_spread_is_within_the_lipschitz_scale() {
    for family in IsotropicFamily::ALL {
        let m = model(family, 6);
        let points = 512;
        let c = lipschitz_probe(
            &LipschitzParams {
                model: m,
                points,
                pairs: 20,
                replicates: 8,
                directions: 64,
            },
            &make_rng(1),
        )
        .unwrap()
        .c_hat;
        let curve = concentration_probe(
            &ConcentrationParams {
                law: PerturbationLaw::Sphere,
                model: m,
                points,
                draws: 200,
                t_grid: vec![0.1],
                replicates: 4,
                directions: 64,
            },
            &make_rng(2),
        )
        .unwrap();
        let mean = curve.values.iter().sum::<f64>() / curve.values.len() as f64;
        let sd = (curve.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
            / (curve.values.len() - 1) as f64)
            .sqrt();
        let scale = 5.0 * c * (points as f64).ln().sqrt() / (points as f64).sqrt();
        assert!(sd <= scale, "{family}: sd {sd} vs {scale}");
    }
}

#[test]
fn geometric_decay_bound_sits_below_the_estimate() {
    let y: Vec<f64> = (1..=64).map(|i| 2f64.powi(-i)).collect();
    let cmp = bound_vs_estimate(
        model(IsotropicFamily::Cube, 8),
        &Perturbation::fixed(y.clone()),
        0.5,
        16,
        256,
        &make_rng(3),
    )
    .unwrap();
    assert!(cmp.bound.k_star.unwrap() <= 2);
    let c2 = cmp.fitted_c2.unwrap();
    let bound = arbitrary_lower_bound(&y, 8, 0.5, c2, false).unwrap();
    assert!(cmp.estimate.value >= bound.bound_value * (1.0 - 1e-12));
}

#[test]
fn fitted_c2_is_stable_across_families_for_ones() {
    let fitted: Vec<f64> = IsotropicFamily::ALL
        .iter()
        .map(|&f| {
            bound_vs_estimate(
                model(f, 8),
                &Perturbation::ones(64),
                0.5,
                16,
                256,
                &make_rng(4),
            )
            .unwrap()
            .fitted_c2
            .unwrap()
        })
        .collect();
    for c in &fitted {
        assert!((0.3..=5.0).contains(c), "{fitted:?}");
    }
}
