use eit_fwm::params::reference_params;
use eit_fwm::pipeline::{Model, ModelConfig};
use eit_fwm::propagation::NoiseTreatment;
use eit_fwm::sweeps::{
    double_pair_set, linear_grid, single_pair_set, sweep_gamma0, sweep_omega, Execution, PairSpec,
};
use proptest::prelude::*;

fn sorted_grid(mut xs: Vec<f64>) -> Vec<f64> {
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn serial_and_parallel_sweeps_are_identical(
        xs in prop::collection::vec(-3000.0f64..3000.0, 1..40),
        pairs in 1usize..=2,
    ) {
        let grid = sorted_grid(xs);
        let model = Model::new(&reference_params(), ModelConfig::default().pairs(pairs)).unwrap();
        let set = if pairs == 1 { single_pair_set() } else { double_pair_set() };
        let a = sweep_omega(&model, &set, &grid, Execution::Serial).unwrap();
        let b = sweep_omega(&model, &set, &grid, Execution::Parallel).unwrap();
        prop_assert_eq!(&a, &b);
        let c = sweep_omega(&model, &set, &grid, Execution::Parallel).unwrap();
        prop_assert_eq!(&a, &c);
        prop_assert!(a.values.iter().all(|r| r.len() == set.len() && r.iter().all(|&v| v >= 0.0)));
    }

    #[test]
    fn langevin_outputs_are_physical(
        gamma0 in 0.0f64..50.0,
        omega_p in 50.0f64..800.0,
        omega_c in 50.0f64..800.0,
        delta in 300.0f64..3000.0,
        eta in 0.0f64..5.0,
        omega in -3000.0f64..3000.0,
    ) {
        let mut p = reference_params();
        p.gamma0 = gamma0;
        p.omega_p = omega_p;
        p.omega_c = omega_c;
        p.delta1 = -delta;
        p.delta2 = delta;
        p.coupling_scale = eta;
        for pairs in [1, 2] {
            let model = Model::new(&p, ModelConfig::default().pairs(pairs)).unwrap();
            let r = model.evaluate(omega).unwrap();
            prop_assert!(r.transfer.commutator_residual() < 1e-6);
            prop_assert!(r.field_symplectic_min() > -1e-8);
        }
    }

    #[test]
    fn single_and_double_pair_agree_on_atom_field_pairs(
        xs in prop::collection::vec(-2900.0f64..900.0, 1..20),
    ) {
        let grid = sorted_grid(xs);
        let mut p = reference_params();
        p.coupling_scale = 2.9;
        let cfg = ModelConfig::default().noise(NoiseTreatment::Excluded).kappa(0.02);
        let one = Model::new(&p, cfg.clone()).unwrap();
        let two = Model::new(&p, cfg.pairs(2)).unwrap();
        let pairs = [PairSpec::new("a1", "S"), PairSpec::new("S", "b1")];
        let a = sweep_omega(&one, &pairs, &grid, Execution::Serial).unwrap();
        let b = sweep_omega(&two, &pairs, &grid, Execution::Serial).unwrap();
        for (ra, rb) in a.values.iter().zip(&b.values) {
            for (x, y) in ra.iter().zip(rb) {
                prop_assert!(((x - y) / x).abs() < 0.05, "{} vs {}", x, y);
            }
        }
    }
}

#[test]
fn gamma0_sweep_recomputes_steady_state() {
    let p = reference_params();
    let grid = linear_grid(0.05, 5.0, 4);
    let s = sweep_gamma0(
        &p,
        &ModelConfig::default(),
        &single_pair_set(),
        &grid,
        Execution::default(),
    )
    .unwrap();
    for (k, &g0) in grid.iter().enumerate() {
        let mut q = p.clone();
        q.gamma0 = g0;
        let v = Model::new(&q, ModelConfig::default())
            .unwrap()
            .evaluate(0.0)
            .unwrap();
        assert_eq!(s.values[k][0], v.duan_min("a1", "b1").unwrap().value);
    }
    assert!(sweep_gamma0(
        &p,
        &ModelConfig::default(),
        &single_pair_set(),
        &[-1.0],
        Execution::Serial
    )
    .is_err());
}

#[test]
fn langevin_noise_removes_field_entanglement_at_reference() {
    // With the full noise model the scattering-Stokes pair stays above the
    // separability bound; see the README for the convention used for figures.
    let model = Model::new(&reference_params(), ModelConfig::default()).unwrap();
    for w in linear_grid(-3000.0, 3000.0, 121) {
        assert!(
            model
                .evaluate(w)
                .unwrap()
                .duan_min("a1", "b1")
                .unwrap()
                .value
                >= 4.0 - 1e-9
        );
    }
}
